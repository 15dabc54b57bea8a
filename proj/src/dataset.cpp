#include "hedge/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "hedge/errors.hpp"

namespace hedge {

namespace {

void expect_keys(const nlohmann::json& j, const std::vector<std::string>& allowed, const std::string& where) {
    if (!j.is_object())
        throw ValidationError(where + ": expected an object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const auto& key : allowed)
            if (item.key() == key) {
                known = true;
                break;
            }
        if (!known)
            throw ValidationError(where + ": unknown key '" + item.key() + "'");
    }
}

} // namespace

nlohmann::json generator_config_to_json(const GeneratorConfig& c) {
    nlohmann::json legs = nlohmann::json::array();
    for (const auto& leg : c.hedge_legs)
        legs.push_back({{"kind", to_string(leg.kind)},
                        {"moneyness", leg.moneyness},
                        {"expiry_steps", leg.expiry_steps},
                        {"payoff_direction", leg.payoff_direction}});
    return nlohmann::json{
        {"path_length", c.path_length},
        {"spot0", c.spot0},
        {"vol0", c.vol0},
        {"drift", c.drift},
        {"rate", c.rate},
        {"rate_slope", c.rate_slope},
        {"beta_star", c.beta_star},
        {"dt", c.dt},
        {"risk_neutral", c.risk_neutral},
        {"stoch_vol",
         {{"enabled", c.stoch_vol.enabled},
          {"kappa", c.stoch_vol.kappa},
          {"theta", c.stoch_vol.theta},
          {"xi", c.stoch_vol.xi},
          {"vol_min", c.stoch_vol.vol_min}}},
        {"logret_window", c.logret_window},
        {"book_instruments_per_step", c.book_instruments_per_step},
        {"book_include_claim", c.book_include_claim},
        {"book_weight_scale", c.book_weight_scale},
        {"book_moneyness_min", c.book_moneyness_min},
        {"book_moneyness_max", c.book_moneyness_max},
        {"book_expiry_min", c.book_expiry_min},
        {"book_expiry_max", c.book_expiry_max},
        {"claim_rate", c.claim_rate},
        {"claim_exponent", c.claim_exponent},
        {"hedge_legs", legs},
    };
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
    expect_keys(j, {"path_length", "spot0", "vol0", "drift", "rate", "rate_slope", "beta_star",
                    "dt", "risk_neutral", "stoch_vol", "logret_window", "book_instruments_per_step",
                    "book_include_claim", "book_weight_scale", "book_moneyness_min",
                    "book_moneyness_max", "book_expiry_min", "book_expiry_max", "claim_rate",
                    "claim_exponent", "hedge_legs"},
                "generator");
    GeneratorConfig c;
    if (j.contains("path_length")) c.path_length = j.at("path_length").get<int>();
    if (j.contains("spot0")) c.spot0 = j.at("spot0").get<double>();
    if (j.contains("vol0")) c.vol0 = j.at("vol0").get<double>();
    if (j.contains("drift")) c.drift = j.at("drift").get<double>();
    if (j.contains("rate")) c.rate = j.at("rate").get<double>();
    if (j.contains("rate_slope")) c.rate_slope = j.at("rate_slope").get<double>();
    if (j.contains("beta_star")) c.beta_star = j.at("beta_star").get<double>();
    if (j.contains("dt")) c.dt = j.at("dt").get<double>();
    if (j.contains("risk_neutral")) c.risk_neutral = j.at("risk_neutral").get<bool>();
    if (j.contains("stoch_vol")) {
        const auto& sv = j.at("stoch_vol");
        expect_keys(sv, {"enabled", "kappa", "theta", "xi", "vol_min"}, "generator.stoch_vol");
        if (sv.contains("enabled")) c.stoch_vol.enabled = sv.at("enabled").get<bool>();
        if (sv.contains("kappa")) c.stoch_vol.kappa = sv.at("kappa").get<double>();
        if (sv.contains("theta")) c.stoch_vol.theta = sv.at("theta").get<double>();
        if (sv.contains("xi")) c.stoch_vol.xi = sv.at("xi").get<double>();
        if (sv.contains("vol_min")) c.stoch_vol.vol_min = sv.at("vol_min").get<double>();
    }
    if (j.contains("logret_window")) c.logret_window = j.at("logret_window").get<int>();
    if (j.contains("book_instruments_per_step"))
        c.book_instruments_per_step = j.at("book_instruments_per_step").get<int>();
    if (j.contains("book_include_claim")) c.book_include_claim = j.at("book_include_claim").get<bool>();
    if (j.contains("book_weight_scale")) c.book_weight_scale = j.at("book_weight_scale").get<double>();
    if (j.contains("book_moneyness_min")) c.book_moneyness_min = j.at("book_moneyness_min").get<double>();
    if (j.contains("book_moneyness_max")) c.book_moneyness_max = j.at("book_moneyness_max").get<double>();
    if (j.contains("book_expiry_min")) c.book_expiry_min = j.at("book_expiry_min").get<int>();
    if (j.contains("book_expiry_max")) c.book_expiry_max = j.at("book_expiry_max").get<int>();
    if (j.contains("claim_rate")) c.claim_rate = j.at("claim_rate").get<double>();
    if (j.contains("claim_exponent")) c.claim_exponent = j.at("claim_exponent").get<double>();
    if (j.contains("hedge_legs")) {
        c.hedge_legs.clear();
        for (const auto& leg_json : j.at("hedge_legs")) {
            expect_keys(leg_json, {"kind", "moneyness", "expiry_steps", "payoff_direction"},
                        "generator.hedge_legs[]");
            HedgeLegSpec leg;
            if (leg_json.contains("kind"))
                leg.kind = instrument_kind_from_string(leg_json.at("kind").get<std::string>());
            if (leg_json.contains("moneyness")) leg.moneyness = leg_json.at("moneyness").get<double>();
            if (leg_json.contains("expiry_steps")) leg.expiry_steps = leg_json.at("expiry_steps").get<int>();
            if (leg_json.contains("payoff_direction"))
                leg.payoff_direction = leg_json.at("payoff_direction").get<int>();
            c.hedge_legs.push_back(leg);
        }
    }
    c.validate();
    return c;
}

std::uint64_t config_hash(const nlohmann::json& j) {
    const std::string dump = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot open for writing: " + tmp.string());
        out << content;
        if (!out)
            throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw IoError("rename failed: " + path.string() + ": " + ec.message());
}

namespace {

std::string role_name(bool is_book) { return is_book ? "book" : "hedge"; }

void append_instrument_rows(std::string& instruments, std::string& features_t, std::string& features_t1,
                            std::string& cashflows, int t, bool is_book, int idx,
                            const InstrumentRecord& rec) {
    const std::string role = role_name(is_book);
    instruments += std::to_string(t) + "," + role + "," + std::to_string(idx) + "," +
                   to_string(rec.spec.kind) + "," + format_double(rec.spec.strike) + "," +
                   std::to_string(rec.spec.steps_to_expiry) + "," +
                   std::to_string(rec.spec.payoff_direction) + "," + format_double(rec.weight) + "," +
                   format_double(rec.spec.claim_rate) + "," + format_double(rec.spec.claim_exponent) + "\n";

    auto feature_row = [&](const std::vector<double>& f, double book) {
        std::string row = std::to_string(t) + "," + role + "," + std::to_string(idx);
        for (double v : f)
            row += "," + format_double(v);
        row += "," + format_double(book);
        return row + "\n";
    };
    features_t += feature_row(rec.fmr.features_now, rec.fmr.book_now);
    features_t1 += feature_row(rec.fmr.features_next, rec.fmr.book_next);
    cashflows += std::to_string(t) + "," + role + "," + std::to_string(idx) + "," +
                 format_double(rec.fmr.cashflow) + "\n";
}

} // namespace

void save_dataset(const HistoricDataset& data, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create dataset directory: " + dir.string());

    std::string states = "t,spot,vol,rate,discount,dt";
    const int mdim = data.market_dim();
    for (int i = 0; i < mdim; ++i)
        states += ",f" + std::to_string(i);
    states += "\n";
    for (const auto& m : data.states) {
        states += std::to_string(m.time_index) + "," + format_double(m.spot) + "," +
                  format_double(m.vol) + "," + format_double(m.rate) + "," +
                  format_double(m.discount) + "," + format_double(m.dt);
        for (double f : m.features)
            states += "," + format_double(f);
        states += "\n";
    }

    std::string instruments =
        "t,role,idx,kind,strike,steps_to_expiry,payoff_direction,weight,claim_rate,claim_exponent\n";
    std::string features_t = "t,role,idx,f0,f1,f2,f3,f4,book\n";
    std::string features_t1 = "t,role,idx,f0,f1,f2,f3,f4,book\n";
    std::string cashflows = "t,role,idx,cashflow\n";

    for (const auto& step : data.steps) {
        for (std::size_t i = 0; i < step.book.size(); ++i)
            append_instrument_rows(instruments, features_t, features_t1, cashflows, step.t, true,
                                   static_cast<int>(i), step.book[i]);
        for (std::size_t i = 0; i < step.hedges.size(); ++i)
            append_instrument_rows(instruments, features_t, features_t1, cashflows, step.t, false,
                                   static_cast<int>(i), step.hedges[i]);
    }

    const nlohmann::json config_json = generator_config_to_json(data.config);
    const nlohmann::json manifest{
        {"format", "hedge-dataset-v1"},
        {"seed", data.seed},
        {"config_hash", config_hash(config_json)},
        {"config", config_json},
        {"path_length", static_cast<int>(data.states.size())},
    };

    write_file_atomic(dir / "states.csv", states);
    write_file_atomic(dir / "instruments.csv", instruments);
    write_file_atomic(dir / "features_t.csv", features_t);
    write_file_atomic(dir / "features_t1.csv", features_t1);
    write_file_atomic(dir / "cashflows.csv", cashflows);
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ','))
        out.push_back(field);
    return out;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open: " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        if (header) {
            header = false;
            continue;
        }
        rows.push_back(split_csv_line(line));
    }
    return rows;
}

} // namespace

HistoricDataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf)
        throw IoError("cannot open: " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    mf >> manifest;

    HistoricDataset data;
    data.seed = manifest.at("seed").get<std::uint64_t>();
    data.config = generator_config_from_json(manifest.at("config"));

    const auto state_rows = read_csv(dir / "states.csv");
    for (const auto& row : state_rows) {
        MarketState m;
        m.time_index = std::stoi(row[0]);
        m.spot = std::stod(row[1]);
        m.vol = std::stod(row[2]);
        m.rate = std::stod(row[3]);
        m.discount = std::stod(row[4]);
        m.dt = std::stod(row[5]);
        for (std::size_t i = 6; i < row.size(); ++i)
            m.features.push_back(std::stod(row[i]));
        data.states.push_back(std::move(m));
    }

    const int n_steps = static_cast<int>(data.states.size()) - 1;
    data.steps.resize(n_steps);
    for (int t = 0; t < n_steps; ++t)
        data.steps[t].t = t;

    auto record_at = [&](int t, const std::string& role, std::size_t idx) -> InstrumentRecord& {
        auto& list = role == "book" ? data.steps[t].book : data.steps[t].hedges;
        if (list.size() <= idx)
            list.resize(idx + 1);
        return list[idx];
    };

    for (const auto& row : read_csv(dir / "instruments.csv")) {
        const int t = std::stoi(row[0]);
        auto& rec = record_at(t, row[1], std::stoul(row[2]));
        rec.spec.kind = instrument_kind_from_string(row[3]);
        rec.spec.strike = std::stod(row[4]);
        rec.spec.steps_to_expiry = std::stoi(row[5]);
        rec.spec.payoff_direction = std::stoi(row[6]);
        rec.weight = std::stod(row[7]);
        rec.spec.claim_rate = std::stod(row[8]);
        rec.spec.claim_exponent = std::stod(row[9]);
    }
    for (const auto& row : read_csv(dir / "features_t.csv")) {
        auto& rec = record_at(std::stoi(row[0]), row[1], std::stoul(row[2]));
        rec.fmr.features_now.clear();
        for (int i = 0; i < kFeatureCount; ++i)
            rec.fmr.features_now.push_back(std::stod(row[3 + i]));
        rec.fmr.book_now = std::stod(row[3 + kFeatureCount]);
    }
    for (const auto& row : read_csv(dir / "features_t1.csv")) {
        auto& rec = record_at(std::stoi(row[0]), row[1], std::stoul(row[2]));
        rec.fmr.features_next.clear();
        for (int i = 0; i < kFeatureCount; ++i)
            rec.fmr.features_next.push_back(std::stod(row[3 + i]));
        rec.fmr.book_next = std::stod(row[3 + kFeatureCount]);
    }
    for (const auto& row : read_csv(dir / "cashflows.csv")) {
        auto& rec = record_at(std::stoi(row[0]), row[1], std::stoul(row[2]));
        rec.fmr.cashflow = std::stod(row[3]);
    }
    return data;
}

} // namespace hedge
