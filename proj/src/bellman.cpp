#include "hedge/bellman.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hedge/dynamics.hpp"
#include "hedge/errors.hpp"
#include "hedge/rng.hpp"

namespace hedge {

ValueTable ValueTable::zeros(int n_market, int n_lattice) {
    ValueTable t;
    t.n_market = n_market;
    t.n_lattice = n_lattice;
    t.values.assign(static_cast<std::size_t>(n_market) * n_lattice, 0.0);
    return t;
}

ValueTable ValueTable::uniform_random(int n_market, int n_lattice, double lo, double hi, std::uint64_t seed) {
    ValueTable t = zeros(n_market, n_lattice);
    SplitRng rng(seed);
    for (double& v : t.values)
        v = rng.uniform(lo, hi);
    return t;
}

double sup_norm_diff(const ValueTable& a, const ValueTable& b) {
    if (a.values.size() != b.values.size())
        throw ValidationError("sup_norm_diff: table shapes differ");
    double m = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        m = std::max(m, std::abs(a.values[i] - b.values[i]));
    return m;
}

void HedgingMdp::validate() const {
    const int k = n_market();
    const int p = n_lattice();
    const int a = n_actions();
    if (k < 1 || p < 1 || a < 1)
        throw ValidationError("mdp: empty market, lattice or action grid");
    if (static_cast<int>(transition.size()) != k)
        throw ValidationError("mdp.transition: wrong row count");
    for (const auto& row : transition) {
        if (static_cast<int>(row.size()) != k)
            throw ValidationError("mdp.transition: wrong column count");
        double total = 0.0;
        for (double x : row) {
            if (x < 0.0)
                throw ValidationError("mdp.transition: negative probability");
            total += x;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw ValidationError("mdp.transition: rows must sum to 1");
    }
    for (double b : beta)
        if (!(b > 0.0) || b > beta_star || !(beta_star < 1.0))
            throw ValidationError("mdp.beta: must satisfy 0 < beta <= beta_star < 1");
    if (static_cast<int>(calendar_discount.size()) != k)
        throw ValidationError("mdp.calendar_discount: wrong length");
    if (static_cast<int>(successor.size()) != p * a)
        throw ValidationError("mdp.successor: wrong size");
    for (int idx : successor)
        if (idx < 0 || idx >= p)
            throw ValidationError("mdp.successor: index out of range");
    const std::size_t tensor = static_cast<std::size_t>(a) * p * k * k;
    if (reward.size() != tensor || reward_cash.size() != tensor)
        throw ValidationError("mdp.reward: tensor size mismatch");
    for (double x : reward)
        if (!std::isfinite(x))
            throw ValidationError("mdp.reward: non-finite entry");
    if (book.size() != static_cast<std::size_t>(k) * p)
        throw ValidationError("mdp.book: wrong size");
}

namespace {

nlohmann::json matrix_to_json(const std::vector<std::vector<double>>& m) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& row : m)
        j.push_back(row);
    return j;
}

std::vector<std::vector<double>> matrix_from_json(const nlohmann::json& j) {
    std::vector<std::vector<double>> m;
    for (const auto& row : j)
        m.push_back(row.get<std::vector<double>>());
    return m;
}

} // namespace

nlohmann::json HedgingMdp::to_json() const {
    return nlohmann::json{
        {"transition", matrix_to_json(transition)},
        {"beta", beta},
        {"calendar_discount", calendar_discount},
        {"market_features", matrix_to_json(market_features)},
        {"spots", spots},
        {"lattice", lattice},
        {"actions", actions},
        {"successor", successor},
        {"reward", reward},
        {"reward_cash", reward_cash},
        {"book", book},
        {"beta_star", beta_star},
    };
}

HedgingMdp HedgingMdp::from_json(const nlohmann::json& j) {
    HedgingMdp mdp;
    mdp.transition = matrix_from_json(j.at("transition"));
    mdp.beta = j.at("beta").get<std::vector<double>>();
    mdp.calendar_discount = j.at("calendar_discount").get<std::vector<double>>();
    mdp.market_features = matrix_from_json(j.at("market_features"));
    mdp.spots = j.at("spots").get<std::vector<double>>();
    mdp.lattice = j.at("lattice").get<std::vector<double>>();
    mdp.actions = j.at("actions").get<std::vector<double>>();
    mdp.successor = j.at("successor").get<std::vector<int>>();
    mdp.reward = j.at("reward").get<std::vector<double>>();
    mdp.reward_cash = j.at("reward_cash").get<std::vector<double>>();
    mdp.book = j.at("book").get<std::vector<double>>();
    mdp.beta_star = j.at("beta_star").get<double>();
    mdp.validate();
    return mdp;
}

namespace {

// Value of action `a` in cell (z, m) under the selected operator.
double action_value(const HedgingMdp& mdp, const UtilityFamily& fam, const ValueTable& f,
                    OperatorKind kind, int z, int m, int a) {
    const int k = mdp.n_market();
    const int zn = mdp.succ(z, a);
    const double scale = kind == OperatorKind::cash_calendar ? mdp.calendar_discount[m] : 1.0;

    std::vector<double> outcomes(k);
    for (int mn = 0; mn < k; ++mn) {
        const double continuation = mdp.beta[m] * f.at(mn, zn);
        const double rew = kind == OperatorKind::mark_to_market ? mdp.r(a, z, m, mn) : mdp.rc(a, z, m, mn);
        outcomes[mn] = scale * (continuation + rew);
    }
    const EmpiricalDistribution dist(outcomes, mdp.transition[m]);
    return oce_value(fam, dist).value / scale;
}

} // namespace

ValueTable apply_bellman(const HedgingMdp& mdp, const UtilityFamily& fam, const ValueTable& f,
                         OperatorKind kind) {
    if (f.n_market != mdp.n_market() || f.n_lattice != mdp.n_lattice())
        throw ValidationError("apply_bellman: value table shape mismatch");

    ValueTable out = ValueTable::zeros(mdp.n_market(), mdp.n_lattice());
    for (int m = 0; m < mdp.n_market(); ++m) {
        for (int z = 0; z < mdp.n_lattice(); ++z) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < mdp.n_actions(); ++a) {
                const double v = action_value(mdp, fam, f, kind, z, m, a);
                if (v > best)
                    best = v;
            }
            out.at(m, z) = best;
        }
    }
    return out;
}

ValueTable apply_bellman_multi(const HedgingMdp& mdp, const UtilityFamily& fam, const ValueTable& f, int n) {
    if (n != 1 && n != 2)
        throw ValidationError("apply_bellman_multi: only n in {1, 2} is supported");
    if (n == 1)
        return apply_bellman(mdp, fam, f, OperatorKind::mark_to_market);

    const int k = mdp.n_market();
    const int na = mdp.n_actions();
    double plan_count = 1.0;
    for (int i = 0; i < k; ++i)
        plan_count *= na;
    if (k > 6 || plan_count > 20000.0)
        throw NumericError("apply_bellman_multi: second-step plan enumeration too large");
    const int plans = static_cast<int>(plan_count);

    ValueTable out = ValueTable::zeros(k, mdp.n_lattice());
    std::vector<double> outcomes(static_cast<std::size_t>(k) * k);
    std::vector<double> probs(static_cast<std::size_t>(k) * k);
    std::vector<int> second(k);

    for (int m = 0; m < k; ++m) {
        for (int z = 0; z < mdp.n_lattice(); ++z) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a1 = 0; a1 < na; ++a1) {
                const int z2 = mdp.succ(z, a1);
                for (int plan = 0; plan < plans; ++plan) {
                    int rest = plan;
                    for (int m2 = 0; m2 < k; ++m2) {
                        second[m2] = rest % na;
                        rest /= na;
                    }
                    // joint law of (M2, M3) given m under this action plan,
                    // rewards discounted by the accumulated factors
                    for (int m2 = 0; m2 < k; ++m2) {
                        const int a2 = second[m2];
                        const int z3 = mdp.succ(z2, a2);
                        for (int m3 = 0; m3 < k; ++m3) {
                            const std::size_t idx = static_cast<std::size_t>(m2) * k + m3;
                            probs[idx] = mdp.transition[m][m2] * mdp.transition[m2][m3];
                            outcomes[idx] = mdp.beta[m] * mdp.beta[m2] * f.at(m3, z3) +
                                            mdp.r(a1, z, m, m2) +
                                            mdp.beta[m] * mdp.r(a2, z2, m2, m3);
                        }
                    }
                    const EmpiricalDistribution dist(outcomes, probs);
                    const double v = oce_value(fam, dist).value;
                    if (v > best)
                        best = v;
                }
            }
            out.at(m, z) = best;
        }
    }
    return out;
}

ValueIterationResult value_iterate(const HedgingMdp& mdp, const UtilityFamily& fam, OperatorKind kind,
                                   const ValueTable& f0, double tol, int max_iter) {
    if (!(tol > 0.0))
        throw ValidationError("value_iterate: tol must be > 0");

    ValueIterationResult result;
    result.table = f0;

    // a residual r leaves the iterate within r beta/(1-beta) of the fixed
    // point; stop when that bound drops below tol
    const double stop =
        tol * std::min(1.0, (1.0 - mdp.beta_star) / mdp.beta_star);

    for (int it = 0; max_iter == 0 || it < max_iter; ++it) {
        ValueTable next = apply_bellman(mdp, fam, result.table, kind);
        const double residual = sup_norm_diff(next, result.table);
        result.table = std::move(next);
        result.residuals.push_back(residual);
        result.iterations = it + 1;
        if (residual < stop) {
            result.converged = true;
            return result;
        }
        if (max_iter == 0 && it == 0) {
            // geometric decay bound plus slack
            const double bound = std::log(stop / std::max(residual, stop)) / std::log(mdp.beta_star);
            max_iter = static_cast<int>(std::ceil(bound)) + 50;
        }
    }
    result.converged = false;
    return result;
}

std::vector<int> greedy_policy(const HedgingMdp& mdp, const UtilityFamily& fam, const ValueTable& v,
                               OperatorKind kind) {
    std::vector<int> policy(static_cast<std::size_t>(mdp.n_market()) * mdp.n_lattice(), 0);
    for (int m = 0; m < mdp.n_market(); ++m) {
        for (int z = 0; z < mdp.n_lattice(); ++z) {
            double best = -std::numeric_limits<double>::infinity();
            int best_a = 0;
            for (int a = 0; a < mdp.n_actions(); ++a) {
                const double value = action_value(mdp, fam, v, kind, z, m, a);
                if (value > best) {
                    best = value;
                    best_a = a;
                }
            }
            policy[static_cast<std::size_t>(m) * mdp.n_lattice() + z] = best_a;
        }
    }
    return policy;
}

CashflowEquivalenceReport verify_cashflow_equivalence(const HedgingMdp& mdp, const UtilityFamily& fam,
                                                      double tol) {
    CashflowEquivalenceReport report;
    const ValueTable zeros = ValueTable::zeros(mdp.n_market(), mdp.n_lattice());

    const auto mark = value_iterate(mdp, fam, OperatorKind::mark_to_market, zeros, tol * 1e-2);
    const auto cash = value_iterate(mdp, fam, OperatorKind::cash_plain, zeros, tol * 1e-2);
    report.iterations_mark = mark.iterations;
    report.iterations_cash = cash.iterations;
    report.converged = mark.converged && cash.converged;
    if (!report.converged)
        return report;

    double gap = 0.0;
    for (int m = 0; m < mdp.n_market(); ++m)
        for (int z = 0; z < mdp.n_lattice(); ++z)
            gap = std::max(gap, std::abs(cash.table.at(m, z) - mark.table.at(m, z) - mdp.book_value(m, z)));
    report.max_abs_gap = gap;
    report.passed = gap < tol;
    return report;
}

// ------------------------------------------------------------------
// Chain instances
// ------------------------------------------------------------------

void ChainMdpConfig::validate() const {
    const int k = static_cast<int>(spots.size());
    if (k < 2)
        throw ValidationError("mdp.spots: need at least two market states");
    if (static_cast<int>(transition.size()) != k)
        throw ValidationError("mdp.transition: row count must match spots");
    for (const auto& row : transition) {
        if (static_cast<int>(row.size()) != k)
            throw ValidationError("mdp.transition: column count must match spots");
        double total = 0.0;
        for (double p : row) {
            if (p < 0.0)
                throw ValidationError("mdp.transition: negative probability");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw ValidationError("mdp.transition: rows must sum to 1");
    }
    if (!pricing.empty()) {
        if (pricing.size() != transition.size())
            throw ValidationError("mdp.pricing: row count must match spots");
        for (const auto& row : pricing) {
            if (static_cast<int>(row.size()) != k)
                throw ValidationError("mdp.pricing: column count must match spots");
            double total = 0.0;
            for (double p : row) {
                if (p < 0.0)
                    throw ValidationError("mdp.pricing: negative probability");
                total += p;
            }
            if (std::abs(total - 1.0) > 1e-12)
                throw ValidationError("mdp.pricing: rows must sum to 1");
        }
    }
    if (!(beta > 0.0) || beta >= 1.0)
        throw ValidationError("mdp.beta: must lie in (0, 1)");
    if (!payout.empty() && static_cast<int>(payout.size()) != k)
        throw ValidationError("mdp.payout: wrong length");
    if (!hedge_payout.empty() && static_cast<int>(hedge_payout.size()) != k)
        throw ValidationError("mdp.hedge_payout: wrong length");
    if (!hedge_payout.empty() && hedge != Hedge::claim)
        throw ValidationError("mdp.hedge_payout: only meaningful for claim hedges");
    if (!calendar_discount.empty() && static_cast<int>(calendar_discount.size()) != k)
        throw ValidationError("mdp.calendar_discount: wrong length");
    for (double b : calendar_discount)
        if (!(b > 0.0))
            throw ValidationError("mdp.calendar_discount: entries must be > 0");
    if (lattice_points < 1 || action_points < 1)
        throw ValidationError("mdp.lattice_points/action_points: must be >= 1");
    if (lattice_max < lattice_min)
        throw ValidationError("mdp.lattice: max must be >= min");
    if (!(action_bound > 0.0))
        throw ValidationError("mdp.action_bound: must be > 0");
    if (cost_rate < 0.0)
        throw ValidationError("mdp.cost_rate: must be >= 0");
    if (hedge == Hedge::future && lattice_points != 1)
        throw ValidationError("mdp.lattice_points: future hedges do not persist; use 1 lattice point");
}

nlohmann::json ChainMdpConfig::to_json() const {
    return nlohmann::json{
        {"spots", spots},
        {"transition", matrix_to_json(transition)},
        {"pricing", matrix_to_json(pricing)},
        {"beta", beta},
        {"calendar_discount", calendar_discount},
        {"payout_scale", payout_scale},
        {"payout", payout},
        {"hedge_payout", hedge_payout},
        {"base_weight", base_weight},
        {"hedge", hedge == Hedge::claim ? "claim" : "future"},
        {"lattice_min", lattice_min},
        {"lattice_max", lattice_max},
        {"lattice_points", lattice_points},
        {"action_bound", action_bound},
        {"action_points", action_points},
        {"cost_rate", cost_rate},
    };
}

ChainMdpConfig ChainMdpConfig::from_json(const nlohmann::json& j) {
    ChainMdpConfig c;
    if (j.contains("spots")) c.spots = j.at("spots").get<std::vector<double>>();
    if (j.contains("transition")) c.transition = matrix_from_json(j.at("transition"));
    if (j.contains("pricing")) c.pricing = matrix_from_json(j.at("pricing"));
    if (j.contains("beta")) c.beta = j.at("beta").get<double>();
    if (j.contains("calendar_discount"))
        c.calendar_discount = j.at("calendar_discount").get<std::vector<double>>();
    if (j.contains("payout_scale")) c.payout_scale = j.at("payout_scale").get<double>();
    if (j.contains("payout")) c.payout = j.at("payout").get<std::vector<double>>();
    if (j.contains("hedge_payout")) c.hedge_payout = j.at("hedge_payout").get<std::vector<double>>();
    if (j.contains("base_weight")) c.base_weight = j.at("base_weight").get<double>();
    if (j.contains("hedge")) {
        const std::string h = j.at("hedge").get<std::string>();
        if (h == "claim")
            c.hedge = Hedge::claim;
        else if (h == "future")
            c.hedge = Hedge::future;
        else
            throw ValidationError("mdp.hedge: must be 'claim' or 'future'");
    }
    if (j.contains("lattice_min")) c.lattice_min = j.at("lattice_min").get<double>();
    if (j.contains("lattice_max")) c.lattice_max = j.at("lattice_max").get<double>();
    if (j.contains("lattice_points")) c.lattice_points = j.at("lattice_points").get<int>();
    if (j.contains("action_bound")) c.action_bound = j.at("action_bound").get<double>();
    if (j.contains("action_points")) c.action_points = j.at("action_points").get<int>();
    if (j.contains("cost_rate")) c.cost_rate = j.at("cost_rate").get<double>();
    c.validate();
    return c;
}

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> out(n);
    if (n == 1) {
        out[0] = 0.5 * (lo + hi);
        return out;
    }
    for (int i = 0; i < n; ++i)
        out[i] = lo + (hi - lo) * i / (n - 1);
    return out;
}

int nearest_index(const std::vector<double>& grid, double x) {
    int best = 0;
    double dist = std::abs(grid[0] - x);
    for (int i = 1; i < static_cast<int>(grid.size()); ++i) {
        const double d = std::abs(grid[i] - x);
        if (d < dist) {
            dist = d;
            best = i;
        }
    }
    return best;
}

// Solve A x = b by Gaussian elimination with partial pivoting.
std::vector<double> solve_linear(std::vector<std::vector<double>> a, std::vector<double> b) {
    const int n = static_cast<int>(b.size());
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int row = col + 1; row < n; ++row)
            if (std::abs(a[row][col]) > std::abs(a[pivot][col]))
                pivot = row;
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        if (std::abs(a[col][col]) < 1e-14)
            throw NumericError("chain pricing: singular system");
        for (int row = col + 1; row < n; ++row) {
            const double factor = a[row][col] / a[col][col];
            for (int c2 = col; c2 < n; ++c2)
                a[row][c2] -= factor * a[col][c2];
            b[row] -= factor * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (int row = n - 1; row >= 0; --row) {
        double acc = b[row];
        for (int c2 = row + 1; c2 < n; ++c2)
            acc -= a[row][c2] * x[c2];
        x[row] = acc / a[row][row];
    }
    return x;
}

std::vector<double> chain_payouts(const ChainMdpConfig& config) {
    if (!config.payout.empty())
        return config.payout;
    std::vector<double> g(config.spots.size());
    for (std::size_t m = 0; m < config.spots.size(); ++m)
        g[m] = config.payout_scale * config.spots[m] / 100.0;
    return g;
}

const std::vector<std::vector<double>>& pricing_matrix(const ChainMdpConfig& config) {
    return config.pricing.empty() ? config.transition : config.pricing;
}

struct ChainTables {
    std::vector<double> claim_value;
    std::vector<double> payout;
    std::vector<double> hedge_value;   // hedge claim values (claim hedges)
    std::vector<double> hedge_pay;     // hedge claim payouts
    std::vector<double> future_strike;
    std::vector<std::vector<double>> hedge_features; // K x F
    std::vector<double> hedge_book;                  // K
};

ChainTables make_chain_tables(const ChainMdpConfig& config) {
    ChainTables t;
    t.claim_value = chain_claim_values(config);
    t.payout = chain_payouts(config);
    const int k = static_cast<int>(config.spots.size());
    const auto& pm = pricing_matrix(config);

    if (config.hedge == ChainMdpConfig::Hedge::claim && !config.hedge_payout.empty()) {
        ChainMdpConfig hedge_cfg = config;
        hedge_cfg.payout = config.hedge_payout;
        t.hedge_value = chain_claim_values(hedge_cfg);
        t.hedge_pay = config.hedge_payout;
    } else {
        t.hedge_value = t.claim_value;
        t.hedge_pay = t.payout;
    }

    t.future_strike.assign(k, 0.0);
    for (int m = 0; m < k; ++m)
        for (int mn = 0; mn < k; ++mn)
            t.future_strike[m] += pm[m][mn] * config.spots[mn];

    t.hedge_features.assign(k, std::vector<double>(kFeatureCount, 0.0));
    t.hedge_book.assign(k, 0.0);
    for (int m = 0; m < k; ++m) {
        if (config.hedge == ChainMdpConfig::Hedge::claim) {
            t.hedge_features[m] = {t.hedge_value[m], t.hedge_pay[m], 0.0, 0.0, 0.0};
            t.hedge_book[m] = t.hedge_value[m];
        } else {
            t.hedge_features[m] = {0.0, 1.0, 0.0, 0.0, kScenarioBump * config.spots[m]};
            t.hedge_book[m] = 0.0;
        }
    }
    return t;
}

double claim_db(const ChainMdpConfig& config, const ChainTables& t, int m, int mn) {
    return config.beta * t.claim_value[mn] - t.claim_value[m] + t.payout[m];
}

double hedge_db(const ChainMdpConfig& config, const ChainTables& t, int m, int mn) {
    if (config.hedge == ChainMdpConfig::Hedge::claim)
        return config.beta * t.hedge_value[mn] - t.hedge_value[m] + t.hedge_pay[m];
    return config.spots[mn] - t.future_strike[m];
}

double hedge_cash(const ChainMdpConfig& config, const ChainTables& t, int m, int mn) {
    if (config.hedge == ChainMdpConfig::Hedge::claim)
        return t.hedge_pay[m];
    return config.spots[mn] - t.future_strike[m];
}

double chain_trade_cost(const ChainMdpConfig& config, const ChainTables& t, int m, double trade) {
    // gamma weight on the book-value feature of the hedge leg
    return config.cost_rate * std::abs(trade * t.hedge_features[m][0]);
}

} // namespace

std::vector<double> chain_claim_values(const ChainMdpConfig& config) {
    config.validate();
    const int k = static_cast<int>(config.spots.size());
    const auto& pm = pricing_matrix(config);
    std::vector<std::vector<double>> a(k, std::vector<double>(k, 0.0));
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            a[i][j] = (i == j ? 1.0 : 0.0) - config.beta * pm[i][j];
    return solve_linear(a, chain_payouts(config));
}

HedgingMdp build_chain_mdp(const ChainMdpConfig& config) {
    config.validate();
    const ChainTables t = make_chain_tables(config);
    const int k = static_cast<int>(config.spots.size());

    HedgingMdp mdp;
    mdp.transition = config.transition;
    mdp.beta.assign(k, config.beta);
    mdp.beta_star = config.beta;
    mdp.calendar_discount =
        config.calendar_discount.empty() ? std::vector<double>(k, 1.0) : config.calendar_discount;
    mdp.spots = config.spots;
    mdp.market_features.assign(k, {});
    for (int m = 0; m < k; ++m)
        mdp.market_features[m] = {config.spots[m]};

    mdp.lattice = linspace(config.lattice_min, config.lattice_max, config.lattice_points);
    mdp.actions = linspace(-config.action_bound, config.action_bound, config.action_points);
    if (config.action_points == 1)
        mdp.actions = {0.0};

    const int p = mdp.n_lattice();
    const int na = mdp.n_actions();
    const bool persists = config.hedge == ChainMdpConfig::Hedge::claim;

    mdp.successor.assign(static_cast<std::size_t>(p) * na, 0);
    for (int z = 0; z < p; ++z)
        for (int a = 0; a < na; ++a)
            mdp.successor[static_cast<std::size_t>(z) * na + a] =
                persists ? nearest_index(mdp.lattice, mdp.lattice[z] + mdp.actions[a]) : z;

    const std::size_t tensor = static_cast<std::size_t>(na) * p * k * k;
    mdp.reward.assign(tensor, 0.0);
    mdp.reward_cash.assign(tensor, 0.0);
    mdp.book.assign(static_cast<std::size_t>(k) * p, 0.0);

    for (int m = 0; m < k; ++m)
        for (int z = 0; z < p; ++z)
            mdp.book[static_cast<std::size_t>(m) * p + z] =
                config.base_weight * t.claim_value[m] +
                (persists ? mdp.lattice[z] * t.hedge_value[m] : 0.0);

    for (int a = 0; a < na; ++a) {
        for (int z = 0; z < p; ++z) {
            const double hedge_held = persists ? mdp.lattice[z] : 0.0;
            // the trade actually booked is the snapped lattice move, which
            // keeps the finite model closed under the successor projection
            const double trade = persists
                                     ? mdp.lattice[mdp.succ(z, a)] - mdp.lattice[z]
                                     : mdp.actions[a];
            for (int m = 0; m < k; ++m) {
                const double c = chain_trade_cost(config, t, m, trade);
                for (int mn = 0; mn < k; ++mn) {
                    const double pnl = config.base_weight * claim_db(config, t, m, mn) +
                                       (hedge_held + trade) * hedge_db(config, t, m, mn);
                    // cashflows of the traded book minus the trade's book-value proceeds
                    const double cash = config.base_weight * t.payout[m] +
                                        (hedge_held + trade) * hedge_cash(config, t, m, mn) -
                                        trade * t.hedge_book[m];
                    const std::size_t idx = mdp.reward_index(a, z, m, mn);
                    mdp.reward[idx] = pnl - c;
                    mdp.reward_cash[idx] = cash - c;
                }
            }
        }
    }
    mdp.validate();
    return mdp;
}

HistoricDataset make_chain_dataset(const ChainMdpConfig& config, int path_length, std::uint64_t seed) {
    config.validate();
    if (path_length < 2)
        throw ValidationError("generator.path_length: must be >= 2");

    const ChainTables t = make_chain_tables(config);
    const int k = static_cast<int>(config.spots.size());

    SplitRng root = SplitRng(seed).derive(0x636861696eULL); // stream: chain path
    std::vector<int> path(path_length);
    path[0] = root.derive(0x737461727453ULL).uniform_int(0, k - 1);
    for (int step = 0; step + 1 < path_length; ++step) {
        const double u = root.derive(step).uniform();
        double acc = 0.0;
        int next = k - 1;
        for (int mn = 0; mn < k; ++mn) {
            acc += config.transition[path[step]][mn];
            if (u < acc) {
                next = mn;
                break;
            }
        }
        path[step + 1] = next;
    }

    HistoricDataset data;
    data.seed = seed;
    data.config = GeneratorConfig{};
    data.config.path_length = path_length;
    data.config.beta_star = config.beta;

    auto make_market_state = [&](int time_index, int m) {
        MarketState state;
        state.time_index = time_index;
        state.spot = config.spots[m];
        state.vol = 0.0;
        state.dt = 1.0;
        state.discount = config.beta;
        state.rate = -std::log(config.beta);
        state.features = {config.spots[m]};
        return state;
    };

    auto claim_fmr = [&](int m, int mn) {
        InstrumentFMR x = InstrumentFMR::zero(kFeatureCount);
        x.features_now = {t.claim_value[m], t.payout[m], 0.0, 0.0, 0.0};
        x.features_next = {t.claim_value[mn], t.payout[mn], 0.0, 0.0, 0.0};
        x.book_now = t.claim_value[m];
        x.book_next = t.claim_value[mn];
        x.cashflow = t.payout[m];
        return x;
    };
    auto hedge_fmr = [&](int m, int mn) {
        InstrumentFMR x = InstrumentFMR::zero(kFeatureCount);
        if (config.hedge == ChainMdpConfig::Hedge::claim) {
            x.features_now = {t.hedge_value[m], t.hedge_pay[m], 0.0, 0.0, 0.0};
            x.features_next = {t.hedge_value[mn], t.hedge_pay[mn], 0.0, 0.0, 0.0};
            x.book_now = t.hedge_value[m];
            x.book_next = t.hedge_value[mn];
            x.cashflow = t.hedge_pay[m];
            return x;
        }
        x.features_now = t.hedge_features[m];
        x.features_next.assign(kFeatureCount, 0.0); // settles and dies
        x.cashflow = config.spots[mn] - t.future_strike[m];
        return x;
    };

    data.states.reserve(path_length);
    for (int step = 0; step < path_length; ++step)
        data.states.push_back(make_market_state(step, path[step]));

    data.steps.reserve(path_length - 1);
    for (int step = 0; step + 1 < path_length; ++step) {
        const int m = path[step];
        const int mn = path[step + 1];
        StepRecord rec;
        rec.t = step;

        InstrumentRecord book;
        book.spec.kind = InstrumentKind::perpetual_cashflow_claim;
        book.spec.steps_to_expiry = kPerpetualExpiry;
        book.weight = config.base_weight;
        book.fmr = claim_fmr(m, mn);
        rec.book.push_back(std::move(book));

        if (config.hedge == ChainMdpConfig::Hedge::claim) {
            // the hedge claim is part of the observable book with zero
            // historic weight, so sampled portfolios span hedge inventories
            InstrumentRecord inventory;
            inventory.spec.kind = InstrumentKind::perpetual_cashflow_claim;
            inventory.spec.steps_to_expiry = kPerpetualExpiry;
            inventory.weight = 0.0;
            inventory.fmr = hedge_fmr(m, mn);
            rec.book.push_back(std::move(inventory));
        }

        InstrumentRecord hedge;
        hedge.spec.kind = config.hedge == ChainMdpConfig::Hedge::claim
                              ? InstrumentKind::perpetual_cashflow_claim
                              : InstrumentKind::daily_settled_future;
        hedge.spec.steps_to_expiry =
            config.hedge == ChainMdpConfig::Hedge::claim ? kPerpetualExpiry : 1;
        hedge.spec.strike = config.hedge == ChainMdpConfig::Hedge::future ? t.future_strike[m] : 0.0;
        hedge.weight = 0.0;
        hedge.fmr = hedge_fmr(m, mn);
        rec.hedges.push_back(std::move(hedge));

        data.steps.push_back(std::move(rec));
    }
    return data;
}

ChainMdpConfig default_chain_config() {
    ChainMdpConfig config;
    // pessimistic pricing tilt: claims carry a real-world drift
    config.pricing = {
        {0.650, 0.276, 0.074},
        {0.350, 0.465, 0.185},
        {0.200, 0.355, 0.445},
    };
    config.calendar_discount = {1.0, 0.95, 0.90};
    return config;
}

ChainMdpConfig risk_neutral_chain_config() {
    ChainMdpConfig config;
    config.pricing.clear(); // pricing measure = transition measure
    config.cost_rate = 0.0;
    config.calendar_discount.clear();
    return config;
}

HedgingMdp make_time_consistency_mdp() {
    HedgingMdp mdp;
    const int k = 2;
    mdp.transition = {{0.65, 0.35}, {0.30, 0.70}};
    const double beta = 1.0 - 1e-9;
    mdp.beta = {beta, beta};
    mdp.beta_star = beta;
    mdp.calendar_discount = {1.0, 1.0};
    mdp.spots = {95.0, 105.0};
    mdp.market_features = {{95.0}, {105.0}};
    mdp.lattice = {-1.0, -0.5, 0.0, 0.5, 1.0};
    mdp.actions = {-0.5, 0.0, 0.5};

    const int p = mdp.n_lattice();
    const int na = mdp.n_actions();
    mdp.successor.assign(static_cast<std::size_t>(p) * na, 0);
    for (int z = 0; z < p; ++z)
        for (int a = 0; a < na; ++a)
            mdp.successor[static_cast<std::size_t>(z) * na + a] =
                nearest_index(mdp.lattice, mdp.lattice[z] + mdp.actions[a]);

    const std::size_t tensor = static_cast<std::size_t>(na) * p * k * k;
    mdp.reward.assign(tensor, 0.0);
    mdp.reward_cash.assign(tensor, 0.0);
    mdp.book.assign(static_cast<std::size_t>(k) * p, 0.0);

    SplitRng rng(0x7463ULL);
    for (int a = 0; a < na; ++a)
        for (int z = 0; z < p; ++z)
            for (int m = 0; m < k; ++m) {
                SplitRng cell = rng.derive(static_cast<std::uint64_t>((a * p + z) * k + m));
                for (int mn = 0; mn < k; ++mn) {
                    const double v = 0.6 * cell.uniform(-1.0, 1.0) -
                                     0.05 * std::abs(mdp.actions[a]) +
                                     0.2 * mdp.lattice[z] * (mn == 0 ? -1.0 : 1.0);
                    const std::size_t idx = mdp.reward_index(a, z, m, mn);
                    mdp.reward[idx] = v;
                    mdp.reward_cash[idx] = v;
                }
            }
    mdp.validate();
    return mdp;
}

HedgingMdp make_layered_vanilla_mdp(const LayeredMdpConfig& config) {
    if (config.regimes < 2)
        throw ValidationError("layered_mdp.regimes: need at least 2");
    const int r = config.regimes;
    const double beta = config.beta;
    if (!(beta > 0.0) || beta >= 1.0)
        throw ValidationError("layered_mdp.beta: must lie in (0, 1)");

    std::vector<std::vector<double>> reg_p(r, std::vector<double>(r, 0.0));
    std::vector<double> g(r);
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < r; ++j)
            reg_p[i][j] = (i == j) ? 0.6 : 0.4 / (r - 1);
        g[i] = config.payout_scale * (0.8 + 0.4 * i / std::max(1, r - 1));
    }

    // horizon from the truncation bound: beta^H * R_max / (1 - beta) < bound
    double r_max = 0.0;
    for (int i = 0; i < r; ++i)
        r_max = std::max(r_max, (std::abs(config.base_weight) + config.lattice_max +
                                 config.action_bound) * g[i] * 2.0 +
                                    config.cost_rate * config.action_bound);
    int horizon = config.horizon;
    if (horizon <= 0)
        horizon = static_cast<int>(std::ceil(
                      std::log(config.truncation_bound * (1.0 - beta) / std::max(r_max, 1e-12)) /
                      std::log(beta))) +
                  1;

    const int layers = horizon + 1; // last layer absorbs with zero rewards
    const int k = r * layers;
    auto state_of = [&](int regime, int layer) { return layer * r + regime; };

    // claim maturing at `horizon`, valued backward
    std::vector<std::vector<double>> claim(layers, std::vector<double>(r, 0.0));
    for (int layer = horizon - 1; layer >= 0; --layer)
        for (int i = 0; i < r; ++i) {
            double cont = 0.0;
            if (layer + 1 < horizon)
                for (int j = 0; j < r; ++j)
                    cont += reg_p[i][j] * claim[layer + 1][j];
            claim[layer][i] = g[i] + beta * cont;
        }

    HedgingMdp mdp;
    mdp.beta.assign(k, beta);
    mdp.beta_star = beta;
    mdp.spots.assign(k, 0.0);
    mdp.calendar_discount.assign(k, 1.0);
    mdp.market_features.assign(k, {});
    mdp.transition.assign(k, std::vector<double>(k, 0.0));
    for (int layer = 0; layer < layers; ++layer)
        for (int i = 0; i < r; ++i) {
            const int s = state_of(i, layer);
            mdp.spots[s] = 90.0 + 20.0 * i / std::max(1, r - 1);
            mdp.calendar_discount[s] = std::pow(beta, layer);
            mdp.market_features[s] = {mdp.spots[s], static_cast<double>(layer)};
            if (layer + 1 < layers)
                for (int j = 0; j < r; ++j)
                    mdp.transition[s][state_of(j, layer + 1)] = reg_p[i][j];
            else
                mdp.transition[s][s] = 1.0;
        }

    mdp.lattice = linspace(-config.lattice_max, config.lattice_max, config.lattice_points);
    mdp.actions = linspace(-config.action_bound, config.action_bound, config.action_points);

    const int p = mdp.n_lattice();
    const int na = mdp.n_actions();
    mdp.successor.assign(static_cast<std::size_t>(p) * na, 0);
    for (int z = 0; z < p; ++z)
        for (int a = 0; a < na; ++a)
            mdp.successor[static_cast<std::size_t>(z) * na + a] =
                nearest_index(mdp.lattice, mdp.lattice[z] + mdp.actions[a]);

    const std::size_t tensor = static_cast<std::size_t>(na) * p * k * k;
    mdp.reward.assign(tensor, 0.0);
    mdp.reward_cash.assign(tensor, 0.0);
    mdp.book.assign(static_cast<std::size_t>(k) * p, 0.0);

    auto value_of = [&](int regime, int layer) { return layer < horizon ? claim[layer][regime] : 0.0; };
    auto payout_of = [&](int regime, int layer) { return layer < horizon ? g[regime] : 0.0; };

    for (int layer = 0; layer < layers; ++layer)
        for (int i = 0; i < r; ++i) {
            const int s = state_of(i, layer);
            for (int z = 0; z < p; ++z) {
                const double held = config.base_weight + mdp.lattice[z];
                mdp.book[static_cast<std::size_t>(s) * p + z] = held * value_of(i, layer);
                for (int a = 0; a < na; ++a) {
                    const double trade = mdp.actions[a];
                    const double c = layer < horizon ? config.cost_rate * std::abs(trade) : 0.0;
                    for (int j = 0; j < r; ++j) {
                        const int sn = layer + 1 < layers ? state_of(j, layer + 1) : s;
                        if (mdp.transition[s][sn] == 0.0)
                            continue;
                        const int next_layer = std::min(layer + 1, layers - 1);
                        const double db =
                            beta * value_of(j, next_layer) - value_of(i, layer) + payout_of(i, layer);
                        const std::size_t idx = mdp.reward_index(a, z, s, sn);
                        mdp.reward[idx] = (held + trade) * db - c;
                        mdp.reward_cash[idx] = (held + trade) * payout_of(i, layer) -
                                               trade * value_of(i, layer) - c;
                    }
                }
            }
        }
    mdp.validate();
    return mdp;
}

} // namespace hedge
