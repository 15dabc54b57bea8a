#include "hedge/market.hpp"

#include <algorithm>
#include <cmath>

#include "hedge/errors.hpp"
#include "hedge/rng.hpp"

namespace hedge {

const char* to_string(InstrumentKind kind) {
    switch (kind) {
    case InstrumentKind::perpetual_cashflow_claim: return "perpetual_cashflow_claim";
    case InstrumentKind::vanilla_option: return "vanilla_option";
    case InstrumentKind::forward: return "forward";
    case InstrumentKind::daily_settled_future: return "daily_settled_future";
    }
    return "unknown";
}

InstrumentKind instrument_kind_from_string(const std::string& name) {
    if (name == "perpetual_cashflow_claim") return InstrumentKind::perpetual_cashflow_claim;
    if (name == "vanilla_option") return InstrumentKind::vanilla_option;
    if (name == "forward") return InstrumentKind::forward;
    if (name == "daily_settled_future") return InstrumentKind::daily_settled_future;
    throw ValidationError("instrument.kind: unknown kind '" + name + "'");
}

InstrumentSpec InstrumentSpec::aged() const {
    InstrumentSpec next = *this;
    next.steps_to_expiry = std::max(0, steps_to_expiry - 1);
    return next;
}

void InstrumentSpec::validate() const {
    if (payoff_direction != 1 && payoff_direction != -1)
        throw ValidationError("instrument.payoff_direction: must be +1 or -1");
    if (steps_to_expiry < 0)
        throw ValidationError("instrument.steps_to_expiry: must be >= 0");
    if (kind == InstrumentKind::vanilla_option && !expired() && !(strike > 0.0))
        throw ValidationError("instrument.strike: must be > 0 for options");
}

std::vector<HedgeLegSpec> GeneratorConfig::default_hedge_legs() {
    return {
        {InstrumentKind::daily_settled_future, 1.0, 1, 1},
        {InstrumentKind::vanilla_option, 1.05, 20, 1},  // call struck above the market
        {InstrumentKind::vanilla_option, 0.95, 20, -1}, // put struck below
    };
}

void GeneratorConfig::validate() const {
    if (path_length < 2)
        throw ValidationError("generator.path_length: must be >= 2");
    if (!(spot0 > 0.0))
        throw ValidationError("generator.spot0: must be > 0");
    if (!(vol0 > 0.0))
        throw ValidationError("generator.vol0: must be > 0");
    if (!(beta_star > 0.0) || beta_star >= 1.0)
        throw ValidationError("generator.beta_star: must lie in (0, 1)");
    if (!(dt > 0.0))
        throw ValidationError("generator.dt: must be > 0");
    if (logret_window < 0)
        throw ValidationError("generator.logret_window: must be >= 0");
    if (book_instruments_per_step < 1)
        throw ValidationError("generator.book_instruments_per_step: must be >= 1");
    if (!(book_moneyness_min > 0.0) || book_moneyness_max < book_moneyness_min)
        throw ValidationError("generator.book_moneyness: invalid range");
    if (book_expiry_min < 1 || book_expiry_max < book_expiry_min)
        throw ValidationError("generator.book_expiry: invalid range");
    if (risk_neutral && stoch_vol.enabled)
        throw ValidationError("generator.risk_neutral: requires stoch_vol.enabled = false");
    if (stoch_vol.enabled && !(stoch_vol.vol_min > 0.0))
        throw ValidationError("generator.stoch_vol.vol_min: must be > 0");
    if (hedge_legs.empty())
        throw ValidationError("generator.hedge_legs: at least one hedging instrument required");
    if (!(claim_exponent < 1.0))
        throw ValidationError("generator.claim_exponent: must be < 1 for a finite perpetuity");
}

namespace black_scholes {

namespace {
double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846); }
} // namespace

double price(bool call, double spot, double strike, double vol, double rate, double tau) {
    const double st = vol * std::sqrt(tau);
    const double d1 = (std::log(spot / strike) + (rate + 0.5 * vol * vol) * tau) / st;
    const double d2 = d1 - st;
    const double df = std::exp(-rate * tau);
    if (call)
        return spot * norm_cdf(d1) - strike * df * norm_cdf(d2);
    return strike * df * norm_cdf(-d2) - spot * norm_cdf(-d1);
}

double delta(bool call, double spot, double strike, double vol, double rate, double tau) {
    const double st = vol * std::sqrt(tau);
    const double d1 = (std::log(spot / strike) + (rate + 0.5 * vol * vol) * tau) / st;
    return call ? norm_cdf(d1) : norm_cdf(d1) - 1.0;
}

double gamma(double spot, double strike, double vol, double rate, double tau) {
    const double st = vol * std::sqrt(tau);
    const double d1 = (std::log(spot / strike) + (rate + 0.5 * vol * vol) * tau) / st;
    return norm_pdf(d1) / (spot * st);
}

double vega(double spot, double strike, double vol, double rate, double tau) {
    const double st = vol * std::sqrt(tau);
    const double d1 = (std::log(spot / strike) + (rate + 0.5 * vol * vol) * tau) / st;
    return spot * norm_pdf(d1) * std::sqrt(tau);
}

} // namespace black_scholes

namespace {

// One-step growth factor of S^p under the pricing measure.
double power_growth(double p, double rate, double vol, double dt) {
    return std::exp(p * (rate - 0.5 * vol * vol) * dt + 0.5 * p * p * vol * vol * dt);
}

double claim_cashflow_at(const InstrumentSpec& spec, double spot) {
    return spec.claim_rate * std::pow(spot, spec.claim_exponent);
}

// Perpetuity of claim cashflows, priced under the prevailing state.
double claim_value(const InstrumentSpec& spec, const MarketState& m) {
    const double rho = m.discount * power_growth(spec.claim_exponent, m.rate, m.vol, m.dt);
    if (rho >= 1.0 - 1e-12)
        throw ValidationError("perpetual claim does not price: beta * E[(S'/S)^p] >= 1");
    return claim_cashflow_at(spec, m.spot) / (1.0 - rho);
}

double mark_value(const InstrumentSpec& spec, const MarketState& m, double spot_override) {
    MarketState bumped = m;
    bumped.spot = spot_override;
    const double spot = spot_override;
    const double tau = spec.steps_to_expiry * m.dt;
    switch (spec.kind) {
    case InstrumentKind::perpetual_cashflow_claim:
        return claim_value(spec, bumped);
    case InstrumentKind::vanilla_option:
        return black_scholes::price(spec.payoff_direction > 0, spot, spec.strike, m.vol, m.rate, tau);
    case InstrumentKind::forward:
        return spec.payoff_direction * (spot - spec.strike * std::exp(-m.rate * tau));
    case InstrumentKind::daily_settled_future:
        // margined daily; the settlement exposure moves one-for-one with spot
        return spec.payoff_direction * (spot - m.spot);
    }
    throw ValidationError("unknown instrument kind");
}

} // namespace

double oracle_book_value(const InstrumentSpec& spec, const MarketState& m) {
    spec.validate();
    if (spec.expired())
        return 0.0;
    if (spec.kind == InstrumentKind::daily_settled_future)
        return 0.0;
    return mark_value(spec, m, m.spot);
}

std::vector<double> oracle_features(const InstrumentSpec& spec, const MarketState& m) {
    spec.validate();
    std::vector<double> f(kFeatureCount, 0.0);
    if (spec.expired())
        return f;

    const double tau = spec.steps_to_expiry * m.dt;
    switch (spec.kind) {
    case InstrumentKind::perpetual_cashflow_claim: {
        const double value = claim_value(spec, m);
        const double p = spec.claim_exponent;
        const double rho = m.discount * power_growth(p, m.rate, m.vol, m.dt);
        const double drho_dvol = rho * (p * p - p) * m.vol * m.dt;
        f[0] = value;
        f[1] = p * value / m.spot;
        f[2] = p * (p - 1.0) * value / (m.spot * m.spot);
        f[3] = value * drho_dvol / (1.0 - rho);
        f[4] = value * (std::pow(1.0 + kScenarioBump, p) - 1.0);
        return f;
    }
    case InstrumentKind::vanilla_option: {
        const bool call = spec.payoff_direction > 0;
        f[0] = black_scholes::price(call, m.spot, spec.strike, m.vol, m.rate, tau);
        f[1] = black_scholes::delta(call, m.spot, spec.strike, m.vol, m.rate, tau);
        f[2] = black_scholes::gamma(m.spot, spec.strike, m.vol, m.rate, tau);
        f[3] = black_scholes::vega(m.spot, spec.strike, m.vol, m.rate, tau);
        f[4] = mark_value(spec, m, m.spot * (1.0 + kScenarioBump)) - f[0];
        return f;
    }
    case InstrumentKind::forward: {
        f[0] = mark_value(spec, m, m.spot);
        f[1] = spec.payoff_direction * 1.0;
        f[2] = 0.0;
        f[3] = 0.0;
        f[4] = spec.payoff_direction * kScenarioBump * m.spot;
        return f;
    }
    case InstrumentKind::daily_settled_future: {
        f[0] = 0.0;
        f[1] = spec.payoff_direction * 1.0;
        f[2] = 0.0;
        f[3] = 0.0;
        f[4] = spec.payoff_direction * kScenarioBump * m.spot;
        return f;
    }
    }
    throw ValidationError("unknown instrument kind");
}

double discount_factor(const MarketState& m) {
    return m.discount;
}

double period_cashflow(const InstrumentSpec& spec, const MarketState& now, const MarketState& next) {
    spec.validate();
    if (spec.expired())
        return 0.0;

    switch (spec.kind) {
    case InstrumentKind::perpetual_cashflow_claim:
        // paid at the period start
        return claim_cashflow_at(spec, now.spot);
    case InstrumentKind::vanilla_option: {
        if (spec.steps_to_expiry != 1)
            return 0.0;
        const double payoff = spec.payoff_direction > 0
                                  ? std::max(next.spot - spec.strike, 0.0)
                                  : std::max(spec.strike - next.spot, 0.0);
        return now.discount * payoff;
    }
    case InstrumentKind::forward: {
        if (spec.steps_to_expiry != 1)
            return 0.0;
        return now.discount * spec.payoff_direction * (next.spot - spec.strike);
    }
    case InstrumentKind::daily_settled_future:
        if (spec.steps_to_expiry != 1)
            return 0.0;
        return spec.payoff_direction * (next.spot - spec.strike);
    }
    throw ValidationError("unknown instrument kind");
}

namespace {

double state_rate(const GeneratorConfig& config, double spot) {
    return config.rate + config.rate_slope * std::log(spot / config.spot0);
}

MarketState make_state(const GeneratorConfig& config, int t, double spot, double vol,
                       const std::vector<double>& logrets) {
    MarketState m;
    m.time_index = t;
    m.spot = spot;
    m.vol = vol;
    m.dt = config.dt;
    double beta = std::exp(-state_rate(config, spot) * config.dt);
    beta = std::min(beta, config.beta_star);
    m.discount = beta;
    m.rate = -std::log(beta) / config.dt; // effective rate after the clamp
    m.features.reserve(2 + logrets.size() + 1);
    m.features.push_back(spot);
    for (double r : logrets)
        m.features.push_back(r);
    m.features.push_back(vol);
    m.features.push_back(static_cast<double>(t) / static_cast<double>(config.path_length));
    return m;
}

} // namespace

MarketPath simulate_market_path(const GeneratorConfig& config, std::uint64_t seed) {
    config.validate();
    const int n = config.path_length;

    MarketPath path;
    path.transition_seed = seed;
    path.states.reserve(n);

    SplitRng root = SplitRng(seed).derive(0x706174685fULL); // stream: market path

    std::vector<double> logrets(config.logret_window, 0.0);
    double spot = config.spot0;
    double vol = config.vol0;
    for (int t = 0; t < n; ++t) {
        path.states.push_back(make_state(config, t, spot, vol, logrets));
        // risk-neutral mode drifts at the state's effective (post-clamp)
        // rate so discounted book values are exact martingales
        const double mu = config.risk_neutral ? path.states.back().rate : config.drift;
        SplitRng step = root.derive(static_cast<std::uint64_t>(t));
        const double z = step.normal();
        const double next_spot = spot * std::exp((mu - 0.5 * vol * vol) * config.dt +
                                                 vol * std::sqrt(config.dt) * z);
        if (config.logret_window > 0) {
            for (int i = config.logret_window - 1; i > 0; --i)
                logrets[i] = logrets[i - 1];
            logrets[0] = std::log(next_spot / spot);
        }
        if (config.stoch_vol.enabled) {
            const double zv = step.normal();
            vol += config.stoch_vol.kappa * (config.stoch_vol.theta - vol) * config.dt +
                   config.stoch_vol.xi * std::sqrt(config.dt) * zv;
            vol = std::clamp(vol, config.stoch_vol.vol_min, 5.0);
        }
        spot = next_spot;
    }
    return path;
}

InstrumentFMR instrument_fmr(const InstrumentSpec& spec, const MarketState& now, const MarketState& next) {
    InstrumentFMR x;
    x.features_now = oracle_features(spec, now);
    const InstrumentSpec tomorrow = spec.aged();
    x.features_next = oracle_features(tomorrow, next);
    x.book_now = oracle_book_value(spec, now);
    x.book_next = oracle_book_value(tomorrow, next);
    x.cashflow = period_cashflow(spec, now, next);
    return x;
}

namespace {

InstrumentSpec book_instrument(const GeneratorConfig& config, const MarketState& m, SplitRng rng, int index) {
    if (config.book_include_claim && index == 0) {
        InstrumentSpec claim;
        claim.kind = InstrumentKind::perpetual_cashflow_claim;
        claim.steps_to_expiry = kPerpetualExpiry;
        claim.claim_rate = config.claim_rate * config.dt * std::pow(config.spot0, 1.0 - config.claim_exponent);
        claim.claim_exponent = config.claim_exponent;
        return claim;
    }
    InstrumentSpec opt;
    opt.kind = InstrumentKind::vanilla_option;
    opt.strike = m.spot * rng.uniform(config.book_moneyness_min, config.book_moneyness_max);
    opt.steps_to_expiry = rng.uniform_int(config.book_expiry_min, config.book_expiry_max);
    opt.payoff_direction = rng.uniform() < 0.5 ? 1 : -1;
    return opt;
}

InstrumentSpec hedge_instrument(const HedgeLegSpec& leg, const MarketState& m) {
    InstrumentSpec spec;
    spec.kind = leg.kind;
    spec.payoff_direction = leg.payoff_direction;
    switch (leg.kind) {
    case InstrumentKind::daily_settled_future:
        spec.steps_to_expiry = 1;
        spec.strike = m.spot * std::exp(m.rate * m.dt); // fair one-step strike
        break;
    case InstrumentKind::vanilla_option:
        spec.steps_to_expiry = leg.expiry_steps;
        spec.strike = m.spot * leg.moneyness;
        break;
    case InstrumentKind::forward:
        spec.steps_to_expiry = leg.expiry_steps;
        spec.strike = m.spot * std::exp(m.rate * m.dt * leg.expiry_steps);
        break;
    case InstrumentKind::perpetual_cashflow_claim:
        throw ValidationError("generator.hedge_legs: claims are not hedging instruments");
    }
    return spec;
}

} // namespace

HistoricDataset generate_history(const GeneratorConfig& config, std::uint64_t seed) {
    config.validate();

    HistoricDataset data;
    data.config = config;
    data.seed = seed;

    const MarketPath path = simulate_market_path(config, seed);
    data.states = path.states;

    SplitRng book_root = SplitRng(seed).derive(0x626f6f6bULL);   // stream: book menu
    SplitRng weight_root = SplitRng(seed).derive(0x77656967ULL); // stream: historic weights

    const int n = config.path_length;
    data.steps.reserve(n - 1);
    for (int t = 0; t + 1 < n; ++t) {
        const MarketState& now = data.states[t];
        const MarketState& next = data.states[t + 1];

        StepRecord step;
        step.t = t;
        for (int i = 0; i < config.book_instruments_per_step; ++i) {
            InstrumentRecord rec;
            rec.spec = book_instrument(config, now, book_root.derive(t).derive(i), i);
            SplitRng wr = weight_root.derive(t).derive(i);
            rec.weight = config.book_weight_scale * wr.normal();
            rec.fmr = instrument_fmr(rec.spec, now, next);
            step.book.push_back(std::move(rec));
        }
        for (std::size_t i = 0; i < config.hedge_legs.size(); ++i) {
            InstrumentRecord rec;
            rec.spec = hedge_instrument(config.hedge_legs[i], now);
            rec.weight = 0.0;
            rec.fmr = instrument_fmr(rec.spec, now, next);
            step.hedges.push_back(std::move(rec));
        }
        data.steps.push_back(std::move(step));
    }
    return data;
}

} // namespace hedge
