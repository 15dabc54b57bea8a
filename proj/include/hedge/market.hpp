#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hedge/instruments.hpp"

namespace hedge {

// Down-scenario used for the fifth feature column.
inline constexpr double kScenarioBump = -0.10;

// Sentinel expiry for perpetual instruments.
inline constexpr int kPerpetualExpiry = 1 << 30;

// One node of the exogenous market chain. `features` is the observable
// vector fed to the networks: [spot, log-return window..., vol, time frac].
struct MarketState {
    int time_index = 0;
    std::vector<double> features;
    double discount = 0.99; // one-step beta, <= beta_star strictly below 1
    double rate = 0.0;      // annualized short rate backing `discount`
    double spot = 100.0;
    double vol = 0.2;
    double dt = 1.0 / 252.0;
};

struct MarketPath {
    std::vector<MarketState> states;
    std::uint64_t transition_seed = 0;
};

enum class InstrumentKind {
    perpetual_cashflow_claim,
    vanilla_option,
    forward,
    daily_settled_future,
};

const char* to_string(InstrumentKind kind);
InstrumentKind instrument_kind_from_string(const std::string& name);

struct InstrumentSpec {
    InstrumentKind kind = InstrumentKind::vanilla_option;
    double strike = 0.0;
    int steps_to_expiry = 0; // 0 means expired
    int payoff_direction = 1; // +1 call / long, -1 put / short
    double claim_rate = 0.0;      // per-period cashflow scale, claims only
    double claim_exponent = 0.5;  // spot power of the claim's cashflow

    bool expired() const { return steps_to_expiry <= 0; }
    InstrumentSpec aged() const; // the same contract one step later
    void validate() const;
};

struct StochVolParams {
    bool enabled = false;
    double kappa = 2.0;
    double theta = 0.2;
    double xi = 0.3;
    double vol_min = 0.05;
};

struct HedgeLegSpec {
    InstrumentKind kind = InstrumentKind::daily_settled_future;
    double moneyness = 1.0;
    int expiry_steps = 1;
    int payoff_direction = 1;
};

// Time is measured in decision periods: dt = 1 and rates/vols are per step.
// The default flat rate makes the one-step discount exactly beta_star.
struct GeneratorConfig {
    int path_length = 250; // N
    double spot0 = 100.0;
    double vol0 = 0.06;
    double drift = 0.004;               // real-world, per step
    double rate = 0.010050335853501441; // -ln(0.99): one-step discount 0.99
    double rate_slope = 0.0;            // state-dependent: rate + slope * ln(S/spot0)
    double beta_star = 0.99;
    double dt = 1.0;
    bool risk_neutral = false; // drift := effective rate; requires flat vol
    StochVolParams stoch_vol;
    int logret_window = 1;

    int book_instruments_per_step = 4;
    bool book_include_claim = true;
    double book_weight_scale = 1.0;
    double book_moneyness_min = 0.9;
    double book_moneyness_max = 1.1;
    int book_expiry_min = 5;
    int book_expiry_max = 40;
    double claim_rate = 0.01;
    double claim_exponent = 0.5;

    std::vector<HedgeLegSpec> hedge_legs = default_hedge_legs();

    static std::vector<HedgeLegSpec> default_hedge_legs();
    void validate() const; // throws ValidationError naming the offending field
};

// Black-Scholes closed forms (flat rate, no dividends).
namespace black_scholes {
double price(bool call, double spot, double strike, double vol, double rate, double tau);
double delta(bool call, double spot, double strike, double vol, double rate, double tau);
double gamma(double spot, double strike, double vol, double rate, double tau);
double vega(double spot, double strike, double vol, double rate, double tau);
} // namespace black_scholes

// Official mark-to-market under state m; exactly zero once expired.
double oracle_book_value(const InstrumentSpec& spec, const MarketState& m);

// FMR feature vector [book, delta, gamma, vega, -10% spot scenario P&L].
std::vector<double> oracle_features(const InstrumentSpec& spec, const MarketState& m);

double discount_factor(const MarketState& m);

// Period cashflow of holding `spec` over [t, t+1), present-valued to t.
// Flows at the period start enter as-is; settlement flows at t+1 are
// discounted by beta(m_now). The daily future is margined with interest so
// its period cashflow equals the settlement-price change exactly.
double period_cashflow(const InstrumentSpec& spec, const MarketState& now, const MarketState& next);

MarketPath simulate_market_path(const GeneratorConfig& config, std::uint64_t seed);

struct InstrumentRecord {
    InstrumentSpec spec;
    double weight = 0.0; // historic book weight; unused for hedges
    InstrumentFMR fmr;
};

struct StepRecord {
    int t = 0;
    std::vector<InstrumentRecord> book;
    std::vector<InstrumentRecord> hedges;
};

struct HistoricDataset {
    GeneratorConfig config;
    std::uint64_t seed = 0;
    std::vector<MarketState> states; // length N
    std::vector<StepRecord> steps;   // length N - 1

    int n_steps() const { return static_cast<int>(steps.size()); }
    int market_dim() const { return states.empty() ? 0 : static_cast<int>(states.front().features.size()); }
};

// Deterministic in (config, seed).
HistoricDataset generate_history(const GeneratorConfig& config, std::uint64_t seed);

// Builds the full two-step FMR of `spec` across (now, next) states,
// including the period cashflow.
InstrumentFMR instrument_fmr(const InstrumentSpec& spec, const MarketState& now, const MarketState& next);

} // namespace hedge
