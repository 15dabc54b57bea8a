#pragma once

#include <vector>

#include "hedge/instruments.hpp"

namespace hedge {

// Proportional transaction cost on net traded feature exposure plus a box
// constraint realizing the admissible action set.
struct CostSpec {
    std::vector<double> gamma_weights; // per-feature, >= 0
    double action_bound = 5.0;

    CostSpec() = default;
    CostSpec(std::vector<double> gamma, double bound);

    static CostSpec zero(int feature_dim) { return CostSpec(std::vector<double>(feature_dim, 0.0), 5.0); }
};

// Discounted one-period P&L: beta * B(x', M') - B(x, m) + r(x, m).
double pnl_db(const InstrumentFMR& x, double beta);

// c(a) = sum_f | sum_i a_i * gamma_f * f_{i,f} |. Returns +infinity when any
// |a_i| exceeds the action bound (inadmissible, not an error).
double cost(const CostSpec& spec, const std::vector<double>& action,
            const std::vector<std::vector<double>>& hedge_features);

// Reward of acting: portfolio P&L + hedge P&L - trading cost. Inadmissible
// actions yield -infinity.
double reward_mark_to_market(const std::vector<double>& action, const Portfolio& z,
                             const HedgeBasket& basket, double beta, const CostSpec& spec);

// Cashflow-only reward: r(z,m) - a . B(h,m) - c(a).
double reward_cashflow(const std::vector<double>& action, const Portfolio& z,
                       const HedgeBasket& basket, const CostSpec& spec);

} // namespace hedge
