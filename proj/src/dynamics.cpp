#include "hedge/dynamics.hpp"

#include <cmath>
#include <limits>

#include "hedge/errors.hpp"

namespace hedge {

CostSpec::CostSpec(std::vector<double> gamma, double bound)
    : gamma_weights(std::move(gamma)), action_bound(bound) {
    for (double g : gamma_weights)
        if (g < 0.0 || !std::isfinite(g))
            throw ValidationError("cost.gamma_weights: entries must be finite and >= 0");
    if (!(action_bound > 0.0))
        throw ValidationError("cost.action_bound: must be > 0");
}

double pnl_db(const InstrumentFMR& x, double beta) {
    if (!x.next_populated || !x.cashflow_populated)
        throw ValidationError("pnl_db: instrument has unpopulated next-step fields");
    if (!(beta > 0.0) || beta > 1.0)
        throw ValidationError("pnl_db: beta must lie in (0, 1]");
    return beta * x.book_next - x.book_now + x.cashflow;
}

double cost(const CostSpec& spec, const std::vector<double>& action,
            const std::vector<std::vector<double>>& hedge_features) {
    if (action.size() != hedge_features.size())
        throw ValidationError("cost: action length does not match hedge feature rows");

    for (double a : action)
        if (std::abs(a) > spec.action_bound)
            return std::numeric_limits<double>::infinity();

    const std::size_t dim = spec.gamma_weights.size();
    double total = 0.0;
    for (std::size_t f = 0; f < dim; ++f) {
        double net = 0.0;
        for (std::size_t i = 0; i < action.size(); ++i) {
            if (hedge_features[i].size() != dim)
                throw ValidationError("cost: hedge feature row dimension mismatch");
            net += action[i] * spec.gamma_weights[f] * hedge_features[i][f];
        }
        total += std::abs(net);
    }
    return total;
}

namespace {

std::vector<std::vector<double>> features_now_of(const HedgeBasket& basket) {
    std::vector<std::vector<double>> rows;
    rows.reserve(basket.legs.size());
    for (const auto& leg : basket.legs)
        rows.push_back(leg.features_now);
    return rows;
}

} // namespace

double reward_mark_to_market(const std::vector<double>& action, const Portfolio& z,
                             const HedgeBasket& basket, double beta, const CostSpec& spec) {
    if (static_cast<int>(action.size()) != basket.size())
        throw ValidationError("reward: action length does not match basket size");

    const double c = cost(spec, action, features_now_of(basket));
    if (std::isinf(c))
        return -std::numeric_limits<double>::infinity();

    double r = pnl_db(z.fmr, beta);
    for (int i = 0; i < basket.size(); ++i)
        r += action[i] * pnl_db(basket.legs[i], beta);
    return r - c;
}

double reward_cashflow(const std::vector<double>& action, const Portfolio& z,
                       const HedgeBasket& basket, const CostSpec& spec) {
    if (static_cast<int>(action.size()) != basket.size())
        throw ValidationError("reward: action length does not match basket size");
    if (!z.fmr.cashflow_populated)
        throw ValidationError("reward_cashflow: portfolio cashflow is unpopulated");

    const double c = cost(spec, action, features_now_of(basket));
    if (std::isinf(c))
        return -std::numeric_limits<double>::infinity();

    double proceeds = 0.0;
    for (int i = 0; i < basket.size(); ++i)
        proceeds -= action[i] * basket.legs[i].book_now;
    return z.fmr.cashflow + proceeds - c;
}

} // namespace hedge
