#include "hedge/instruments.hpp"

#include <cmath>

#include "hedge/errors.hpp"

namespace hedge {

InstrumentFMR InstrumentFMR::zero(int feature_dim) {
    InstrumentFMR x;
    x.features_now.assign(feature_dim, 0.0);
    x.features_next.assign(feature_dim, 0.0);
    return x;
}

bool InstrumentFMR::expired() const {
    if (!next_populated)
        return false;
    if (book_next != 0.0)
        return false;
    for (double v : features_next)
        if (v != 0.0)
            return false;
    return true;
}

int HedgeBasket::feature_dim() const {
    return legs.empty() ? 0 : legs.front().feature_dim();
}

Portfolio combine(const std::vector<double>& weights, const std::vector<InstrumentFMR>& instruments) {
    if (weights.size() != instruments.size())
        throw ValidationError("combine: weights and instruments differ in length");
    if (instruments.empty())
        throw ValidationError("combine: empty instrument list");

    const int dim = instruments.front().feature_dim();
    const bool next_pop = instruments.front().next_populated;
    const bool cf_pop = instruments.front().cashflow_populated;

    InstrumentFMR acc = InstrumentFMR::zero(dim);
    acc.next_populated = next_pop;
    acc.cashflow_populated = cf_pop;

    for (std::size_t i = 0; i < instruments.size(); ++i) {
        const InstrumentFMR& x = instruments[i];
        if (x.feature_dim() != dim || static_cast<int>(x.features_next.size()) != dim)
            throw ValidationError("combine: inconsistent feature dimension");
        if (x.next_populated != next_pop || x.cashflow_populated != cf_pop)
            throw ValidationError("combine: mixed populated state across instruments");
        const double w = weights[i];
        for (int f = 0; f < dim; ++f) {
            acc.features_now[f] += w * x.features_now[f];
            acc.features_next[f] += w * x.features_next[f];
        }
        acc.book_now += w * x.book_now;
        acc.book_next += w * x.book_next;
        acc.cashflow += w * x.cashflow;
    }
    return Portfolio{acc};
}

Portfolio apply_action(const Portfolio& rolled, const std::vector<double>& action, const HedgeBasket& basket) {
    if (static_cast<int>(action.size()) != basket.size())
        throw ValidationError("apply_action: action length does not match basket size");

    Portfolio out = rolled;
    for (int i = 0; i < basket.size(); ++i) {
        const InstrumentFMR& leg = basket.legs[i];
        if (leg.feature_dim() != out.feature_dim())
            throw ValidationError("apply_action: basket feature dimension mismatch");
        if (!leg.next_populated)
            throw ValidationError("apply_action: basket leg has unpopulated next-step fields");
        const double a = action[i];
        for (int f = 0; f < out.feature_dim(); ++f)
            out.fmr.features_now[f] += a * leg.features_next[f];
        out.fmr.book_now += a * leg.book_next;
    }
    return out;
}

Portfolio roll(const Portfolio& z) {
    if (!z.fmr.next_populated)
        throw ValidationError("roll: portfolio next-step fields are unpopulated");

    InstrumentFMR out = InstrumentFMR::zero(z.feature_dim());
    out.features_now = z.fmr.features_next;
    out.book_now = z.fmr.book_next;
    out.next_populated = false;
    out.cashflow_populated = false;
    return Portfolio{out};
}

} // namespace hedge
