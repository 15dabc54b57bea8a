#pragma once

#include <vector>

namespace hedge {

// Default feature layout used by the generator:
//   [book value, delta, gamma, vega, -10% spot scenario P&L]
inline constexpr int kFeatureCount = 5;

// Linear feature representation of one instrument over one decision period.
// "now" fields are computed at t, "next" fields re-price the same contract
// at t+1; cashflow aggregates the period's flows in accounting currency.
struct InstrumentFMR {
    std::vector<double> features_now;
    std::vector<double> features_next;
    double book_now = 0.0;
    double book_next = 0.0;
    double cashflow = 0.0;
    bool next_populated = true;
    bool cashflow_populated = true;

    static InstrumentFMR zero(int feature_dim);
    int feature_dim() const { return static_cast<int>(features_now.size()); }
    bool expired() const; // next-step fields are all exactly zero
};

// A book: the weighted aggregate of its instruments' FMRs. Linearity of the
// features makes the aggregate a sufficient state.
struct Portfolio {
    InstrumentFMR fmr;

    int feature_dim() const { return fmr.feature_dim(); }
    static Portfolio zero(int feature_dim) { return Portfolio{InstrumentFMR::zero(feature_dim)}; }
};

// This step's tradable hedging instruments.
struct HedgeBasket {
    std::vector<InstrumentFMR> legs;

    int size() const { return static_cast<int>(legs.size()); }
    int feature_dim() const;
};

// Weighted sum of instrument FMRs, field by field.
Portfolio combine(const std::vector<double>& weights, const std::vector<InstrumentFMR>& instruments);

// The portfolio entering tomorrow: z' + sum_i a_i h_i'. `rolled` must hold
// tomorrow's view (now-fields at t+1); each basket leg contributes its
// next-step fields.
Portfolio apply_action(const Portfolio& rolled, const std::vector<double>& action, const HedgeBasket& basket);

// Shift the FMR one step: now <- next. Forward-looking fields become
// unpopulated until re-joined with the next step's records.
Portfolio roll(const Portfolio& z);

} // namespace hedge
