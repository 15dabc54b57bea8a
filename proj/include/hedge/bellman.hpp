#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hedge/market.hpp"
#include "hedge/utility.hpp"

namespace hedge {

// Value function on the enumerated state space (market state x lattice point).
struct ValueTable {
    int n_market = 0;
    int n_lattice = 0;
    std::vector<double> values; // row-major: [m * n_lattice + z]

    double& at(int m, int z) { return values[static_cast<std::size_t>(m) * n_lattice + z]; }
    double at(int m, int z) const { return values[static_cast<std::size_t>(m) * n_lattice + z]; }

    static ValueTable zeros(int n_market, int n_lattice);
    static ValueTable uniform_random(int n_market, int n_lattice, double lo, double hi, std::uint64_t seed);
};

double sup_norm_diff(const ValueTable& a, const ValueTable& b);

// Fully enumerated hedging MDP: a small market chain, a lattice of hedge
// holdings, a finite action grid, and precomputed reward tensors.
//
// reward[.] is the mark-to-market reward R(a; z, m, m'); reward_cash[.] is
// the cashflow reward of the traded portfolio, r(z + a h, m) - a B(h,m) - c.
// book[.] holds B(z, m). The successor map realizes z' + a h' as a nearest
// lattice point and is independent of m' by construction.
struct HedgingMdp {
    std::vector<std::vector<double>> transition;      // K x K, rows sum to 1
    std::vector<double> beta;                         // K, each <= beta_star < 1
    std::vector<double> calendar_discount;            // K, cumulative discount attribute
    std::vector<std::vector<double>> market_features; // K x M
    std::vector<double> spots;                        // K
    std::vector<double> lattice;                      // P
    std::vector<double> actions;                      // A
    std::vector<int> successor;                       // P x A: [z * A + a] -> lattice index
    std::vector<double> reward;                       // ((a P + z) K + m) K + m'
    std::vector<double> reward_cash;                  // same layout
    std::vector<double> book;                         // m * P + z
    double beta_star = 0.9;

    int n_market() const { return static_cast<int>(beta.size()); }
    int n_lattice() const { return static_cast<int>(lattice.size()); }
    int n_actions() const { return static_cast<int>(actions.size()); }

    int succ(int z, int a) const { return successor[static_cast<std::size_t>(z) * n_actions() + a]; }
    std::size_t reward_index(int a, int z, int m, int mn) const {
        return ((static_cast<std::size_t>(a) * n_lattice() + z) * n_market() + m) * n_market() + mn;
    }
    double r(int a, int z, int m, int mn) const { return reward[reward_index(a, z, m, mn)]; }
    double rc(int a, int z, int m, int mn) const { return reward_cash[reward_index(a, z, m, mn)]; }
    double book_value(int m, int z) const { return book[static_cast<std::size_t>(m) * n_lattice() + z]; }

    void validate() const;
    nlohmann::json to_json() const;
    static HedgingMdp from_json(const nlohmann::json& j);
};

enum class OperatorKind {
    mark_to_market, // T: sup_a U[ beta f(succ) + R | m ]
    cash_plain,     // sup_a U[ beta f(succ) + Rtilde | m ]  (the book-value remark's form)
    cash_calendar,  // sup_a (1/b) U[ b beta f(succ) + b Rtilde | m ], b = calendar_discount(m)
};

// One sweep of the selected Bellman operator. Ties in the action sup break
// to the lowest grid index.
ValueTable apply_bellman(const HedgingMdp& mdp, const UtilityFamily& fam, const ValueTable& f,
                         OperatorKind kind = OperatorKind::mark_to_market);

// Exact n-step operator (n = 1 or 2): sup over per-state action plans of
// U[ beta_n f(final) + sum_i beta_{i-1} R_i | m ] with accumulated discounts,
// evaluated by enumerating the unrolled tree.
ValueTable apply_bellman_multi(const HedgingMdp& mdp, const UtilityFamily& fam, const ValueTable& f, int n);

struct ValueIterationResult {
    ValueTable table;
    int iterations = 0;
    std::vector<double> residuals;
    bool converged = false;
};

// Iterates f <- op(f) until the sup-norm residual drops below tol.
// max_iter = 0 derives the bound from the contraction factor.
ValueIterationResult value_iterate(const HedgingMdp& mdp, const UtilityFamily& fam, OperatorKind kind,
                                   const ValueTable& f0, double tol = 1e-8, int max_iter = 0);

// Per-state argmax action indices under V; ties to the lowest index.
std::vector<int> greedy_policy(const HedgingMdp& mdp, const UtilityFamily& fam, const ValueTable& v,
                               OperatorKind kind = OperatorKind::mark_to_market);

struct CashflowEquivalenceReport {
    bool converged = false;
    double max_abs_gap = 0.0;
    int iterations_mark = 0;
    int iterations_cash = 0;
    bool passed = false;
};

// Solves f = T f and g = T_alt g and checks g = f + B within tol.
CashflowEquivalenceReport verify_cashflow_equivalence(const HedgingMdp& mdp, const UtilityFamily& fam,
                                                      double tol);

// ------------------------------------------------------------------
// Chain instances
// ------------------------------------------------------------------

// A small spot chain holding one perpetual claim book, hedged with either
// the claim itself (positions persist on the lattice) or a one-period
// future (positions die each step, the lattice degenerates to {0}).
struct ChainMdpConfig {
    std::vector<double> spots{90.0, 100.0, 110.0};
    std::vector<std::vector<double>> transition{
        {0.55, 0.35, 0.10}, {0.25, 0.50, 0.25}, {0.10, 0.35, 0.55}};
    // pricing matrix for book values; empty means "equal to transition"
    // (the risk-neutral case)
    std::vector<std::vector<double>> pricing;
    double beta = 0.9;
    std::vector<double> calendar_discount; // empty -> all ones
    double payout_scale = 1.0;             // claim pays payout_scale * spot / 100 per step
    std::vector<double> payout;            // explicit per-state payouts; overrides payout_scale
    std::vector<double> hedge_payout;      // hedge claim's payouts; empty = same claim
    double base_weight = -2.0;             // fixed claim book
    enum class Hedge { claim, future } hedge = Hedge::claim;
    double lattice_min = -2.5;
    double lattice_max = 2.5;
    int lattice_points = 11;
    double action_bound = 2.5;
    int action_points = 11;
    double cost_rate = 0.005; // gamma weight on the book-value feature

    void validate() const;
    nlohmann::json to_json() const;
    static ChainMdpConfig from_json(const nlohmann::json& j);
};

HedgingMdp build_chain_mdp(const ChainMdpConfig& config);

// Book values of the chain claim per market state: (I - beta Ptilde)^-1 g.
std::vector<double> chain_claim_values(const ChainMdpConfig& config);

// Synthetic historic dataset sampled from the chain; book = the fixed claim
// position, hedge = the configured leg. Matches the tensors of
// build_chain_mdp exactly.
HistoricDataset make_chain_dataset(const ChainMdpConfig& config, int path_length, std::uint64_t seed);

// Canned instances used across tests and the CLI.
ChainMdpConfig default_chain_config();             // K=3, P=11, A=11, beta 0.9
ChainMdpConfig risk_neutral_chain_config();        // pricing = transition, zero cost

// Two-regime fixture with beta = 1 - 1e-9 isolating the time-consistency
// property of the two-step operator (see tests).
HedgingMdp make_time_consistency_mdp();

// Finite-book layered chain: regimes x calendar layers, claim cashflows
// stop after `horizon` layers, calendar_discount(regime, layer) = beta^layer.
struct LayeredMdpConfig {
    int regimes = 2;
    int horizon = 0; // 0 -> derived from the truncation bound
    double beta = 0.9;
    double truncation_bound = 1e-4;
    double payout_scale = 1.0;
    double base_weight = -1.0;
    int lattice_points = 3;
    double lattice_max = 1.0;
    int action_points = 3;
    double action_bound = 1.0;
    double cost_rate = 0.002;
};

HedgingMdp make_layered_vanilla_mdp(const LayeredMdpConfig& config);

} // namespace hedge
