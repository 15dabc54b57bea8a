#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace hedge {

// Utility function families for optimized-certainty-equivalent monetary
// utilities. Every pointwise u is normalized to u(0) = 0 and, where u is
// differentiable at 0, u'(0) = 1.
enum class UtilityKind {
    expectation,
    worst_case,
    cvar,
    entropy,
    truncated_entropy,
    vicky,
    normalized_quadratic,
};

const char* to_string(UtilityKind kind);
UtilityKind utility_kind_from_string(const std::string& name);

struct UtilityFamily {
    UtilityKind kind = UtilityKind::expectation;
    double lambda = 1.0; // risk aversion; ignored for expectation / worst_case

    UtilityFamily() = default;
    UtilityFamily(UtilityKind k, double lam);

    bool uses_lambda() const;
};

// Finite conditional law: outcomes with probabilities summing to one.
struct EmpiricalDistribution {
    std::vector<double> outcomes;
    std::vector<double> probabilities;

    EmpiricalDistribution(std::vector<double> x, std::vector<double> p);
    static EmpiricalDistribution equally_weighted(std::vector<double> x);

    std::size_t size() const { return outcomes.size(); }
    double mean() const;
    double min_outcome() const; // over atoms with positive probability
    double max_outcome() const;
};

// Pointwise utility. Throws ValidationError for worst_case, which is not a
// pointwise function.
double u_eval(const UtilityFamily& fam, double x);
double u_prime(const UtilityFamily& fam, double x);

struct OceResult {
    double value = 0.0;
    double y_star = 0.0;
};

// U[X] = sup_y E[u(X + y)] - y, solved by 1-d concave maximization.
// Derivative bisection for C^1 families, golden section for cvar and
// truncated_entropy, exact shortcuts for expectation and worst_case.
OceResult oce_value(const UtilityFamily& fam, const EmpiricalDistribution& dist);

// The inner objective g(y) = E[u(X+y)] - y. Exposed so tests can probe
// local maximality of the reported y*.
double oce_objective(const UtilityFamily& fam, const EmpiricalDistribution& dist, double y);

// -(1/lambda) ln E[exp(-lambda X)], log-sum-exp shifted. Requires
// |lambda * x| <= 700 for every atom.
double entropy_closed_form(double lambda, const EmpiricalDistribution& dist);

struct AxiomCounterexample {
    std::vector<double> outcomes;
    std::vector<double> probabilities;
    double lhs = 0.0;
    double rhs = 0.0;
    std::string detail;
};

struct AxiomReport {
    UtilityKind kind = UtilityKind::expectation;
    double lambda = 0.0;
    int trials = 0;
    bool monotone = true;
    bool concave = true;
    bool cash_invariant = true;
    bool risk_averse = true; // U[X] <= E[X]
    bool coherent = true;    // U[nX] = n U[X]
    double worst_monotone = 0.0;
    double worst_concave = 0.0;
    double worst_cash = 0.0;
    double worst_risk_averse = 0.0;
    double worst_coherence = 0.0;
    std::optional<AxiomCounterexample> coherence_counterexample;

    nlohmann::json to_json() const;
};

// Randomized verification of the monetary-utility axioms at tolerance 1e-8.
AxiomReport check_axioms(const UtilityFamily& fam, int trials, std::uint64_t seed);

} // namespace hedge
