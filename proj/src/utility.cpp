#include "hedge/utility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "hedge/errors.hpp"
#include "hedge/rng.hpp"

namespace hedge {

namespace {

constexpr double kAxiomTol = 1e-8;
constexpr double kExpCap = 700.0;

bool differentiable_at_zero(UtilityKind kind) {
    switch (kind) {
    case UtilityKind::entropy:
    case UtilityKind::truncated_entropy:
    case UtilityKind::vicky:
    case UtilityKind::normalized_quadratic:
    case UtilityKind::expectation:
        return true;
    default:
        return false;
    }
}

} // namespace

const char* to_string(UtilityKind kind) {
    switch (kind) {
    case UtilityKind::expectation: return "expectation";
    case UtilityKind::worst_case: return "worst_case";
    case UtilityKind::cvar: return "cvar";
    case UtilityKind::entropy: return "entropy";
    case UtilityKind::truncated_entropy: return "truncated_entropy";
    case UtilityKind::vicky: return "vicky";
    case UtilityKind::normalized_quadratic: return "normalized_quadratic";
    }
    return "unknown";
}

UtilityKind utility_kind_from_string(const std::string& name) {
    if (name == "expectation") return UtilityKind::expectation;
    if (name == "worst_case") return UtilityKind::worst_case;
    if (name == "cvar") return UtilityKind::cvar;
    if (name == "entropy") return UtilityKind::entropy;
    if (name == "truncated_entropy") return UtilityKind::truncated_entropy;
    if (name == "vicky") return UtilityKind::vicky;
    if (name == "normalized_quadratic") return UtilityKind::normalized_quadratic;
    throw ValidationError("utility.kind: unknown utility family '" + name + "'");
}

UtilityFamily::UtilityFamily(UtilityKind k, double lam) : kind(k), lambda(lam) {
    if (uses_lambda() && !(lambda > 0.0))
        throw ValidationError("utility.lambda: must be > 0 for " + std::string(to_string(kind)));
    if (kind != UtilityKind::worst_case) {
        const double at_zero = u_eval(*this, 0.0);
        if (std::abs(at_zero) > 1e-12)
            throw NumericError("utility normalization u(0)=0 violated");
    }
    if (differentiable_at_zero(kind)) {
        const double h = 1e-6;
        const double slope = (u_eval(*this, h) - u_eval(*this, -h)) / (2.0 * h);
        if (std::abs(slope - 1.0) > 1e-9 * std::max(1.0, lambda) + 1e-7 * lambda * h)
            throw NumericError("utility normalization u'(0)=1 violated");
    }
}

bool UtilityFamily::uses_lambda() const {
    return kind != UtilityKind::expectation && kind != UtilityKind::worst_case;
}

EmpiricalDistribution::EmpiricalDistribution(std::vector<double> x, std::vector<double> p)
    : outcomes(std::move(x)), probabilities(std::move(p)) {
    if (outcomes.size() != probabilities.size())
        throw ValidationError("distribution: outcomes and probabilities differ in length");
    if (outcomes.empty())
        throw ValidationError("distribution: empty support");
    double total = 0.0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (!std::isfinite(outcomes[i]))
            throw ValidationError("distribution: non-finite outcome");
        if (probabilities[i] < 0.0)
            throw ValidationError("distribution: negative probability");
        total += probabilities[i];
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw ValidationError("distribution: probabilities must sum to 1");
}

EmpiricalDistribution EmpiricalDistribution::equally_weighted(std::vector<double> x) {
    const std::size_t n = x.size();
    std::vector<double> p(n, n ? 1.0 / static_cast<double>(n) : 0.0);
    return EmpiricalDistribution(std::move(x), std::move(p));
}

double EmpiricalDistribution::mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < outcomes.size(); ++i)
        m += probabilities[i] * outcomes[i];
    return m;
}

double EmpiricalDistribution::min_outcome() const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < outcomes.size(); ++i)
        if (probabilities[i] > 0.0)
            m = std::min(m, outcomes[i]);
    return m;
}

double EmpiricalDistribution::max_outcome() const {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < outcomes.size(); ++i)
        if (probabilities[i] > 0.0)
            m = std::max(m, outcomes[i]);
    return m;
}

double u_eval(const UtilityFamily& fam, double x) {
    const double lam = fam.lambda;
    switch (fam.kind) {
    case UtilityKind::expectation:
        return x;
    case UtilityKind::worst_case:
        throw ValidationError("worst_case utility has no pointwise u; evaluate at distribution level");
    case UtilityKind::cvar:
        return (1.0 + lam) * std::min(0.0, x);
    case UtilityKind::entropy: {
        if (std::abs(lam * x) > kExpCap)
            throw std::range_error("entropy utility overflow: |lambda*x| > 700");
        return (1.0 - std::exp(-lam * x)) / lam;
    }
    case UtilityKind::truncated_entropy: {
        if (x > 0.0) {
            if (lam * x > kExpCap)
                throw std::range_error("entropy utility overflow: |lambda*x| > 700");
            return (1.0 - std::exp(-lam * x)) / lam;
        }
        return x - 0.5 * lam * x * x;
    }
    case UtilityKind::vicky:
        return (1.0 + lam * x - std::sqrt(1.0 + lam * lam * x * x)) / lam;
    case UtilityKind::normalized_quadratic: {
        if (x < 1.0 / lam)
            return -0.5 * lam * (x - 1.0 / lam) * (x - 1.0 / lam) + 0.5 / lam;
        return 0.5 / lam;
    }
    }
    throw ValidationError("unknown utility kind");
}

double u_prime(const UtilityFamily& fam, double x) {
    const double lam = fam.lambda;
    switch (fam.kind) {
    case UtilityKind::expectation:
        return 1.0;
    case UtilityKind::worst_case:
        throw ValidationError("worst_case utility has no pointwise u");
    case UtilityKind::cvar:
        return x < 0.0 ? 1.0 + lam : 0.0;
    case UtilityKind::entropy:
        if (std::abs(lam * x) > kExpCap)
            throw std::range_error("entropy utility overflow: |lambda*x| > 700");
        return std::exp(-lam * x);
    case UtilityKind::truncated_entropy:
        if (x > 0.0) {
            if (lam * x > kExpCap)
                throw std::range_error("entropy utility overflow: |lambda*x| > 700");
            return std::exp(-lam * x);
        }
        return 1.0 - lam * x;
    case UtilityKind::vicky:
        return 1.0 - lam * x / std::sqrt(1.0 + lam * lam * x * x);
    case UtilityKind::normalized_quadratic:
        return x < 1.0 / lam ? 1.0 - lam * x : 0.0;
    }
    throw ValidationError("unknown utility kind");
}

double oce_objective(const UtilityFamily& fam, const EmpiricalDistribution& dist, double y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i)
        if (dist.probabilities[i] > 0.0)
            acc += dist.probabilities[i] * u_eval(fam, dist.outcomes[i] + y);
    return acc - y;
}

namespace {

double oce_slope(const UtilityFamily& fam, const EmpiricalDistribution& dist, double y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i)
        if (dist.probabilities[i] > 0.0)
            acc += dist.probabilities[i] * u_prime(fam, dist.outcomes[i] + y);
    return acc - 1.0;
}

// g'(y) is non-increasing (u concave). Bracket a sign change, then bisect.
OceResult maximize_by_slope(const UtilityFamily& fam, const EmpiricalDistribution& dist) {
    const double band = 10.0 / fam.lambda;
    double lo = dist.min_outcome() - band;
    double hi = dist.max_outcome() + band;

    double slope_lo = oce_slope(fam, dist, lo);
    double slope_hi = oce_slope(fam, dist, hi);
    double width = std::max(1.0, hi - lo);
    int expansions = 0;
    while (slope_lo < 0.0 && expansions < 200) {
        hi = lo;
        slope_hi = slope_lo;
        lo -= width;
        width *= 2.0;
        slope_lo = oce_slope(fam, dist, lo);
        ++expansions;
    }
    while (slope_hi > 0.0 && expansions < 200) {
        lo = hi;
        slope_lo = slope_hi;
        hi += width;
        width *= 2.0;
        slope_hi = oce_slope(fam, dist, hi);
        ++expansions;
    }
    if (slope_lo < 0.0 || slope_hi > 0.0)
        throw NumericError("oce_value: failed to bracket the optimal shift y*");

    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo) + std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (oce_slope(fam, dist, mid) >= 0.0)
            lo = mid;
        else
            hi = mid;
    }
    const double y_star = 0.5 * (lo + hi);
    return {oce_objective(fam, dist, y_star), y_star};
}

// Golden-section search for the kinked families; g is concave so the
// standard shrink applies. Expands the bracket when the maximizer lands on
// an edge.
OceResult maximize_by_golden(const UtilityFamily& fam, const EmpiricalDistribution& dist) {
    const double band = 10.0 / fam.lambda;
    double lo = dist.min_outcome() - band;
    double hi = dist.max_outcome() + band;
    constexpr double inv_phi = 0.6180339887498948482;

    for (int attempt = 0; attempt < 60; ++attempt) {
        double a = lo, b = hi;
        double c = b - inv_phi * (b - a);
        double d = a + inv_phi * (b - a);
        double fc = oce_objective(fam, dist, c);
        double fd = oce_objective(fam, dist, d);
        for (int it = 0; it < 300 && b - a > 1e-13 * std::max(1.0, std::abs(a) + std::abs(b)); ++it) {
            if (fc >= fd) {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = oce_objective(fam, dist, c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = oce_objective(fam, dist, d);
            }
        }
        const double y_star = 0.5 * (a + b);
        const double edge = 1e-9 * std::max(1.0, hi - lo);
        if (y_star - lo < edge) {
            lo -= (hi - lo);
            continue;
        }
        if (hi - y_star < edge) {
            hi += (hi - lo);
            continue;
        }
        return {oce_objective(fam, dist, y_star), y_star};
    }
    throw NumericError("oce_value: golden-section bracket kept hitting its boundary");
}

} // namespace

OceResult oce_value(const UtilityFamily& fam, const EmpiricalDistribution& dist) {
    switch (fam.kind) {
    case UtilityKind::expectation:
        // objective is constant in y
        return {dist.mean(), 0.0};
    case UtilityKind::worst_case:
        return {dist.min_outcome(), 0.0};
    case UtilityKind::cvar:
    case UtilityKind::truncated_entropy:
        return maximize_by_golden(fam, dist);
    case UtilityKind::entropy:
    case UtilityKind::vicky:
    case UtilityKind::normalized_quadratic:
        return maximize_by_slope(fam, dist);
    }
    throw ValidationError("unknown utility kind");
}

double entropy_closed_form(double lambda, const EmpiricalDistribution& dist) {
    if (!(lambda > 0.0))
        throw ValidationError("entropy_closed_form: lambda must be > 0");
    double t_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist.probabilities[i] <= 0.0)
            continue;
        if (std::abs(lambda * dist.outcomes[i]) > kExpCap)
            throw std::range_error("entropy_closed_form overflow: |lambda*x| > 700");
        t_max = std::max(t_max, -lambda * dist.outcomes[i]);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i)
        if (dist.probabilities[i] > 0.0)
            acc += dist.probabilities[i] * std::exp(-lambda * dist.outcomes[i] - t_max);
    return -(t_max + std::log(acc)) / lambda;
}

namespace {

double utility_of(const UtilityFamily& fam, const EmpiricalDistribution& dist) {
    return oce_value(fam, dist).value;
}

} // namespace

nlohmann::json AxiomReport::to_json() const {
    nlohmann::json j{
        {"utility", to_string(kind)},
        {"lambda", lambda},
        {"trials", trials},
        {"monotone", monotone},
        {"concave", concave},
        {"cash_invariant", cash_invariant},
        {"risk_averse", risk_averse},
        {"coherent", coherent},
        {"worst_violations",
         {{"monotone", worst_monotone},
          {"concave", worst_concave},
          {"cash_invariant", worst_cash},
          {"risk_averse", worst_risk_averse},
          {"coherence", worst_coherence}}},
    };
    if (coherence_counterexample) {
        j["coherence_counterexample"] = {
            {"outcomes", coherence_counterexample->outcomes},
            {"probabilities", coherence_counterexample->probabilities},
            {"lhs", coherence_counterexample->lhs},
            {"rhs", coherence_counterexample->rhs},
            {"detail", coherence_counterexample->detail},
        };
    }
    return j;
}

AxiomReport check_axioms(const UtilityFamily& fam, int trials, std::uint64_t seed) {
    if (trials < 1)
        throw ValidationError("check_axioms: trials must be >= 1");

    AxiomReport report;
    report.kind = fam.kind;
    report.lambda = fam.uses_lambda() ? fam.lambda : 0.0;
    report.trials = trials;

    // keep |lambda*x| comfortably inside the entropy overflow cap
    const double range = fam.uses_lambda() ? std::min(4.0, 25.0 / fam.lambda) : 4.0;
    SplitRng root(seed);

    for (int trial = 0; trial < trials; ++trial) {
        SplitRng rng = root.derive(static_cast<std::uint64_t>(trial));
        const int n = rng.uniform_int(2, 12);

        std::vector<double> probs(n);
        double total = 0.0;
        for (double& p : probs) {
            p = -std::log(1.0 - rng.uniform());
            total += p;
        }
        for (double& p : probs)
            p /= total;
        // renormalize exactly
        double drift = 0.0;
        for (double p : probs)
            drift += p;
        probs.back() += 1.0 - drift;

        std::vector<double> x(n), y(n), mix(n), x2(n), xc(n);
        for (int i = 0; i < n; ++i) {
            x[i] = rng.uniform(-range, range);
            y[i] = x[i] + rng.uniform(0.0, range); // X <= Y pointwise
        }
        const double alpha = rng.uniform();
        const double c = rng.uniform(-2.0, 2.0);
        for (int i = 0; i < n; ++i) {
            mix[i] = alpha * x[i] + (1.0 - alpha) * y[i];
            x2[i] = 2.0 * x[i];
            xc[i] = x[i] + c;
        }

        const EmpiricalDistribution dx(x, probs);
        const EmpiricalDistribution dy(y, probs);
        const EmpiricalDistribution dmix(mix, probs);
        const EmpiricalDistribution dx2(x2, probs);
        const EmpiricalDistribution dxc(xc, probs);

        const double ux = utility_of(fam, dx);
        const double uy = utility_of(fam, dy);
        const double umix = utility_of(fam, dmix);
        const double ux2 = utility_of(fam, dx2);
        const double uxc = utility_of(fam, dxc);

        const double mono_violation = ux - uy;
        const double concave_violation = alpha * ux + (1.0 - alpha) * uy - umix;
        const double cash_violation = std::abs(uxc - (ux + c));
        const double ra_violation = ux - dx.mean();
        const double coh_violation = std::abs(ux2 - 2.0 * ux);

        report.worst_monotone = std::max(report.worst_monotone, mono_violation);
        report.worst_concave = std::max(report.worst_concave, concave_violation);
        report.worst_cash = std::max(report.worst_cash, cash_violation);
        report.worst_risk_averse = std::max(report.worst_risk_averse, ra_violation);
        report.worst_coherence = std::max(report.worst_coherence, coh_violation);

        if (mono_violation > kAxiomTol)
            report.monotone = false;
        if (concave_violation > kAxiomTol)
            report.concave = false;
        if (cash_violation > kAxiomTol)
            report.cash_invariant = false;
        if (ra_violation > kAxiomTol)
            report.risk_averse = false;
        if (coh_violation > kAxiomTol && report.coherent) {
            report.coherent = false;
            AxiomCounterexample ce;
            ce.outcomes = x;
            ce.probabilities = probs;
            ce.lhs = ux2;
            ce.rhs = 2.0 * ux;
            ce.detail = "U[2X] != 2 U[X]";
            report.coherence_counterexample = ce;
        }
    }
    return report;
}

} // namespace hedge
