#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hedge/dynamics.hpp"
#include "hedge/instruments.hpp"
#include "hedge/market.hpp"
#include "hedge/net.hpp"
#include "hedge/utility.hpp"

namespace hedge {

// One sampled decision problem: portfolio and hedges over a single period,
// with both market feature vectors. `weight` is the sample's probability
// mass within the batch (exact-conditional toy batches use non-uniform
// weights; the sampler emits 1 everywhere).
struct ScenarioSample {
    Portfolio z;
    HedgeBasket basket;
    std::vector<double> market_now;
    std::vector<double> market_next;
    double beta = 0.99;
    double weight = 1.0;
};

struct ScenarioBatch {
    std::vector<ScenarioSample> samples;
    int feature_dim = 0;
    int market_dim = 0;
    int legs = 0;

    int size() const { return static_cast<int>(samples.size()); }
    double total_weight() const;
};

// Q over portfolios: component-wise Normal(0, sigma_w) mixed with a point
// mass at the historic book weights.
struct SamplerConfig {
    double sigma_w = 1.5;
    double historic_mass = 0.25;
};

ScenarioBatch sample_scenarios(const HistoricDataset& dataset, const SamplerConfig& sampler,
                               int count, std::uint64_t seed);

// Affine standardization of network inputs, fitted once per training run.
struct InputNormalization {
    std::vector<double> mean;
    std::vector<double> scale;

    std::vector<double> apply(const std::vector<double>& x) const;
    static InputNormalization identity(int dim);
    static InputNormalization fit(const ScenarioBatch& batch);
};

enum class CriticLoss { abs, squared_unconditional, entropic };
const char* to_string(CriticLoss loss);
CriticLoss critic_loss_from_string(const std::string& name);

struct LearningRate {
    double initial = 0.02;
    double decay = 0.0; // lr(round) = initial / (1 + decay * round)

    double at(int round) const { return initial / (1.0 + decay * round); }
};

struct TrainConfig {
    int batch_size = 256;
    int rounds = 2000;
    int actor_steps_per_round = 1;
    int critic_steps_per_round = 1;
    LearningRate actor_lr{0.02, 0.0};
    LearningRate critic_lr{0.05, 0.0};
    double momentum = 0.9;
    std::uint64_t seed = 1;
    UtilityFamily utility{UtilityKind::entropy, 1.0};
    bool entropy_closed_form = false;
    CriticLoss critic_loss = CriticLoss::squared_unconditional;
    CostSpec cost = CostSpec::zero(kFeatureCount);
    SamplerConfig sampler;
    std::vector<int> hidden{32, 32};

    void validate() const;
};

// Momentum buffer for plain SGD with momentum.
struct SgdState {
    std::vector<double> velocity;
};

// One ascent step of the actor objective
//   E[ u(beta V_prev(Z + pi(Z,M) . H'; M') + y(Z,M)) - y(Z,M) + R(pi; Z,M,M') ]
// over the batch; pi's raw outputs are squashed to the admissible box via
// bound * tanh. With entropy_closed_form the objective is instead
//   -(1/lambda) ln E[ exp(-lambda (beta V_prev(...) + R(pi))) ]
// and the shift network is bypassed. Returns the pre-step objective.
double actor_step(const Approximator& v_prev, Approximator& pi, Approximator& y,
                  const ScenarioBatch& batch, const UtilityFamily& fam, const CostSpec& cost,
                  const InputNormalization& norm, double lr, bool entropy_closed_form,
                  double momentum = 0.0, SgdState* pi_state = nullptr, SgdState* y_state = nullptr);

// One descent step of the critic on per-sample targets:
//   abs:                   t = u(beta V_prev(...) + y) - y + R   (the actor's
//                          own integrand, i.e. sampled T V^{(n-1)}), |V - t|
//   squared_unconditional: t = beta u(V_prev(...) + y) - y + R, (V - t)^2
//   entropic:              linex scoring of V against beta V_prev(...) + R,
//                          whose conditional minimizer is exactly the entropy
//                          certainty equivalent of the Bellman outcome
//                          (entropy family only).
// Returns the pre-step loss.
double critic_step(Approximator& v, const Approximator& v_prev, const Approximator& pi,
                   const Approximator& y, const ScenarioBatch& batch, const UtilityFamily& fam,
                   const CostSpec& cost, const InputNormalization& norm, double lr, CriticLoss kind,
                   double momentum = 0.0, SgdState* v_state = nullptr);

// Per-sample critic target of the generic path, exposed for the
// gradient-identity checks.
double critic_target(const Approximator& v_prev, const Approximator& pi, const Approximator& y,
                     const ScenarioSample& sample, const UtilityFamily& fam, const CostSpec& cost,
                     const InputNormalization& norm, CriticLoss kind = CriticLoss::squared_unconditional);

struct TrainedModel {
    Approximator pi;
    Approximator y;
    Approximator v;
    InputNormalization norm;
    int feature_dim = 0;
    int market_dim = 0;
    int legs = 0;
    double action_bound = 5.0;
    UtilityFamily utility{UtilityKind::entropy, 1.0};
    int rounds_trained = 0;

    std::vector<double> policy_action(const std::vector<double>& z_features,
                                      const std::vector<double>& market) const;
    double value(const std::vector<double>& z_features, const std::vector<double>& market) const;

    nlohmann::json to_json() const;
    static TrainedModel from_json(const nlohmann::json& j);
};

struct TrainingCurves {
    std::vector<double> actor_objective;
    std::vector<double> critic_loss;

    std::string to_csv() const;
};

struct TrainResult {
    TrainedModel model;
    TrainingCurves curves;
};

TrainResult train(const HistoricDataset& dataset, const TrainConfig& config);

// ------------------------------------------------------------------
// Rollout evaluation
// ------------------------------------------------------------------

// Fresh episode data keyed by an episode seed.
using EpisodeSource = std::function<HistoricDataset(std::uint64_t)>;

// action given (portfolio features, market features)
using PolicyFn =
    std::function<std::vector<double>(const std::vector<double>&, const std::vector<double>&)>;

struct EvalReport {
    double policy_utility = 0.0;
    double baseline_utility = 0.0;
    double policy_mean = 0.0;
    double baseline_mean = 0.0;
    int episodes = 0;
    int horizon = 0;

    nlohmann::json to_json() const;
};

// Rolls the policy along held-out paths against the no-trade baseline on the
// same paths. Hedge positions persist when the leg is a perpetual claim and
// die after one period for daily futures; option hedges are rejected.
EvalReport evaluate_policy(const PolicyFn& policy, const EpisodeSource& world,
                           const UtilityFamily& fam, const CostSpec& cost, int episodes,
                           std::uint64_t seed);

EvalReport evaluate(const TrainedModel& model, const EpisodeSource& world, const UtilityFamily& fam,
                    const CostSpec& cost, int episodes, std::uint64_t seed);

} // namespace hedge
