#include "hedge/actor_critic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "hedge/errors.hpp"
#include "hedge/rng.hpp"

namespace hedge {

double ScenarioBatch::total_weight() const {
    double w = 0.0;
    for (const auto& s : samples)
        w += s.weight;
    return w;
}

const char* to_string(CriticLoss loss) {
    switch (loss) {
    case CriticLoss::abs: return "abs";
    case CriticLoss::squared_unconditional: return "squared_unconditional";
    case CriticLoss::entropic: return "entropic";
    }
    return "unknown";
}

CriticLoss critic_loss_from_string(const std::string& name) {
    if (name == "abs") return CriticLoss::abs;
    if (name == "squared_unconditional") return CriticLoss::squared_unconditional;
    if (name == "entropic") return CriticLoss::entropic;
    throw ValidationError("training.critic_loss: unknown loss '" + name + "'");
}

void TrainConfig::validate() const {
    if (batch_size < 1)
        throw ValidationError("training.batch_size: must be >= 1");
    if (rounds < 0)
        throw ValidationError("training.rounds: must be >= 0");
    if (actor_steps_per_round < 0 || critic_steps_per_round < 0)
        throw ValidationError("training.steps_per_round: must be >= 0");
    if (!(actor_lr.initial > 0.0) || !(critic_lr.initial > 0.0))
        throw ValidationError("training.learning_rate: must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ValidationError("training.momentum: must lie in [0, 1)");
    if (utility.kind == UtilityKind::worst_case)
        throw ValidationError("training.utility: worst_case has no pointwise utility to train with");
    if (critic_loss == CriticLoss::entropic && utility.kind != UtilityKind::entropy)
        throw ValidationError("training.critic_loss: the entropic fit requires the entropy family");
    if (sampler.historic_mass < 0.0 || sampler.historic_mass > 1.0)
        throw ValidationError("training.sampler.historic_mass: must lie in [0, 1]");
    if (sampler.sigma_w < 0.0)
        throw ValidationError("training.sampler.sigma_w: must be >= 0");
    for (int h : hidden)
        if (h < 1)
            throw ValidationError("training.hidden: layer sizes must be >= 1");
}

ScenarioBatch sample_scenarios(const HistoricDataset& dataset, const SamplerConfig& sampler,
                               int count, std::uint64_t seed) {
    if (dataset.steps.empty())
        throw ValidationError("sample_scenarios: dataset has no steps");
    if (count < 1)
        throw ValidationError("sample_scenarios: count must be >= 1");

    ScenarioBatch batch;
    batch.feature_dim = kFeatureCount;
    batch.market_dim = dataset.market_dim();
    batch.legs = static_cast<int>(dataset.steps.front().hedges.size());
    batch.samples.reserve(count);

    SplitRng root = SplitRng(seed).derive(0x73636eULL); // stream: scenarios
    for (int i = 0; i < count; ++i) {
        SplitRng rng = root.derive(static_cast<std::uint64_t>(i));
        const int t = rng.uniform_int(0, dataset.n_steps() - 1);
        const StepRecord& step = dataset.steps[t];

        std::vector<double> weights(step.book.size(), 0.0);
        std::vector<InstrumentFMR> fmrs;
        fmrs.reserve(step.book.size());
        const bool historic = rng.uniform() < sampler.historic_mass;
        for (std::size_t b = 0; b < step.book.size(); ++b) {
            weights[b] = historic ? step.book[b].weight
                                  : step.book[b].weight + sampler.sigma_w * rng.normal();
            fmrs.push_back(step.book[b].fmr);
        }

        ScenarioSample sample;
        sample.z = combine(weights, fmrs);
        for (const auto& hedge : step.hedges)
            sample.basket.legs.push_back(hedge.fmr);
        sample.market_now = dataset.states[t].features;
        sample.market_next = dataset.states[t + 1].features;
        sample.beta = dataset.states[t].discount;
        sample.weight = 1.0;
        batch.samples.push_back(std::move(sample));
    }
    return batch;
}

std::vector<double> InputNormalization::apply(const std::vector<double>& x) const {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = (x[i] - mean[i]) / scale[i];
    return out;
}

InputNormalization InputNormalization::identity(int dim) {
    InputNormalization n;
    n.mean.assign(dim, 0.0);
    n.scale.assign(dim, 1.0);
    return n;
}

InputNormalization InputNormalization::fit(const ScenarioBatch& batch) {
    const int dim = batch.feature_dim + batch.market_dim;
    InputNormalization n;
    n.mean.assign(dim, 0.0);
    n.scale.assign(dim, 0.0);
    const double count = static_cast<double>(std::max(1, batch.size()));
    for (const auto& s : batch.samples) {
        for (int f = 0; f < batch.feature_dim; ++f)
            n.mean[f] += s.z.fmr.features_now[f] / count;
        for (int m = 0; m < batch.market_dim; ++m)
            n.mean[batch.feature_dim + m] += s.market_now[m] / count;
    }
    for (const auto& s : batch.samples) {
        for (int f = 0; f < batch.feature_dim; ++f) {
            const double d = s.z.fmr.features_now[f] - n.mean[f];
            n.scale[f] += d * d / count;
        }
        for (int m = 0; m < batch.market_dim; ++m) {
            const double d = s.market_now[m] - n.mean[batch.feature_dim + m];
            n.scale[batch.feature_dim + m] += d * d / count;
        }
    }
    for (double& s : n.scale)
        s = std::max(std::sqrt(s), 1e-8);
    return n;
}

namespace {

std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

std::vector<double> bounded_action(const std::vector<double>& raw, double bound) {
    std::vector<double> a(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i)
        a[i] = bound * std::tanh(raw[i]);
    return a;
}

// d cost / d a, with sign(0) = 0 at the kink.
std::vector<double> cost_gradient(const CostSpec& spec, const std::vector<double>& action,
                                  const HedgeBasket& basket) {
    const std::size_t dim = spec.gamma_weights.size();
    std::vector<double> grad(action.size(), 0.0);
    for (std::size_t f = 0; f < dim; ++f) {
        double net = 0.0;
        for (std::size_t i = 0; i < action.size(); ++i)
            net += action[i] * basket.legs[i].features_now[f];
        const double sgn = net > 0.0 ? 1.0 : (net < 0.0 ? -1.0 : 0.0);
        for (std::size_t i = 0; i < action.size(); ++i)
            grad[i] += spec.gamma_weights[f] * sgn * basket.legs[i].features_now[f];
    }
    return grad;
}

// Successor portfolio features: z' + sum_i a_i h_i'.
std::vector<double> successor_features(const ScenarioSample& s, const std::vector<double>& action) {
    std::vector<double> zf = s.z.fmr.features_next;
    for (std::size_t i = 0; i < action.size(); ++i)
        for (std::size_t f = 0; f < zf.size(); ++f)
            zf[f] += action[i] * s.basket.legs[i].features_next[f];
    return zf;
}

void sgd_update(Approximator& net, const std::vector<double>& grad, double lr, double direction,
                double momentum, SgdState* state) {
    auto params = net.parameters();
    if (state != nullptr) {
        if (state->velocity.empty())
            state->velocity.assign(params.size(), 0.0);
        for (std::size_t i = 0; i < params.size(); ++i) {
            state->velocity[i] = momentum * state->velocity[i] + grad[i];
            params[i] += direction * lr * state->velocity[i];
        }
    } else {
        for (std::size_t i = 0; i < params.size(); ++i)
            params[i] += direction * lr * grad[i];
    }
    net.set_parameters(std::move(params));
}

struct SampleEval {
    std::vector<double> action;
    std::vector<double> tanh_prime; // per leg: d a / d raw
    Approximator::Trace pi_trace;
    Approximator::Trace y_trace;
    Approximator::Trace vp_trace;
    double y0 = 0.0;
    double v_next = 0.0;
    double reward = 0.0;
    std::vector<double> reward_grad;  // dR/da
    std::vector<double> v_next_grad;  // dV'/da
};

SampleEval eval_sample(const Approximator& v_prev, const Approximator& pi, const Approximator& y,
                       const ScenarioSample& s, const CostSpec& cost_spec,
                       const InputNormalization& norm, std::vector<double>& scratch_grad) {
    SampleEval e;
    const std::vector<double> x = norm.apply(concat(s.z.fmr.features_now, s.market_now));

    e.pi_trace = pi.traced_forward(x);
    const double bound = cost_spec.action_bound;
    e.action = bounded_action(e.pi_trace.output, bound);
    e.tanh_prime.resize(e.action.size());
    for (std::size_t i = 0; i < e.action.size(); ++i) {
        const double t = std::tanh(e.pi_trace.output[i]);
        e.tanh_prime[i] = bound * (1.0 - t * t);
    }

    e.y_trace = y.traced_forward(x);
    e.y0 = e.y_trace.output[0];

    const std::vector<double> x_next = norm.apply(concat(successor_features(s, e.action), s.market_next));
    e.vp_trace = v_prev.traced_forward(x_next);
    e.v_next = e.vp_trace.output[0];

    e.reward = reward_mark_to_market(e.action, s.z, s.basket, s.beta, cost_spec);

    const auto dcost = cost_gradient(cost_spec, e.action, s.basket);
    e.reward_grad.resize(e.action.size());
    for (std::size_t i = 0; i < e.action.size(); ++i)
        e.reward_grad[i] = pnl_db(s.basket.legs[i], s.beta) - dcost[i];

    // dV'/da via the input gradient of v_prev, undoing the normalization
    std::fill(scratch_grad.begin(), scratch_grad.end(), 0.0);
    const auto dv_dx = v_prev.backward(e.vp_trace, {1.0}, scratch_grad);
    e.v_next_grad.assign(e.action.size(), 0.0);
    const int fdim = static_cast<int>(s.z.fmr.features_next.size());
    for (std::size_t i = 0; i < e.action.size(); ++i) {
        double acc = 0.0;
        for (int f = 0; f < fdim; ++f)
            acc += dv_dx[f] / norm.scale[f] * s.basket.legs[i].features_next[f];
        e.v_next_grad[i] = acc;
    }
    return e;
}

} // namespace

double actor_step(const Approximator& v_prev, Approximator& pi, Approximator& y,
                  const ScenarioBatch& batch, const UtilityFamily& fam, const CostSpec& cost_spec,
                  const InputNormalization& norm, double lr, bool entropy_closed_form,
                  double momentum, SgdState* pi_state, SgdState* y_state) {
    if (batch.size() == 0)
        throw ValidationError("actor_step: empty batch");
    if (entropy_closed_form && fam.kind != UtilityKind::entropy)
        throw ValidationError("actor_step: the closed-form fast path requires the entropy family");

    const double total_w = batch.total_weight();
    std::vector<double> pi_grad(pi.parameter_count(), 0.0);
    std::vector<double> y_grad(y.parameter_count(), 0.0);
    std::vector<double> vp_scratch(v_prev.parameter_count(), 0.0);

    std::vector<SampleEval> evals;
    evals.reserve(batch.samples.size());
    for (const auto& s : batch.samples)
        evals.push_back(eval_sample(v_prev, pi, y, s, cost_spec, norm, vp_scratch));

    double objective = 0.0;
    if (entropy_closed_form) {
        // -(1/lambda) ln E exp(-lambda (beta V' + R)), log-sum-exp shifted
        const double lam = fam.lambda;
        std::vector<double> outcome(evals.size());
        double t_max = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < evals.size(); ++i) {
            outcome[i] = batch.samples[i].beta * evals[i].v_next + evals[i].reward;
            t_max = std::max(t_max, -lam * outcome[i]);
        }
        double acc = 0.0;
        std::vector<double> soft(evals.size());
        for (std::size_t i = 0; i < evals.size(); ++i) {
            soft[i] = batch.samples[i].weight * std::exp(-lam * outcome[i] - t_max);
            acc += soft[i];
        }
        objective = -(t_max + std::log(acc / total_w)) / lam;
        if (!std::isfinite(objective))
            throw NumericError("actor_step: non-finite closed-form objective");

        for (std::size_t i = 0; i < evals.size(); ++i) {
            const double w = soft[i] / acc; // d objective / d outcome_i
            std::vector<double> out_grad(evals[i].action.size());
            for (std::size_t leg = 0; leg < out_grad.size(); ++leg)
                out_grad[leg] = w *
                                (batch.samples[i].beta * evals[i].v_next_grad[leg] +
                                 evals[i].reward_grad[leg]) *
                                evals[i].tanh_prime[leg];
            pi.backward(evals[i].pi_trace, out_grad, pi_grad);
        }
    } else {
        for (std::size_t i = 0; i < evals.size(); ++i) {
            const auto& s = batch.samples[i];
            const auto& e = evals[i];
            const double arg = s.beta * e.v_next + e.y0;
            const double contribution = u_eval(fam, arg) - e.y0 + e.reward;
            if (!std::isfinite(contribution)) {
                std::ostringstream oss;
                oss << "actor_step: non-finite objective at sample " << i;
                throw NumericError(oss.str());
            }
            const double w = s.weight / total_w;
            objective += w * contribution;

            // entropy-type marginal utilities explode on deep losses; cap the
            // per-sample weight so one tail draw cannot swamp the step
            const double uprime = std::min(u_prime(fam, arg), 60.0);
            std::vector<double> out_grad(e.action.size());
            for (std::size_t leg = 0; leg < out_grad.size(); ++leg)
                out_grad[leg] =
                    w * (uprime * s.beta * e.v_next_grad[leg] + e.reward_grad[leg]) * e.tanh_prime[leg];
            pi.backward(e.pi_trace, out_grad, pi_grad);
            y.backward(e.y_trace, {w * (uprime - 1.0)}, y_grad);
        }
    }

    sgd_update(pi, pi_grad, lr, +1.0, momentum, pi_state); // ascent
    if (!entropy_closed_form)
        sgd_update(y, y_grad, lr, +1.0, momentum, y_state);
    return objective;
}

double critic_target(const Approximator& v_prev, const Approximator& pi, const Approximator& y,
                     const ScenarioSample& s, const UtilityFamily& fam, const CostSpec& cost_spec,
                     const InputNormalization& norm, CriticLoss kind) {
    const std::vector<double> x = norm.apply(concat(s.z.fmr.features_now, s.market_now));
    const auto action = bounded_action(pi.forward(x), cost_spec.action_bound);
    const double y0 = y.forward(x)[0];
    const std::vector<double> x_next = norm.apply(concat(successor_features(s, action), s.market_next));
    const double v_next = v_prev.forward(x_next)[0];
    const double reward = reward_mark_to_market(action, s.z, s.basket, s.beta, cost_spec);
    if (kind == CriticLoss::abs)
        return u_eval(fam, s.beta * v_next + y0) - y0 + reward; // sampled T V^{(n-1)}
    return s.beta * u_eval(fam, v_next + y0) - y0 + reward;
}

namespace {

// beta V_prev(z' + pi h'; m') + R(pi), the entropy fast path's raw outcome
double bellman_outcome(const Approximator& v_prev, const Approximator& pi,
                       const ScenarioSample& s, const CostSpec& cost_spec,
                       const InputNormalization& norm) {
    const std::vector<double> x = norm.apply(concat(s.z.fmr.features_now, s.market_now));
    const auto action = bounded_action(pi.forward(x), cost_spec.action_bound);
    const std::vector<double> x_next = norm.apply(concat(successor_features(s, action), s.market_next));
    const double v_next = v_prev.forward(x_next)[0];
    return s.beta * v_next + reward_mark_to_market(action, s.z, s.basket, s.beta, cost_spec);
}

} // namespace

double critic_step(Approximator& v, const Approximator& v_prev, const Approximator& pi,
                   const Approximator& y, const ScenarioBatch& batch, const UtilityFamily& fam,
                   const CostSpec& cost_spec, const InputNormalization& norm, double lr,
                   CriticLoss kind, double momentum, SgdState* v_state) {
    if (batch.size() == 0)
        throw ValidationError("critic_step: empty batch");
    const bool entropic = kind == CriticLoss::entropic;
    if (entropic && fam.kind != UtilityKind::entropy)
        throw ValidationError("critic_step: the entropic fit requires the entropy family");

    const double total_w = batch.total_weight();
    std::vector<double> v_grad(v.parameter_count(), 0.0);
    const double lam = fam.lambda;

    // recenter the exponential regression at the batch certainty equivalent
    // so target weights are O(1); the least-squares optimum is unchanged
    double shift = 0.0;
    std::vector<double> outcomes;
    if (entropic) {
        outcomes.resize(batch.samples.size());
        double t_max = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < batch.samples.size(); ++i) {
            outcomes[i] = bellman_outcome(v_prev, pi, batch.samples[i], cost_spec, norm);
            t_max = std::max(t_max, -lam * outcomes[i]);
        }
        double acc = 0.0;
        for (std::size_t i = 0; i < batch.samples.size(); ++i)
            acc += batch.samples[i].weight * std::exp(-lam * outcomes[i] - t_max);
        shift = -(t_max + std::log(acc / total_w)) / lam;
    }

    double loss = 0.0;
    for (std::size_t i = 0; i < batch.samples.size(); ++i) {
        const auto& s = batch.samples[i];
        const std::vector<double> x = norm.apply(concat(s.z.fmr.features_now, s.market_now));
        const auto trace = v.traced_forward(x);
        const double value = trace.output[0];
        const double w = s.weight / total_w;
        double out_grad;
        if (entropic) {
            // linex scoring rule: l(d) = (exp(lam d) - lam d - 1) / lam^2 with
            // d = V - outcome. Its conditional minimizer satisfies
            // E[exp(-lam (outcome - V)) | s] = 1, i.e. V is exactly the
            // entropic certainty equivalent of the sampled Bellman outcome.
            const double outcome = outcomes[i];
            if (!std::isfinite(outcome) || std::abs(lam * (outcome - shift)) > 60.0) {
                std::ostringstream oss;
                oss << "critic_step: entropic target out of range at sample " << i;
                throw NumericError(oss.str());
            }
            const double d = lam * (value - outcome);
            const double expd = std::exp(std::min(d, 30.0));
            loss += w * (expd - d - 1.0) / (lam * lam);
            out_grad = w * (expd - 1.0) / lam;
            const double cap = 1.5 * w / lam;
            out_grad = std::clamp(out_grad, -cap, cap);
        } else {
            const double target = critic_target(v_prev, pi, y, s, fam, cost_spec, norm, kind);
            const double diff = value - target;
            if (!std::isfinite(diff)) {
                std::ostringstream oss;
                oss << "critic_step: non-finite loss at sample " << i;
                throw NumericError(oss.str());
            }
            if (kind == CriticLoss::abs) {
                loss += w * std::abs(diff);
                out_grad = w * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
            } else {
                loss += w * diff * diff;
                out_grad = w * 2.0 * diff;
            }
        }
        v.backward(trace, {out_grad}, v_grad);
    }

    sgd_update(v, v_grad, lr, -1.0, momentum, v_state); // descent
    return loss;
}

std::vector<double> TrainedModel::policy_action(const std::vector<double>& z_features,
                                                const std::vector<double>& market) const {
    const auto x = norm.apply(concat(z_features, market));
    return bounded_action(pi.forward(x), action_bound);
}

double TrainedModel::value(const std::vector<double>& z_features,
                           const std::vector<double>& market) const {
    const auto x = norm.apply(concat(z_features, market));
    return v.forward(x)[0];
}

nlohmann::json TrainedModel::to_json() const {
    return nlohmann::json{
        {"format", "hedge-model-v1"},
        {"pi", pi.to_json()},
        {"y", y.to_json()},
        {"v", v.to_json()},
        {"normalization", {{"mean", norm.mean}, {"scale", norm.scale}}},
        {"feature_dim", feature_dim},
        {"market_dim", market_dim},
        {"legs", legs},
        {"action_bound", action_bound},
        {"utility", {{"kind", to_string(utility.kind)}, {"lambda", utility.lambda}}},
        {"rounds_trained", rounds_trained},
    };
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
    TrainedModel m;
    m.pi = Approximator::from_json(j.at("pi"));
    m.y = Approximator::from_json(j.at("y"));
    m.v = Approximator::from_json(j.at("v"));
    m.norm.mean = j.at("normalization").at("mean").get<std::vector<double>>();
    m.norm.scale = j.at("normalization").at("scale").get<std::vector<double>>();
    m.feature_dim = j.at("feature_dim").get<int>();
    m.market_dim = j.at("market_dim").get<int>();
    m.legs = j.at("legs").get<int>();
    m.action_bound = j.at("action_bound").get<double>();
    m.utility = UtilityFamily(utility_kind_from_string(j.at("utility").at("kind").get<std::string>()),
                              j.at("utility").at("lambda").get<double>());
    m.rounds_trained = j.at("rounds_trained").get<int>();
    return m;
}

std::string TrainingCurves::to_csv() const {
    std::string out = "round,actor_objective,critic_loss\n";
    char buf[96];
    for (std::size_t i = 0; i < actor_objective.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", i, actor_objective[i],
                      i < critic_loss.size() ? critic_loss[i] : 0.0);
        out += buf;
    }
    return out;
}

TrainResult train(const HistoricDataset& dataset, const TrainConfig& config) {
    config.validate();
    if (dataset.steps.empty())
        throw ValidationError("train: dataset has no steps");

    const int market_dim = dataset.market_dim();
    const int legs = static_cast<int>(dataset.steps.front().hedges.size());
    const int input_dim = kFeatureCount + market_dim;

    SplitRng seeds(config.seed);
    const ScenarioBatch pilot = sample_scenarios(
        dataset, config.sampler, std::max(1024, config.batch_size), seeds.derive(0x70696cULL).next_u64());

    TrainResult result;
    TrainedModel& model = result.model;
    model.feature_dim = kFeatureCount;
    model.market_dim = market_dim;
    model.legs = legs;
    model.action_bound = config.cost.action_bound;
    model.utility = config.utility;
    model.norm = InputNormalization::fit(pilot);

    MlpConfig pi_cfg{input_dim, config.hidden, legs, Activation::tanh_act};
    MlpConfig scalar_cfg{input_dim, config.hidden, 1, Activation::softplus};
    model.pi = Approximator(pi_cfg, seeds.derive(1).next_u64(), true);
    model.y = Approximator(scalar_cfg, seeds.derive(2).next_u64(), true);
    model.v = Approximator(scalar_cfg, seeds.derive(3).next_u64(), true);

    SgdState pi_state, y_state, v_state;
    SplitRng batch_seeds = seeds.derive(0x626174ULL);

    for (int round = 0; round < config.rounds; ++round) {
        const ScenarioBatch batch =
            sample_scenarios(dataset, config.sampler, config.batch_size,
                             batch_seeds.derive(static_cast<std::uint64_t>(round)).next_u64());

        const Approximator v_prev = model.v; // the scheme's previous-iterate snapshot

        double objective = 0.0;
        for (int step = 0; step < config.actor_steps_per_round; ++step)
            objective = actor_step(v_prev, model.pi, model.y, batch, config.utility, config.cost,
                                   model.norm, config.actor_lr.at(round), config.entropy_closed_form,
                                   config.momentum, &pi_state, &y_state);
        double loss = 0.0;
        for (int step = 0; step < config.critic_steps_per_round; ++step)
            loss = critic_step(model.v, v_prev, model.pi, model.y, batch, config.utility, config.cost,
                               model.norm, config.critic_lr.at(round), config.critic_loss,
                               config.momentum, &v_state);

        result.curves.actor_objective.push_back(objective);
        result.curves.critic_loss.push_back(loss);
        if (std::abs(objective) > 1e6 || std::abs(loss) > 1e6) {
            std::ostringstream oss;
            oss << "train: diverged at round " << round << " (objective " << objective << ", loss "
                << loss << ")";
            throw NumericError(oss.str());
        }
        model.rounds_trained = round + 1;
    }
    return result;
}

// ------------------------------------------------------------------
// Rollout evaluation
// ------------------------------------------------------------------

nlohmann::json EvalReport::to_json() const {
    return nlohmann::json{
        {"policy_utility", policy_utility}, {"baseline_utility", baseline_utility},
        {"policy_mean", policy_mean},       {"baseline_mean", baseline_mean},
        {"episodes", episodes},             {"horizon", horizon},
    };
}

namespace {

// Total discounted reward of running `policy` along one dataset path.
double roll_episode(const PolicyFn& policy, const HistoricDataset& data, const CostSpec& cost_spec) {
    const int legs = static_cast<int>(data.steps.front().hedges.size());
    std::vector<bool> persistent(legs, false);
    for (int i = 0; i < legs; ++i) {
        const InstrumentKind kind = data.steps.front().hedges[i].spec.kind;
        if (kind == InstrumentKind::perpetual_cashflow_claim)
            persistent[i] = true;
        else if (kind != InstrumentKind::daily_settled_future)
            throw ValidationError("evaluate: only claim and daily-future hedge legs can be rolled");
    }

    std::vector<double> holdings(legs, 0.0);
    double discount = 1.0;
    double total = 0.0;
    for (const auto& step : data.steps) {
        // held book: historic weights plus accumulated persistent hedges
        std::vector<double> weights;
        std::vector<InstrumentFMR> fmrs;
        for (const auto& rec : step.book) {
            weights.push_back(rec.weight);
            fmrs.push_back(rec.fmr);
        }
        for (int i = 0; i < legs; ++i)
            if (persistent[i] && holdings[i] != 0.0) {
                weights.push_back(holdings[i]);
                fmrs.push_back(step.hedges[i].fmr);
            }
        const Portfolio z = combine(weights, fmrs);

        HedgeBasket basket;
        for (const auto& rec : step.hedges)
            basket.legs.push_back(rec.fmr);

        const auto action = policy(z.fmr.features_now, data.states[step.t].features);
        const double beta = data.states[step.t].discount;
        total += discount * reward_mark_to_market(action, z, basket, beta, cost_spec);
        discount *= beta;
        for (int i = 0; i < legs; ++i)
            if (persistent[i])
                holdings[i] += action[i];
    }
    return total;
}

} // namespace

EvalReport evaluate_policy(const PolicyFn& policy, const EpisodeSource& world,
                           const UtilityFamily& fam, const CostSpec& cost_spec, int episodes,
                           std::uint64_t seed) {
    if (episodes < 1)
        throw ValidationError("evaluate: episodes must be >= 1");

    SplitRng root = SplitRng(seed).derive(0x65706973ULL);
    std::vector<double> policy_outcomes(episodes), baseline_outcomes(episodes);
    int horizon = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        const HistoricDataset data = world(root.derive(ep).next_u64());
        horizon = data.n_steps();
        const int legs = static_cast<int>(data.steps.front().hedges.size());
        policy_outcomes[ep] = roll_episode(policy, data, cost_spec);
        baseline_outcomes[ep] = roll_episode(
            [legs](const std::vector<double>&, const std::vector<double>&) {
                return std::vector<double>(legs, 0.0);
            },
            data, cost_spec);
    }

    EvalReport report;
    report.episodes = episodes;
    report.horizon = horizon;
    const EmpiricalDistribution pol = EmpiricalDistribution::equally_weighted(policy_outcomes);
    const EmpiricalDistribution base = EmpiricalDistribution::equally_weighted(baseline_outcomes);
    report.policy_utility = oce_value(fam, pol).value;
    report.baseline_utility = oce_value(fam, base).value;
    report.policy_mean = pol.mean();
    report.baseline_mean = base.mean();
    return report;
}

EvalReport evaluate(const TrainedModel& model, const EpisodeSource& world, const UtilityFamily& fam,
                    const CostSpec& cost_spec, int episodes, std::uint64_t seed) {
    const PolicyFn policy = [&model](const std::vector<double>& zf, const std::vector<double>& mf) {
        return model.policy_action(zf, mf);
    };
    return evaluate_policy(policy, world, fam, cost_spec, episodes, seed);
}

} // namespace hedge
