#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "hedge/actor_critic.hpp"
#include "hedge/bellman.hpp"
#include "hedge/errors.hpp"
#include "hedge/rng.hpp"

using namespace hedge;

namespace {

// Exact-conditional batch on the risk-neutral chain with a future hedge:
// per market state, one sample per successor weighted by its transition
// probability. Conditional hedge-P&L means vanish exactly.
ScenarioBatch exact_conditional_batch(const ChainMdpConfig& config, double base_weight) {
    const auto values = chain_claim_values(config);
    const int k = static_cast<int>(config.spots.size());
    std::vector<double> payout(k), strike(k, 0.0);
    for (int m = 0; m < k; ++m)
        payout[m] = config.payout_scale * config.spots[m] / 100.0;
    for (int m = 0; m < k; ++m)
        for (int mn = 0; mn < k; ++mn)
            strike[m] += config.transition[m][mn] * config.spots[mn];

    ScenarioBatch batch;
    batch.feature_dim = kFeatureCount;
    batch.market_dim = 1;
    batch.legs = 1;
    for (int m = 0; m < k; ++m) {
        for (int mn = 0; mn < k; ++mn) {
            if (config.transition[m][mn] == 0.0)
                continue;
            ScenarioSample s;
            InstrumentFMR claim = InstrumentFMR::zero(kFeatureCount);
            claim.features_now = {values[m], payout[m], 0.0, 0.0, 0.0};
            claim.features_next = {values[mn], payout[mn], 0.0, 0.0, 0.0};
            claim.book_now = values[m];
            claim.book_next = values[mn];
            claim.cashflow = payout[m];
            s.z = combine({base_weight}, {claim});

            InstrumentFMR fut = InstrumentFMR::zero(kFeatureCount);
            fut.features_now = {0.0, 1.0, 0.0, 0.0, kScenarioBump * config.spots[m]};
            fut.cashflow = config.spots[mn] - strike[m];
            s.basket.legs.push_back(fut);

            s.market_now = {config.spots[m]};
            s.market_next = {config.spots[mn]};
            s.beta = config.beta;
            s.weight = config.transition[m][mn];
            batch.samples.push_back(std::move(s));
        }
    }
    return batch;
}

ScenarioBatch constant_reward_batch(double reward, int copies) {
    ScenarioBatch batch;
    batch.feature_dim = kFeatureCount;
    batch.market_dim = 1;
    batch.legs = 1;
    SplitRng rng(31);
    for (int i = 0; i < copies; ++i) {
        ScenarioSample s;
        InstrumentFMR inst = InstrumentFMR::zero(kFeatureCount);
        inst.cashflow = reward;
        inst.features_now[0] = rng.uniform(-1.0, 1.0); // distinct support points
        s.z = combine({1.0}, {inst});
        s.basket.legs.push_back(InstrumentFMR::zero(kFeatureCount));
        s.market_now = {rng.uniform(-1.0, 1.0)};
        s.market_next = {0.0};
        s.beta = 0.9;
        batch.samples.push_back(std::move(s));
    }
    return batch;
}

const int kInputDim = kFeatureCount + 1;

struct Rig {
    Approximator pi{MlpConfig{kInputDim, {8, 8}, 1, Activation::tanh_act}, 11, true};
    Approximator y{MlpConfig{kInputDim, {8, 8}, 1, Activation::softplus}, 12, true};
    Approximator v{MlpConfig{kInputDim, {8, 8}, 1, Activation::softplus}, 13, true};
    InputNormalization norm = InputNormalization::identity(kInputDim);
};

} // namespace

TEST_CASE("sampler reproduces historic books and is deterministic") {
    const auto dataset = make_chain_dataset(default_chain_config(), 60, 5);

    SamplerConfig degenerate{0.0, 1.0};
    const auto batch = sample_scenarios(dataset, degenerate, 32, 9);
    for (const auto& s : batch.samples) {
        // historic book: exactly base_weight claims
        CHECK(s.z.fmr.book_now ==
              doctest::Approx(-2.0 * s.basket.legs[0].book_now).epsilon(1e-12));
    }

    const auto again = sample_scenarios(dataset, degenerate, 32, 9);
    for (int i = 0; i < batch.size(); ++i) {
        CHECK(batch.samples[i].z.fmr.book_now == again.samples[i].z.fmr.book_now);
        CHECK(batch.samples[i].market_now == again.samples[i].market_now);
    }

    // zero weights give the empty portfolio
    auto zero_book = default_chain_config();
    zero_book.base_weight = 0.0;
    const auto zero_data = make_chain_dataset(zero_book, 40, 5);
    const auto zero_batch = sample_scenarios(zero_data, degenerate, 8, 3);
    for (const auto& s : zero_batch.samples) {
        for (double f : s.z.fmr.features_now)
            CHECK(f == 0.0);
        CHECK(s.z.fmr.cashflow == 0.0);
    }

    CHECK_THROWS_AS(sample_scenarios(zero_data, degenerate, 0, 1), ValidationError);
}

TEST_CASE("policy outputs always live inside the admissible box") {
    Rig rig;
    // perturb pi away from its zero init
    auto p = rig.pi.parameters();
    SplitRng rng(17);
    for (double& w : p)
        w += rng.uniform(-3.0, 3.0);
    rig.pi.set_parameters(p);

    const double bound = 2.5;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> x(kInputDim);
        for (double& v : x)
            v = rng.uniform(-50.0, 50.0);
        const auto raw = rig.pi.forward(x);
        for (double r : raw)
            CHECK(std::abs(bound * std::tanh(r)) < bound);
    }
}

TEST_CASE("risk-neutral exact-conditional batch leaves the actor untouched") {
    auto config = risk_neutral_chain_config();
    config.hedge = ChainMdpConfig::Hedge::future;
    config.lattice_points = 1;
    const auto batch = exact_conditional_batch(config, -2.0);

    Rig rig;
    const auto pi_before = rig.pi.parameters();
    const auto y_before = rig.y.parameters();

    const UtilityFamily expectation(UtilityKind::expectation, 1.0);
    const CostSpec no_cost = CostSpec::zero(kFeatureCount);
    const double objective = actor_step(rig.v, rig.pi, rig.y, batch, expectation, no_cost, rig.norm,
                                        0.1, false);
    // E[R] = 0 exactly on this batch
    CHECK(std::abs(objective) < 1e-12);

    const auto pi_after = rig.pi.parameters();
    for (std::size_t i = 0; i < pi_after.size(); ++i)
        CHECK(std::abs(pi_after[i] - pi_before[i]) < 1e-12);

    // expectation: the shift network receives exactly zero gradient
    CHECK(rig.y.parameters() == y_before);
}

TEST_CASE("single-sample entropy objective matches a hand-unrolled computation") {
    auto config = default_chain_config();
    const auto dataset = make_chain_dataset(config, 30, 2);
    const SamplerConfig sampler{1.0, 0.2};
    auto batch = sample_scenarios(dataset, sampler, 1, 77);
    REQUIRE(batch.size() == 1);

    Rig rig;
    SplitRng rng(19);
    for (Approximator* net : {&rig.pi, &rig.y, &rig.v}) {
        auto p = net->parameters();
        for (double& w : p)
            w += rng.uniform(-0.3, 0.3);
        net->set_parameters(p);
    }

    const UtilityFamily entropy(UtilityKind::entropy, 1.0);
    CostSpec cost({0.01, 0.0, 0.0, 0.0, 0.0}, 2.5);

    // hand computation from raw pieces
    const auto& s = batch.samples[0];
    std::vector<double> x;
    x.insert(x.end(), s.z.fmr.features_now.begin(), s.z.fmr.features_now.end());
    x.insert(x.end(), s.market_now.begin(), s.market_now.end());
    const double raw = rig.pi.forward(x)[0];
    const double a = 2.5 * std::tanh(raw);
    const double y0 = rig.y.forward(x)[0];
    std::vector<double> zf = s.z.fmr.features_next;
    for (std::size_t f = 0; f < zf.size(); ++f)
        zf[f] += a * s.basket.legs[0].features_next[f];
    std::vector<double> xn = zf;
    xn.insert(xn.end(), s.market_next.begin(), s.market_next.end());
    const double v_next = rig.v.forward(xn)[0];
    const double pnl_z = s.beta * s.z.fmr.book_next - s.z.fmr.book_now + s.z.fmr.cashflow;
    const double pnl_h =
        s.beta * s.basket.legs[0].book_next - s.basket.legs[0].book_now + s.basket.legs[0].cashflow;
    const double c = 0.01 * std::abs(a * s.basket.legs[0].features_now[0]);
    const double reward = pnl_z + a * pnl_h - c;
    const double arg = s.beta * v_next + y0;
    const double expected = (1.0 - std::exp(-arg)) - y0 + reward;

    Approximator v_prev = rig.v;
    const double objective =
        actor_step(v_prev, rig.pi, rig.y, batch, entropy, cost, rig.norm, 1e-9, false);
    CHECK(std::abs(objective - expected) < 1e-10);
}

TEST_CASE("critic with zero targets leaves the zero value function alone") {
    Rig rig;
    auto batch = constant_reward_batch(0.0, 16);
    const auto before = rig.v.parameters();
    const UtilityFamily entropy(UtilityKind::entropy, 1.0);
    const double loss = critic_step(rig.v, rig.v, rig.pi, rig.y, batch, entropy,
                                    CostSpec::zero(kFeatureCount), rig.norm, 0.1,
                                    CriticLoss::squared_unconditional);
    CHECK(loss == 0.0);
    CHECK(rig.v.parameters() == before);
}

TEST_CASE("critic regresses to a constant target") {
    Approximator pi{MlpConfig{kInputDim, {16, 16}, 1, Activation::tanh_act}, 11, true};
    Approximator y{MlpConfig{kInputDim, {16, 16}, 1, Activation::softplus}, 12, true};
    Approximator v{MlpConfig{kInputDim, {16, 16}, 1, Activation::softplus}, 13, true};
    const InputNormalization norm = InputNormalization::identity(kInputDim);

    const double c = 0.7;
    auto batch = constant_reward_batch(c, 16);
    const UtilityFamily expectation(UtilityKind::expectation, 1.0);
    const Approximator v_prev = v; // identically zero

    SgdState state;
    double loss = 1.0;
    for (int step = 0; step < 16000; ++step)
        loss = critic_step(v, v_prev, pi, y, batch, expectation, CostSpec::zero(kFeatureCount),
                           norm, 0.1, CriticLoss::squared_unconditional, 0.9, &state);
    CHECK(loss < 5e-7);
    for (const auto& s : batch.samples) {
        std::vector<double> x;
        x.insert(x.end(), s.z.fmr.features_now.begin(), s.z.fmr.features_now.end());
        x.insert(x.end(), s.market_now.begin(), s.market_now.end());
        CHECK(std::abs(v.forward(x)[0] - c) < 1e-3);
    }
}

TEST_CASE("unconditional squared loss has the nested-conditional gradient") {
    // two states, two successors each, exact conditional weights
    auto config = risk_neutral_chain_config();
    config.hedge = ChainMdpConfig::Hedge::future;
    config.lattice_points = 1;
    config.spots = {95.0, 105.0};
    config.transition = {{0.7, 0.3}, {0.4, 0.6}};
    const auto batch = exact_conditional_batch(config, -1.0);

    Rig rig;
    SplitRng rng(23);
    for (Approximator* net : {&rig.pi, &rig.y, &rig.v}) {
        auto p = net->parameters();
        for (double& w : p)
            w += rng.uniform(-0.2, 0.2);
        net->set_parameters(p);
    }
    const UtilityFamily entropy(UtilityKind::entropy, 1.0);
    const CostSpec no_cost = CostSpec::zero(kFeatureCount);

    // group samples by their state (market_now), accumulate conditional means
    std::vector<double> grad_unconditional(rig.v.parameter_count(), 0.0);
    std::vector<double> grad_nested(rig.v.parameter_count(), 0.0);

    // unconditional: sum_s sum_s' w 2 (V - t(s,s')) dV
    for (const auto& s : batch.samples) {
        const double target = critic_target(rig.v, rig.pi, rig.y, s, entropy, no_cost, rig.norm);
        std::vector<double> x;
        x.insert(x.end(), s.z.fmr.features_now.begin(), s.z.fmr.features_now.end());
        x.insert(x.end(), s.market_now.begin(), s.market_now.end());
        const auto trace = rig.v.traced_forward(x);
        rig.v.backward(trace, {0.5 * s.weight * 2.0 * (trace.output[0] - target)}, grad_unconditional);
    }

    // nested: per state, target averaged over successors first
    for (double spot : config.spots) {
        double tbar = 0.0, wtot = 0.0;
        const ScenarioSample* representative = nullptr;
        for (const auto& s : batch.samples) {
            if (s.market_now[0] != spot)
                continue;
            tbar += s.weight * critic_target(rig.v, rig.pi, rig.y, s, entropy, no_cost, rig.norm);
            wtot += s.weight;
            representative = &s;
        }
        REQUIRE(representative != nullptr);
        tbar /= wtot;
        std::vector<double> x;
        x.insert(x.end(), representative->z.fmr.features_now.begin(),
                 representative->z.fmr.features_now.end());
        x.insert(x.end(), representative->market_now.begin(), representative->market_now.end());
        const auto trace = rig.v.traced_forward(x);
        rig.v.backward(trace, {0.5 * wtot * 2.0 * (trace.output[0] - tbar)}, grad_nested);
    }

    for (int i = 0; i < rig.v.parameter_count(); ++i)
        CHECK(std::abs(grad_unconditional[i] - grad_nested[i]) < 1e-8);
}

TEST_CASE("actor objective is non-decreasing on a frozen batch") {
    const auto dataset = make_chain_dataset(default_chain_config(), 80, 4);
    const auto batch = sample_scenarios(dataset, SamplerConfig{1.0, 0.3}, 64, 55);

    Rig rig;
    const UtilityFamily entropy(UtilityKind::entropy, 1.0);
    // smooth objective: no cost kink at the policy's zero initialization
    const CostSpec cost = CostSpec::zero(kFeatureCount);
    const Approximator v_prev = rig.v;

    double previous = -1e18;
    int violations = 0;
    for (int step = 0; step < 10; ++step) {
        const double objective =
            actor_step(v_prev, rig.pi, rig.y, batch, entropy, cost, rig.norm, 2e-4, false);
        if (objective < previous - 1e-12)
            ++violations;
        previous = objective;
    }
    CHECK(violations <= 1);
}

TEST_CASE("training for zero rounds returns the initialized model") {
    const auto dataset = make_chain_dataset(default_chain_config(), 50, 8);
    TrainConfig config;
    config.rounds = 0;
    config.cost = CostSpec({0.005, 0.0, 0.0, 0.0, 0.0}, 2.5);
    const auto result = train(dataset, config);

    SplitRng rng(61);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> zf(kFeatureCount), mf(1);
        for (double& v : zf)
            v = rng.uniform(-5.0, 5.0);
        mf[0] = rng.uniform(80.0, 120.0);
        CHECK(result.model.value(zf, mf) == 0.0);
        for (double a : result.model.policy_action(zf, mf))
            CHECK(a == 0.0);
    }
}

TEST_CASE("evaluation: the zero policy reproduces the baseline and is deterministic") {
    auto config = default_chain_config();
    const EpisodeSource world = [config](std::uint64_t seed) {
        return make_chain_dataset(config, 40, seed);
    };
    const UtilityFamily entropy(UtilityKind::entropy, 1.0);
    const CostSpec cost({0.005, 0.0, 0.0, 0.0, 0.0}, 2.5);

    const PolicyFn zero_policy = [](const std::vector<double>&, const std::vector<double>&) {
        return std::vector<double>{0.0};
    };
    const auto report = evaluate_policy(zero_policy, world, entropy, cost, 40, 13);
    CHECK(report.policy_utility == report.baseline_utility);
    CHECK(report.policy_mean == report.baseline_mean);

    const auto again = evaluate_policy(zero_policy, world, entropy, cost, 40, 13);
    CHECK(again.policy_utility == report.policy_utility);
    CHECK(again.baseline_mean == report.baseline_mean);
}

TEST_CASE("model json round trip preserves behaviour") {
    const auto dataset = make_chain_dataset(default_chain_config(), 60, 3);
    TrainConfig config;
    config.rounds = 5;
    config.batch_size = 32;
    config.cost = CostSpec({0.005, 0.0, 0.0, 0.0, 0.0}, 2.5);
    const auto result = train(dataset, config);

    const auto j = result.model.to_json();
    const auto back = TrainedModel::from_json(j);
    SplitRng rng(29);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> zf(kFeatureCount), mf(1);
        for (double& v : zf)
            v = rng.uniform(-5.0, 5.0);
        mf[0] = rng.uniform(80.0, 120.0);
        CHECK(back.value(zf, mf) == result.model.value(zf, mf));
        CHECK(back.policy_action(zf, mf) == result.model.policy_action(zf, mf));
    }
}
