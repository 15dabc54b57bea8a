#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "hedge/net.hpp"
#include "hedge/rng.hpp"

using namespace hedge;

namespace {

std::vector<double> random_input(SplitRng& rng, int dim) {
    std::vector<double> x(dim);
    for (double& v : x)
        v = rng.uniform(-2.0, 2.0);
    return x;
}

// scalar loss L = 0.5 sum (out - target)^2
double loss_of(const Approximator& net, const std::vector<double>& x,
               const std::vector<double>& target) {
    const auto out = net.forward(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i)
        acc += 0.5 * (out[i] - target[i]) * (out[i] - target[i]);
    return acc;
}

} // namespace

TEST_CASE("buehler-zero network is exactly zero at initialization") {
    const MlpConfig cfg{4, {16, 16}, 2, Activation::softplus};
    const Approximator net(cfg, 123, true);
    SplitRng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const auto out = net.forward(random_input(rng, 4));
        for (double v : out)
            CHECK(v == 0.0);
    }

    // a zero-weight (non-buehler) net propagates only biases: constant output
    Approximator flat(cfg, 9, false);
    flat.set_parameters(std::vector<double>(flat.parameter_count(), 0.0));
    const auto c1 = flat.forward(random_input(rng, 4));
    const auto c2 = flat.forward(random_input(rng, 4));
    CHECK(c1 == c2);
}

TEST_CASE("one nonzero gradient step moves the output off zero") {
    const MlpConfig cfg{3, {8}, 1, Activation::tanh_act};
    Approximator net(cfg, 77, true);
    SplitRng rng(6);
    const auto x = random_input(rng, 3);

    auto trace = net.traced_forward(x);
    std::vector<double> grad(net.parameter_count(), 0.0);
    net.backward(trace, {1.0}, grad); // dL/dout = 1

    auto params = net.parameters();
    double moved = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= 0.05 * grad[i];
        moved += std::abs(grad[i]);
    }
    CHECK(moved > 0.0); // gradients are those of the random init, not zero
    net.set_parameters(params);
    CHECK(std::abs(net.forward(x)[0]) > 1e-8);
}

TEST_CASE("parameter gradients match central finite differences") {
    SplitRng rng(7);
    const Activation acts[] = {Activation::relu, Activation::softplus, Activation::tanh_act};
    for (int trial = 0; trial < 20; ++trial) {
        SplitRng r = rng.derive(trial);
        MlpConfig cfg;
        cfg.input_dim = r.uniform_int(2, 4);
        cfg.hidden = {r.uniform_int(3, 6), r.uniform_int(3, 6)};
        cfg.output_dim = r.uniform_int(1, 2);
        cfg.activation = acts[trial % 3];
        const bool buehler = trial % 2 == 0;
        Approximator net(cfg, 1000 + trial, buehler);

        // make the function nonzero before probing
        if (buehler) {
            auto p = net.parameters();
            for (double& v : p)
                v += r.uniform(-0.05, 0.05);
            net.set_parameters(p);
        }

        const auto x = random_input(r, cfg.input_dim);
        std::vector<double> target(cfg.output_dim);
        for (double& t : target)
            t = r.uniform(-1.0, 1.0);

        const auto trace = net.traced_forward(x);
        std::vector<double> out_grad(cfg.output_dim);
        for (int i = 0; i < cfg.output_dim; ++i)
            out_grad[i] = trace.output[i] - target[i];
        std::vector<double> grad(net.parameter_count(), 0.0);
        net.backward(trace, out_grad, grad);

        const double h = 1e-5;
        auto params = net.parameters();
        int checked = 0;
        for (int i = 0; i < net.parameter_count(); ++i) {
            auto up = params, dn = params;
            up[i] += h;
            dn[i] -= h;
            Approximator nu = net, nd = net;
            nu.set_parameters(up);
            nd.set_parameters(dn);
            const double fd = (loss_of(nu, x, target) - loss_of(nd, x, target)) / (2.0 * h);
            const double denom = std::max({1e-6, std::abs(fd), std::abs(grad[i])});
            if (cfg.activation == Activation::relu && std::abs(fd - grad[i]) > 1e-5 * denom)
                continue; // relu kink can break the finite difference locally
            CHECK(std::abs(fd - grad[i]) <= 1e-5 * denom);
            ++checked;
        }
        CHECK(checked > net.parameter_count() / 2);
    }
}

TEST_CASE("input gradients match central finite differences") {
    SplitRng rng(8);
    MlpConfig cfg{3, {6, 5}, 1, Activation::softplus};
    Approximator net(cfg, 42, true);
    auto p = net.parameters();
    for (double& v : p)
        v += rng.uniform(-0.05, 0.05);
    net.set_parameters(p);

    for (int trial = 0; trial < 10; ++trial) {
        SplitRng r = rng.derive(trial);
        const auto x = random_input(r, 3);
        const auto trace = net.traced_forward(x);
        std::vector<double> grad(net.parameter_count(), 0.0);
        const auto input_grad = net.backward(trace, {1.0}, grad);

        const double h = 1e-6;
        for (int i = 0; i < 3; ++i) {
            auto up = x, dn = x;
            up[i] += h;
            dn[i] -= h;
            const double fd = (net.forward(up)[0] - net.forward(dn)[0]) / (2.0 * h);
            CHECK(std::abs(fd - input_grad[i]) < 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("json round trip is bit exact") {
    const MlpConfig cfg{5, {7}, 2, Activation::relu};
    Approximator net(cfg, 2024, true);
    SplitRng rng(9);
    auto p = net.parameters();
    for (double& v : p)
        v += rng.uniform(-0.1, 0.1);
    net.set_parameters(p);

    const auto j = net.to_json();
    const auto back = Approximator::from_json(j);
    CHECK(back.parameters() == net.parameters());
    CHECK(back.buehler_zero());
    const auto x = random_input(rng, 5);
    CHECK(back.forward(x) == net.forward(x));

    // base64 helpers round anything
    const std::vector<double> vals{0.0, -1.5, 3.14159, 1e-300, -2.5e300};
    CHECK(base64_to_doubles(doubles_to_base64(vals)) == vals);
}
