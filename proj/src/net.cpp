#include "hedge/net.hpp"

#include <cmath>
#include <cstring>

#include "hedge/errors.hpp"
#include "hedge/rng.hpp"

namespace hedge {

const char* to_string(Activation a) {
    switch (a) {
    case Activation::relu: return "relu";
    case Activation::softplus: return "softplus";
    case Activation::tanh_act: return "tanh";
    }
    return "unknown";
}

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "softplus") return Activation::softplus;
    if (name == "tanh") return Activation::tanh_act;
    throw ValidationError("network.activation: unknown activation '" + name + "'");
}

namespace {

double activate(Activation a, double x) {
    switch (a) {
    case Activation::relu:
        return x > 0.0 ? x : 0.0;
    case Activation::softplus:
        if (x > 30.0)
            return x;
        if (x < -30.0)
            return std::exp(x);
        return std::log1p(std::exp(x));
    case Activation::tanh_act:
        return std::tanh(x);
    }
    return x;
}

double activate_prime(Activation a, double x) {
    switch (a) {
    case Activation::relu:
        return x > 0.0 ? 1.0 : 0.0;
    case Activation::softplus:
        if (x > 30.0)
            return 1.0;
        if (x < -30.0)
            return std::exp(x);
        return 1.0 / (1.0 + std::exp(-x));
    case Activation::tanh_act: {
        const double t = std::tanh(x);
        return 1.0 - t * t;
    }
    }
    return 1.0;
}

} // namespace

Approximator::Approximator(MlpConfig config, std::uint64_t seed, bool buehler_zero)
    : config_(std::move(config)) {
    if (config_.input_dim < 1 || config_.output_dim < 1)
        throw ValidationError("network: input and output dimensions must be >= 1");
    for (int h : config_.hidden)
        if (h < 1)
            throw ValidationError("network.hidden: layer sizes must be >= 1");
    build_offsets();

    int total = 0;
    for (std::size_t layer = 0; layer < layer_in_.size(); ++layer)
        total += layer_in_[layer] * layer_out_[layer] + layer_out_[layer];
    params_.resize(total);

    SplitRng rng = SplitRng(seed).derive(0x6e6574ULL);
    for (std::size_t layer = 0; layer < layer_in_.size(); ++layer) {
        const double scale = std::sqrt(6.0 / (layer_in_[layer] + layer_out_[layer]));
        SplitRng lr = rng.derive(layer);
        const int wl = layer_in_[layer] * layer_out_[layer];
        for (int i = 0; i < wl; ++i)
            params_[weight_offset_[layer] + i] = lr.uniform(-scale, scale);
        for (int i = 0; i < layer_out_[layer]; ++i)
            params_[bias_offset_[layer] + i] = 0.0;
    }
    if (buehler_zero)
        frozen_ = params_;
}

void Approximator::build_offsets() {
    layer_in_.clear();
    layer_out_.clear();
    weight_offset_.clear();
    bias_offset_.clear();
    int prev = config_.input_dim;
    int offset = 0;
    auto add_layer = [&](int out) {
        layer_in_.push_back(prev);
        layer_out_.push_back(out);
        weight_offset_.push_back(offset);
        offset += prev * out;
        bias_offset_.push_back(offset);
        offset += out;
        prev = out;
    };
    for (int h : config_.hidden)
        add_layer(h);
    add_layer(config_.output_dim);
}

void Approximator::set_parameters(std::vector<double> params) {
    if (params.size() != params_.size())
        throw ValidationError("network: parameter count mismatch");
    params_ = std::move(params);
}

void Approximator::run(const std::vector<double>& params, const std::vector<double>& input,
                       std::vector<std::vector<double>>& pre,
                       std::vector<std::vector<double>>& post) const {
    const std::size_t layers = layer_in_.size();
    pre.assign(layers, {});
    post.assign(layers, {});
    const std::vector<double>* current = &input;
    for (std::size_t layer = 0; layer < layers; ++layer) {
        const int in = layer_in_[layer];
        const int out = layer_out_[layer];
        pre[layer].assign(out, 0.0);
        for (int o = 0; o < out; ++o) {
            double acc = params[bias_offset_[layer] + o];
            const double* w = params.data() + weight_offset_[layer] + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i)
                acc += w[i] * (*current)[i];
            pre[layer][o] = acc;
        }
        const bool last = layer + 1 == layers;
        post[layer].assign(out, 0.0);
        for (int o = 0; o < out; ++o)
            post[layer][o] = last ? pre[layer][o] : activate(config_.activation, pre[layer][o]);
        current = &post[layer];
    }
}

std::vector<double> Approximator::forward(const std::vector<double>& input) const {
    if (static_cast<int>(input.size()) != config_.input_dim)
        throw ValidationError("network: input dimension mismatch");
    std::vector<std::vector<double>> pre, post;
    run(params_, input, pre, post);
    std::vector<double> out = post.back();
    if (!frozen_.empty()) {
        run(frozen_, input, pre, post);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] -= post.back()[i];
    }
    return out;
}

Approximator::Trace Approximator::traced_forward(const std::vector<double>& input) const {
    if (static_cast<int>(input.size()) != config_.input_dim)
        throw ValidationError("network: input dimension mismatch");
    Trace trace;
    trace.input = input;
    run(params_, input, trace.pre, trace.post);
    trace.output = trace.post.back();
    if (!frozen_.empty()) {
        run(frozen_, input, trace.frozen_pre, trace.frozen_post);
        for (std::size_t i = 0; i < trace.output.size(); ++i)
            trace.output[i] -= trace.frozen_post.back()[i];
    }
    return trace;
}

std::vector<double> Approximator::back_run(const std::vector<double>& params,
                                           const std::vector<std::vector<double>>& pre,
                                           const std::vector<std::vector<double>>& post,
                                           const std::vector<double>& input,
                                           const std::vector<double>& output_grad,
                                           std::vector<double>* param_grad, double param_sign) const {
    const int layers = static_cast<int>(layer_in_.size());
    std::vector<double> delta = output_grad; // d loss / d pre of current layer
    for (int layer = layers - 1; layer >= 0; --layer) {
        const int in = layer_in_[layer];
        const int out = layer_out_[layer];
        const bool last = layer == layers - 1;
        if (!last)
            for (int o = 0; o < out; ++o)
                delta[o] *= activate_prime(config_.activation, pre[layer][o]);

        const std::vector<double>& below = layer == 0 ? input : post[layer - 1];
        if (param_grad) {
            for (int o = 0; o < out; ++o) {
                const std::size_t row = weight_offset_[layer] + static_cast<std::size_t>(o) * in;
                for (int i = 0; i < in; ++i)
                    (*param_grad)[row + i] += param_sign * delta[o] * below[i];
                (*param_grad)[bias_offset_[layer] + o] += param_sign * delta[o];
            }
        }

        std::vector<double> next(in, 0.0);
        for (int o = 0; o < out; ++o) {
            const double* w = params.data() + weight_offset_[layer] + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i)
                next[i] += w[i] * delta[o];
        }
        delta = std::move(next);
    }
    return delta;
}

std::vector<double> Approximator::backward(const Trace& trace, const std::vector<double>& output_grad,
                                           std::vector<double>& param_grad) const {
    if (param_grad.size() != params_.size())
        throw ValidationError("network: gradient buffer size mismatch");

    std::vector<double> input_grad =
        back_run(params_, trace.pre, trace.post, trace.input, output_grad, &param_grad, 1.0);
    if (!frozen_.empty()) {
        const std::vector<double> frozen_input_grad = back_run(
            frozen_, trace.frozen_pre, trace.frozen_post, trace.input, output_grad, nullptr, 0.0);
        for (std::size_t i = 0; i < input_grad.size(); ++i)
            input_grad[i] -= frozen_input_grad[i];
    }
    return input_grad;
}

nlohmann::json Approximator::to_json() const {
    return nlohmann::json{
        {"input_dim", config_.input_dim},
        {"hidden", config_.hidden},
        {"output_dim", config_.output_dim},
        {"activation", to_string(config_.activation)},
        {"params_b64", doubles_to_base64(params_)},
        {"frozen_b64", doubles_to_base64(frozen_)},
    };
}

Approximator Approximator::from_json(const nlohmann::json& j) {
    MlpConfig config;
    config.input_dim = j.at("input_dim").get<int>();
    config.hidden = j.at("hidden").get<std::vector<int>>();
    config.output_dim = j.at("output_dim").get<int>();
    config.activation = activation_from_string(j.at("activation").get<std::string>());

    Approximator net(config, 0, false);
    net.set_parameters(base64_to_doubles(j.at("params_b64").get<std::string>()));
    const auto frozen = base64_to_doubles(j.at("frozen_b64").get<std::string>());
    if (!frozen.empty()) {
        if (frozen.size() != net.params_.size())
            throw ValidationError("network: frozen parameter count mismatch");
        net.frozen_ = frozen;
    }
    return net;
}

namespace {
constexpr char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    throw ValidationError("base64: invalid character");
}
} // namespace

std::string doubles_to_base64(const std::vector<double>& values) {
    // little-endian float64 payload
    std::vector<unsigned char> bytes(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &values[i], 8);
        for (int b = 0; b < 8; ++b)
            bytes[i * 8 + b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
    }
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        const int n = static_cast<int>(std::min<std::size_t>(3, bytes.size() - i));
        std::uint32_t chunk = 0;
        for (int b = 0; b < n; ++b)
            chunk |= static_cast<std::uint32_t>(bytes[i + b]) << (16 - 8 * b);
        out.push_back(kB64Alphabet[(chunk >> 18) & 63]);
        out.push_back(kB64Alphabet[(chunk >> 12) & 63]);
        out.push_back(n >= 2 ? kB64Alphabet[(chunk >> 6) & 63] : '=');
        out.push_back(n == 3 ? kB64Alphabet[chunk & 63] : '=');
    }
    return out;
}

std::vector<double> base64_to_doubles(const std::string& text) {
    if (text.empty())
        return {};
    if (text.size() % 4 != 0)
        throw ValidationError("base64: length must be a multiple of 4");
    std::vector<unsigned char> bytes;
    bytes.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int vals[4] = {0, 0, 0, 0};
        int n = 3;
        for (int b = 0; b < 4; ++b) {
            const char c = text[i + b];
            if (c == '=') {
                n = b - 1;
                break;
            }
            vals[b] = b64_value(c);
        }
        const std::uint32_t chunk = (static_cast<std::uint32_t>(vals[0]) << 18) |
                                    (static_cast<std::uint32_t>(vals[1]) << 12) |
                                    (static_cast<std::uint32_t>(vals[2]) << 6) |
                                    static_cast<std::uint32_t>(vals[3]);
        for (int b = 0; b < n; ++b)
            bytes.push_back(static_cast<unsigned char>((chunk >> (16 - 8 * b)) & 0xff));
    }
    if (bytes.size() % 8 != 0)
        throw ValidationError("base64: payload is not a float64 array");
    std::vector<double> out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
        std::memcpy(&out[i], &bits, 8);
    }
    return out;
}

} // namespace hedge
