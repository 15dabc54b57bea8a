#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace hedge {

enum class Activation { relu, softplus, tanh_act };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct MlpConfig {
    int input_dim = 1;
    std::vector<int> hidden{32, 32};
    int output_dim = 1;
    Activation activation = Activation::softplus;
};

// Feed-forward approximator with linear output and manual backprop.
// With buehler_zero on, the function is N(theta; x) - N(theta0; x) for a
// frozen copy theta0 of the random initial weights: identically zero at
// initialization while keeping the random network's gradients.
class Approximator {
public:
    Approximator() = default;
    Approximator(MlpConfig config, std::uint64_t seed, bool buehler_zero = true);

    int input_dim() const { return config_.input_dim; }
    int output_dim() const { return config_.output_dim; }
    int parameter_count() const { return static_cast<int>(params_.size()); }
    bool buehler_zero() const { return !frozen_.empty(); }

    const std::vector<double>& parameters() const { return params_; }
    void set_parameters(std::vector<double> params);

    std::vector<double> forward(const std::vector<double>& input) const;

    // Forward pass retaining intermediates for backward().
    struct Trace {
        std::vector<double> input;
        std::vector<std::vector<double>> pre;  // per layer, before activation
        std::vector<std::vector<double>> post; // per layer, after activation
        std::vector<std::vector<double>> frozen_pre;
        std::vector<std::vector<double>> frozen_post;
        std::vector<double> output;
    };
    Trace traced_forward(const std::vector<double>& input) const;

    // Accumulates d(loss)/d(params) into param_grad (size parameter_count())
    // given d(loss)/d(output); returns d(loss)/d(input). The frozen copy
    // contributes to the input gradient but not to the parameter gradient.
    std::vector<double> backward(const Trace& trace, const std::vector<double>& output_grad,
                                 std::vector<double>& param_grad) const;

    nlohmann::json to_json() const;
    static Approximator from_json(const nlohmann::json& j);

private:
    MlpConfig config_;
    std::vector<double> params_;
    std::vector<double> frozen_; // empty unless buehler_zero

    std::vector<int> layer_in_;
    std::vector<int> layer_out_;
    std::vector<int> weight_offset_;
    std::vector<int> bias_offset_;

    void build_offsets();
    void run(const std::vector<double>& params, const std::vector<double>& input,
             std::vector<std::vector<double>>& pre, std::vector<std::vector<double>>& post) const;
    std::vector<double> back_run(const std::vector<double>& params,
                                 const std::vector<std::vector<double>>& pre,
                                 const std::vector<std::vector<double>>& post,
                                 const std::vector<double>& input,
                                 const std::vector<double>& output_grad,
                                 std::vector<double>* param_grad, double param_sign) const;
};

// Little-endian float64 <-> base64, used by the model files.
std::string doubles_to_base64(const std::vector<double>& values);
std::vector<double> base64_to_doubles(const std::string& text);

} // namespace hedge
