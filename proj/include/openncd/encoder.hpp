// The trainable feature extractor: a small MLP with an L2-normalized output,
// hand-written forward and backward passes. Hidden layers use tanh or relu;
// the final affine layer is linear and its rows are normalized to the unit
// sphere as part of the encoder.
#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "openncd/errors.hpp"
#include "openncd/matrix.hpp"
#include "openncd/numerics.hpp"
#include "openncd/rng.hpp"

namespace openncd {

enum class Activation { tanh, relu };

inline const char* to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    throw ConfigError("unknown activation '" + s + "' (expected tanh or relu)");
}

// Weight initialization. `preserve` starts the network as a near-isometry
// of the input (scaled identity blocks in the quasi-linear zone of the
// activation, tiny noise for symmetry breaking), the right starting point
// when the inputs are already meaningful feature vectors: a random start
// scrambles their geometry and the early drift strands prototypes off the
// data. `glorot` is the usual uniform fan-in/fan-out init.
enum class EncoderInit { preserve, glorot };

inline const char* to_string(EncoderInit i) {
    return i == EncoderInit::preserve ? "preserve" : "glorot";
}

inline EncoderInit encoder_init_from_string(const std::string& s) {
    if (s == "preserve") return EncoderInit::preserve;
    if (s == "glorot") return EncoderInit::glorot;
    throw ConfigError("unknown encoder init '" + s + "' (expected preserve or glorot)");
}

struct EncoderConfig {
    int input_dim = 0;
    std::vector<int> hidden_dims = {64};
    int embed_dim = 32;
    Activation activation = Activation::tanh;
    EncoderInit init = EncoderInit::preserve;
    uint64_t seed = 1;

    void validate() const {
        if (input_dim < 1) throw ContractViolation("EncoderConfig: input_dim must be positive");
        if (embed_dim < 2) throw ContractViolation("EncoderConfig: embed_dim must be >= 2");
        for (int h : hidden_dims)
            if (h < 1) throw ContractViolation("EncoderConfig: hidden dims must be positive");
    }

    // Layer widths including input and output.
    std::vector<int> layer_sizes() const {
        std::vector<int> sizes;
        sizes.push_back(input_dim);
        sizes.insert(sizes.end(), hidden_dims.begin(), hidden_dims.end());
        sizes.push_back(embed_dim);
        return sizes;
    }

    size_t param_count() const {
        const auto sizes = layer_sizes();
        size_t n = 0;
        for (size_t l = 0; l + 1 < sizes.size(); ++l)
            n += static_cast<size_t>(sizes[l]) * sizes[l + 1] + sizes[l + 1];
        return n;
    }
};

// Zero biases everywhere; a deterministic function of cfg.seed.
inline ParamVector init_encoder_params(const EncoderConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const auto sizes = cfg.layer_sizes();
    ParamVector params;
    params.reserve(cfg.param_count());
    for (size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int fan_in = sizes[l], fan_out = sizes[l + 1];
        const bool is_output = l + 2 == sizes.size();
        if (cfg.init == EncoderInit::glorot) {
            const double a = std::sqrt(6.0 / (fan_in + fan_out));
            for (int i = 0; i < fan_in * fan_out; ++i) params.push_back(rng.uniform(-a, a));
        } else {
            // Identity blocks, duplicated or folded to bridge the widths.
            // Hidden layers are scaled into the activation's linear zone;
            // the output layer is unscaled (row normalization absorbs it).
            const double gain = is_output || cfg.activation == Activation::relu ? 1.0 : 0.2;
            const double noise = 0.01 * gain;
            for (int i = 0; i < fan_in; ++i)
                for (int j = 0; j < fan_out; ++j) {
                    const bool on_diag =
                        fan_out >= fan_in ? (j % fan_in == i) : (i % fan_out == j);
                    params.push_back((on_diag ? gain : 0.0) + rng.uniform(-noise, noise));
                }
        }
        for (int i = 0; i < fan_out; ++i) params.push_back(0.0);
    }
    return params;
}

namespace detail {

struct LayerView {
    const double* weights;  // fan_in x fan_out, row-major
    const double* bias;     // fan_out
    int fan_in, fan_out;
};

inline std::vector<LayerView> layer_views(std::span<const double> params, const EncoderConfig& cfg) {
    if (params.size() != cfg.param_count())
        throw ContractViolation("encoder: parameter vector length does not match config");
    const auto sizes = cfg.layer_sizes();
    std::vector<LayerView> views;
    size_t offset = 0;
    for (size_t l = 0; l + 1 < sizes.size(); ++l) {
        LayerView v;
        v.fan_in = sizes[l];
        v.fan_out = sizes[l + 1];
        v.weights = params.data() + offset;
        offset += static_cast<size_t>(v.fan_in) * v.fan_out;
        v.bias = params.data() + offset;
        offset += v.fan_out;
        views.push_back(v);
    }
    return views;
}

inline double activate(double x, Activation a) {
    return a == Activation::tanh ? std::tanh(x) : (x > 0.0 ? x : 0.0);
}

// Derivative expressed through the activation output.
inline double activate_grad_from_output(double y, Activation a) {
    return a == Activation::tanh ? 1.0 - y * y : (y > 0.0 ? 1.0 : 0.0);
}

// Forward pass keeping per-layer activations for backprop. activations[0] is
// the input; the last entry is the pre-normalization output.
inline std::vector<Matrix> forward_layers(const Matrix& input, std::span<const double> params,
                                          const EncoderConfig& cfg) {
    const auto layers = layer_views(params, cfg);
    std::vector<Matrix> acts;
    acts.reserve(layers.size() + 1);
    acts.push_back(input);
    for (size_t l = 0; l < layers.size(); ++l) {
        const auto& L = layers[l];
        const Matrix& h = acts.back();
        Matrix out(h.rows(), L.fan_out);
        for (int i = 0; i < h.rows(); ++i) {
            for (int j = 0; j < L.fan_out; ++j) {
                double s = L.bias[j];
                for (int k = 0; k < L.fan_in; ++k) s += h(i, k) * L.weights[k * L.fan_out + j];
                out(i, j) = (l + 1 < layers.size()) ? activate(s, cfg.activation) : s;
            }
        }
        acts.push_back(std::move(out));
    }
    return acts;
}

}  // namespace detail

// Maps a batch of raw feature rows to unit-norm embedding rows.
inline Matrix encode(const Matrix& input, std::span<const double> params, const EncoderConfig& cfg) {
    cfg.validate();
    if (input.cols() != cfg.input_dim)
        throw ContractViolation("encode: batch width does not match input_dim");
    auto acts = detail::forward_layers(input, params, cfg);
    Matrix z = std::move(acts.back());
    for (int i = 0; i < z.rows(); ++i) l2_normalize_row(z.row(i), i);
    return z;
}

// Gradient of sum_i <upstream_i, encode(input)_i> with respect to params,
// including the Jacobian of the row normalization.
inline ParamVector encode_backward(const Matrix& input, std::span<const double> params,
                                   const Matrix& upstream, const EncoderConfig& cfg) {
    cfg.validate();
    if (input.cols() != cfg.input_dim)
        throw ContractViolation("encode_backward: batch width does not match input_dim");
    if (upstream.rows() != input.rows() || upstream.cols() != cfg.embed_dim)
        throw ContractViolation("encode_backward: upstream shape mismatch");

    const auto layers = detail::layer_views(params, cfg);
    auto acts = detail::forward_layers(input, params, cfg);
    const Matrix& pre_norm = acts.back();
    const int B = input.rows();

    // d/dy of <u, y/||y||> = (u - <u,z> z) / ||y||
    Matrix delta(B, cfg.embed_dim);
    for (int i = 0; i < B; ++i) {
        const double n = norm(pre_norm.row(i));
        if (!(n > kNormFloor))
            throw DegenerateVectorError("encode_backward: degenerate embedding at row " +
                                            std::to_string(i),
                                        i);
        double uz = 0.0;
        for (int j = 0; j < cfg.embed_dim; ++j) uz += upstream(i, j) * pre_norm(i, j) / n;
        for (int j = 0; j < cfg.embed_dim; ++j)
            delta(i, j) = (upstream(i, j) - uz * pre_norm(i, j) / n) / n;
    }

    ParamVector grad(params.size(), 0.0);
    size_t offset = params.size();
    for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
        const auto& L = layers[l];
        offset -= static_cast<size_t>(L.fan_in) * L.fan_out + L.fan_out;
        double* gw = grad.data() + offset;
        double* gb = gw + static_cast<size_t>(L.fan_in) * L.fan_out;
        const Matrix& h = acts[l];

        for (int i = 0; i < B; ++i)
            for (int j = 0; j < L.fan_out; ++j) {
                const double d = delta(i, j);
                gb[j] += d;
                for (int k = 0; k < L.fan_in; ++k) gw[k * L.fan_out + j] += h(i, k) * d;
            }

        if (l > 0) {
            Matrix next(B, L.fan_in);
            for (int i = 0; i < B; ++i)
                for (int k = 0; k < L.fan_in; ++k) {
                    double s = 0.0;
                    for (int j = 0; j < L.fan_out; ++j) s += delta(i, j) * L.weights[k * L.fan_out + j];
                    next(i, k) = s * detail::activate_grad_from_output(h(i, k), cfg.activation);
                }
            delta = std::move(next);
        }
    }
    return grad;
}

}  // namespace openncd
