#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rbamc/rng.hpp"
#include "rbamc/tensor.hpp"

namespace rbamc {

enum class Mode { Train, Infer };

/// Geometry of a 2-D convolution. Convolutions in this project never carry a
/// bias; batch norm supplies the shift.
struct ConvSpec {
    std::size_t c_in = 1;
    std::size_t c_out = 1;
    std::size_t k_h = 3;
    std::size_t k_w = 3;
    std::size_t stride_h = 1;
    std::size_t stride_w = 1;
    std::size_t pad_h = 0;
    std::size_t pad_w = 0;
    bool has_bias = false;

    static ConvSpec square(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t stride, std::size_t pad) {
        return {c_in, c_out, k, k, stride, stride, pad, pad, false};
    }

    std::size_t out_h(std::size_t in_h) const;
    std::size_t out_w(std::size_t in_w) const;
    std::size_t weight_count() const { return c_out * c_in * k_h * k_w; }
    Shape weight_shape() const { return {c_out, c_in, k_h, k_w}; }

    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// floor((in + 2·pad − k)/stride) + 1; throws ShapeError when the window does not fit.
std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad);

Tensor conv2d_forward(const Tensor& input, const ConvSpec& spec, const Tensor& weights);

struct ConvGrads {
    Tensor input;    // empty when not requested
    Tensor weights;
};

ConvGrads conv2d_backward(const Tensor& upstream, const Tensor& cached_input, const ConvSpec& spec,
                          const Tensor& weights, bool need_input_grad = true);

struct BatchNormState {
    std::vector<double> gamma;
    std::vector<double> beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double eps = 1e-5;
    double momentum = 0.1;

    explicit BatchNormState(std::size_t channels = 0)
        : gamma(channels, 1.0), beta(channels, 0.0), running_mean(channels, 0.0), running_var(channels, 1.0) {}

    std::size_t channels() const { return gamma.size(); }
};

struct BatchNormCache {
    Tensor xhat;
    std::vector<double> inv_std;
    Mode mode = Mode::Train;
};

/// Normalizes per channel over (N, H, W). Train mode uses batch statistics and
/// updates the running estimates (unbiased variance); infer mode uses the
/// running estimates and leaves the state untouched.
Tensor batchnorm_forward(const Tensor& input, BatchNormState& state, Mode mode, BatchNormCache* cache = nullptr);

struct BatchNormGrads {
    Tensor input;
    std::vector<double> gamma;
    std::vector<double> beta;
};

BatchNormGrads batchnorm_backward(const Tensor& upstream, const BatchNormCache& cache, const BatchNormState& state);

Tensor hardtanh(const Tensor& input);
/// Passes upstream where |x| < 1; zero elsewhere, including at exactly ±1.
Tensor hardtanh_backward(const Tensor& upstream, const Tensor& input);

Tensor avgpool_global(const Tensor& input);
Tensor avgpool_global_backward(const Tensor& upstream, const Shape& input_shape);

Tensor linear_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct LinearGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

LinearGrads linear_backward(const Tensor& upstream, const Tensor& input, const Tensor& weights);

struct DropoutResult {
    Tensor output;
    Tensor mask;  // per-element multiplier: 0 or 1/(1−rate)
};

/// Inverted dropout. Infer mode and rate 0 are identities.
DropoutResult dropout(const Tensor& input, double rate, Rng& rng, Mode mode);
Tensor dropout_backward(const Tensor& upstream, const Tensor& mask);

Tensor softmax(const Tensor& logits);

struct XentResult {
    double loss = 0.0;
    Tensor grad;  // d(mean loss)/d(logits)
};

XentResult softmax_xent(const Tensor& logits, std::span<const int> labels);

}  // namespace rbamc
