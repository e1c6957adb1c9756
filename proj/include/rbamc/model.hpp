#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rbamc/binary.hpp"
#include "rbamc/layers.hpp"
#include "rbamc/rotation.hpp"
#include "rbamc/tensor.hpp"

namespace rbamc {

enum class ModelVariant : std::uint8_t { Real = 0, BNN = 1, BNN2Real = 2, RBNN = 3 };

std::string to_string(ModelVariant v);
ModelVariant parse_variant(const std::string& name);

enum class BlockKind : std::uint8_t { A = 0, B = 1 };

/// R-Block A: identity skip, channels preserved. R-Block B: 1x1 shortcut
/// convolution + BN; with `downsample` the second 3x3 conv and the shortcut
/// use stride 2.
struct BlockSpec {
    BlockKind kind = BlockKind::A;
    std::size_t channels_in = 0;
    std::size_t channels_out = 0;
    bool downsample = false;

    void validate() const;
    friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

struct ArchSpec {
    std::size_t input_h = 2;
    std::size_t input_w = 1024;
    std::size_t stem_channels = 32;
    std::vector<BlockSpec> blocks;
    std::size_t num_classes = 24;
    double dropout_rate = 0.5;

    /// conv(w) → A(w) A(w) B(w)↓ A(w) B(2w)↓ A(2w) B(4w)↓ A(4w) → pool → BN → dropout → linear.
    /// width = 32 is the full-size network.
    static ArchSpec lresnet18a(std::size_t num_classes, std::size_t width = 32, std::size_t input_w = 1024);

    void validate() const;
    std::size_t feature_channels() const;

    friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

enum class ConvKind : std::uint8_t { Real = 0, Binary = 1, Rotated = 2 };

/// Named view of one trainable tensor for the optimizer.
struct ParamView {
    std::string name;
    std::span<double> value;
    std::span<double> grad;
    bool clip_to_unit = false;  // latent binary weights live in [−1, 1]
};

struct ConvLayer {
    std::string name;
    ConvSpec spec;
    ConvKind kind = ConvKind::Real;
    Tensor weight;  // real weights, or latent weights for binary kinds
    std::optional<RotationState> rotation;

    Tensor weight_grad;
    double beta_grad = 0.0;

    // Forward cache.
    Tensor cached_input;        // raw input (STE mask source for binary kinds)
    Tensor cached_signs;        // sign(input), binary kinds only
    Tensor cached_effective;    // weights actually binarized (w or w̃)
    Tensor cached_weight_signs; // sign(cached_effective)

    bool binarized() const { return kind != ConvKind::Real; }
    /// Weights that get binarized in the forward pass: w, or w̃ for rotated layers.
    Tensor effective_weights() const;
    /// ±1 weights used by the binary path.
    Tensor binary_weights() const { return sign(effective_weights()); }
};

struct BatchNormLayer {
    std::string name;
    BatchNormState state;
    BatchNormCache cache;
    std::vector<double> gamma_grad;
    std::vector<double> beta_grad;
};

struct ResBlock {
    BlockSpec spec;
    ConvLayer conv1, conv2;
    BatchNormLayer bn1, bn2;
    std::optional<ConvLayer> shortcut;
    std::optional<BatchNormLayer> shortcut_bn;

    // Forward cache.
    Tensor pre_act1;  // bn1 output
    Tensor sum;       // residual sum before the output activation
};

struct LinearLayer {
    std::string name;
    bool binary = false;
    Tensor weight;  // [K, F]
    Tensor bias;    // [K]
    Tensor weight_grad;
    Tensor bias_grad;

    Tensor cached_input;
    Tensor cached_signs;
    Tensor cached_weight_signs;
};

struct ShapeTraceEntry {
    std::string layer;
    Shape output;  // per-sample [C, H, W]
};

class Model {
public:
    Model() = default;
    Model(ModelVariant variant, ArchSpec arch, std::uint64_t seed);

    ModelVariant variant() const noexcept { return variant_; }
    const ArchSpec& arch() const noexcept { return arch_; }

    /// Logits [N, num_classes] for input [N, 1, H, W]. Train mode caches what
    /// backward() needs and updates BN running statistics.
    Tensor forward(const Tensor& input, Mode mode, Rng& rng);

    /// Accumulates parameter gradients from d(loss)/d(logits). Requires a
    /// preceding train-mode forward.
    void backward(const Tensor& grad_logits);

    void zero_grad();
    std::vector<ParamView> parameters();

    /// Visits every convolution in network order.
    std::vector<ConvLayer*> conv_layers();
    std::vector<const ConvLayer*> conv_layers() const;
    std::vector<BatchNormLayer*> batchnorm_layers();
    std::vector<const BatchNormLayer*> batchnorm_layers() const;
    LinearLayer& head() noexcept { return head_; }
    const LinearLayer& head() const noexcept { return head_; }

    /// Per-layer output volumes for one sample, in network order.
    std::vector<ShapeTraceEntry> shape_trace() const;

    /// Executes binarized convolutions as dense convolutions of the ±1
    /// operands instead of XNOR-popcount. Results are identical; used to
    /// cross-check the packed path.
    void set_dense_binary_simulation(bool on) noexcept { dense_binary_ = on; }

    /// Runs one residual block in isolation (caches kept for backward_block).
    Tensor forward_block(std::size_t index, const Tensor& input, Mode mode);
    /// Gradient w.r.t. the block input; accumulates the block's parameter gradients.
    Tensor backward_block(std::size_t index, const Tensor& upstream);
    ResBlock& block(std::size_t index) { return blocks_.at(index); }
    const ResBlock& block(std::size_t index) const { return blocks_.at(index); }
    std::size_t block_count() const noexcept { return blocks_.size(); }

    /// Drops forward caches (they can be large).
    void clear_caches();

private:
    Tensor conv_forward(ConvLayer& layer, const Tensor& x, bool cache);
    Tensor conv_backward(ConvLayer& layer, const Tensor& upstream, bool need_input_grad);
    Tensor bn_forward(BatchNormLayer& layer, const Tensor& x, Mode mode);
    Tensor bn_backward(BatchNormLayer& layer, const Tensor& upstream);
    Tensor block_forward(ResBlock& block, const Tensor& x, Mode mode);
    Tensor block_backward(ResBlock& block, const Tensor& upstream);

    ModelVariant variant_ = ModelVariant::Real;
    ArchSpec arch_;
    ConvLayer stem_;
    BatchNormLayer stem_bn_;
    std::vector<ResBlock> blocks_;
    BatchNormLayer head_bn_;
    LinearLayer head_;
    bool dense_binary_ = false;

    // Forward cache.
    Tensor stem_pre_act_;
    Shape pooled_input_shape_;
    Tensor dropout_mask_;
    bool have_cache_ = false;
};

/// Builds a model of the given variant.
Model build(ModelVariant variant, const ArchSpec& arch, std::uint64_t seed);

}  // namespace rbamc
