#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rbamc/layers.hpp"
#include "rbamc/tensor.hpp"

namespace rbamc {

/// +1 where x >= 0, −1 where x < 0. sign(0) = +1.
Tensor sign(const Tensor& x);

inline double sign_of(double v) { return v >= 0.0 ? 1.0 : -1.0; }

/// Bit-packed ±1 tensor. Element i lives in bit (i % 64) of word i / 64;
/// bit 1 encodes +1 and bit 0 encodes −1. Bits past valid_len are zero.
class BitTensor {
public:
    BitTensor() = default;
    BitTensor(Shape shape, std::vector<std::uint64_t> words);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t valid_len() const noexcept { return valid_len_; }
    const std::vector<std::uint64_t>& words() const noexcept { return words_; }

    bool bit(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
    double value(std::size_t i) const { return bit(i) ? 1.0 : -1.0; }

    static std::size_t word_count(std::size_t bits) { return (bits + 63) / 64; }

    friend bool operator==(const BitTensor&, const BitTensor&) = default;

private:
    Shape shape_;
    std::vector<std::uint64_t> words_;
    std::size_t valid_len_ = 0;
};

/// Throws DomainError for any entry other than exactly +1 or −1.
BitTensor pack(const Tensor& x);
Tensor unpack(const BitTensor& b);

/// Σ aᵢ·bᵢ over the ±1 interpretation, computed as n − 2·popcount(a XOR b).
std::int64_t xnor_dot(const BitTensor& a, const BitTensor& b);

/// Channel-interleaved packing of a 4-D ±1 tensor [D0, C, H, W]: for every
/// (d0, y, x) the C channel bits occupy ceil(C/64) consecutive words. This is
/// the layout the convolution kernel consumes; a window tap is then a run of
/// whole words and padded taps are skipped outright.
class ChannelBits {
public:
    ChannelBits() = default;
    explicit ChannelBits(const BitTensor& bits);
    /// From a dense tensor whose entries are binarized with sign().
    static ChannelBits from_signs(const Tensor& x);

    std::size_t outer() const noexcept { return outer_; }
    std::size_t channels() const noexcept { return channels_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t words_per_pixel() const noexcept { return wpp_; }
    const std::uint64_t* pixel(std::size_t d0, std::size_t y, std::size_t x) const {
        return words_.data() + ((d0 * height_ + y) * width_ + x) * wpp_;
    }

private:
    void allocate(std::size_t outer, std::size_t channels, std::size_t height, std::size_t width);
    void set(std::size_t d0, std::size_t c, std::size_t y, std::size_t x);

    std::size_t outer_ = 0, channels_ = 0, height_ = 0, width_ = 0, wpp_ = 0;
    std::vector<std::uint64_t> words_;
};

/// Zero-padded ±1 convolution with XNOR-popcount arithmetic. Padded taps
/// contribute 0, so the result equals conv2d_forward on the unpacked operands
/// exactly; entries are integers stored as doubles.
Tensor binary_conv2d(const BitTensor& input_bits, const BitTensor& weight_bits, const ConvSpec& spec);
Tensor binary_conv2d(const ChannelBits& input_bits, const ChannelBits& weight_bits, const ConvSpec& spec);

/// Straight-through estimator: upstream where |latent| <= 1, zero elsewhere.
Tensor ste_backward(const Tensor& upstream, const Tensor& latent);

/// Element-wise clamp to [−1, 1].
Tensor clip_latent(const Tensor& latent);
void clip_latent_inplace(Tensor& latent);

}  // namespace rbamc
