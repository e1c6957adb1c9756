#include "rbamc/binary.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "rbamc/errors.hpp"

namespace rbamc {

Tensor sign(const Tensor& x) {
    Tensor s(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) s[i] = sign_of(x[i]);
    return s;
}

BitTensor::BitTensor(Shape shape, std::vector<std::uint64_t> words)
    : shape_(std::move(shape)), words_(std::move(words)), valid_len_(shape_size(shape_)) {
    if (words_.size() != word_count(valid_len_))
        throw ShapeError("bit tensor: " + std::to_string(words_.size()) + " words cannot hold " +
                         shape_str(shape_));
    if (const std::size_t tail = valid_len_ & 63; tail != 0 && (words_.back() >> tail) != 0)
        throw FormatError("bit tensor: nonzero padding bits past valid length");
}

BitTensor pack(const Tensor& x) {
    std::vector<std::uint64_t> words(BitTensor::word_count(x.size()), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        if (v == 1.0)
            words[i >> 6] |= std::uint64_t{1} << (i & 63);
        else if (v != -1.0)
            throw DomainError("pack: element " + std::to_string(i) + " is " + std::to_string(v) + ", not ±1");
    }
    return BitTensor(x.shape(), std::move(words));
}

Tensor unpack(const BitTensor& b) {
    Tensor t(b.shape());
    for (std::size_t i = 0; i < b.valid_len(); ++i) t[i] = b.value(i);
    return t;
}

std::int64_t xnor_dot(const BitTensor& a, const BitTensor& b) {
    if (a.valid_len() != b.valid_len())
        throw ShapeError("xnor_dot: lengths " + std::to_string(a.valid_len()) + " and " +
                         std::to_string(b.valid_len()));
    const std::size_t n = a.valid_len();
    std::int64_t mismatches = 0;
    const auto& wa = a.words();
    const auto& wb = b.words();
    for (std::size_t i = 0; i < wa.size(); ++i) {
        std::uint64_t diff = wa[i] ^ wb[i];
        if (i + 1 == wa.size() && (n & 63) != 0) diff &= (std::uint64_t{1} << (n & 63)) - 1;
        mismatches += std::popcount(diff);
    }
    return static_cast<std::int64_t>(n) - 2 * mismatches;
}

void ChannelBits::allocate(std::size_t outer, std::size_t channels, std::size_t height, std::size_t width) {
    outer_ = outer;
    channels_ = channels;
    height_ = height;
    width_ = width;
    wpp_ = BitTensor::word_count(channels);
    words_.assign(outer * height * width * wpp_, 0);
}

void ChannelBits::set(std::size_t d0, std::size_t c, std::size_t y, std::size_t x) {
    words_[((d0 * height_ + y) * width_ + x) * wpp_ + (c >> 6)] |= std::uint64_t{1} << (c & 63);
}

ChannelBits::ChannelBits(const BitTensor& bits) {
    const Shape& s = bits.shape();
    if (s.size() != 4) throw ShapeError("channel packing needs a rank-4 tensor, got " + shape_str(s));
    allocate(s[0], s[1], s[2], s[3]);
    std::size_t i = 0;
    for (std::size_t d = 0; d < s[0]; ++d)
        for (std::size_t c = 0; c < s[1]; ++c)
            for (std::size_t y = 0; y < s[2]; ++y)
                for (std::size_t x = 0; x < s[3]; ++x, ++i)
                    if (bits.bit(i)) set(d, c, y, x);
}

ChannelBits ChannelBits::from_signs(const Tensor& t) {
    const Shape& s = t.shape();
    if (s.size() != 4) throw ShapeError("channel packing needs a rank-4 tensor, got " + shape_str(s));
    ChannelBits cb;
    cb.allocate(s[0], s[1], s[2], s[3]);
    const std::size_t hw = s[2] * s[3];
    const double* src = t.ptr();
    for (std::size_t d = 0; d < s[0]; ++d)
        for (std::size_t c = 0; c < s[1]; ++c, src += hw) {
            std::uint64_t* dst = cb.words_.data() + d * hw * cb.wpp_ + (c >> 6);
            const unsigned bit = c & 63;
            for (std::size_t i = 0; i < hw; ++i)
                dst[i * cb.wpp_] |= static_cast<std::uint64_t>(src[i] >= 0.0) << bit;
        }
    return cb;
}

Tensor binary_conv2d(const BitTensor& input_bits, const BitTensor& weight_bits, const ConvSpec& spec) {
    return binary_conv2d(ChannelBits(input_bits), ChannelBits(weight_bits), spec);
}

Tensor binary_conv2d(const ChannelBits& in, const ChannelBits& wt, const ConvSpec& spec) {
    if (in.channels() != spec.c_in)
        throw ShapeError("binary_conv2d: input has " + std::to_string(in.channels()) + " channels, spec c_in=" +
                         std::to_string(spec.c_in));
    if (wt.outer() != spec.c_out || wt.channels() != spec.c_in || wt.height() != spec.k_h || wt.width() != spec.k_w)
        throw ShapeError("binary_conv2d: weight geometry does not match spec");
    const std::size_t n = in.outer(), h = in.height(), w = in.width();
    const std::size_t oh = spec.out_h(h), ow = spec.out_w(w);
    const std::size_t wpp = in.words_per_pixel();
    const auto ci = static_cast<std::int64_t>(spec.c_in);

    Tensor out({n, spec.c_out, oh, ow});
    const std::size_t plane = oh * ow;
    const std::size_t taps = spec.k_h * spec.k_w;
    // Weight words laid out [tap][c_out][word] so one tap streams all filters.
    std::vector<std::uint64_t> wts(taps * spec.c_out * wpp);
    for (std::size_t co = 0; co < spec.c_out; ++co)
        for (std::size_t t = 0; t < taps; ++t) {
            const std::uint64_t* b = wt.pixel(co, t / spec.k_w, t % spec.k_w);
            std::copy(b, b + wpp, wts.data() + (t * spec.c_out + co) * wpp);
        }
    std::vector<const std::uint64_t*> tap_in(taps);
    std::vector<std::size_t> tap_id(taps);
    std::vector<std::int64_t> mism(spec.c_out);
    for (std::size_t s = 0; s < n; ++s) {
        double* o = out.ptr() + s * spec.c_out * plane;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                std::size_t valid = 0;
                for (std::size_t i = 0; i < spec.k_h; ++i) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * spec.stride_h + i) -
                                              static_cast<std::ptrdiff_t>(spec.pad_h);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t j = 0; j < spec.k_w; ++j) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * spec.stride_w + j) -
                                                  static_cast<std::ptrdiff_t>(spec.pad_w);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                        tap_in[valid] = in.pixel(s, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                        tap_id[valid] = i * spec.k_w + j;
                        ++valid;
                    }
                }
                std::fill(mism.begin(), mism.end(), 0);
                for (std::size_t t = 0; t < valid; ++t) {
                    const std::uint64_t* a = tap_in[t];
                    const std::uint64_t* b = wts.data() + tap_id[t] * spec.c_out * wpp;
                    if (wpp == 1) {
                        const std::uint64_t a0 = a[0];
                        for (std::size_t co = 0; co < spec.c_out; ++co) mism[co] += std::popcount(a0 ^ b[co]);
                    } else {
                        for (std::size_t co = 0; co < spec.c_out; ++co, b += wpp)
                            for (std::size_t k = 0; k < wpp; ++k) mism[co] += std::popcount(a[k] ^ b[k]);
                    }
                }
                const std::int64_t matched = static_cast<std::int64_t>(valid) * ci;
                const std::size_t pos = y * ow + x;
                for (std::size_t co = 0; co < spec.c_out; ++co)
                    o[co * plane + pos] = static_cast<double>(matched - 2 * mism[co]);
            }
        }
    }
    return out;
}

Tensor ste_backward(const Tensor& upstream, const Tensor& latent) {
    if (upstream.shape() != latent.shape())
        throw ShapeError("ste_backward: " + shape_str(upstream.shape()) + " vs " + shape_str(latent.shape()));
    Tensor g(latent.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::abs(latent[i]) <= 1.0 ? upstream[i] : 0.0;
    return g;
}

Tensor clip_latent(const Tensor& latent) {
    Tensor c = latent;
    clip_latent_inplace(c);
    return c;
}

void clip_latent_inplace(Tensor& latent) {
    for (double& v : latent.values()) v = std::clamp(v, -1.0, 1.0);
}

}  // namespace rbamc
