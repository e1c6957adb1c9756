#include "rbamc/layers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "rbamc/errors.hpp"

namespace rbamc {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void check_conv_shapes(const Tensor& input, const ConvSpec& spec, const Tensor& weights) {
    if (input.rank() != 4 || input.dim(1) != spec.c_in)
        throw ShapeError("conv2d: input " + shape_str(input.shape()) + " does not match c_in=" +
                         std::to_string(spec.c_in));
    if (weights.shape() != spec.weight_shape())
        throw ShapeError("conv2d: weights " + shape_str(weights.shape()) + ", expected " +
                         shape_str(spec.weight_shape()));
    if (spec.stride_h == 0 || spec.stride_w == 0) throw ShapeError("conv2d: zero stride");
}

// Column buffer for one sample: rows (c, i, j), columns output positions.
void im2col(const double* x, std::size_t h, std::size_t w, const ConvSpec& spec, std::size_t oh, std::size_t ow,
            double* col) {
    const std::size_t positions = oh * ow;
    for (std::size_t c = 0; c < spec.c_in; ++c) {
        const double* plane = x + c * h * w;
        for (std::size_t i = 0; i < spec.k_h; ++i) {
            for (std::size_t j = 0; j < spec.k_w; ++j) {
                double* row = col + ((c * spec.k_h + i) * spec.k_w + j) * positions;
                for (std::size_t y = 0; y < oh; ++y) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * spec.stride_h + i) -
                                              static_cast<std::ptrdiff_t>(spec.pad_h);
                    double* out = row + y * ow;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                        std::fill_n(out, ow, 0.0);
                        continue;
                    }
                    const double* src = plane + static_cast<std::size_t>(iy) * w;
                    for (std::size_t xo = 0; xo < ow; ++xo) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xo * spec.stride_w + j) -
                                                  static_cast<std::ptrdiff_t>(spec.pad_w);
                        out[xo] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
}

void col2im(const double* col, std::size_t h, std::size_t w, const ConvSpec& spec, std::size_t oh, std::size_t ow,
            double* x) {
    const std::size_t positions = oh * ow;
    for (std::size_t c = 0; c < spec.c_in; ++c) {
        double* plane = x + c * h * w;
        for (std::size_t i = 0; i < spec.k_h; ++i) {
            for (std::size_t j = 0; j < spec.k_w; ++j) {
                const double* row = col + ((c * spec.k_h + i) * spec.k_w + j) * positions;
                for (std::size_t y = 0; y < oh; ++y) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * spec.stride_h + i) -
                                              static_cast<std::ptrdiff_t>(spec.pad_h);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    double* dst = plane + static_cast<std::size_t>(iy) * w;
                    const double* in = row + y * ow;
                    for (std::size_t xo = 0; xo < ow; ++xo) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xo * spec.stride_w + j) -
                                                  static_cast<std::ptrdiff_t>(spec.pad_w);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += in[xo];
                    }
                }
            }
        }
    }
}

}  // namespace

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    if (stride == 0) throw ShapeError("conv: zero stride");
    if (in + 2 * pad < k)
        throw ShapeError("conv: kernel " + std::to_string(k) + " larger than padded input " +
                         std::to_string(in + 2 * pad));
    return (in + 2 * pad - k) / stride + 1;
}

std::size_t ConvSpec::out_h(std::size_t in_h) const { return conv_out_extent(in_h, k_h, stride_h, pad_h); }
std::size_t ConvSpec::out_w(std::size_t in_w) const { return conv_out_extent(in_w, k_w, stride_w, pad_w); }

Tensor conv2d_forward(const Tensor& input, const ConvSpec& spec, const Tensor& weights) {
    check_conv_shapes(input, spec, weights);
    const std::size_t n = input.dim(0), h = input.dim(2), w = input.dim(3);
    const std::size_t oh = spec.out_h(h), ow = spec.out_w(w);
    const std::size_t kdim = spec.c_in * spec.k_h * spec.k_w;
    const std::size_t positions = oh * ow;

    Tensor out({n, spec.c_out, oh, ow});
    std::vector<double> col(kdim * positions);
    ConstMapMat wmat(weights.ptr(), static_cast<Eigen::Index>(spec.c_out), static_cast<Eigen::Index>(kdim));
    for (std::size_t s = 0; s < n; ++s) {
        im2col(input.ptr() + s * spec.c_in * h * w, h, w, spec, oh, ow, col.data());
        ConstMapMat cmat(col.data(), static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(positions));
        MapMat omat(out.ptr() + s * spec.c_out * positions, static_cast<Eigen::Index>(spec.c_out),
                    static_cast<Eigen::Index>(positions));
        omat.noalias() = wmat * cmat;
    }
    return out;
}

ConvGrads conv2d_backward(const Tensor& upstream, const Tensor& cached_input, const ConvSpec& spec,
                          const Tensor& weights, bool need_input_grad) {
    check_conv_shapes(cached_input, spec, weights);
    const std::size_t n = cached_input.dim(0), h = cached_input.dim(2), w = cached_input.dim(3);
    const std::size_t oh = spec.out_h(h), ow = spec.out_w(w);
    if (upstream.shape() != Shape{n, spec.c_out, oh, ow})
        throw ShapeError("conv2d_backward: upstream " + shape_str(upstream.shape()));
    const std::size_t kdim = spec.c_in * spec.k_h * spec.k_w;
    const std::size_t positions = oh * ow;

    ConvGrads g;
    g.weights = Tensor(spec.weight_shape());
    if (need_input_grad) g.input = Tensor(cached_input.shape());

    std::vector<double> col(kdim * positions);
    std::vector<double> gcol(need_input_grad ? kdim * positions : 0);
    ConstMapMat wmat(weights.ptr(), static_cast<Eigen::Index>(spec.c_out), static_cast<Eigen::Index>(kdim));
    MapMat gw(g.weights.ptr(), static_cast<Eigen::Index>(spec.c_out), static_cast<Eigen::Index>(kdim));
    for (std::size_t s = 0; s < n; ++s) {
        ConstMapMat up(upstream.ptr() + s * spec.c_out * positions, static_cast<Eigen::Index>(spec.c_out),
                       static_cast<Eigen::Index>(positions));
        im2col(cached_input.ptr() + s * spec.c_in * h * w, h, w, spec, oh, ow, col.data());
        ConstMapMat cmat(col.data(), static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(positions));
        gw.noalias() += up * cmat.transpose();
        if (need_input_grad) {
            MapMat gc(gcol.data(), static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(positions));
            gc.noalias() = wmat.transpose() * up;
            col2im(gcol.data(), h, w, spec, oh, ow, g.input.ptr() + s * spec.c_in * h * w);
        }
    }
    return g;
}

Tensor batchnorm_forward(const Tensor& input, BatchNormState& state, Mode mode, BatchNormCache* cache) {
    if (input.rank() != 4) throw ShapeError("batchnorm: rank-4 input required, got " + shape_str(input.shape()));
    const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
    if (c != state.channels())
        throw ShapeError("batchnorm: " + std::to_string(c) + " channels, state has " +
                         std::to_string(state.channels()));
    if (n == 0 || hw == 0) throw ShapeError("batchnorm: empty batch");

    Tensor out(input.shape());
    if (cache) {
        cache->xhat = Tensor(input.shape());
        cache->inv_std.assign(c, 0.0);
        cache->mode = mode;
    }
    const double count = static_cast<double>(n * hw);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double mean, var;
        if (mode == Mode::Train) {
            double sum = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                const double* p = input.ptr() + (s * c + ch) * hw;
                for (std::size_t i = 0; i < hw; ++i) sum += p[i];
            }
            mean = sum / count;
            double sq = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                const double* p = input.ptr() + (s * c + ch) * hw;
                for (std::size_t i = 0; i < hw; ++i) sq += (p[i] - mean) * (p[i] - mean);
            }
            var = sq / count;
            const double unbiased = count > 1.0 ? sq / (count - 1.0) : var;
            state.running_mean[ch] = (1.0 - state.momentum) * state.running_mean[ch] + state.momentum * mean;
            state.running_var[ch] = (1.0 - state.momentum) * state.running_var[ch] + state.momentum * unbiased;
        } else {
            mean = state.running_mean[ch];
            var = state.running_var[ch];
        }
        const double inv_std = 1.0 / std::sqrt(var + state.eps);
        const double gamma = state.gamma[ch], beta = state.beta[ch];
        for (std::size_t s = 0; s < n; ++s) {
            const std::size_t off = (s * c + ch) * hw;
            const double* p = input.ptr() + off;
            double* o = out.ptr() + off;
            double* xh = cache ? cache->xhat.ptr() + off : nullptr;
            for (std::size_t i = 0; i < hw; ++i) {
                const double z = (p[i] - mean) * inv_std;
                if (xh) xh[i] = z;
                o[i] = z * gamma + beta;
            }
        }
        if (cache) cache->inv_std[ch] = inv_std;
    }
    return out;
}

BatchNormGrads batchnorm_backward(const Tensor& upstream, const BatchNormCache& cache, const BatchNormState& state) {
    if (upstream.shape() != cache.xhat.shape()) throw ShapeError("batchnorm_backward: shape mismatch");
    const std::size_t n = upstream.dim(0), c = upstream.dim(1), hw = upstream.dim(2) * upstream.dim(3);
    const double count = static_cast<double>(n * hw);
    BatchNormGrads g{Tensor(upstream.shape()), std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
    for (std::size_t ch = 0; ch < c; ++ch) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            const double* dy = upstream.ptr() + (s * c + ch) * hw;
            const double* xh = cache.xhat.ptr() + (s * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
                sum_dy += dy[i];
                sum_dy_xhat += dy[i] * xh[i];
            }
        }
        g.beta[ch] = sum_dy;
        g.gamma[ch] = sum_dy_xhat;
        const double scale = state.gamma[ch] * cache.inv_std[ch];
        for (std::size_t s = 0; s < n; ++s) {
            const double* dy = upstream.ptr() + (s * c + ch) * hw;
            const double* xh = cache.xhat.ptr() + (s * c + ch) * hw;
            double* dx = g.input.ptr() + (s * c + ch) * hw;
            if (cache.mode == Mode::Train) {
                const double mean_dy = sum_dy / count, mean_dy_xhat = sum_dy_xhat / count;
                for (std::size_t i = 0; i < hw; ++i) dx[i] = scale * (dy[i] - mean_dy - xh[i] * mean_dy_xhat);
            } else {
                for (std::size_t i = 0; i < hw; ++i) dx[i] = scale * dy[i];
            }
        }
    }
    return g;
}

Tensor hardtanh(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.values()) v = std::clamp(v, -1.0, 1.0);
    return out;
}

Tensor hardtanh_backward(const Tensor& upstream, const Tensor& input) {
    if (upstream.shape() != input.shape()) throw ShapeError("hardtanh_backward: shape mismatch");
    Tensor g(input.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::abs(input[i]) < 1.0 ? upstream[i] : 0.0;
    return g;
}

Tensor avgpool_global(const Tensor& input) {
    if (input.rank() != 4) throw ShapeError("avgpool: rank-4 input required");
    const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
    if (hw == 0) throw ShapeError("avgpool: empty spatial extent");
    Tensor out({n, c, 1, 1});
    for (std::size_t i = 0; i < n * c; ++i) {
        const double* p = input.ptr() + i * hw;
        double s = 0.0;
        for (std::size_t j = 0; j < hw; ++j) s += p[j];
        out[i] = s / static_cast<double>(hw);
    }
    return out;
}

Tensor avgpool_global_backward(const Tensor& upstream, const Shape& input_shape) {
    const std::size_t n = input_shape.at(0), c = input_shape.at(1), hw = input_shape.at(2) * input_shape.at(3);
    if (upstream.size() != n * c) throw ShapeError("avgpool_backward: shape mismatch");
    Tensor g(input_shape);
    for (std::size_t i = 0; i < n * c; ++i) {
        const double v = upstream[i] / static_cast<double>(hw);
        std::fill_n(g.ptr() + i * hw, hw, v);
    }
    return g;
}

Tensor linear_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    const std::size_t k = weights.rows(), f = weights.cols();
    if (input.cols() != f || bias.size() != k)
        throw ShapeError("linear: input " + shape_str(input.shape()) + ", weights " + shape_str(weights.shape()));
    Tensor out = matmul(input, transpose(weights));
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t j = 0; j < k; ++j) out.at(r, j) += bias[j];
    return out;
}

LinearGrads linear_backward(const Tensor& upstream, const Tensor& input, const Tensor& weights) {
    if (upstream.rows() != input.rows() || upstream.cols() != weights.rows() || input.cols() != weights.cols())
        throw ShapeError("linear_backward: shape mismatch");
    LinearGrads g;
    g.input = matmul(upstream, weights);
    g.weights = matmul(transpose(upstream), input);
    g.bias = Tensor({weights.rows()});
    for (std::size_t r = 0; r < upstream.rows(); ++r)
        for (std::size_t j = 0; j < upstream.cols(); ++j) g.bias[j] += upstream.at(r, j);
    return g;
}

DropoutResult dropout(const Tensor& input, double rate, Rng& rng, Mode mode) {
    if (!(rate >= 0.0 && rate < 1.0)) throw DomainError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
    DropoutResult r{input, Tensor(input.shape(), 1.0)};
    if (mode == Mode::Infer || rate == 0.0) return r;
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double m = rng.uniform() < rate ? 0.0 : keep_scale;
        r.mask[i] = m;
        r.output[i] = input[i] * m;
    }
    return r;
}

Tensor dropout_backward(const Tensor& upstream, const Tensor& mask) {
    if (upstream.shape() != mask.shape()) throw ShapeError("dropout_backward: shape mismatch");
    Tensor g = upstream;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
    return g;
}

Tensor softmax(const Tensor& logits) {
    const std::size_t n = logits.rows(), k = logits.cols();
    Tensor p(logits.shape());
    for (std::size_t r = 0; r < n; ++r) {
        const double* z = logits.ptr() + r * k;
        double* out = p.ptr() + r * k;
        const double zmax = *std::max_element(z, z + k);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += (out[j] = std::exp(z[j] - zmax));
        for (std::size_t j = 0; j < k; ++j) out[j] /= sum;
    }
    return p;
}

XentResult softmax_xent(const Tensor& logits, std::span<const int> labels) {
    const std::size_t n = logits.rows(), k = logits.cols();
    if (labels.size() != n) throw ShapeError("softmax_xent: label count mismatch");
    if (n == 0) throw ShapeError("softmax_xent: empty batch");
    XentResult r;
    r.grad = softmax(logits);
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= k)
            throw DomainError("softmax_xent: label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
        const double* z = logits.ptr() + i * k;
        const double zmax = *std::max_element(z, z + k);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - zmax);
        r.loss += std::log(sum) - (z[y] - zmax);
        r.grad.at(i, static_cast<std::size_t>(y)) -= 1.0;
    }
    r.loss /= static_cast<double>(n);
    for (double& v : r.grad.values()) v /= static_cast<double>(n);
    return r;
}

}  // namespace rbamc
