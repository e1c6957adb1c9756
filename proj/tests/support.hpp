#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "rbamc/layers.hpp"
#include "rbamc/rng.hpp"
#include "rbamc/tensor.hpp"

namespace testing {

using rbamc::ConvSpec;
using rbamc::Rng;
using rbamc::Shape;
using rbamc::Tensor;

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

inline Tensor random_signs(const Shape& shape, Rng& rng) {
    Tensor t(shape);
    for (double& v : t.values()) v = rng.below(2) ? 1.0 : -1.0;
    return t;
}

inline Tensor random_normal(const Shape& shape, Rng& rng) {
    Tensor t(shape);
    for (double& v : t.values()) v = rng.normal();
    return t;
}

/// Plain nested-loop cross-correlation with zero padding.
inline Tensor naive_conv(const Tensor& x, const ConvSpec& s, const Tensor& w) {
    const std::size_t n = x.dim(0), h = x.dim(2), wd = x.dim(3);
    const std::size_t oh = (h + 2 * s.pad_h - s.k_h) / s.stride_h + 1;
    const std::size_t ow = (wd + 2 * s.pad_w - s.k_w) / s.stride_w + 1;
    Tensor out({n, s.c_out, oh, ow});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t co = 0; co < s.c_out; ++co)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xo = 0; xo < ow; ++xo) {
                    double acc = 0.0;
                    for (std::size_t ci = 0; ci < s.c_in; ++ci)
                        for (std::size_t i = 0; i < s.k_h; ++i)
                            for (std::size_t j = 0; j < s.k_w; ++j) {
                                const long iy = static_cast<long>(y * s.stride_h + i) - static_cast<long>(s.pad_h);
                                const long ix = static_cast<long>(xo * s.stride_w + j) - static_cast<long>(s.pad_w);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd))
                                    continue;
                                acc += x[((b * s.c_in + ci) * h + iy) * wd + ix] *
                                       w[((co * s.c_in + ci) * s.k_h + i) * s.k_w + j];
                            }
                    out[((b * s.c_out + co) * oh + y) * ow + xo] = acc;
                }
    return out;
}

/// Central difference of f at every entry of x.
inline Tensor numeric_grad(Tensor& x, const std::function<double()>& f, double h = 1e-5) {
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f();
        x[i] = keep - h;
        const double down = f();
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// |a − b| / max(|a|, |b|, floor).
inline double rel_err(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_err(const Tensor& a, const Tensor& b, double floor = 1e-6) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, rel_err(a[i], b[i], floor));
    return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// Haar-ish random orthogonal matrix: modified Gram-Schmidt on a Gaussian matrix.
inline Tensor random_orthogonal(std::size_t n, Rng& rng) {
    Tensor q = random_normal({n, n}, rng);
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t p = 0; p < c; ++p) {
            double d = 0.0;
            for (std::size_t r = 0; r < n; ++r) d += q.at(r, c) * q.at(r, p);
            for (std::size_t r = 0; r < n; ++r) q.at(r, c) -= d * q.at(r, p);
        }
        double norm = 0.0;
        for (std::size_t r = 0; r < n; ++r) norm += q.at(r, c) * q.at(r, c);
        norm = std::sqrt(norm);
        for (std::size_t r = 0; r < n; ++r) q.at(r, c) /= norm;
    }
    return q;
}

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    Tensor c({a.dim(0), b.dim(1)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < b.dim(1); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.dim(1); ++k) s += a.at(i, k) * b.at(k, j);
            c.at(i, j) = s;
        }
    return c;
}

}  // namespace testing
