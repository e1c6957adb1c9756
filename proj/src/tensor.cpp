#include "rbamc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "rbamc/errors.hpp"

namespace rbamc {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size())
        throw ShapeError("tensor: shape " + shape_str(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " values");
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

Tensor Tensor::diag(std::span<const double> values) {
    const std::size_t n = values.size();
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = values[i];
    return t;
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ShapeError("expected a matrix, got " + shape_str(shape_));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError("expected a matrix, got " + shape_str(shape_));
    return shape_[1];
}

Tensor Tensor::reshaped(Shape shape) const {
    Tensor t = *this;
    t.reshape(std::move(shape));
    return t;
}

void Tensor::reshape(Shape shape) {
    if (shape_size(shape) != data_.size())
        throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(shape));
    shape_ = std::move(shape);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Tensor c({m, n});
    const double* pa = a.ptr();
    const double* pb = b.ptr();
    double* pc = c.ptr();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = pc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            if (av == 0.0) continue;
            const double* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Tensor transpose(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Tensor t({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

Tensor kron(const Tensor& a, const Tensor& b) {
    const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
    Tensor k({ar * br, ac * bc});
    for (std::size_t i = 0; i < ar; ++i)
        for (std::size_t j = 0; j < ac; ++j)
            for (std::size_t p = 0; p < br; ++p)
                for (std::size_t q = 0; q < bc; ++q)
                    k.at(i * br + p, j * bc + q) = a.at(i, j) * b.at(p, q);
    return k;
}

double trace(const Tensor& a) {
    if (a.rows() != a.cols()) throw ShapeError("trace: non-square " + shape_str(a.shape()));
    double t = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) t += a.at(i, i);
    return t;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double frobenius_norm(const Tensor& a) { return l2_norm(a.data()); }

Tensor subtract(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("subtract: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
    return c;
}

double orthogonality_error(const Tensor& q) {
    Tensor g = matmul(transpose(q), q);
    for (std::size_t i = 0; i < g.rows(); ++i) g.at(i, i) -= 1.0;
    return frobenius_norm(g);
}

namespace {

// Rotate rows p and q of an n-wide row-major block.
inline void rotate_rows(double* rp, double* rq, std::size_t n, double c, double s) {
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rp[i], y = rq[i];
        rp[i] = c * x - s * y;
        rq[i] = s * x + c * y;
    }
}

// Fills rows of `basis` flagged in `missing` so that all rows are orthonormal.
void complete_orthonormal_rows(Tensor& basis, const std::vector<bool>& missing) {
    const std::size_t n = basis.rows();
    std::size_t candidate = 0;
    for (std::size_t r = 0; r < n; ++r) {
        if (!missing[r]) continue;
        for (; candidate < n; ++candidate) {
            std::vector<double> v(n, 0.0);
            v[candidate] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t o = 0; o < n; ++o) {
                    if (o == r || (missing[o] && o > r)) continue;
                    const double* row = basis.ptr() + o * n;
                    double proj = 0.0;
                    for (std::size_t i = 0; i < n; ++i) proj += row[i] * v[i];
                    for (std::size_t i = 0; i < n; ++i) v[i] -= proj * row[i];
                }
            }
            const double norm = l2_norm(v);
            if (norm > 1e-6) {
                double* row = basis.ptr() + r * n;
                for (std::size_t i = 0; i < n; ++i) row[i] = v[i] / norm;
                ++candidate;
                break;
            }
        }
    }
}

}  // namespace

SvdResult svd(const Tensor& a, int max_sweeps) {
    const std::size_t n = a.rows();
    if (a.cols() != n) throw ShapeError("svd: square matrix required, got " + shape_str(a.shape()));
    if (!a.all_finite()) throw NumericError("svd: non-finite input");

    // Row j of `work` is column j of A; row j of `vt` is column j of V.
    Tensor work = transpose(a);
    Tensor vt = Tensor::identity(n);
    const double tol = std::max(1e-14, 4.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(n));
    const double fro = frobenius_norm(a);
    const double negligible = std::numeric_limits<double>::epsilon() * fro * std::numeric_limits<double>::epsilon() * fro;

    int sweep = 0;
    for (;; ++sweep) {
        if (sweep >= max_sweeps)
            throw NumericError("svd: no convergence after " + std::to_string(max_sweeps) + " sweeps");
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double* cp = work.ptr() + p * n;
                double* cq = work.ptr() + q * n;
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    alpha += cp[i] * cp[i];
                    beta += cq[i] * cq[i];
                    gamma += cp[i] * cq[i];
                }
                if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                if (std::min(alpha, beta) <= negligible) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate_rows(cp, cq, n, c, s);
                rotate_rows(vt.ptr() + p * n, vt.ptr() + q * n, n, c, s);
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) sigma[j] = l2_norm({work.ptr() + j * n, n});

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    const double smax = n ? sigma[order[0]] : 0.0;
    const double zero_tol = std::max(smax, 1.0) * 1e-13;
    Tensor ut({n, n});
    Tensor vt_sorted({n, n});
    std::vector<bool> missing(n, false);
    SvdResult out;
    out.S.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t j = order[r];
        out.S[r] = sigma[j];
        std::copy_n(vt.ptr() + j * n, n, vt_sorted.ptr() + r * n);
        if (sigma[j] > zero_tol) {
            for (std::size_t i = 0; i < n; ++i) ut.ptr()[r * n + i] = work.ptr()[j * n + i] / sigma[j];
        } else {
            missing[r] = true;
        }
    }
    complete_orthonormal_rows(ut, missing);
    out.U = transpose(ut);
    out.V = transpose(vt_sorted);
    return out;
}

}  // namespace rbamc
