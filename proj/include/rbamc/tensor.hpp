#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace rbamc {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of doubles. Value type; copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
    static Tensor identity(std::size_t n);
    static Tensor diag(std::span<const double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    double* ptr() noexcept { return data_.data(); }
    const double* ptr() const noexcept { return data_.data(); }
    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-D element access; requires rank 2.
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    std::size_t rows() const;
    std::size_t cols() const;

    /// Same data, new shape of equal element count.
    Tensor reshaped(Shape shape) const;
    void reshape(Shape shape);

    void fill(double v);
    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

struct SvdResult {
    Tensor U;               // n x n, orthogonal
    std::vector<double> S;  // nonincreasing, nonnegative
    Tensor V;               // n x n, orthogonal
};

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor kron(const Tensor& a, const Tensor& b);
double trace(const Tensor& a);
double l2_norm(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);
double frobenius_norm(const Tensor& a);

/// a - b, element-wise; shapes must match.
Tensor subtract(const Tensor& a, const Tensor& b);

/// One-sided Jacobi SVD of a square matrix.
SvdResult svd(const Tensor& a, int max_sweeps = 100);

/// Frobenius norm of (QᵀQ − I).
double orthogonality_error(const Tensor& q);

}  // namespace rbamc
