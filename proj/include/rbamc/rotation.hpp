#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "rbamc/tensor.hpp"

namespace rbamc {

/// Kronecker-factored rotation of one binarized layer. The full rotation is
/// R = R1 ⊗ R2 acting on the flattened weight vector; it is never formed.
struct RotationState {
    std::size_t n1 = 0;
    std::size_t n2 = 0;
    Tensor R1;          // n1 x n1
    Tensor R2;          // n2 x n2
    double beta = 0.0;  // blend weight is |sin(beta)|
    double eta = 0.0;   // 1 / (sqrt(n) · ||w||), refreshed at each solve

    /// Identity rotations with the balanced split of n.
    static RotationState identity(std::size_t n);

    std::size_t size() const { return n1 * n2; }
    double alpha() const;
};

/// Most balanced factor pair (n1 <= n2, n1·n2 = n).
std::pair<std::size_t, std::size_t> split_sizes(std::size_t n);

/// Row-major fold of a flattened weight vector into an n1 x n2 matrix, and back.
Tensor fold(std::span<const double> w, std::size_t n1, std::size_t n2);

/// (Σ|rotated_i|) / (sqrt(n)·||w||): cosine between a rotated weight vector
/// and its sign vector. `rotated` must be an orthogonal image of `w`.
double cos_phi(std::span<const double> w, std::span<const double> rotated);

/// Orthogonal R maximizing tr(RᵀA): U·Vᵀ for A = U·S·Vᵀ.
Tensor procrustes_max(const Tensor& a);

/// tr(Wbᵀ·R1ᵀ·Wbar·R2).
double rotation_objective(const Tensor& wb, const Tensor& r1, const Tensor& r2, const Tensor& wbar);

Tensor step_wb(const Tensor& r1, const Tensor& r2, const Tensor& wbar);
Tensor step_r1(const Tensor& wb, const Tensor& r2, const Tensor& wbar);
Tensor step_r2(const Tensor& wb, const Tensor& r1, const Tensor& wbar);

struct RotationSolve {
    RotationState state;
    std::vector<double> objective_trace;  // after every accepted step
    int cycles = 0;
    double cos_phi_start = 0.0;  // warm-start rotation
    double cos_phi_final = 0.0;
    double flip_fraction = 0.0;  // sign disagreements between R1ᵀ·Wbar·R2 and Wbar
};

inline constexpr int kMaxRotationCycles = 3;
inline constexpr double kRotationRelTol = 1e-7;

/// Alternating maximization Wb -> R1 -> R2 for at most kMaxRotationCycles
/// cycles, warm-started from `prev`. A step whose result would lower the
/// objective (rounding only) is rejected, so the trace is non-decreasing.
/// `prev.beta` is carried over unchanged.
RotationSolve learn_rotation(const Tensor& wbar, const RotationState& prev);

/// flatten(R1ᵀ·fold(w)·R2) = Rᵀw.
Tensor rotate_weights(const Tensor& w, const RotationState& state);
/// flatten(R1·fold(g)·R2ᵀ) = R·g, the adjoint of rotate_weights.
Tensor unrotate_weights(const Tensor& g, const RotationState& state);

/// w + (Rᵀw − w)·|sin β|; keeps the shape of w.
Tensor adjusted_weights(const Tensor& w, const RotationState& state);

/// Gradient w.r.t. w given the gradient w.r.t. the adjusted weights.
Tensor adjusted_weights_backward(const Tensor& upstream, const RotationState& state);

/// ⟨upstream, Rᵀw − w⟩ · d|sin β|/dβ, with the derivative at sin β = 0 taken as cos β.
double beta_grad(const Tensor& upstream, const Tensor& w, const RotationState& state);

}  // namespace rbamc
