#include "rbamc/rotation.hpp"

#include <cmath>
#include <tuple>

#include "rbamc/binary.hpp"
#include "rbamc/errors.hpp"

namespace rbamc {

RotationState RotationState::identity(std::size_t n) {
    RotationState s;
    std::tie(s.n1, s.n2) = split_sizes(n);
    s.R1 = Tensor::identity(s.n1);
    s.R2 = Tensor::identity(s.n2);
    return s;
}

double RotationState::alpha() const { return std::abs(std::sin(beta)); }

std::pair<std::size_t, std::size_t> split_sizes(std::size_t n) {
    if (n == 0) throw DomainError("split_sizes: n must be positive");
    // The balanced pair has the largest divisor not exceeding sqrt(n).
    std::size_t best = 1;
    for (std::size_t d = 1; d * d <= n; ++d)
        if (n % d == 0) best = d;
    return {best, n / best};
}

Tensor fold(std::span<const double> w, std::size_t n1, std::size_t n2) {
    if (w.size() != n1 * n2)
        throw ShapeError("fold: " + std::to_string(w.size()) + " weights into " + std::to_string(n1) + "x" +
                         std::to_string(n2));
    return Tensor({n1, n2}, std::vector<double>(w.begin(), w.end()));
}

double cos_phi(std::span<const double> w, std::span<const double> rotated) {
    if (w.size() != rotated.size()) throw ShapeError("cos_phi: length mismatch");
    const double norm = l2_norm(w);
    if (norm == 0.0) throw DomainError("cos_phi: zero weight vector");
    double abs_sum = 0.0;
    for (double v : rotated) abs_sum += std::abs(v);
    return abs_sum / (std::sqrt(static_cast<double>(w.size())) * norm);
}

Tensor procrustes_max(const Tensor& a) {
    const SvdResult d = svd(a);
    return matmul(d.U, transpose(d.V));
}

double rotation_objective(const Tensor& wb, const Tensor& r1, const Tensor& r2, const Tensor& wbar) {
    const Tensor m = matmul(matmul(transpose(r1), wbar), r2);
    if (m.shape() != wb.shape()) throw ShapeError("rotation_objective: shape mismatch");
    return dot(wb.data(), m.data());
}

Tensor step_wb(const Tensor& r1, const Tensor& r2, const Tensor& wbar) {
    return sign(matmul(matmul(transpose(r1), wbar), r2));
}

Tensor step_r1(const Tensor& wb, const Tensor& r2, const Tensor& wbar) {
    // tr(Wbᵀ R1ᵀ Wbar R2) = tr(R1ᵀ · Wbar R2 Wbᵀ)
    return procrustes_max(matmul(matmul(wbar, r2), transpose(wb)));
}

Tensor step_r2(const Tensor& wb, const Tensor& r1, const Tensor& wbar) {
    // tr(Wbᵀ R1ᵀ Wbar R2) = tr(R2ᵀ · Wbarᵀ R1 Wb)
    return procrustes_max(matmul(matmul(transpose(wbar), r1), wb));
}

RotationSolve learn_rotation(const Tensor& wbar, const RotationState& prev) {
    if (wbar.rows() != prev.n1 || wbar.cols() != prev.n2)
        throw ShapeError("learn_rotation: folded weights " + shape_str(wbar.shape()) + " vs split " +
                         std::to_string(prev.n1) + "x" + std::to_string(prev.n2));
    const double norm = l2_norm(wbar.data());
    if (norm == 0.0) throw DomainError("learn_rotation: zero weights");

    RotationSolve out;
    out.state = prev;
    RotationState& s = out.state;
    s.eta = 1.0 / (std::sqrt(static_cast<double>(wbar.size())) * norm);

    Tensor wb = step_wb(s.R1, s.R2, wbar);
    double obj = rotation_objective(wb, s.R1, s.R2, wbar);
    out.objective_trace.push_back(obj);
    out.cos_phi_start = s.eta * obj;

    auto accept = [&](double candidate) {
        if (candidate < obj) return false;
        obj = candidate;
        out.objective_trace.push_back(obj);
        return true;
    };

    for (int cycle = 0; cycle < kMaxRotationCycles; ++cycle) {
        const double cycle_start = obj;
        if (cycle > 0) {
            Tensor cand = step_wb(s.R1, s.R2, wbar);
            if (accept(rotation_objective(cand, s.R1, s.R2, wbar))) wb = std::move(cand);
        }
        Tensor r1 = step_r1(wb, s.R2, wbar);
        if (accept(rotation_objective(wb, r1, s.R2, wbar))) s.R1 = std::move(r1);
        Tensor r2 = step_r2(wb, s.R1, wbar);
        if (accept(rotation_objective(wb, s.R1, r2, wbar))) s.R2 = std::move(r2);
        out.cycles = cycle + 1;
        if (obj - cycle_start < kRotationRelTol * std::abs(cycle_start)) break;
    }

    const Tensor rotated = matmul(matmul(transpose(s.R1), wbar), s.R2);
    out.cos_phi_final = cos_phi(wbar.data(), rotated.data());
    std::size_t flips = 0;
    for (std::size_t i = 0; i < rotated.size(); ++i)
        if (sign_of(rotated[i]) != sign_of(wbar[i])) ++flips;
    out.flip_fraction = static_cast<double>(flips) / static_cast<double>(rotated.size());
    return out;
}

Tensor rotate_weights(const Tensor& w, const RotationState& state) {
    const Tensor wbar = fold(w.data(), state.n1, state.n2);
    Tensor r = matmul(matmul(transpose(state.R1), wbar), state.R2);
    r.reshape(w.shape());
    return r;
}

Tensor unrotate_weights(const Tensor& g, const RotationState& state) {
    const Tensor gbar = fold(g.data(), state.n1, state.n2);
    Tensor r = matmul(matmul(state.R1, gbar), transpose(state.R2));
    r.reshape(g.shape());
    return r;
}

Tensor adjusted_weights(const Tensor& w, const RotationState& state) {
    const double a = state.alpha();
    if (a == 0.0) {
        if (w.size() != state.size()) throw ShapeError("adjusted_weights: size mismatch");
        return w;
    }
    const Tensor r = rotate_weights(w, state);
    Tensor out = w;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = w[i] + (r[i] - w[i]) * a;
    return out;
}

Tensor adjusted_weights_backward(const Tensor& upstream, const RotationState& state) {
    const double a = state.alpha();
    if (a == 0.0) {
        if (upstream.size() != state.size()) throw ShapeError("adjusted_weights_backward: size mismatch");
        return upstream;
    }
    const Tensor r = unrotate_weights(upstream, state);
    Tensor out = upstream;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - a) * upstream[i] + a * r[i];
    return out;
}

double beta_grad(const Tensor& upstream, const Tensor& w, const RotationState& state) {
    if (upstream.size() != w.size()) throw ShapeError("beta_grad: size mismatch");
    const Tensor r = rotate_weights(w, state);
    double inner = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) inner += upstream[i] * (r[i] - w[i]);
    const double dalpha = (std::sin(state.beta) >= 0.0 ? 1.0 : -1.0) * std::cos(state.beta);
    return inner * dalpha;
}

}  // namespace rbamc
