#pragma once

// Factor updates for min ||V - WH||_F^2 over W >= 0 or H >= 0 with the other
// two matrices held fixed, and the masked-gradient (KKT) stopping measure.
//
// Both update families work on the generic subproblem
//
//     min_{F >= 0}  tr(F' F G) - 2 tr(F' C)
//
// where for the W-step F = W, C = V H', G = H H' and for the H-step
// F = H', C = V' W, G = W' W.

#include "aggnmf/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace aggnmf {

enum class UpdateMethod { hals, nesterov };

inline const char* to_string(UpdateMethod m) {
    return m == UpdateMethod::hals ? "hals" : "nesterov";
}

inline UpdateMethod parse_update_method(const std::string& s) {
    if (s == "hals") return UpdateMethod::hals;
    if (s == "nesterov") return UpdateMethod::nesterov;
    throw ParameterError("unknown update method '" + s + "' (expected hals or nesterov)");
}

/// Result of one factor update. `degenerate` lists the rank-one components
/// that could not be updated because their Gram diagonal vanished.
struct FactorUpdate {
    Matrix factor;
    std::vector<Index> degenerate;
};

struct StopState {
    double kkt_w = 0.0;
    double kkt_h = 0.0;
    double objective = 0.0;
    int iteration = 0;

    double kkt() const { return kkt_w + kkt_h; }
};

inline double objective(const Matrix& v, const Matrix& w, const Matrix& h) {
    return (v - w * h).squaredNorm();
}

namespace detail {

inline void check_factor_shapes(const Matrix& w, const Matrix& h, const Matrix& v, const char* what) {
    if (w.cols() != h.rows() || w.rows() != v.rows() || h.cols() != v.cols()) {
        throw DimensionError(std::string(what) + ": inconsistent shapes W" + shape_str(w.rows(), w.cols()) +
                             " H" + shape_str(h.rows(), h.cols()) + " V" + shape_str(v.rows(), v.cols()));
    }
}

/// tr(F' F G) - 2 tr(F' C), i.e. the objective up to the constant ||V||^2.
inline double reduced_objective(const Matrix& f, const Matrix& cross, const Matrix& gram) {
    return (f * gram).cwiseProduct(f).sum() - 2.0 * f.cwiseProduct(cross).sum();
}

/// One Gauss-Seidel sweep over the columns of F.
inline std::vector<Index> hals_sweep(Matrix& f, const Matrix& cross, const Matrix& gram) {
    std::vector<Index> degenerate;
    for (Index k = 0; k < f.cols(); ++k) {
        const double g = gram(k, k);
        if (!(g > 0.0)) {
            degenerate.push_back(k);
            continue;
        }
        Vector step = (cross.col(k) - f * gram.col(k)) / g;
        f.col(k) = (f.col(k) + step).cwiseMax(0.0);
    }
    return degenerate;
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration from the all-ones vector.
inline double largest_eigenvalue(const Matrix& gram, int max_iters = 1000) {
    const Index k = gram.rows();
    if (k == 0) return 0.0;
    Vector x = Vector::Ones(k) / std::sqrt(static_cast<double>(k));
    double lambda = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        Vector y = gram * x;
        const double norm = y.norm();
        if (norm == 0.0) return 0.0;
        const double next = x.dot(y);
        x = y / norm;
        if (std::abs(next - lambda) <= 1e-15 * std::abs(next)) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // The Rayleigh quotient approaches from below; ||G x|| bounds it from above.
    return std::max(lambda, (gram * x).norm());
}

/// Accelerated projected gradient with step 1/L and a monotone safeguard.
inline std::vector<Index> nesterov_solve(Matrix& f, const Matrix& cross, const Matrix& gram, int inner_iters) {
    const double lipschitz = largest_eigenvalue(gram);
    if (!(lipschitz > 0.0)) {
        std::vector<Index> all(static_cast<std::size_t>(f.cols()));
        for (Index k = 0; k < f.cols(); ++k) all[static_cast<std::size_t>(k)] = k;
        return all;
    }
    const double step = 1.0 / lipschitz;
    Matrix current = f;
    Matrix y = f;
    double alpha = 1.0;
    double value = reduced_objective(current, cross, gram);
    for (int it = 0; it < inner_iters; ++it) {
        Matrix next = (y - step * (y * gram - cross)).cwiseMax(0.0);
        double next_value = reduced_objective(next, cross, gram);
        if (next_value > value) {
            // momentum overshot: restart from a plain projected-gradient step
            next = (current - step * (current * gram - cross)).cwiseMax(0.0);
            next_value = reduced_objective(next, cross, gram);
            alpha = 1.0;
            if (next_value > value) break;
        }
        const double alpha_next = 0.5 * (1.0 + std::sqrt(4.0 * alpha * alpha + 1.0));
        y = next + ((alpha - 1.0) / alpha_next) * (next - current);
        current = std::move(next);
        value = next_value;
        alpha = alpha_next;
    }
    f = std::move(current);
    return {};
}

}  // namespace detail

/// One HALS sweep over the columns of W:
/// w_k <- max(0, w_k + ((V H')_k - W (H H')_k) / (H H')_kk).
inline FactorUpdate update_w_hals(const Matrix& w, const Matrix& h, const Matrix& v) {
    detail::check_factor_shapes(w, h, v, "update_w_hals");
    FactorUpdate out{w, {}};
    out.degenerate = detail::hals_sweep(out.factor, v * h.transpose(), h * h.transpose());
    return out;
}

/// One HALS sweep over the rows of H.
inline FactorUpdate update_h_hals(const Matrix& w, const Matrix& h, const Matrix& v) {
    detail::check_factor_shapes(w, h, v, "update_h_hals");
    Matrix ht = h.transpose();
    auto degenerate = detail::hals_sweep(ht, v.transpose() * w, w.transpose() * w);
    return FactorUpdate{ht.transpose(), std::move(degenerate)};
}

/// NeNMF-style accelerated projected gradient on W, `inner_iters` steps.
/// When H is zero (L = 0) W is returned unchanged and every component is
/// reported degenerate.
inline FactorUpdate update_w_nesterov(const Matrix& w, const Matrix& h, const Matrix& v, int inner_iters = 5) {
    detail::check_factor_shapes(w, h, v, "update_w_nesterov");
    FactorUpdate out{w, {}};
    out.degenerate = detail::nesterov_solve(out.factor, v * h.transpose(), h * h.transpose(), inner_iters);
    return out;
}

inline FactorUpdate update_h_nesterov(const Matrix& w, const Matrix& h, const Matrix& v, int inner_iters = 5) {
    detail::check_factor_shapes(w, h, v, "update_h_nesterov");
    Matrix ht = h.transpose();
    auto degenerate = detail::nesterov_solve(ht, v.transpose() * w, w.transpose() * w, inner_iters);
    return FactorUpdate{ht.transpose(), std::move(degenerate)};
}

/// ||R(W)||_F^2 and ||R(H)||_F^2 with
/// R(W) = |(WH - V) H'| masked to W != 0 and R(H) = |W' (WH - V)| masked to H != 0.
inline StopState kkt_residual(const Matrix& w, const Matrix& h, const Matrix& v) {
    detail::check_factor_shapes(w, h, v, "kkt_residual");
    const Matrix residual = w * h - v;
    const Matrix grad_w = residual * h.transpose();
    const Matrix grad_h = w.transpose() * residual;
    StopState s;
    s.kkt_w = (w.array() != 0.0).select(grad_w.array().square(), 0.0).sum();
    s.kkt_h = (h.array() != 0.0).select(grad_h.array().square(), 0.0).sum();
    s.objective = residual.squaredNorm();
    return s;
}

}  // namespace aggnmf
