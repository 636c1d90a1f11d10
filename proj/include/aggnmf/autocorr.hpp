#pragma once

// Lag-one autocorrelation penalty.
//
// For a series x of length T and a threshold rho, the constraint
//     sum_t x_{t+1} x_t >= rho * sum_t x_t^2
// is the quadratic form x' D_rho x >= 0 with D_rho = L + L' - 2 rho I, L the
// lag (superdiagonal shift) matrix. D_rho is symmetric tridiagonal with
// eigenvalues 2 cos(t pi / (T+1)) - 2 rho and the discrete sine basis as
// eigenvectors.

#include "aggnmf/measurement.hpp"
#include "aggnmf/types.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace aggnmf {

namespace detail {

inline void check_rho(double rho) {
    if (!(rho >= -1.0 && rho <= 1.0)) {
        throw ParameterError("autocorrelation threshold must lie in [-1, 1], got " + std::to_string(rho));
    }
}

}  // namespace detail

/// Eigenvalues of D_rho in decreasing order.
inline Vector delta_rho_eigenvalues(Index periods, double rho) {
    if (periods < 1) throw ParameterError("delta_rho_eigenvalues: T must be >= 1");
    detail::check_rho(rho);
    Vector delta(periods);
    const double denom = static_cast<double>(periods + 1);
    for (Index t = 1; t <= periods; ++t) {
        delta(t - 1) = 2.0 * std::cos(static_cast<double>(t) * std::numbers::pi / denom) - 2.0 * rho;
    }
    return delta;
}

/// Largest eigenvalue of D_rho.
inline double largest_delta(Index periods, double rho) {
    return 2.0 * std::cos(std::numbers::pi / static_cast<double>(periods + 1)) - 2.0 * rho;
}

/// Explicit dense D_rho, for checks and small problems.
inline Matrix delta_rho_matrix(Index periods, double rho) {
    Matrix m = Matrix::Zero(periods, periods);
    m.diagonal().setConstant(-2.0 * rho);
    for (Index t = 0; t + 1 < periods; ++t) {
        m(t, t + 1) = 1.0;
        m(t + 1, t) = 1.0;
    }
    return m;
}

/// x' D_rho x = 2 sum_t x_{t+1} x_t - 2 rho ||x||^2. The constraint holds
/// when the value is >= 0.
inline double autocorr_value(const Eigen::Ref<const Vector>& x, double rho) {
    const Index n = x.size();
    double lagged = 0.0;
    for (Index t = 0; t + 1 < n; ++t) lagged += x(t + 1) * x(t);
    return 2.0 * lagged - 2.0 * rho * x.squaredNorm();
}

/// True when I - lambda D_rho is positive definite: lambda >= 0 and, if the
/// largest eigenvalue delta_1 is positive, lambda < 1 / delta_1.
inline bool lambda_admissible(double lambda, double rho, Index periods) {
    if (!(lambda >= 0.0)) return false;
    const double d1 = largest_delta(periods, rho);
    return d1 <= 0.0 || lambda * d1 < 1.0;
}

/// Solves (I - lambda D_rho) x = rhs with the Thomas algorithm, O(T).
inline Vector solve_shifted(double lambda, double rho, const Eigen::Ref<const Vector>& rhs) {
    const Index n = rhs.size();
    detail::check_rho(rho);
    if (!lambda_admissible(lambda, rho, n)) {
        throw ParameterError("lambda = " + std::to_string(lambda) + " is not admissible for rho = " +
                             std::to_string(rho) + ", T = " + std::to_string(n) +
                             ": need 0 <= lambda < 1/delta_1 = " + std::to_string(1.0 / largest_delta(n, rho)));
    }
    if (n == 0) return Vector();
    if (lambda == 0.0) return rhs;
    const double diag = 1.0 + 2.0 * lambda * rho;
    const double off = -lambda;
    Vector c_prime(n);
    Vector x(n);
    double pivot = diag;
    c_prime(0) = off / pivot;
    x(0) = rhs(0) / pivot;
    for (Index i = 1; i < n; ++i) {
        pivot = diag - off * c_prime(i - 1);
        c_prime(i) = off / pivot;
        x(i) = (rhs(i) - off * x(i - 1)) / pivot;
    }
    for (Index i = n - 2; i >= 0; --i) x(i) -= c_prime(i) * x(i + 1);
    return x;
}

/// lambda = min(1, 1 / (2 max_n delta_{rho_n,1})), the max running over the
/// columns whose D_rho has a positive eigenvalue.
inline double lambda_heuristic(std::span<const double> rho, Index periods) {
    double max_delta = 0.0;
    for (double r : rho) {
        detail::check_rho(r);
        max_delta = std::max(max_delta, largest_delta(periods, r));
    }
    if (!(max_delta > 0.0)) {
        throw ParameterError(
            "lambda heuristic: no column admits the autocorrelation penalty (every delta_1 <= 0); "
            "use lambda = 0 (unpenalized recovery)");
    }
    return std::min(1.0, 1.0 / (2.0 * max_delta));
}

enum class ProjectorStorage {
    dense,     ///< M stored as a T x T matrix
    factored,  ///< M x0 recomputed from one tridiagonal solve and a T x d_n matrix
};

/// Precomputed closed-form minimizer of
///     ||x - x0||^2 - lambda x' D_rho x   subject to   A_n x = c_n,
/// which is Q c + (I - Q A)(I - lambda D_rho)^{-1} x0 with
/// Q = S A' (A S A')^{-1} and S = (I - lambda D_rho)^{-1}.
struct ColumnProjector {
    Index column = 0;
    double lambda = 0.0;
    double rho = 0.0;
    Index active_dims = 0;
    ProjectorStorage storage = ProjectorStorage::dense;
    Vector qc;           ///< Q c
    Matrix m;            ///< (I - Q A) S, dense storage only
    Matrix q;            ///< Q (T x d), factored storage only
    std::vector<Segment> segments;

    Index periods() const { return qc.size(); }
};

/// Builds the projector for one column from its segments (all with
/// `column` equal to the projector column) and observed sums c.
inline ColumnProjector build_column_projector(Index periods, std::span<const Segment> segments,
                                              const Eigen::Ref<const Vector>& c, double lambda, double rho,
                                              ProjectorStorage storage = ProjectorStorage::dense) {
    const auto d = static_cast<Index>(segments.size());
    if (c.size() != d) {
        throw DimensionError("build_column_projector: " + std::to_string(c.size()) + " sums for " +
                             std::to_string(d) + " segments");
    }
    detail::check_rho(rho);
    if (!lambda_admissible(lambda, rho, periods)) {
        throw ParameterError("build_column_projector: lambda = " + std::to_string(lambda) +
                             " violates lambda < 1/delta_1 = " + std::to_string(1.0 / largest_delta(periods, rho)));
    }
    ColumnProjector p;
    p.column = d > 0 ? segments.front().column : 0;
    p.lambda = lambda;
    p.rho = rho;
    p.active_dims = d;
    p.storage = storage;
    p.segments.assign(segments.begin(), segments.end());

    // Z = S A'
    Matrix z = Matrix::Zero(periods, d);
    for (Index j = 0; j < d; ++j) {
        const Segment& s = segments[static_cast<std::size_t>(j)];
        if (s.start < 0 || s.end() > periods) throw ParameterError("build_column_projector: segment out of bounds");
        Vector indicator = Vector::Zero(periods);
        indicator.segment(s.start, s.length).setOnes();
        z.col(j) = solve_shifted(lambda, rho, indicator);
    }
    Matrix q(periods, d);
    if (d > 0) {
        Matrix gram(d, d);  // A S A'
        for (Index j = 0; j < d; ++j) {
            const Segment& s = segments[static_cast<std::size_t>(j)];
            gram.row(j) = z.middleRows(s.start, s.length).colwise().sum();
        }
        Eigen::LLT<Matrix> llt(gram);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("build_column_projector: singular measurement Gram matrix for column " +
                                 std::to_string(p.column + 1) + " (segments must be disjoint)");
        }
        q = llt.solve(z.transpose()).transpose();
        p.qc = q * c;
    } else {
        p.qc = Vector::Zero(periods);
    }

    if (storage == ProjectorStorage::dense) {
        Matrix s(periods, periods);
        for (Index j = 0; j < periods; ++j) s.col(j) = solve_shifted(lambda, rho, Vector::Unit(periods, j));
        // A S = (S A')' = Z' since S is symmetric
        p.m = s - q * z.transpose();
    } else {
        p.q = std::move(q);
    }
    return p;
}

/// Q c + (I - Q A) S x0.
inline Vector penalized_project_column(const ColumnProjector& p, const Eigen::Ref<const Vector>& x0) {
    if (x0.size() != p.periods()) {
        throw DimensionError("penalized_project_column: x0 has length " + std::to_string(x0.size()) +
                             ", projector expects " + std::to_string(p.periods()));
    }
    if (p.storage == ProjectorStorage::dense) return p.qc + p.m * x0;
    Vector sx = solve_shifted(p.lambda, p.rho, x0);
    Vector asx(p.active_dims);
    for (Index j = 0; j < p.active_dims; ++j) {
        const Segment& s = p.segments[static_cast<std::size_t>(j)];
        asx(j) = sx.segment(s.start, s.length).sum();
    }
    return p.qc + sx - p.q * asx;
}

/// Euclidean projection onto {A_n x = c}: each segment is shifted by its
/// mean residual. This is the lambda = 0 projector in O(T).
inline Vector affine_project_column(std::span<const Segment> segments, const Eigen::Ref<const Vector>& c,
                                    const Eigen::Ref<const Vector>& x0) {
    Vector x = x0;
    for (std::size_t j = 0; j < segments.size(); ++j) {
        const Segment& s = segments[j];
        auto block = x.segment(s.start, s.length);
        block.array() += (c(static_cast<Index>(j)) - block.sum()) / static_cast<double>(s.length);
    }
    return x;
}

/// Orthonormal eigenvectors of D_rho: U(t, k) = sqrt(2/(T+1)) sin((t+1)(k+1) pi / (T+1)),
/// column k matching the k-th eigenvalue in decreasing order. U is symmetric.
inline Matrix sine_basis(Index periods) {
    Matrix u(periods, periods);
    const double denom = static_cast<double>(periods + 1);
    const double scale = std::sqrt(2.0 / denom);
    for (Index t = 0; t < periods; ++t) {
        for (Index k = 0; k < periods; ++k) {
            u(t, k) = scale * std::sin(static_cast<double>((t + 1) * (k + 1)) * std::numbers::pi / denom);
        }
    }
    return u;
}

struct QcqpSolution {
    Vector x;
    double lambda = 0.0;
    bool perturbed = false;  ///< a zero eigen-coordinate of x0 was nudged
};

/// Exact solution of min ||x - x0||^2 s.t. x' D_rho x >= 0 through its
/// hidden-convex relaxation: x* = (I - lambda D_rho)^{-1} x0 where lambda in
/// (0, 1/delta_1) is the root of sum_t delta_t z0_t^2 / (2 (1 - lambda delta_t)^2),
/// z0 = U x0. Exhaustive and O(T^2): meant for verification, not the main loop.
///
/// The root is bracketed in mu = 1 - lambda delta_1 in (0, 1), which keeps full
/// relative precision when lambda sits close to 1/delta_1.
inline QcqpSolution qcqp_oracle(const Eigen::Ref<const Vector>& x0, double rho) {
    detail::check_rho(rho);
    const Index n = x0.size();
    QcqpSolution out;
    if (autocorr_value(x0, rho) >= 0.0) {
        out.x = x0;
        return out;
    }
    const Vector delta = delta_rho_eigenvalues(n, rho);
    const double d1 = delta(0);
    if (!(d1 > 0.0)) {
        throw ParameterError("qcqp_oracle: D_rho has no positive eigenvalue (rho = " + std::to_string(rho) +
                             ", T = " + std::to_string(n) + ")");
    }
    const Matrix u = sine_basis(n);
    Vector z0 = u * x0;
    const double z_norm = z0.norm();
    for (Index t = 0; t < n; ++t) {
        if (std::abs(z0(t)) <= 1e-14 * z_norm) {
            z0(t) += 1e-12 * z_norm;
            out.perturbed = true;
        }
    }
    // mu_t(s) = 1 - lambda delta_t with lambda = (1 - s)/delta_1
    Vector base(n);
    Vector slope(n);
    for (Index t = 0; t < n; ++t) {
        base(t) = (d1 - delta(t)) / d1;
        slope(t) = delta(t) / d1;
    }
    base(0) = 0.0;
    slope(0) = 1.0;
    auto mu = [&](double s) { return (base.array() + s * slope.array()).matrix(); };
    auto root_fn = [&](double s) {
        const Vector m = mu(s);
        return (delta.array() * z0.array().square() / (2.0 * m.array().square())).sum();
    };

    double lo = 0.0;  // root_fn -> +inf
    double hi = 1.0;  // root_fn(1) = x0' D x0 / 2 < 0
    if (!(root_fn(hi) < 0.0)) {
        throw NumericalError("qcqp_oracle: root function is not negative at lambda = 0 (value " +
                             std::to_string(root_fn(hi)) + ")");
    }
    for (int it = 0; it < 5000; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (root_fn(mid) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double s = 0.5 * (lo + hi);
    if (!(s > 0.0)) throw NumericalError("qcqp_oracle: no sign change found in (0, 1/delta_1)");
    const Vector z = z0.array() / mu(s).array();
    out.x = u * z;
    out.lambda = (1.0 - s) / d1;
    return out;
}

}  // namespace aggnmf
