#pragma once

// Synthetic ground truth: nonnegative mixtures of Matern Gaussian-process
// paths, and lag-one autocorrelation thresholds estimated from history.

#include "aggnmf/random.hpp"
#include "aggnmf/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace aggnmf {

struct SyntheticSpec {
    Index periods = 150;
    Index series = 120;
    Index rank = 20;
    double nu = 2.5;             ///< Matern smoothness
    double length_scale = 10.0;  ///< in periods
    double variance = 1.0;
    bool with_history = true;  ///< also simulate T earlier periods for rho estimation
    std::uint64_t seed = 0;

    void validate() const {
        if (periods < 1 || series < 1 || rank < 1) {
            throw ParameterError("synthetic spec: T, N and K must be positive (T=" + std::to_string(periods) +
                                 ", N=" + std::to_string(series) + ", K=" + std::to_string(rank) + ")");
        }
        if (!(nu > 0.0) || !(length_scale > 0.0) || !(variance > 0.0)) {
            throw ParameterError("synthetic spec: nu, length scale and variance must be positive");
        }
    }
};

struct SyntheticData {
    SeriesMatrix vstar;    ///< T x N ground truth
    Matrix w_true;         ///< T x K nonnegative paths
    Matrix h_true;         ///< K x N mixture weights
    SeriesMatrix history;  ///< T x N earlier periods (empty without history)
};

/// Matern covariance at distance r.
inline double matern_covariance(double r, double nu, double length_scale, double variance) {
    if (r == 0.0) return variance;
    const double a = r / length_scale;
    if (nu == 0.5) return variance * std::exp(-a);
    if (nu == 1.5) {
        const double s = std::sqrt(3.0) * a;
        return variance * (1.0 + s) * std::exp(-s);
    }
    if (nu == 2.5) {
        const double s = std::sqrt(5.0) * a;
        return variance * (1.0 + s + s * s / 3.0) * std::exp(-s);
    }
    const double s = std::sqrt(2.0 * nu) * a;
    return variance * std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(s, nu) * std::cyl_bessel_k(nu, s);
}

/// Covariance of a Matern process sampled at integer periods 0..n-1.
inline Matrix matern_kernel(Index n, double nu, double length_scale, double variance) {
    Matrix k(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j <= i; ++j) {
            const double c = matern_covariance(static_cast<double>(i - j), nu, length_scale, variance);
            k(i, j) = c;
            k(j, i) = c;
        }
    }
    return k;
}

/// Lower Cholesky factor of the kernel with diagonal jitter 1e-10, escalated
/// tenfold up to three times on failure.
inline Matrix jittered_cholesky(const Matrix& kernel) {
    double jitter = 1e-10;
    for (int attempt = 0; attempt <= 3; ++attempt, jitter *= 10.0) {
        Matrix k = kernel;
        k.diagonal().array() += jitter;
        Eigen::LLT<Matrix> llt(k);
        if (llt.info() == Eigen::Success) return llt.matrixL();
    }
    throw NumericalError("Matern kernel is not positive definite even with jitter 1e-7");
}

inline SyntheticData matern_mixture(const SyntheticSpec& spec) {
    spec.validate();
    const Index total = spec.with_history ? 2 * spec.periods : spec.periods;
    const Matrix chol = jittered_cholesky(matern_kernel(total, spec.nu, spec.length_scale, spec.variance));

    Rng rng(spec.seed);
    Matrix paths(total, spec.rank);
    Vector noise(total);
    for (Index k = 0; k < spec.rank; ++k) {
        for (Index t = 0; t < total; ++t) noise(t) = standard_normal(rng);
        paths.col(k) = chol * noise;
        paths.col(k).array() -= paths.col(k).minCoeff();
    }
    Matrix h(spec.rank, spec.series);
    for (Index j = 0; j < spec.series; ++j)
        for (Index k = 0; k < spec.rank; ++k) h(k, j) = uniform01(rng);

    SyntheticData out;
    out.h_true = h;
    out.w_true = paths.bottomRows(spec.periods);
    out.vstar = out.w_true * h;
    if (spec.with_history) out.history = paths.topRows(spec.periods) * h;
    return out;
}

struct RhoEstimate {
    std::vector<double> rho;
    std::vector<Index> zero_columns;  ///< columns with no energy, set to 0
};

/// rho_n = sum_t x_{t+1} x_t / sum_t x_t^2 per column, clamped to [-1, 1].
inline RhoEstimate estimate_rho(const Matrix& history) {
    if (history.rows() < 2) throw InputError("estimate_rho: history needs at least 2 periods");
    RhoEstimate out;
    out.rho.resize(static_cast<std::size_t>(history.cols()));
    const Index t = history.rows();
    for (Index n = 0; n < history.cols(); ++n) {
        const auto x = history.col(n);
        const double energy = x.squaredNorm();
        if (!(energy > 0.0)) {
            out.rho[static_cast<std::size_t>(n)] = 0.0;
            out.zero_columns.push_back(n);
            continue;
        }
        const double lagged = x.head(t - 1).dot(x.tail(t - 1));
        out.rho[static_cast<std::size_t>(n)] = std::clamp(lagged / energy, -1.0, 1.0);
    }
    return out;
}

}  // namespace aggnmf
