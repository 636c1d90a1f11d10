#pragma once

// Block coordinate descent drivers for NMF from temporal aggregates.
//
// Plain variant: W-step, H-step, then V = P_A(WH) (exact projection onto the
// data-constrained nonnegative set).
// Penalized variant: same W/H steps, then each column of V is set to the
// closed-form minimizer of ||v - (WH)_n||^2 - lambda v' D_rho_n v subject to
// the column's aggregates. By default a column whose current (WH)_n already
// satisfies the autocorrelation constraint is projected with lambda = 0.
//
// With per-iteration activation the lambda_n in the penalized objective change
// between iterations, so only the individual block steps are monotone. With
// `always` the objective is fixed and non-increasing, but it is unbounded below
// when entries are left uncovered by the scheme.

#include "aggnmf/autocorr.hpp"
#include "aggnmf/measurement.hpp"
#include "aggnmf/nmf_core.hpp"
#include "aggnmf/projection.hpp"
#include "aggnmf/random.hpp"
#include "aggnmf/types.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aggnmf {

/// When a column uses the lambda projector.
enum class PenaltyActivation {
    per_iteration,  ///< while the column of WH violates its autocorrelation constraint
    always,         ///< every column whose D_rho has a positive eigenvalue, every iteration
};

inline const char* to_string(PenaltyActivation a) {
    return a == PenaltyActivation::per_iteration ? "per-iteration" : "always";
}

inline PenaltyActivation parse_penalty_activation(const std::string& s) {
    if (s == "per-iteration") return PenaltyActivation::per_iteration;
    if (s == "always") return PenaltyActivation::always;
    throw ParameterError("unknown penalty activation '" + s + "' (expected per-iteration or always)");
}

struct PenaltyConfig {
    std::vector<double> rho;  ///< one threshold per column
    double lambda = 0.0;
    PenaltyActivation activation = PenaltyActivation::per_iteration;
    ProjectorStorage storage = ProjectorStorage::dense;
};

struct RecoveryOptions {
    Index rank = 1;
    UpdateMethod update = UpdateMethod::hals;
    int hals_sweeps = 1;
    int nesterov_inner = 5;
    double epsilon_scale = 1e-6;
    int max_iters = 500;
    double max_seconds = 0.0;  ///< wall-clock cap, 0 disables
    std::uint64_t seed = 0;
    std::optional<PenaltyConfig> penalty;
};

struct TraceRow {
    int iter = 0;
    double objective = 0.0;            ///< ||V - WH||_F^2
    double penalized_objective = 0.0;  ///< objective - sum_n lambda_n v_n' D_rho_n v_n
    double kkt = 0.0;
    double constraint_violation = 0.0;
    double min_entry = 0.0;
};

struct RecoveryReport {
    std::vector<TraceRow> trace;
    SeriesMatrix v;
    Matrix w;
    Matrix h;
    int iterations = 0;
    bool converged = false;
    bool time_capped = false;
    double epsilon = 0.0;
    double wall_seconds = 0.0;
    double lambda = 0.0;
    double min_entry = 0.0;       ///< most negative entry of V over all iterates
    Index penalized_columns = 0;  ///< columns using the lambda projector at the last iterate
    int degenerate_events = 0;
    std::vector<std::string> warnings;
};

/// ||V - V*||_F / ||V*||_F
inline double normalized_error(const Matrix& v, const Matrix& vstar) {
    detail::require_shape(v, vstar.rows(), vstar.cols(), "normalized_error");
    const double denom = vstar.norm();
    if (!(denom > 0.0)) throw InputError("normalized_error: ground truth has zero Frobenius norm");
    return (v - vstar).norm() / denom;
}

namespace detail {

inline void validate_options(const Observations& b, const RecoveryOptions& opts) {
    const Index t = b.scheme.periods();
    const Index n = b.scheme.series();
    if (opts.rank < 1 || opts.rank > std::min(t, n)) {
        throw ParameterError("rank must satisfy 1 <= K <= min(T, N) = " + std::to_string(std::min(t, n)) +
                             ", got " + std::to_string(opts.rank));
    }
    if (opts.max_iters < 0) throw ParameterError("max_iters must be >= 0");
    if (!(opts.epsilon_scale >= 0.0)) throw ParameterError("epsilon scale must be >= 0");
    if (opts.hals_sweeps < 1 || opts.nesterov_inner < 1) throw ParameterError("inner iteration counts must be >= 1");
    if (!b.values.allFinite()) throw InputError("observations contain non-finite values");
    if ((b.values.array() < 0.0).any()) throw InputError("observations must be nonnegative");
}

/// Entries i.i.d. uniform on (0, 1] scaled by sqrt(mean(b) / (K * mean segment length)).
inline void initialize_factors(const Observations& b, Index rank, Rng& rng, Matrix& w, Matrix& h) {
    const Index t = b.scheme.periods();
    const Index n = b.scheme.series();
    double scale = 1.0;
    if (b.size() > 0) {
        const double mean_b = b.values.mean();
        const double mean_len = static_cast<double>(b.scheme.covered_entries()) / static_cast<double>(b.size());
        if (mean_b > 0.0) scale = std::sqrt(mean_b / (static_cast<double>(rank) * mean_len));
    }
    w.resize(t, rank);
    h.resize(rank, n);
    for (Index j = 0; j < rank; ++j)
        for (Index i = 0; i < t; ++i) w(i, j) = scale * uniform_open_closed(rng);
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < rank; ++i) h(i, j) = scale * uniform_open_closed(rng);
}

/// Re-seeds all-zero columns of W and all-zero rows of H with tiny positive
/// noise. Returns the number of components touched.
inline int reseed_dead_components(Matrix& w, Matrix& h, Rng& rng) {
    int touched = 0;
    for (Index k = 0; k < w.cols(); ++k) {
        if ((w.col(k).array() == 0.0).all()) {
            for (Index i = 0; i < w.rows(); ++i) w(i, k) = 1e-12 * uniform_open_closed(rng);
            ++touched;
        }
        if ((h.row(k).array() == 0.0).all()) {
            for (Index j = 0; j < h.cols(); ++j) h(k, j) = 1e-12 * uniform_open_closed(rng);
            ++touched;
        }
    }
    return touched;
}

inline void factor_step(const RecoveryOptions& opts, Matrix& w, Matrix& h, const Matrix& v, int& degenerate) {
    if (opts.update == UpdateMethod::hals) {
        for (int s = 0; s < opts.hals_sweeps; ++s) {
            auto up = update_w_hals(w, h, v);
            degenerate += static_cast<int>(up.degenerate.size());
            w = std::move(up.factor);
        }
        for (int s = 0; s < opts.hals_sweeps; ++s) {
            auto up = update_h_hals(w, h, v);
            degenerate += static_cast<int>(up.degenerate.size());
            h = std::move(up.factor);
        }
    } else {
        auto uw = update_w_nesterov(w, h, v, opts.nesterov_inner);
        degenerate += static_cast<int>(uw.degenerate.size());
        w = std::move(uw.factor);
        auto uh = update_h_nesterov(w, h, v, opts.nesterov_inner);
        degenerate += static_cast<int>(uh.degenerate.size());
        h = std::move(uh.factor);
    }
}

/// Column-wise V-step of the penalized variant.
class PenalizedVStep {
public:
    PenalizedVStep(const Observations& b, const PenaltyConfig& cfg)
        : lambda_(cfg.lambda), activation_(cfg.activation), rho_(cfg.rho) {
        const Index t = b.scheme.periods();
        const Index n = b.scheme.series();
        if (static_cast<Index>(cfg.rho.size()) != n) {
            throw DimensionError("penalty: " + std::to_string(cfg.rho.size()) + " thresholds for " +
                                 std::to_string(n) + " columns");
        }
        if (!(cfg.lambda >= 0.0)) throw ParameterError("penalty: lambda must be >= 0");
        const auto ids = b.scheme.by_column();
        segments_.resize(static_cast<std::size_t>(n));
        sums_.resize(static_cast<std::size_t>(n));
        projectors_.resize(static_cast<std::size_t>(n));
        for (Index col = 0; col < n; ++col) {
            const auto& column_ids = ids[static_cast<std::size_t>(col)];
            auto& segs = segments_[static_cast<std::size_t>(col)];
            Vector& c = sums_[static_cast<std::size_t>(col)];
            c.resize(static_cast<Index>(column_ids.size()));
            for (std::size_t j = 0; j < column_ids.size(); ++j) {
                segs.push_back(b.scheme[column_ids[j]]);
                c(static_cast<Index>(j)) = b.values(column_ids[j]);
            }
            const double r = cfg.rho[static_cast<std::size_t>(col)];
            detail::check_rho(r);
            // columns whose D_rho has no positive eigenvalue fall back to lambda = 0
            if (cfg.lambda > 0.0 && largest_delta(t, r) > 0.0) {
                projectors_[static_cast<std::size_t>(col)] =
                    build_column_projector(t, segs, c, cfg.lambda, r, cfg.storage);
            }
        }
    }

    /// Sets V from X = WH. Returns sum_n lambda_n v_n' D_rho_n v_n, the
    /// reward subtracted in the penalized objective.
    double apply(const Matrix& x, Matrix& v, Index& active) const {
        v.resize(x.rows(), x.cols());
        active = 0;
        double reward = 0.0;
        for (Index col = 0; col < x.cols(); ++col) {
            const auto c = static_cast<std::size_t>(col);
            const double r = rho_[c];
            const bool use_lambda = projectors_[c] && (activation_ == PenaltyActivation::always ||
                                                       autocorr_value(x.col(col), r) < 0.0);
            if (use_lambda) {
                v.col(col) = penalized_project_column(*projectors_[c], x.col(col));
                reward += lambda_ * autocorr_value(v.col(col), r);
                ++active;
            } else {
                v.col(col) = affine_project_column(segments_[c], sums_[c], x.col(col));
            }
        }
        return reward;
    }

private:
    double lambda_;
    PenaltyActivation activation_;
    std::vector<double> rho_;
    std::vector<std::vector<Segment>> segments_;
    std::vector<Vector> sums_;
    std::vector<std::optional<ColumnProjector>> projectors_;
};

inline RecoveryReport run_recovery(const Observations& b, const RecoveryOptions& opts, bool penalized) {
    validate_options(b, opts);
    const auto started = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    };

    std::optional<PenalizedVStep> vstep;
    RecoveryReport rep;
    if (penalized) {
        if (!opts.penalty) throw ParameterError("penalized recovery requires a penalty configuration");
        vstep.emplace(b, *opts.penalty);
        rep.lambda = opts.penalty->lambda;
    }

    Rng rng(opts.seed);
    Matrix w;
    Matrix h;
    initialize_factors(b, opts.rank, rng, w, h);
    Matrix v = project_data(w * h, b);

    auto record = [&](int iter, double reward) {
        const StopState st = kkt_residual(w, h, v);
        TraceRow row;
        row.iter = iter;
        row.objective = st.objective;
        row.penalized_objective = st.objective - reward;
        row.kkt = st.kkt();
        row.constraint_violation = constraint_violation(b, v);
        row.min_entry = v.size() > 0 ? v.minCoeff() : 0.0;
        rep.trace.push_back(row);
        rep.min_entry = std::min(rep.min_entry, row.min_entry);
        return row;
    };

    rep.min_entry = std::numeric_limits<double>::infinity();
    const TraceRow first = record(0, 0.0);
    rep.epsilon = opts.epsilon_scale * first.kkt;
    double kkt = first.kkt;

    int degenerate = 0;
    int it = 0;
    while (kkt > rep.epsilon && it < opts.max_iters) {
        if (opts.max_seconds > 0.0 && elapsed() > opts.max_seconds) {
            rep.time_capped = true;
            break;
        }
        ++it;
        int flagged = 0;
        factor_step(opts, w, h, v, flagged);
        if (flagged > 0) {
            degenerate += flagged;
            reseed_dead_components(w, h, rng);
        }
        const Matrix x = w * h;
        double reward = 0.0;
        if (vstep) {
            reward = vstep->apply(x, v, rep.penalized_columns);
        } else {
            v = project_data(x, b);
        }
        kkt = record(it, reward).kkt;
    }

    rep.iterations = it;
    rep.converged = kkt <= rep.epsilon;
    rep.degenerate_events = degenerate;
    if (degenerate > 0) {
        rep.warnings.push_back(std::to_string(degenerate) +
                               " degenerate factor components were skipped and re-seeded");
    }
    if (!rep.converged) rep.warnings.push_back("not converged: KKT stopping criterion not met");
    if (penalized && rep.min_entry < 0.0) {
        rep.warnings.push_back("penalized projection produced negative entries (min " +
                               std::to_string(rep.min_entry) + ")");
    }
    rep.v = std::move(v);
    rep.w = std::move(w);
    rep.h = std::move(h);
    rep.wall_seconds = elapsed();
    return rep;
}

}  // namespace detail

/// Block coordinate descent with the exact data projection.
inline RecoveryReport recover(const Observations& b, const RecoveryOptions& opts) {
    return detail::run_recovery(b, opts, false);
}

/// Block coordinate descent with the autocorrelation-penalized column
/// projections. `opts.penalty` must be set.
inline RecoveryReport recover_penalized(const Observations& b, const RecoveryOptions& opts) {
    return detail::run_recovery(b, opts, true);
}

struct RankSweepRow {
    Index rank = 0;
    int repeat = 0;
    std::uint64_t seed = 0;
    double error = 0.0;
    bool converged = false;
    int iterations = 0;
    double min_entry = 0.0;
};

struct RankSweepTable {
    std::vector<RankSweepRow> rows;
    std::vector<Index> ranks;
    std::vector<double> mean_error;  ///< aligned with `ranks`
    Index best_rank = 0;
    double best_error = 0.0;
};

/// Picks the rank with the smallest mean error; ties go to the smaller rank.
inline void select_best_rank(RankSweepTable& table) {
    table.best_rank = 0;
    table.best_error = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < table.ranks.size(); ++i) {
        const double e = table.mean_error[i];
        if (e < table.best_error || (e == table.best_error && table.ranks[i] < table.best_rank)) {
            table.best_error = e;
            table.best_rank = table.ranks[i];
        }
    }
}

/// Seed of the scheme draw for one repeat of a sweep.
inline std::uint64_t repeat_seed(std::uint64_t seed, int repeat) {
    return derive_seed(seed, static_cast<std::uint64_t>(repeat));
}

/// Seed of the factor initialization for one (repeat, rank) pair.
inline std::uint64_t init_seed(std::uint64_t repeat_seed_value, Index rank) {
    return derive_seed(repeat_seed_value ^ 0xA5A5A5A5ULL, static_cast<std::uint64_t>(rank));
}

/// Runs recover (or recover_penalized when opts.penalty is set) for every rank
/// and repeat. Each repeat draws new observations through `observe_fn`
/// (called with the repeat seed) and new initializations; the returned table
/// holds per-rank mean errors against `vstar` and the oracle-best rank.
inline RankSweepTable rank_sweep(const std::function<Observations(std::uint64_t)>& observe_fn,
                                 const Matrix& vstar, std::span<const Index> ranks, RecoveryOptions opts,
                                 int repeats, std::uint64_t seed) {
    if (ranks.empty()) throw ParameterError("rank sweep needs at least one rank");
    if (repeats < 1) throw ParameterError("rank sweep needs repeats >= 1");
    RankSweepTable table;
    table.ranks.assign(ranks.begin(), ranks.end());
    table.mean_error.assign(ranks.size(), 0.0);
    for (int r = 0; r < repeats; ++r) {
        const std::uint64_t rs = repeat_seed(seed, r);
        const Observations b = observe_fn(rs);
        for (std::size_t i = 0; i < ranks.size(); ++i) {
            opts.rank = ranks[i];
            opts.seed = init_seed(rs, ranks[i]);
            const RecoveryReport rep = opts.penalty ? recover_penalized(b, opts) : recover(b, opts);
            RankSweepRow row;
            row.rank = ranks[i];
            row.repeat = r;
            row.seed = opts.seed;
            row.error = normalized_error(rep.v, vstar);
            row.converged = rep.converged;
            row.iterations = rep.iterations;
            row.min_entry = rep.min_entry;
            table.mean_error[i] += row.error / repeats;
            table.rows.push_back(row);
        }
    }
    select_best_rank(table);
    return table;
}

/// Rank sweep over fixed observations: only the initialization changes
/// between repeats.
inline RankSweepTable rank_sweep(const Observations& b, const Matrix& vstar, std::span<const Index> ranks,
                                 const RecoveryOptions& opts, int repeats, std::uint64_t seed) {
    return rank_sweep([&b](std::uint64_t) { return b; }, vstar, ranks, opts, repeats, seed);
}

}  // namespace aggnmf
