#pragma once

// Temporal aggregation operator: disjoint runs of consecutive rows within a
// single column, each summed into one observation.

#include "aggnmf/random.hpp"
#include "aggnmf/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace aggnmf {

/// Rows [start, start + length) of one column. 0-based.
struct Segment {
    Index column = 0;
    Index start = 0;
    Index length = 1;

    Index end() const { return start + length; }
    friend bool operator==(const Segment&, const Segment&) = default;
};

class AggregationScheme {
public:
    AggregationScheme() = default;

    /// Throws ParameterError if a segment is out of bounds or overlaps another.
    AggregationScheme(Index periods, Index series, std::vector<Segment> segments)
        : periods_(periods), series_(series), segments_(std::move(segments)) {
        validate();
    }

    Index periods() const { return periods_; }
    Index series() const { return series_; }
    Index size() const { return static_cast<Index>(segments_.size()); }
    const std::vector<Segment>& segments() const { return segments_; }
    const Segment& operator[](Index d) const { return segments_[static_cast<std::size_t>(d)]; }

    /// Segment ids grouped by column, each group in increasing row order.
    std::vector<std::vector<Index>> by_column() const {
        std::vector<std::vector<Index>> out(static_cast<std::size_t>(series_));
        for (Index d = 0; d < size(); ++d) out[static_cast<std::size_t>((*this)[d].column)].push_back(d);
        for (auto& ids : out) {
            std::sort(ids.begin(), ids.end(),
                      [this](Index a, Index b) { return (*this)[a].start < (*this)[b].start; });
        }
        return out;
    }

    /// Fraction of the T x N entries covered by some segment.
    double coverage() const {
        if (periods_ * series_ == 0) return 0.0;
        Index covered = 0;
        for (const auto& s : segments_) covered += s.length;
        return static_cast<double>(covered) / static_cast<double>(periods_ * series_);
    }

    Index covered_entries() const {
        Index covered = 0;
        for (const auto& s : segments_) covered += s.length;
        return covered;
    }

    friend bool operator==(const AggregationScheme&, const AggregationScheme&) = default;

private:
    void validate() const {
        if (periods_ < 1 || series_ < 1) {
            throw ParameterError("aggregation scheme needs T >= 1 and N >= 1, got T=" +
                                 std::to_string(periods_) + " N=" + std::to_string(series_));
        }
        std::vector<char> taken(static_cast<std::size_t>(periods_ * series_), 0);
        for (std::size_t d = 0; d < segments_.size(); ++d) {
            const Segment& s = segments_[d];
            if (s.column < 0 || s.column >= series_ || s.start < 0 || s.length < 1 || s.end() > periods_) {
                throw ParameterError("segment " + std::to_string(d + 1) + " out of bounds (column " +
                                     std::to_string(s.column + 1) + ", start " + std::to_string(s.start + 1) +
                                     ", length " + std::to_string(s.length) + ")");
            }
            for (Index t = s.start; t < s.end(); ++t) {
                char& cell = taken[static_cast<std::size_t>(s.column * periods_ + t)];
                if (cell) {
                    throw ParameterError("segment " + std::to_string(d + 1) + " overlaps another segment");
                }
                cell = 1;
            }
        }
    }

    Index periods_ = 0;
    Index series_ = 0;
    std::vector<Segment> segments_;
};

/// Observation vector b = A(V*) together with the scheme that produced it.
struct Observations {
    AggregationScheme scheme;
    Vector values;

    Observations() = default;
    Observations(AggregationScheme s, Vector v) : scheme(std::move(s)), values(std::move(v)) {
        if (values.size() != scheme.size()) {
            throw DimensionError("observation vector has " + std::to_string(values.size()) +
                                 " values for " + std::to_string(scheme.size()) + " segments");
        }
    }

    Index size() const { return values.size(); }
};

/// b_d = sum of X over segment d.
inline Vector apply(const AggregationScheme& scheme, const Matrix& x) {
    detail::require_shape(x, scheme.periods(), scheme.series(), "apply");
    Vector b(scheme.size());
    for (Index d = 0; d < scheme.size(); ++d) {
        const Segment& s = scheme[d];
        b(d) = x.col(s.column).segment(s.start, s.length).sum();
    }
    return b;
}

inline Observations observe(const AggregationScheme& scheme, const Matrix& x) {
    return Observations(scheme, apply(scheme, x));
}

/// Builds the per-column segments ending at each (1-based, increasing)
/// observation period; the first segment starts at the top of the series.
inline void append_segments_from_periods(std::vector<Segment>& out, Index column,
                                         const std::vector<Index>& observation_periods) {
    Index previous = 0;
    for (Index obs : observation_periods) {
        out.push_back(Segment{column, previous, obs - previous});
        previous = obs;
    }
}

/// Observation every p periods starting from a random offset in [1, p].
/// Rows after the last observation period stay uncovered.
inline AggregationScheme periodic_scheme(Index periods, Index series, Index interval, Rng& rng) {
    if (periods < 1 || series < 1) throw ParameterError("periodic scheme needs T >= 1 and N >= 1");
    if (interval < 1 || interval > periods) {
        throw ParameterError("sampling interval must lie in [1, T=" + std::to_string(periods) +
                             "], got " + std::to_string(interval));
    }
    std::vector<Segment> segments;
    std::vector<Index> obs;
    for (Index n = 0; n < series; ++n) {
        const Index offset = 1 + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(interval)));
        obs.clear();
        for (Index t = offset; t <= periods; t += interval) obs.push_back(t);
        append_segments_from_periods(segments, n, obs);
    }
    return AggregationScheme(periods, series, std::move(segments));
}

/// Observation periods per column for a sampling rate: round-half-up of
/// T * rate, at least one.
inline Index observations_per_column(Index periods, double rate) {
    const auto m = static_cast<Index>(std::floor(static_cast<double>(periods) * rate + 0.5));
    return std::clamp<Index>(m, 1, periods);
}

/// Observation periods drawn uniformly without replacement in each column.
inline AggregationScheme random_scheme(Index periods, Index series, double rate, Rng& rng) {
    if (periods < 1 || series < 1) throw ParameterError("random scheme needs T >= 1 and N >= 1");
    if (!(rate > 0.0 && rate <= 1.0)) {
        throw ParameterError("sampling rate must lie in (0, 1], got " + std::to_string(rate));
    }
    const Index per_column = observations_per_column(periods, rate);
    std::vector<Segment> segments;
    std::vector<Index> pool(static_cast<std::size_t>(periods));
    std::vector<Index> obs;
    for (Index n = 0; n < series; ++n) {
        for (Index t = 0; t < periods; ++t) pool[static_cast<std::size_t>(t)] = t + 1;
        // partial Fisher-Yates
        for (Index i = 0; i < per_column; ++i) {
            const auto j = i + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(periods - i)));
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
        }
        obs.assign(pool.begin(), pool.begin() + per_column);
        std::sort(obs.begin(), obs.end());
        append_segments_from_periods(segments, n, obs);
    }
    return AggregationScheme(periods, series, std::move(segments));
}

/// Spreads each aggregate equally over its periods; uncovered entries are 0.
inline SeriesMatrix interpolation_baseline(const Observations& b) {
    const AggregationScheme& scheme = b.scheme;
    SeriesMatrix out = SeriesMatrix::Zero(scheme.periods(), scheme.series());
    for (Index d = 0; d < scheme.size(); ++d) {
        const Segment& s = scheme[d];
        out.col(s.column).segment(s.start, s.length).setConstant(b.values(d) / static_cast<double>(s.length));
    }
    return out;
}

/// max_d |A(X)_d - b_d|
inline double constraint_violation(const Observations& b, const Matrix& x) {
    if (b.size() == 0) return 0.0;
    return (apply(b.scheme, x) - b.values).cwiseAbs().maxCoeff();
}

}  // namespace aggnmf
