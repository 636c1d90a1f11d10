#pragma once

// Euclidean projection onto {X >= 0 : A(X) = b}. The set is a product of
// scaled simplices (one per segment) and the nonnegative orthant on
// uncovered entries, so the projection splits entrywise by segment.

#include "aggnmf/measurement.hpp"
#include "aggnmf/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace aggnmf {

/// argmin ||x - y||^2 subject to x >= 0, sum(x) = s.
///
/// Sort-and-threshold method of Chen and Ye: with u the values of y sorted in
/// decreasing order, the threshold is (sum_{j<=i} u_j - s) / i for the smallest
/// i such that it is >= u_{i+1}; O(h log h).
inline Vector project_simplex(const Eigen::Ref<const Vector>& y, double s) {
    if (!(s >= 0.0)) throw ParameterError("simplex target sum must be >= 0, got " + std::to_string(s));
    if (!std::isfinite(s) || !y.allFinite()) throw InputError("simplex projection input is not finite");
    const Index h = y.size();
    if (h == 0) throw ParameterError("simplex projection of an empty vector");
    if (s == 0.0) return Vector::Zero(h);
    if (h == 1) return Vector::Constant(1, s);

    std::vector<double> u(y.data(), y.data() + h);
    std::sort(u.begin(), u.end(), std::greater<>());

    double threshold = 0.0;
    bool found = false;
    double prefix = 0.0;
    std::vector<double> prefix_sums(static_cast<std::size_t>(h));
    for (Index i = 0; i < h; ++i) {
        prefix += u[static_cast<std::size_t>(i)];
        prefix_sums[static_cast<std::size_t>(i)] = prefix;
    }
    for (Index i = 1; i < h; ++i) {
        const double t = (prefix_sums[static_cast<std::size_t>(i - 1)] - s) / static_cast<double>(i);
        if (t >= u[static_cast<std::size_t>(i)]) {
            threshold = t;
            found = true;
            break;
        }
    }
    if (!found) threshold = (prefix_sums.back() - s) / static_cast<double>(h);
    return (y.array() - threshold).max(0.0).matrix();
}

/// P_A(X): each segment is replaced by its simplex projection onto b_d;
/// uncovered entries are clipped at zero.
inline SeriesMatrix project_data(const Matrix& x, const Observations& b) {
    const AggregationScheme& scheme = b.scheme;
    detail::require_shape(x, scheme.periods(), scheme.series(), "project_data");
    SeriesMatrix out = x.cwiseMax(0.0);
    for (Index d = 0; d < scheme.size(); ++d) {
        const Segment& seg = scheme[d];
        try {
            out.col(seg.column).segment(seg.start, seg.length) =
                project_simplex(x.col(seg.column).segment(seg.start, seg.length), b.values(d));
        } catch (const ParameterError& e) {
            throw ParameterError("segment " + std::to_string(d + 1) + ": " + e.what());
        } catch (const InputError& e) {
            throw InputError("segment " + std::to_string(d + 1) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace aggnmf
