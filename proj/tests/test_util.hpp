#pragma once

#include "aggnmf/measurement.hpp"
#include "aggnmf/random.hpp"
#include "aggnmf/types.hpp"

#include <algorithm>
#include <vector>

namespace testutil {

using namespace aggnmf;

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = uniform(rng, lo, hi);
    return m;
}

inline Vector random_vector(Index n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = uniform(rng, lo, hi);
    return v;
}

/// Random disjoint segments in one column, some rows left uncovered.
inline std::vector<Segment> random_segments(Index periods, Index column, Index count, Rng& rng) {
    // pick count distinct cut points then keep a random sub-run inside each cell
    std::vector<Index> cuts;
    for (Index t = 1; t < periods; ++t) cuts.push_back(t);
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const auto j = i + uniform_index(rng, cuts.size() - i);
        std::swap(cuts[i], cuts[j]);
    }
    cuts.resize(static_cast<std::size_t>(std::max<Index>(0, count - 1)));
    cuts.push_back(0);
    cuts.push_back(periods);
    std::sort(cuts.begin(), cuts.end());
    std::vector<Segment> out;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const Index lo = cuts[i];
        const Index width = cuts[i + 1] - lo;
        const Index len = 1 + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(width)));
        const Index start = lo + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(width - len + 1)));
        out.push_back(Segment{column, start, len});
    }
    return out;
}

inline AggregationScheme random_disjoint_scheme(Index periods, Index series, Rng& rng) {
    std::vector<Segment> all;
    for (Index n = 0; n < series; ++n) {
        const Index count = 1 + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(std::min<Index>(periods, 4))));
        auto segs = random_segments(periods, n, count, rng);
        all.insert(all.end(), segs.begin(), segs.end());
    }
    return AggregationScheme(periods, series, std::move(all));
}

/// Per-entry singleton segments over a random half of the entries.
inline AggregationScheme half_singletons(Index periods, Index series, Rng& rng) {
    std::vector<Segment> segs;
    for (Index n = 0; n < series; ++n)
        for (Index t = 0; t < periods; ++t)
            if (uniform01(rng) < 0.5) segs.push_back(Segment{n, t, 1});
    return AggregationScheme(periods, series, std::move(segs));
}

/// O(h^2) simplex projection: try every support size k over the sorted
/// values and keep the one whose threshold is consistent.
inline Vector reference_simplex(const Vector& y, double s) {
    const Index h = y.size();
    if (s == 0.0) return Vector::Zero(h);
    std::vector<double> sorted(y.data(), y.data() + h);
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double tau = 0.0;
    for (Index k = 1; k <= h; ++k) {
        double sum = 0.0;
        for (Index i = 0; i < k; ++i) sum += sorted[static_cast<std::size_t>(i)];
        const double t = (sum - s) / static_cast<double>(k);
        const bool keep_last = sorted[static_cast<std::size_t>(k - 1)] - t > 0.0;
        const bool drop_next = k == h || sorted[static_cast<std::size_t>(k)] - t <= 0.0;
        if (keep_last && drop_next) {
            tau = t;
            break;
        }
    }
    return (y.array() - tau).cwiseMax(0.0).matrix();
}

}  // namespace testutil
