#pragma once

// CSV formats. Everything at this boundary is 1-based.
//
//   matrix        header of column ids, one row per period
//   scheme        optional "# periods=T,series=N" line, header column,start,length
//   observations  header segment_id,value
//   rho           header column,rho
//   trace         header iter,objective,penalized_objective,kkt,constraint_violation,min_entry
//
// Reals are written with 17 significant digits so that files re-parse to the
// same doubles.

#include "aggnmf/measurement.hpp"
#include "aggnmf/recovery.hpp"
#include "aggnmf/types.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace aggnmf::io {

inline std::string format_real(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_real(const std::string& s, const std::string& where) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) throw InputError(where + ": cannot parse number '" + s + "'");
    return v;
}

inline long long parse_int(const std::string& s, const std::string& where) {
    long long v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) throw InputError(where + ": cannot parse integer '" + s + "'");
    return v;
}

/// Non-empty, non-comment lines; comment lines (starting with '#') go to `comments`.
inline std::vector<std::string> read_lines(const std::string& path, std::vector<std::string>* comments = nullptr) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "' for reading");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '#') {
            if (comments) comments->push_back(t);
            continue;
        }
        lines.push_back(t);
    }
    return lines;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    return out;
}

inline void expect_header(const std::vector<std::string>& lines, const std::string& header, const std::string& path) {
    if (lines.empty() || lines.front() != header) {
        throw InputError(path + ": expected header '" + header + "'");
    }
}

}  // namespace detail

inline void write_matrix_csv(std::ostream& out, const Matrix& m) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << (j + 1);
    out << '\n';
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_real(m(i, j));
        out << '\n';
    }
}

inline void write_matrix_csv(const std::string& path, const Matrix& m) {
    auto out = detail::open_out(path);
    write_matrix_csv(out, m);
}

inline Matrix read_matrix_csv(const std::string& path) {
    const auto lines = detail::read_lines(path);
    if (lines.empty()) throw InputError(path + ": empty matrix file");
    const auto cols = static_cast<Index>(detail::split(lines.front()).size());
    const auto rows = static_cast<Index>(lines.size()) - 1;
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const auto fields = detail::split(lines[static_cast<std::size_t>(i + 1)]);
        const std::string where = path + ":" + std::to_string(i + 2);
        if (static_cast<Index>(fields.size()) != cols) {
            throw InputError(where + ": expected " + std::to_string(cols) + " fields, got " +
                             std::to_string(fields.size()));
        }
        for (Index j = 0; j < cols; ++j) m(i, j) = detail::parse_real(fields[static_cast<std::size_t>(j)], where);
    }
    return m;
}

inline void write_scheme_csv(const std::string& path, const AggregationScheme& scheme) {
    auto out = detail::open_out(path);
    out << "# periods=" << scheme.periods() << ",series=" << scheme.series() << '\n';
    out << "column,start,length\n";
    for (const Segment& s : scheme.segments()) out << s.column + 1 << ',' << s.start + 1 << ',' << s.length << '\n';
}

/// Reads a scheme. T and N come from the "# periods=..,series=.." line when
/// present, else from `periods`/`series` when positive, else from the extent
/// of the segments.
inline AggregationScheme read_scheme_csv(const std::string& path, Index periods = 0, Index series = 0) {
    std::vector<std::string> comments;
    const auto lines = detail::read_lines(path, &comments);
    detail::expect_header(lines, "column,start,length", path);
    for (const auto& c : comments) {
        long long t = 0;
        long long n = 0;
        if (std::sscanf(c.c_str(), "# periods=%lld,series=%lld", &t, &n) == 2) {
            periods = static_cast<Index>(t);
            series = static_cast<Index>(n);
        }
    }
    std::vector<Segment> segments;
    Index max_end = 0;
    Index max_col = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = detail::split(lines[i]);
        const std::string where = path + ":" + std::to_string(i + 1);
        if (f.size() != 3) throw InputError(where + ": expected column,start,length");
        Segment s;
        s.column = static_cast<Index>(detail::parse_int(f[0], where)) - 1;
        s.start = static_cast<Index>(detail::parse_int(f[1], where)) - 1;
        s.length = static_cast<Index>(detail::parse_int(f[2], where));
        max_end = std::max(max_end, s.end());
        max_col = std::max(max_col, s.column + 1);
        segments.push_back(s);
    }
    if (periods <= 0) periods = max_end;
    if (series <= 0) series = max_col;
    return AggregationScheme(periods, series, std::move(segments));
}

inline void write_observations_csv(const std::string& path, const Vector& b) {
    auto out = detail::open_out(path);
    out << "segment_id,value\n";
    for (Index d = 0; d < b.size(); ++d) out << d + 1 << ',' << format_real(b(d)) << '\n';
}

inline Vector read_observations_csv(const std::string& path) {
    const auto lines = detail::read_lines(path);
    detail::expect_header(lines, "segment_id,value", path);
    Vector b(static_cast<Index>(lines.size()) - 1);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = detail::split(lines[i]);
        const std::string where = path + ":" + std::to_string(i + 1);
        if (f.size() != 2) throw InputError(where + ": expected segment_id,value");
        const auto id = detail::parse_int(f[0], where);
        if (id != static_cast<long long>(i)) throw InputError(where + ": segment ids must be 1, 2, ... in order");
        b(static_cast<Index>(i) - 1) = detail::parse_real(f[1], where);
    }
    return b;
}

inline void write_rho_csv(const std::string& path, const std::vector<double>& rho) {
    auto out = detail::open_out(path);
    out << "column,rho\n";
    for (std::size_t n = 0; n < rho.size(); ++n) out << n + 1 << ',' << format_real(rho[n]) << '\n';
}

/// One threshold per column, in column order 1..N.
inline std::vector<double> read_rho_csv(const std::string& path) {
    const auto lines = detail::read_lines(path);
    detail::expect_header(lines, "column,rho", path);
    std::vector<double> rho(lines.size() - 1, 0.0);
    std::vector<char> seen(rho.size(), 0);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = detail::split(lines[i]);
        const std::string where = path + ":" + std::to_string(i + 1);
        if (f.size() != 2) throw InputError(where + ": expected column,rho");
        const auto col = detail::parse_int(f[0], where);
        if (col < 1 || col > static_cast<long long>(rho.size()) || seen[static_cast<std::size_t>(col - 1)]) {
            throw InputError(where + ": column ids must be a permutation of 1..N");
        }
        seen[static_cast<std::size_t>(col - 1)] = 1;
        rho[static_cast<std::size_t>(col - 1)] = detail::parse_real(f[1], where);
    }
    return rho;
}

inline void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
    auto out = detail::open_out(path);
    out << "iter,objective,penalized_objective,kkt,constraint_violation,min_entry\n";
    for (const auto& r : trace) {
        out << r.iter << ',' << format_real(r.objective) << ',' << format_real(r.penalized_objective) << ','
            << format_real(r.kkt) << ',' << format_real(r.constraint_violation) << ',' << format_real(r.min_entry)
            << '\n';
    }
}

}  // namespace aggnmf::io
