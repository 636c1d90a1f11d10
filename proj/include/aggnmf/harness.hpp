#pragma once

// Experiment matrix runner: every (scheme, rate, repeat) cell draws one
// sampling scheme, and every method / update / rank is run on it. Seeds are
// derived from the sweep seed and the cell coordinates only, so results do
// not depend on the worker count or scheduling.

#include "aggnmf/datagen.hpp"
#include "aggnmf/io.hpp"
#include "aggnmf/measurement.hpp"
#include "aggnmf/recovery.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace aggnmf {

enum class SchemeKind { periodic, random };
enum class Method { unpenalized, penalized, interpolation };

inline const char* to_string(SchemeKind k) { return k == SchemeKind::periodic ? "periodic" : "random"; }

inline const char* to_string(Method m) {
    switch (m) {
        case Method::unpenalized: return "unpenalized";
        case Method::penalized: return "penalized";
        default: return "interpolation";
    }
}

inline SchemeKind parse_scheme_kind(const std::string& s) {
    if (s == "periodic") return SchemeKind::periodic;
    if (s == "random") return SchemeKind::random;
    throw ParameterError("unknown scheme '" + s + "' (expected periodic or random)");
}

inline Method parse_method(const std::string& s) {
    if (s == "unpenalized") return Method::unpenalized;
    if (s == "penalized") return Method::penalized;
    if (s == "interpolation") return Method::interpolation;
    throw ParameterError("unknown method '" + s + "' (expected unpenalized, penalized or interpolation)");
}

struct ExperimentConfig {
    std::string dataset = "synthetic";
    std::string matrix_path;   ///< ground truth CSV (non-synthetic datasets)
    std::string history_path;  ///< history CSV for rho estimation
    std::string rho_path;      ///< explicit rho CSV, takes precedence over history
    SyntheticSpec synthetic;

    std::vector<SchemeKind> schemes{SchemeKind::periodic, SchemeKind::random};
    std::vector<Index> intervals{2, 3, 5, 7, 10, 15, 30};
    std::vector<double> rates{0.5, 0.33, 0.2, 0.14, 0.1, 0.07, 0.03};
    std::vector<Method> methods{Method::unpenalized, Method::penalized, Method::interpolation};
    std::vector<UpdateMethod> updates{UpdateMethod::hals, UpdateMethod::nesterov};
    std::vector<Index> ranks{2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20};
    int repeats = 3;
    std::uint64_t seed = 1;
    int jobs = 1;

    int max_iters = 500;
    double epsilon_scale = 1e-6;
    int hals_sweeps = 1;
    int nesterov_inner = 5;
    std::optional<double> lambda;  ///< empty: heuristic
    PenaltyActivation activation = PenaltyActivation::per_iteration;
    bool record_runtime = false;

    /// Number of sampling levels (intervals for periodic, rates for random).
    std::size_t levels() const { return intervals.size(); }

    void validate() const {
        if (intervals.size() != rates.size()) {
            throw ParameterError("intervals and rates must have the same length (one rate per interval)");
        }
        if (schemes.empty() || methods.empty() || intervals.empty()) {
            throw ParameterError("sweep needs at least one scheme, method and sampling level");
        }
        const bool learned = std::any_of(methods.begin(), methods.end(),
                                         [](Method m) { return m != Method::interpolation; });
        if (learned && (ranks.empty() || updates.empty())) {
            throw ParameterError("sweep needs at least one rank and update method");
        }
        if (repeats < 1) throw ParameterError("repeats must be >= 1");
        if (jobs < 1) throw ParameterError("jobs must be >= 1");
        for (Index p : intervals)
            if (p < 1) throw ParameterError("intervals must be >= 1");
        for (double r : rates)
            if (!(r > 0.0 && r <= 1.0)) throw ParameterError("rates must lie in (0, 1]");
        if (dataset == "synthetic") synthetic.validate();
        else if (matrix_path.empty()) throw ParameterError("non-synthetic dataset needs a matrix path");
    }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["dataset"] = {{"name", c.dataset},
                    {"matrix", c.matrix_path},
                    {"history", c.history_path},
                    {"rho", c.rho_path},
                    {"synthetic",
                     {{"periods", c.synthetic.periods},
                      {"series", c.synthetic.series},
                      {"rank", c.synthetic.rank},
                      {"nu", c.synthetic.nu},
                      {"length_scale", c.synthetic.length_scale},
                      {"variance", c.synthetic.variance},
                      {"seed", c.synthetic.seed}}}};
    std::vector<std::string> schemes, methods, updates;
    for (auto s : c.schemes) schemes.emplace_back(to_string(s));
    for (auto m : c.methods) methods.emplace_back(to_string(m));
    for (auto u : c.updates) updates.emplace_back(to_string(u));
    j["schemes"] = schemes;
    j["intervals"] = c.intervals;
    j["rates"] = c.rates;
    j["methods"] = methods;
    j["updates"] = updates;
    j["ranks"] = c.ranks;
    j["repeats"] = c.repeats;
    j["seed"] = c.seed;
    j["jobs"] = c.jobs;
    j["max_iters"] = c.max_iters;
    j["epsilon_scale"] = c.epsilon_scale;
    j["hals_sweeps"] = c.hals_sweeps;
    j["nesterov_inner"] = c.nesterov_inner;
    j["lambda"] = c.lambda ? nlohmann::json(*c.lambda) : nlohmann::json("auto");
    j["activation"] = to_string(c.activation);
    j["record_runtime"] = c.record_runtime;
    return j;
}

/// Overlays the keys present in `j` onto `c`.
inline void apply_json(const nlohmann::json& j, ExperimentConfig& c) {
    try {
        if (j.contains("dataset")) {
            const auto& d = j["dataset"];
            if (d.contains("name")) c.dataset = d["name"].get<std::string>();
            if (d.contains("matrix")) c.matrix_path = d["matrix"].get<std::string>();
            if (d.contains("history")) c.history_path = d["history"].get<std::string>();
            if (d.contains("rho")) c.rho_path = d["rho"].get<std::string>();
            if (d.contains("synthetic")) {
                const auto& s = d["synthetic"];
                if (s.contains("periods")) c.synthetic.periods = s["periods"].get<Index>();
                if (s.contains("series")) c.synthetic.series = s["series"].get<Index>();
                if (s.contains("rank")) c.synthetic.rank = s["rank"].get<Index>();
                if (s.contains("nu")) c.synthetic.nu = s["nu"].get<double>();
                if (s.contains("length_scale")) c.synthetic.length_scale = s["length_scale"].get<double>();
                if (s.contains("variance")) c.synthetic.variance = s["variance"].get<double>();
                if (s.contains("seed")) c.synthetic.seed = s["seed"].get<std::uint64_t>();
            }
        }
        if (j.contains("schemes")) {
            c.schemes.clear();
            for (const auto& s : j["schemes"]) c.schemes.push_back(parse_scheme_kind(s.get<std::string>()));
        }
        if (j.contains("intervals")) c.intervals = j["intervals"].get<std::vector<Index>>();
        if (j.contains("rates")) c.rates = j["rates"].get<std::vector<double>>();
        if (j.contains("methods")) {
            c.methods.clear();
            for (const auto& m : j["methods"]) c.methods.push_back(parse_method(m.get<std::string>()));
        }
        if (j.contains("updates")) {
            c.updates.clear();
            for (const auto& u : j["updates"]) c.updates.push_back(parse_update_method(u.get<std::string>()));
        }
        if (j.contains("ranks")) c.ranks = j["ranks"].get<std::vector<Index>>();
        if (j.contains("repeats")) c.repeats = j["repeats"].get<int>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("jobs")) c.jobs = j["jobs"].get<int>();
        if (j.contains("max_iters")) c.max_iters = j["max_iters"].get<int>();
        if (j.contains("epsilon_scale")) c.epsilon_scale = j["epsilon_scale"].get<double>();
        if (j.contains("hals_sweeps")) c.hals_sweeps = j["hals_sweeps"].get<int>();
        if (j.contains("nesterov_inner")) c.nesterov_inner = j["nesterov_inner"].get<int>();
        if (j.contains("lambda")) {
            if (j["lambda"].is_string()) {
                if (j["lambda"].get<std::string>() != "auto") throw ParameterError("lambda must be 'auto' or a number");
                c.lambda.reset();
            } else {
                c.lambda = j["lambda"].get<double>();
            }
        }
        if (j.contains("activation")) c.activation = parse_penalty_activation(j["activation"].get<std::string>());
        if (j.contains("record_runtime")) c.record_runtime = j["record_runtime"].get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("config: ") + e.what());
    }
}

struct Dataset {
    std::string name;
    SeriesMatrix vstar;
    std::optional<std::vector<double>> rho;
    std::vector<std::string> warnings;
};

/// Ground truth and rho thresholds for the configured dataset: simulated with
/// history for synthetic data, else read from CSV.
inline Dataset load_dataset(const ExperimentConfig& c) {
    Dataset d;
    d.name = c.dataset;
    std::optional<SeriesMatrix> history;
    if (c.dataset == "synthetic") {
        SyntheticSpec spec = c.synthetic;
        spec.with_history = true;
        SyntheticData data = matern_mixture(spec);
        d.vstar = std::move(data.vstar);
        history = std::move(data.history);
    } else {
        d.vstar = io::read_matrix_csv(c.matrix_path);
        if (!c.history_path.empty()) history = io::read_matrix_csv(c.history_path);
    }
    if (!c.rho_path.empty()) {
        d.rho = io::read_rho_csv(c.rho_path);
    } else if (history) {
        if (history->cols() != d.vstar.cols()) throw DimensionError("history and ground truth column counts differ");
        auto est = estimate_rho(*history);
        for (Index n : est.zero_columns) d.warnings.push_back("column " + std::to_string(n + 1) + " has zero history; rho set to 0");
        d.rho = std::move(est.rho);
    }
    if (d.rho && static_cast<Index>(d.rho->size()) != d.vstar.cols()) {
        throw DimensionError("rho has " + std::to_string(d.rho->size()) + " entries for " +
                             std::to_string(d.vstar.cols()) + " columns");
    }
    return d;
}

struct SweepResult {
    std::string dataset;
    SchemeKind scheme = SchemeKind::periodic;
    std::size_t level = 0;
    double rate = 0.0;
    Method method = Method::unpenalized;
    std::optional<UpdateMethod> update;
    Index rank = 0;  ///< 0 for the interpolation baseline
    int repeat = 0;
    std::uint64_t seed = 0;
    double error = 0.0;
    double runtime = 0.0;
    bool converged = true;
    double min_entry = 0.0;
    std::string status = "ok";
};

/// Sampling rate of a level: 1/p for periodic schemes, the configured rate otherwise.
inline double level_rate(const ExperimentConfig& c, SchemeKind k, std::size_t level) {
    return k == SchemeKind::periodic ? 1.0 / static_cast<double>(c.intervals[level]) : c.rates[level];
}

inline std::uint64_t cell_seed(std::uint64_t seed, SchemeKind k, std::size_t level, int repeat) {
    const std::uint64_t key = (k == SchemeKind::periodic ? 0ULL : 1000ULL) + level;
    return repeat_seed(derive_seed(seed, key), repeat);
}

inline AggregationScheme draw_scheme(const ExperimentConfig& c, SchemeKind k, std::size_t level, Index periods,
                                     Index series, std::uint64_t seed) {
    Rng rng(seed);
    return k == SchemeKind::periodic ? periodic_scheme(periods, series, c.intervals[level], rng)
                                     : random_scheme(periods, series, c.rates[level], rng);
}

inline double resolve_lambda(const ExperimentConfig& c, const std::vector<double>& rho, Index periods) {
    return c.lambda ? *c.lambda : lambda_heuristic(rho, periods);
}

/// Runs the whole matrix. Rows come back in a fixed order: scheme, level,
/// repeat, method, update, rank.
inline std::vector<SweepResult> run_sweep(const ExperimentConfig& c, const Dataset& data) {
    c.validate();
    const Index periods = data.vstar.rows();
    const Index series = data.vstar.cols();
    const bool penalized = std::find(c.methods.begin(), c.methods.end(), Method::penalized) != c.methods.end();
    std::optional<PenaltyConfig> penalty;
    if (penalized) {
        if (!data.rho) throw ParameterError("penalized method needs rho thresholds (history or rho file)");
        penalty = PenaltyConfig{*data.rho, resolve_lambda(c, *data.rho, periods), c.activation};
    }

    struct Cell {
        SchemeKind kind;
        std::size_t level;
        int repeat;
        std::uint64_t seed;
        std::optional<Observations> obs;
        std::string error;
    };
    std::vector<Cell> cells;
    for (SchemeKind k : c.schemes)
        for (std::size_t l = 0; l < c.levels(); ++l)
            for (int r = 0; r < c.repeats; ++r) cells.push_back(Cell{k, l, r, cell_seed(c.seed, k, l, r), {}, {}});
    for (Cell& cell : cells) {
        try {
            cell.obs = observe(draw_scheme(c, cell.kind, cell.level, periods, series, cell.seed), data.vstar);
        } catch (const Error& e) {
            cell.error = e.what();
        }
    }

    std::vector<SweepResult> results;
    std::vector<std::size_t> cell_of;
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        const Cell& cell = cells[ci];
        SweepResult base;
        base.dataset = data.name;
        base.scheme = cell.kind;
        base.level = cell.level;
        base.rate = level_rate(c, cell.kind, cell.level);
        base.repeat = cell.repeat;
        for (Method m : c.methods) {
            base.method = m;
            if (m == Method::interpolation) {
                base.update.reset();
                base.rank = 0;
                base.seed = cell.seed;
                results.push_back(base);
                cell_of.push_back(ci);
                continue;
            }
            for (UpdateMethod u : c.updates) {
                for (Index k : c.ranks) {
                    base.update = u;
                    base.rank = k;
                    base.seed = init_seed(cell.seed, k);
                    results.push_back(base);
                    cell_of.push_back(ci);
                }
            }
        }
    }

    auto run_one = [&](std::size_t i) {
        SweepResult& row = results[i];
        const Cell& cell = cells[cell_of[i]];
        if (!cell.obs) {
            row.status = "error: " + cell.error;
            row.converged = false;
            return;
        }
        const auto started = std::chrono::steady_clock::now();
        try {
            if (row.method == Method::interpolation) {
                const SeriesMatrix v = interpolation_baseline(*cell.obs);
                row.error = normalized_error(v, data.vstar);
                row.min_entry = v.minCoeff();
            } else {
                RecoveryOptions o;
                o.rank = row.rank;
                o.update = *row.update;
                o.hals_sweeps = c.hals_sweeps;
                o.nesterov_inner = c.nesterov_inner;
                o.epsilon_scale = c.epsilon_scale;
                o.max_iters = c.max_iters;
                o.seed = row.seed;
                if (row.method == Method::penalized) o.penalty = penalty;
                const RecoveryReport rep = o.penalty ? recover_penalized(*cell.obs, o) : recover(*cell.obs, o);
                row.error = normalized_error(rep.v, data.vstar);
                row.converged = rep.converged;
                row.min_entry = rep.min_entry;
            }
        } catch (const Error& e) {
            row.status = std::string("error: ") + e.what();
            row.converged = false;
        }
        row.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    };

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < results.size(); i = next++) run_one(i);
    };
    const int jobs = std::max(1, std::min<int>(c.jobs, static_cast<int>(results.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return results;
}

struct SummaryRow {
    std::string dataset;
    SchemeKind scheme = SchemeKind::periodic;
    std::size_t level = 0;
    double rate = 0.0;
    Method method = Method::unpenalized;
    std::optional<UpdateMethod> update;
    Index best_rank = 0;
    double mean_error = 0.0;  ///< best-rank mean over repeats (mean over repeats for interpolation)
    int repeats = 0;
};

/// Per (scheme, level, method, update): mean error over repeats for every
/// rank, then the oracle-best rank (ties to the smaller rank). Failed rows
/// are left out.
inline std::vector<SummaryRow> summarize(const std::vector<SweepResult>& results) {
    using Key = std::tuple<int, std::size_t, int, int>;
    struct Acc {
        SummaryRow row;
        std::map<Index, std::pair<double, int>> by_rank;
    };
    std::map<Key, Acc> groups;
    std::vector<Key> order;
    for (const auto& r : results) {
        if (r.status != "ok") continue;
        const Key key{static_cast<int>(r.scheme), r.level, static_cast<int>(r.method),
                      r.update ? static_cast<int>(*r.update) : -1};
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted) {
            order.push_back(key);
            it->second.row = SummaryRow{r.dataset, r.scheme, r.level, r.rate, r.method, r.update, 0, 0.0, 0};
        }
        auto& [sum, count] = it->second.by_rank[r.rank];
        sum += r.error;
        ++count;
    }
    std::vector<SummaryRow> out;
    for (const Key& key : order) {
        Acc& acc = groups[key];
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [rank, sc] : acc.by_rank) {
            const double mean = sc.first / sc.second;
            if (mean < best) {
                best = mean;
                acc.row.best_rank = rank;
                acc.row.repeats = sc.second;
            }
        }
        acc.row.mean_error = best;
        out.push_back(acc.row);
    }
    return out;
}

inline std::string format_rate(double rate) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", rate);
    return buf;
}

inline void write_results_csv(std::ostream& out, const std::vector<SweepResult>& rows, bool record_runtime) {
    out << "dataset,scheme,rate,method,update,K,repeat,seed,error,runtime,converged,min_entry,status\n";
    for (const auto& r : rows) {
        out << r.dataset << ',' << to_string(r.scheme) << ',' << format_rate(r.rate) << ',' << to_string(r.method)
            << ',' << (r.update ? to_string(*r.update) : "") << ',' << (r.rank > 0 ? std::to_string(r.rank) : "")
            << ',' << r.repeat + 1 << ',' << r.seed << ',' << (r.status == "ok" ? io::format_real(r.error) : "")
            << ',' << (record_runtime ? io::format_real(r.runtime) : "") << ',' << (r.converged ? 1 : 0) << ','
            << io::format_real(r.min_entry) << ',';
        // status may contain commas
        std::string status = r.status;
        std::replace(status.begin(), status.end(), ',', ';');
        out << status << '\n';
    }
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
    out << "dataset,scheme,rate,method,update,best_K,mean_error,repeats\n";
    for (const auto& r : rows) {
        out << r.dataset << ',' << to_string(r.scheme) << ',' << format_rate(r.rate) << ',' << to_string(r.method)
            << ',' << (r.update ? to_string(*r.update) : "") << ','
            << (r.best_rank > 0 ? std::to_string(r.best_rank) : "") << ',' << io::format_real(r.mean_error) << ','
            << r.repeats << '\n';
    }
}

}  // namespace aggnmf
