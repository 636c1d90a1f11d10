// aggnmf: recover fine-grained nonnegative time series from temporal aggregates.
//
//   aggnmf simulate  --out DIR
//   aggnmf sample    --matrix truth.csv --scheme periodic --interval 7 --out DIR
//   aggnmf recover   --observations obs.csv --scheme-file scheme.csv --rank 5 --out DIR
//   aggnmf evaluate  --recovered V.csv --truth truth.csv
//   aggnmf sweep     --config sweep.json --out DIR
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.

#include "aggnmf/datagen.hpp"
#include "aggnmf/harness.hpp"
#include "aggnmf/io.hpp"
#include "aggnmf/measurement.hpp"
#include "aggnmf/recovery.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace aggnmf;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw InputError("cannot create directory '" + dir + "': " + ec.message());
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
}

/// "2-20", "2:20" or "2,5,10" (and mixtures such as "2,4-6").
std::vector<Index> parse_ranks(const std::string& spec) {
    std::vector<Index> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto dash = item.find_first_of("-:");
        try {
            if (dash == std::string::npos) {
                out.push_back(std::stol(item));
            } else {
                const long lo = std::stol(item.substr(0, dash));
                const long hi = std::stol(item.substr(dash + 1));
                if (hi < lo) throw ParameterError("empty rank range '" + item + "'");
                for (long k = lo; k <= hi; ++k) out.push_back(k);
            }
        } catch (const std::logic_error&) {
            throw ParameterError("cannot parse rank list '" + spec + "'");
        }
    }
    if (out.empty()) throw ParameterError("empty rank list");
    return out;
}

std::optional<double> parse_lambda(const std::string& s) {
    if (s == "auto") return std::nullopt;
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size() || !(v >= 0.0)) throw std::invalid_argument(s);
        return v;
    } catch (const std::logic_error&) {
        throw ParameterError("--lambda must be 'auto' or a nonnegative number, got '" + s + "'");
    }
}

// simulate ---------------------------------------------------------------

struct SimulateArgs {
    std::string out = ".";
    SyntheticSpec spec;
};

int cmd_simulate(const SimulateArgs& a) {
    SyntheticSpec spec = a.spec;
    spec.with_history = true;
    spec.validate();
    const SyntheticData data = matern_mixture(spec);
    const RhoEstimate rho = estimate_rho(data.history);
    ensure_dir(a.out);
    io::write_matrix_csv(join(a.out, "truth.csv"), data.vstar);
    io::write_matrix_csv(join(a.out, "history.csv"), data.history);
    io::write_matrix_csv(join(a.out, "w_true.csv"), data.w_true);
    io::write_matrix_csv(join(a.out, "h_true.csv"), data.h_true);
    io::write_rho_csv(join(a.out, "rho.csv"), rho.rho);
    json m;
    m["command"] = "simulate";
    m["periods"] = spec.periods;
    m["series"] = spec.series;
    m["rank"] = spec.rank;
    m["kernel"] = {{"family", "matern"}, {"nu", spec.nu}, {"length_scale", spec.length_scale}, {"variance", spec.variance}};
    m["mixture_weights"] = "iid uniform(0,1)";
    m["path_shift"] = "each path shifted by minus its minimum over history and truth periods";
    m["history"] = "first T of 2T simulated periods; truth is the last T";
    m["seed"] = spec.seed;
    m["zero_history_columns"] = rho.zero_columns.size();
    write_json(join(a.out, "manifest.json"), m);
    std::cout << "wrote " << spec.periods << "x" << spec.series << " ground truth, history and rho to " << a.out << '\n';
    return 0;
}

// sample -----------------------------------------------------------------

struct SampleArgs {
    std::string matrix;
    std::string scheme = "periodic";
    Index interval = 0;
    double rate = 0.0;
    std::uint64_t seed = 1;
    std::string out = ".";
};

int cmd_sample(const SampleArgs& a) {
    const Matrix x = io::read_matrix_csv(a.matrix);
    Rng rng(a.seed);
    AggregationScheme scheme;
    if (parse_scheme_kind(a.scheme) == SchemeKind::periodic) {
        if (a.interval < 1) throw ParameterError("periodic sampling needs --interval >= 1");
        scheme = periodic_scheme(x.rows(), x.cols(), a.interval, rng);
    } else {
        scheme = random_scheme(x.rows(), x.cols(), a.rate, rng);
    }
    const Vector b = apply(scheme, x);
    ensure_dir(a.out);
    io::write_scheme_csv(join(a.out, "scheme.csv"), scheme);
    io::write_observations_csv(join(a.out, "observations.csv"), b);
    std::cout << "segments=" << scheme.size() << " coverage=" << scheme.coverage() << '\n';
    return 0;
}

// recover ----------------------------------------------------------------

struct RecoverArgs {
    std::string observations;
    std::string scheme_file;
    Index periods = 0;
    Index series = 0;
    Index rank = 1;
    std::string update = "hals";
    bool penalized = false;
    std::string rho_file;
    std::string lambda = "auto";
    std::string activation = "per-iteration";
    std::string storage = "dense";
    int max_iters = 500;
    double epsilon_scale = 1e-6;
    int hals_sweeps = 1;
    int nesterov_inner = 5;
    std::uint64_t seed = 1;
    std::string truth;
    std::string out = ".";
};

int cmd_recover(const RecoverArgs& a) {
    if (a.penalized && a.rho_file.empty()) throw ParameterError("--penalized requires --rho-file");
    const AggregationScheme scheme = io::read_scheme_csv(a.scheme_file, a.periods, a.series);
    const Observations b(scheme, io::read_observations_csv(a.observations));

    RecoveryOptions o;
    o.rank = a.rank;
    o.update = parse_update_method(a.update);
    o.max_iters = a.max_iters;
    o.epsilon_scale = a.epsilon_scale;
    o.hals_sweeps = a.hals_sweeps;
    o.nesterov_inner = a.nesterov_inner;
    o.seed = a.seed;
    if (a.penalized) {
        PenaltyConfig p;
        p.rho = io::read_rho_csv(a.rho_file);
        if (static_cast<Index>(p.rho.size()) != scheme.series()) {
            throw DimensionError("rho file has " + std::to_string(p.rho.size()) + " columns, scheme has " +
                                 std::to_string(scheme.series()));
        }
        const auto fixed = parse_lambda(a.lambda);
        p.lambda = fixed ? *fixed : lambda_heuristic(p.rho, scheme.periods());
        p.activation = parse_penalty_activation(a.activation);
        if (a.storage == "dense") p.storage = ProjectorStorage::dense;
        else if (a.storage == "factored") p.storage = ProjectorStorage::factored;
        else throw ParameterError("--storage must be dense or factored");
        o.penalty = std::move(p);
    }

    const RecoveryReport rep = a.penalized ? recover_penalized(b, o) : recover(b, o);

    ensure_dir(a.out);
    // Penalized projections may leave negative entries; the exported V is clipped.
    const Index clipped = (rep.v.array() < 0.0).count();
    io::write_matrix_csv(join(a.out, "V.csv"), rep.v.cwiseMax(0.0));
    io::write_matrix_csv(join(a.out, "W.csv"), rep.w);
    io::write_matrix_csv(join(a.out, "H.csv"), rep.h);
    io::write_trace_csv(join(a.out, "trace.csv"), rep.trace);

    json m;
    m["command"] = "recover";
    m["options"] = {{"rank", o.rank},
                    {"update", to_string(o.update)},
                    {"hals_sweeps", o.hals_sweeps},
                    {"nesterov_inner", o.nesterov_inner},
                    {"epsilon_scale", o.epsilon_scale},
                    {"max_iters", o.max_iters},
                    {"penalized", a.penalized},
                    {"activation", a.penalized ? a.activation : ""},
                    {"storage", a.penalized ? a.storage : ""},
                    {"initialization", "iid uniform(0,1] scaled by sqrt(mean(b)/(K*mean segment length))"}};
    m["seed"] = o.seed;
    m["lambda"] = rep.lambda;
    m["periods"] = scheme.periods();
    m["series"] = scheme.series();
    m["segments"] = scheme.size();
    m["coverage"] = scheme.coverage();
    m["iterations"] = rep.iterations;
    m["converged"] = rep.converged;
    m["epsilon"] = rep.epsilon;
    m["final_kkt"] = rep.trace.back().kkt;
    m["final_objective"] = rep.trace.back().objective;
    m["max_constraint_violation"] = rep.trace.back().constraint_violation;
    m["min_entry"] = rep.min_entry;
    m["clipped_entries"] = clipped;
    m["runtime_seconds"] = rep.wall_seconds;
    m["warnings"] = rep.warnings;
    if (!a.truth.empty()) {
        const Matrix truth = io::read_matrix_csv(a.truth);
        m["normalized_error"] = normalized_error(rep.v.cwiseMax(0.0), truth);
    }
    write_json(join(a.out, "manifest.json"), m);
    std::cout << "iterations=" << rep.iterations << " converged=" << (rep.converged ? "yes" : "no")
              << " objective=" << io::format_real(rep.trace.back().objective);
    if (m.contains("normalized_error")) std::cout << " normalized_error=" << io::format_real(m["normalized_error"]);
    std::cout << '\n';
    for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
    return 0;
}

// evaluate ---------------------------------------------------------------

int cmd_evaluate(const std::string& recovered, const std::string& truth) {
    const Matrix v = io::read_matrix_csv(recovered);
    const Matrix vstar = io::read_matrix_csv(truth);
    std::cout << "normalized_error=" << io::format_real(normalized_error(v, vstar)) << '\n';
    return 0;
}

// sweep ------------------------------------------------------------------

int cmd_sweep(ExperimentConfig cfg, const std::string& out) {
    cfg.validate();
    const auto started = std::chrono::steady_clock::now();
    const Dataset data = load_dataset(cfg);
    const auto rows = run_sweep(cfg, data);
    const auto summary = summarize(rows);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    ensure_dir(out);
    {
        std::ofstream f(join(out, "results.csv"));
        if (!f) throw InputError("cannot write results.csv");
        write_results_csv(f, rows, cfg.record_runtime);
    }
    {
        std::ofstream f(join(out, "summary.csv"));
        if (!f) throw InputError("cannot write summary.csv");
        write_summary_csv(f, summary);
    }
    json m;
    m["command"] = "sweep";
    m["config"] = to_json(cfg);
    m["rows"] = rows.size();
    m["failed_rows"] = std::count_if(rows.begin(), rows.end(), [](const SweepResult& r) { return r.status != "ok"; });
    if (data.rho) {
        const bool penalized = std::find(cfg.methods.begin(), cfg.methods.end(), Method::penalized) != cfg.methods.end();
        if (penalized) m["lambda"] = resolve_lambda(cfg, *data.rho, data.vstar.rows());
    }
    m["runtime_seconds"] = seconds;
    m["warnings"] = data.warnings;
    write_json(join(out, "manifest.json"), m);
    std::cout << "rows=" << rows.size() << " runtime=" << seconds << "s\n";
    for (const auto& r : summary) {
        std::cout << to_string(r.scheme) << " rate=" << format_rate(r.rate) << ' ' << to_string(r.method);
        if (r.update) std::cout << '/' << to_string(*r.update) << " K=" << r.best_rank;
        std::cout << " error=" << r.mean_error << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Recover nonnegative time series from temporal aggregates"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic Matern-mixture dataset with history");
    simulate->add_option("--out", sim.out, "Output directory");
    simulate->add_option("--periods", sim.spec.periods, "T");
    simulate->add_option("--series", sim.spec.series, "N");
    simulate->add_option("--rank", sim.spec.rank, "Number of latent paths K*");
    simulate->add_option("--nu", sim.spec.nu, "Matern smoothness");
    simulate->add_option("--length-scale", sim.spec.length_scale, "Matern length scale in periods");
    simulate->add_option("--variance", sim.spec.variance, "Matern variance");
    simulate->add_option("--seed", sim.spec.seed, "Random seed");

    SampleArgs smp;
    auto* sample = app.add_subcommand("sample", "Draw a sampling scheme and aggregate a matrix");
    sample->add_option("--matrix", smp.matrix, "Matrix CSV")->required();
    sample->add_option("--scheme", smp.scheme, "periodic or random");
    sample->add_option("--interval", smp.interval, "Period p of periodic sampling");
    sample->add_option("--rate", smp.rate, "Sampling rate of random sampling");
    sample->add_option("--seed", smp.seed, "Random seed");
    sample->add_option("--out", smp.out, "Output directory");

    RecoverArgs rec;
    auto* recover_cmd = app.add_subcommand("recover", "Recover the full matrix from aggregates");
    recover_cmd->add_option("--observations", rec.observations, "Observations CSV")->required();
    recover_cmd->add_option("--scheme-file", rec.scheme_file, "Scheme CSV")->required();
    recover_cmd->add_option("--periods", rec.periods, "T, when the scheme file does not state it");
    recover_cmd->add_option("--series", rec.series, "N, when the scheme file does not state it");
    recover_cmd->add_option("--rank", rec.rank, "Rank K");
    recover_cmd->add_option("--update", rec.update, "hals or nesterov");
    recover_cmd->add_flag("--penalized", rec.penalized, "Use the autocorrelation penalty");
    recover_cmd->add_option("--rho-file", rec.rho_file, "Per-column rho CSV");
    recover_cmd->add_option("--lambda", rec.lambda, "auto or a value");
    recover_cmd->add_option("--activation", rec.activation, "per-iteration or always");
    recover_cmd->add_option("--storage", rec.storage, "dense or factored column projectors");
    recover_cmd->add_option("--max-iters", rec.max_iters, "Outer iteration cap");
    recover_cmd->add_option("--epsilon-scale", rec.epsilon_scale, "Stop when KKT <= scale * initial KKT");
    recover_cmd->add_option("--hals-sweeps", rec.hals_sweeps, "HALS sweeps per outer iteration");
    recover_cmd->add_option("--nesterov-inner", rec.nesterov_inner, "Nesterov steps per outer iteration");
    recover_cmd->add_option("--seed", rec.seed, "Initialization seed");
    recover_cmd->add_option("--truth", rec.truth, "Ground truth CSV for the final error");
    recover_cmd->add_option("--out", rec.out, "Output directory");

    std::string eval_recovered, eval_truth;
    auto* evaluate = app.add_subcommand("evaluate", "Normalized Frobenius error of a recovered matrix");
    evaluate->add_option("--recovered", eval_recovered, "Recovered matrix CSV")->required();
    evaluate->add_option("--truth", eval_truth, "Ground truth CSV")->required();

    std::string sweep_config, sweep_out = "sweep", sweep_ranks, sweep_lambda, sweep_matrix, sweep_history, sweep_rho,
                              sweep_activation;
    std::vector<std::string> sweep_schemes, sweep_updates, sweep_methods;
    std::vector<Index> sweep_intervals;
    std::vector<double> sweep_rates;
    std::optional<int> sweep_repeats, sweep_jobs, sweep_max_iters;
    std::optional<std::uint64_t> sweep_seed;
    std::optional<double> sweep_eps;
    bool sweep_runtime = false;
    auto* sweep = app.add_subcommand("sweep", "Run the experiment matrix and write results.csv / summary.csv");
    sweep->add_option("--config", sweep_config, "JSON config file");
    sweep->add_option("--out", sweep_out, "Output directory");
    sweep->add_option("--ranks", sweep_ranks, "Rank list, e.g. 2-20 or 5,10,20");
    sweep->add_option("--scheme", sweep_schemes, "periodic and/or random");
    sweep->add_option("--update", sweep_updates, "hals and/or nesterov");
    sweep->add_option("--methods", sweep_methods, "unpenalized, penalized, interpolation");
    sweep->add_option("--interval", sweep_intervals, "Periodic intervals");
    sweep->add_option("--rate", sweep_rates, "Random sampling rates (one per interval)");
    sweep->add_option("--repeats", sweep_repeats, "Repeats per cell");
    sweep->add_option("--jobs", sweep_jobs, "Worker threads");
    sweep->add_option("--seed", sweep_seed, "Sweep seed");
    sweep->add_option("--max-iters", sweep_max_iters, "Outer iteration cap");
    sweep->add_option("--epsilon-scale", sweep_eps, "KKT stopping scale");
    sweep->add_option("--lambda", sweep_lambda, "auto or a value");
    sweep->add_option("--activation", sweep_activation, "per-iteration or always");
    sweep->add_option("--matrix", sweep_matrix, "Ground truth CSV instead of synthetic data");
    sweep->add_option("--history", sweep_history, "History CSV for rho estimation");
    sweep->add_option("--rho-file", sweep_rho, "Per-column rho CSV");
    sweep->add_flag("--record-runtime", sweep_runtime, "Fill the runtime column (results are then not byte-reproducible)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*simulate) return cmd_simulate(sim);
        if (*sample) return cmd_sample(smp);
        if (*recover_cmd) return cmd_recover(rec);
        if (*evaluate) return cmd_evaluate(eval_recovered, eval_truth);
        if (*sweep) {
            ExperimentConfig cfg;
            if (!sweep_config.empty()) {
                std::ifstream in(sweep_config);
                if (!in) throw ParameterError("cannot open config '" + sweep_config + "'");
                json j;
                try {
                    in >> j;
                } catch (const json::exception& e) {
                    throw ParameterError(std::string("config: ") + e.what());
                }
                apply_json(j, cfg);
            }
            if (!sweep_ranks.empty()) cfg.ranks = parse_ranks(sweep_ranks);
            if (!sweep_schemes.empty()) {
                cfg.schemes.clear();
                for (const auto& s : sweep_schemes) cfg.schemes.push_back(parse_scheme_kind(s));
            }
            if (!sweep_updates.empty()) {
                cfg.updates.clear();
                for (const auto& u : sweep_updates) cfg.updates.push_back(parse_update_method(u));
            }
            if (!sweep_methods.empty()) {
                cfg.methods.clear();
                for (const auto& m : sweep_methods) cfg.methods.push_back(parse_method(m));
            }
            if (!sweep_intervals.empty()) cfg.intervals = sweep_intervals;
            if (!sweep_rates.empty()) cfg.rates = sweep_rates;
            if (sweep_repeats) cfg.repeats = *sweep_repeats;
            if (sweep_jobs) cfg.jobs = *sweep_jobs;
            if (sweep_seed) {
                cfg.seed = *sweep_seed;
                cfg.synthetic.seed = *sweep_seed;
            }
            if (sweep_max_iters) cfg.max_iters = *sweep_max_iters;
            if (sweep_eps) cfg.epsilon_scale = *sweep_eps;
            if (!sweep_lambda.empty()) cfg.lambda = parse_lambda(sweep_lambda);
            if (!sweep_activation.empty()) cfg.activation = parse_penalty_activation(sweep_activation);
            if (!sweep_matrix.empty()) {
                cfg.dataset = fs::path(sweep_matrix).stem().string();
                cfg.matrix_path = sweep_matrix;
            }
            if (!sweep_history.empty()) cfg.history_path = sweep_history;
            if (!sweep_rho.empty()) cfg.rho_path = sweep_rho;
            if (sweep_runtime) cfg.record_runtime = true;
            return cmd_sweep(cfg, sweep_out);
        }
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
    return 0;
}
