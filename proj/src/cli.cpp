#include "cmebal/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "cmebal/balred.hpp"
#include "cmebal/io.hpp"
#include "cmebal/network.hpp"
#include "cmebal/sim.hpp"
#include "cmebal/statespace.hpp"

namespace cmebal::cli {

namespace fs = std::filesystem;

namespace {

/// Error raised inside a named pipeline stage.
class StageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <class F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        const std::string label = std::string(stage) + ": ";
        const std::string what = e.what();
        throw StageError(what.starts_with(label) ? what : label + what);
    }
}

struct Pipeline {
    std::shared_ptr<const ReactionNetwork> network;
    std::shared_ptr<const StateSpace> space;
    Generator gen;
    OutputMatrix out;
    Vector p0;
};

Pipeline build(const RunConfig& cfg, const ReactionNetwork& net, bool need_output) {
    Pipeline p;
    p.network = std::make_shared<const ReactionNetwork>(net);
    p.space = staged("enumerate", [&] {
        EnumerateOptions eo;
        eo.max_states = cfg.max_states;
        return std::make_shared<const StateSpace>(enumerate_states(net, eo));
    });
    p.gen = staged("generator", [&] { return build_generator(net, p.space); });
    p.p0 = point_mass(p.space->size());
    if (need_output) {
        p.out = staged("output", [&] {
            OutputSelector sel;
            for (const auto& s : cfg.select) {
                sel.rows.push_back(parse_selector_row(s, net));
                sel.labels.push_back(s);
            }
            return build_output(sel, *p.space);
        });
    }
    return p;
}

struct Reduction {
    BalancedSystem bal;
    ReducedModel model;
    bool suggested = false;
};

Reduction reduce_pipeline(const RunConfig& cfg, const Pipeline& p) {
    Reduction r;
    const StableSystem sys = staged("stabilize", [&] { return stabilize(p.gen, p.out, p.p0); });
    r.bal = staged("balance", [&] { return balance(sys); });
    std::size_t k = 0;
    if (cfg.order) {
        k = std::min(*cfg.order, r.bal.q());
    } else {
        k = suggest_order(r.bal, cfg.ratio);
        r.suggested = true;
    }
    r.model = staged("reduce", [&] { return reduce(r.bal, k, parse_method(cfg.method)); });
    return r;
}

std::vector<double> grid_of(const RunConfig& cfg) {
    return time_grid(cfg.t_start, cfg.t_stop, cfg.t_count, cfg.t_spacing == "log" ? Spacing::Log : Spacing::Linear);
}

ReactionNetwork load(const RunConfig& cfg) {
    return staged("parse", [&] { return load_network(cfg.network); });
}

template <class F>
void write_with(const fs::path& path, F&& f) {
    std::ostringstream os;
    f(os);
    io::write_file(path, os.str());
}

nlohmann::json hsv_json(const Vector& v, std::size_t limit) {
    auto out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size() && static_cast<std::size_t>(i) < limit; ++i) out.push_back(v(i));
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void validate(const RunConfig& cfg) {
    static const std::vector<std::string> commands = {"enumerate", "reduce", "simulate", "ssa", "bench"};
    if (std::find(commands.begin(), commands.end(), cfg.command) == commands.end())
        throw std::invalid_argument("unknown subcommand '" + cfg.command + "'");
    if (cfg.network.empty()) throw std::invalid_argument("--network is required");
    if (cfg.output_dir.empty()) throw std::invalid_argument("--output-dir must not be empty");
    if (cfg.order && *cfg.order == 0) throw std::invalid_argument("--order must be >= 1");
    if (!(cfg.ratio > 0.0 && cfg.ratio < 1.0)) throw std::invalid_argument("--ratio must lie in (0, 1)");
    parse_method(cfg.method);
    if (cfg.t_spacing != "linear" && cfg.t_spacing != "log")
        throw std::invalid_argument("--t-spacing must be 'linear' or 'log'");
    if (!std::isfinite(cfg.t_start) || !std::isfinite(cfg.t_stop) || cfg.t_start < 0.0)
        throw std::invalid_argument("--t-start/--t-stop must be finite, t-start >= 0");
    if (cfg.t_count == 0) throw std::invalid_argument("--t-count must be >= 1");
    if (cfg.t_count > 1 && !(cfg.t_stop > cfg.t_start)) throw std::invalid_argument("--t-stop must exceed --t-start");
    if (cfg.t_spacing == "log" && !(cfg.t_start > 0.0)) throw std::invalid_argument("log spacing needs --t-start > 0");
    if (cfg.runs == 0) throw std::invalid_argument("--runs must be >= 1");
    if (!(cfg.eps > 0.0 && cfg.eps < 1.0)) throw std::invalid_argument("--eps must lie in (0, 1)");
    if (cfg.reps == 0) throw std::invalid_argument("--reps must be >= 1");
    if (cfg.max_states == 0) throw std::invalid_argument("--max-states must be >= 1");
    for (int c : cfg.counts)
        if (c < 0) throw std::invalid_argument("--counts entries must be non-negative");
    if ((cfg.command == "reduce" || cfg.command == "simulate") && cfg.select.empty())
        throw std::invalid_argument("--select is required for " + cfg.command);
    if (cfg.command == "bench") {
        if (cfg.counts.empty()) throw std::invalid_argument("--counts is required for bench");
        if (cfg.select.empty()) throw std::invalid_argument("--select is required for bench");
    }
}

nlohmann::json to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["command"] = cfg.command;
    j["network"] = cfg.network;
    j["output_dir"] = cfg.output_dir;
    j["select"] = cfg.select;
    j["order"] = cfg.order ? nlohmann::json(*cfg.order) : nlohmann::json(nullptr);
    j["ratio"] = cfg.ratio;
    j["method"] = cfg.method;
    j["t_start"] = cfg.t_start;
    j["t_stop"] = cfg.t_stop;
    j["t_count"] = cfg.t_count;
    j["t_spacing"] = cfg.t_spacing;
    j["seed"] = cfg.seed;
    j["runs"] = cfg.runs;
    j["eps"] = cfg.eps;
    j["counts"] = cfg.counts;
    j["vary"] = cfg.vary;
    j["reps"] = cfg.reps;
    j["max_states"] = cfg.max_states;
    j["skip_full"] = cfg.skip_full;
    return j;
}

int cmd_enumerate(const RunConfig& cfg, std::ostream& out) {
    const ReactionNetwork net = load(cfg);
    const Pipeline p = build(cfg, net, false);
    const fs::path dir(cfg.output_dir);
    write_with(dir / "states.csv", [&](std::ostream& os) { write_states_csv(os, *p.space, net); });
    write_with(dir / "generator.mtx", [&](std::ostream& os) { write_matrix_market(os, p.gen.matrix); });
    out << "w=" << p.space->size() << " nnz=" << p.gen.matrix.nonZeros() << '\n';
    return 0;
}

int cmd_reduce(const RunConfig& cfg, std::ostream& out) {
    const ReactionNetwork net = load(cfg);
    const Pipeline p = build(cfg, net, true);
    const auto t0 = std::chrono::steady_clock::now();
    const Reduction r = reduce_pipeline(cfg, p);
    const double elapsed = seconds_since(t0);
    const fs::path dir(cfg.output_dir);
    io::write_file(dir / "model.txt", serialize_model(r.model));
    write_with(dir / "hsv.csv", [&](std::ostream& os) { io::write_hsv_csv(os, r.bal.hsv); });

    nlohmann::json report;
    report["config"] = to_json(cfg);
    report["states"] = p.space->size();
    report["q"] = r.bal.q();
    report["k"] = r.model.k;
    report["k_suggested"] = r.suggested;
    report["method"] = std::string(to_string(r.model.method));
    report["bound"] = r.model.bound;
    report["hsv_head"] = hsv_json(r.bal.hsv, 32);
    report["empty_output_rows"] = p.out.empty_rows;
    report["reduction_seconds"] = elapsed;

    std::ostringstream txt;
    txt << "states " << p.space->size() << '\n'
        << "q " << r.bal.q() << '\n'
        << "k " << r.model.k << (r.suggested ? " (suggested)" : "") << '\n'
        << "method " << to_string(r.model.method) << '\n'
        << "error_bound " << io::format_double(r.model.bound) << '\n'
        << "config " << to_json(cfg).dump() << '\n';
    io::write_file(dir / "report.txt", txt.str());
    io::write_json(dir / "report.json", report);
    out << "w=" << p.space->size() << " q=" << r.bal.q() << " k=" << r.model.k
        << " bound=" << io::format_double(r.model.bound) << '\n';
    return 0;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
    const ReactionNetwork net = load(cfg);
    const Pipeline p = build(cfg, net, true);
    const Reduction r = reduce_pipeline(cfg, p);
    const auto times = grid_of(cfg);
    const fs::path dir(cfg.output_dir);

    Trajectory red = staged("solve_reduced", [&] { return solve_reduced(r.model, times); });
    red.labels = p.out.labels;
    write_with(dir / "reduced.csv", [&](std::ostream& os) { io::write_trajectory_csv(os, red); });
    io::write_file(dir / "model.txt", serialize_model(r.model));

    nlohmann::json meta;
    meta["config"] = to_json(cfg);
    meta["source"] = {std::string(to_string(Source::CME)), std::string(to_string(Source::Reduced))};
    meta["states"] = p.space->size();
    meta["k"] = r.model.k;
    meta["q"] = r.bal.q();
    meta["bound"] = r.model.bound;
    meta["tolerances"] = {{"stability_margin", linalg::default_tolerances().stability_margin},
                          {"hsv_cutoff", linalg::default_tolerances().hsv_cutoff},
                          {"dense_limit", linalg::default_tolerances().dense_limit}};
    int code = 0;
    double min_red = red.values.size() ? red.values.minCoeff() : 0.0;
    meta["negative_reduced_output"] = min_red < 0.0;
    meta["min_reduced_output"] = min_red;
    if (!cfg.skip_full) {
        Trajectory full = staged("solve_cme", [&] { return project(solve_cme(p.gen, p.p0, times), p.out); });
        write_with(dir / "full.csv", [&](std::ostream& os) { io::write_trajectory_csv(os, full); });
        const Metrics m = compare(full, red);
        const GainEstimate g = staged("l2_gain", [&] { return realized_l2_gain(p.gen, p.out, p.p0, r.model); });
        // Absolute floor for rounding in the O(1) outputs (relevant when the bound is 0 at k = q).
        const bool ok = g.gain <= r.model.bound * (1.0 + 1e-9) + 1e-12;
        meta["sup_error"] = m.sup;
        meta["sup_error_per_output"] = m.sup_error;
        meta["l2_error_on_grid"] = m.l2;
        meta["l2_gain"] = g.gain;
        meta["l2_gain_horizon"] = g.horizon;
        meta["l2_gain_converged"] = g.converged;
        meta["bound_satisfied"] = ok ? "yes" : "no";
        out << "k=" << r.model.k << " bound=" << io::format_double(r.model.bound)
            << " l2_gain=" << io::format_double(g.gain) << " sup_error=" << io::format_double(m.sup)
            << " bound_satisfied=" << (ok ? "yes" : "no") << '\n';
        if (!ok) code = 3;
    } else {
        out << "k=" << r.model.k << " bound=" << io::format_double(r.model.bound) << '\n';
    }
    io::write_json(dir / "metrics.json", meta);
    return code;
}

int cmd_ssa(const RunConfig& cfg, std::ostream& out) {
    const ReactionNetwork net = load(cfg);
    const auto times = grid_of(cfg);
    const fs::path dir(cfg.output_dir);
    nlohmann::json meta;
    meta["config"] = to_json(cfg);
    meta["source"] = std::string(to_string(Source::SSA));
    meta["seed"] = cfg.seed;
    meta["runs"] = cfg.runs;
    meta["generator"] = std::string(kSsaGenerator);

    if (cfg.runs == 1) {
        const SsaPath path = staged("ssa", [&] { return ssa_path(net, cfg.seed, times.back()); });
        write_with(dir / "ssa_path.csv", [&](std::ostream& os) {
            os << "time";
            for (const auto& s : net.species()) os << ',' << io::csv_field(s.name);
            os << '\n';
            for (std::size_t i = 0; i < path.times.size(); ++i) {
                os << io::format_double(path.times[i]);
                for (int v : path.states[i]) os << ',' << v;
                os << '\n';
            }
        });
        io::write_json(dir / "ssa.json", meta);
        out << "events=" << path.times.size() - 1 << '\n';
        return 0;
    }

    SsaConfig sc;
    sc.seed = cfg.seed;
    sc.runs = cfg.runs;
    sc.record = times;
    sc.threads = cfg.threads;
    const SsaEnsemble ens = staged("ssa", [&] { return ssa_ensemble(net, sc); });
    write_with(dir / "ssa_histogram.csv", [&](std::ostream& os) {
        os << "time";
        for (const auto& s : net.species()) os << ',' << io::csv_field(s.name);
        os << ",probability\n";
        const double inv = 1.0 / static_cast<double>(ens.runs);
        for (std::size_t i = 0; i < ens.times.size(); ++i)
            for (const auto& [state, count] : ens.histograms[i]) {
                os << io::format_double(ens.times[i]);
                for (int v : state) os << ',' << v;
                os << ',' << io::format_double(static_cast<double>(count) * inv) << '\n';
            }
    });

    // Comparison against the exact CME when the space is small enough.
    std::optional<Pipeline> p;
    try {
        RunConfig small = cfg;
        small.max_states = std::min<std::size_t>(cfg.max_states, linalg::default_tolerances().dense_limit);
        p = build(small, net, !cfg.select.empty());
    } catch (const StageError& e) {
        meta["cme_comparison"] = std::string("skipped: ") + e.what();
    }
    if (p) {
        const Matrix emp = empirical_distribution(ens, *p->space);
        const Trajectory exact = staged("solve_cme", [&] { return solve_cme(p->gen, p->p0, times); });
        std::vector<double> tv(times.size());
        for (std::size_t i = 0; i < times.size(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            tv[i] = tv_distance(emp.row(ii).transpose(), exact.values.row(ii).transpose());
        }
        meta["tv_distance"] = tv;
        meta["max_tv_distance"] = *std::max_element(tv.begin(), tv.end());
        if (!cfg.select.empty()) {
            Trajectory e;
            e.times = times;
            e.source = Source::SSA;
            e.labels = p->out.labels;
            e.values = emp * p->out.matrix.transpose();
            write_with(dir / "ssa_outputs.csv", [&](std::ostream& os) { io::write_trajectory_csv(os, e); });
        }
        out << "runs=" << ens.runs << " max_tv=" << io::format_double(meta["max_tv_distance"].get<double>()) << '\n';
    } else {
        out << "runs=" << ens.runs << '\n';
    }
    io::write_json(dir / "ssa.json", meta);
    return 0;
}

int cmd_bench(const RunConfig& cfg, std::ostream& out) {
    const ReactionNetwork base = load(cfg);
    std::vector<std::size_t> vary;
    if (cfg.vary.empty()) {
        for (std::size_t i = 0; i < base.species_count(); ++i)
            if (base.initial_state()[i] > 0) vary.push_back(i);
    } else {
        for (const auto& name : cfg.vary) {
            auto id = base.species_index(name);
            if (!id) throw StageError("bench: unknown species '" + name + "' in --vary");
            vary.push_back(*id);
        }
    }
    const auto times = grid_of(cfg);
    std::ostringstream csv;
    csv << "count,states,k,bound,t_full,t_reduced,eta,note\n";
    out << "count states k t_full t_reduced eta\n";
    nlohmann::json rows = nlohmann::json::array();
    for (int count : cfg.counts) {
        Population init = base.initial_state();
        for (auto i : vary) init[i] = count;
        const ReactionNetwork net = base.with_initial_state(init);
        const Pipeline p = build(cfg, net, true);
        const Reduction r = reduce_pipeline(cfg, p);
        std::vector<double> tf, tr;
        for (std::size_t rep = 0; rep < cfg.reps; ++rep) {
            auto t0 = std::chrono::steady_clock::now();
            const Trajectory full = project(solve_cme(p.gen, p.p0, times), p.out);
            tf.push_back(seconds_since(t0));
            t0 = std::chrono::steady_clock::now();
            const Trajectory red = solve_reduced(r.model, times);
            tr.push_back(seconds_since(t0));
        }
        const Eta eta = speedup_eta(median(tf), median(tr));
        const std::string note = eta.defined ? "hardware-dependent" : "undefined: t_full <= t_reduced";
        csv << count << ',' << p.space->size() << ',' << r.model.k << ',' << io::format_double(r.model.bound) << ','
            << io::format_double(eta.t_full) << ',' << io::format_double(eta.t_reduced) << ','
            << (eta.defined ? io::format_double(eta.value) : std::string("-inf")) << ',' << note << '\n';
        out << count << ' ' << p.space->size() << ' ' << r.model.k << ' ' << eta.t_full << ' ' << eta.t_reduced << ' '
            << (eta.defined ? std::to_string(eta.value) : std::string("-inf")) << '\n';
        rows.push_back({{"count", count},
                        {"states", p.space->size()},
                        {"k", r.model.k},
                        {"t_full", eta.t_full},
                        {"t_reduced", eta.t_reduced},
                        {"eta", eta.defined ? nlohmann::json(eta.value) : nlohmann::json("-inf")},
                        {"note", note}});
    }
    const fs::path dir(cfg.output_dir);
    io::write_file(dir / "bench.csv", csv.str());
    io::write_json(dir / "bench.json", {{"config", to_json(cfg)},
                                        {"rows", rows},
                                        {"note", "wall-clock timings are hardware-dependent; construction excluded"}});
    return 0;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    CLI::App app{"Balanced reduction of chemical master equations"};
    app.require_subcommand(1, 1);
    std::optional<std::size_t> order;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--network", cfg.network, "Network description file")->required();
        sub->add_option("--output-dir", cfg.output_dir, "Directory for output files");
        sub->add_option("--max-states", cfg.max_states, "Enumeration limit");
    };
    auto reduction = [&](CLI::App* sub) {
        sub->add_option("--select", cfg.select, "Output row: 'state S1=0 S2=300' or 'range P 0 30' (repeatable)");
        sub->add_option("--order", order, "Reduced order k");
        sub->add_option("--ratio", cfg.ratio, "Pick k as the smallest order with sigma_{k+1} < ratio * sigma_1");
        sub->add_option("--method", cfg.method, "truncate | residualize");
    };
    auto grid = [&](CLI::App* sub) {
        sub->add_option("--t-start", cfg.t_start, "First time point (s)");
        sub->add_option("--t-stop", cfg.t_stop, "Last time point (s)");
        sub->add_option("--t-count", cfg.t_count, "Number of time points");
        sub->add_option("--t-spacing", cfg.t_spacing, "linear | log");
    };

    auto* en = app.add_subcommand("enumerate", "Enumerate states and write the generator");
    common(en);
    auto* re = app.add_subcommand("reduce", "Balance and reduce the CME");
    common(re);
    reduction(re);
    auto* si = app.add_subcommand("simulate", "Compare full and reduced trajectories");
    common(si);
    reduction(si);
    grid(si);
    si->add_flag("--skip-full", cfg.skip_full, "Only solve the reduced model");
    auto* ss = app.add_subcommand("ssa", "Gillespie ensemble");
    common(ss);
    grid(ss);
    ss->add_option("--select", cfg.select, "Output rows for empirical outputs (repeatable)");
    ss->add_option("--seed", cfg.seed, "Random seed");
    ss->add_option("--runs", cfg.runs, "Number of runs");
    ss->add_option("--threads", cfg.threads, "Worker threads (0: all cores)");
    auto* be = app.add_subcommand("bench", "Time full versus reduced solves");
    common(be);
    reduction(be);
    grid(be);
    be->add_option("--counts", cfg.counts, "Initial molecule counts")->delimiter(',');
    be->add_option("--vary", cfg.vary, "Species whose initial count is set (default: nonzero ones)");
    be->add_option("--reps", cfg.reps, "Repetitions per count (median reported)");
    auto* fsp = app.add_subcommand("fsp", "Finite state projection at --t-stop");
    common(fsp);
    grid(fsp);
    fsp->add_option("--eps", cfg.eps, "Mass defect budget");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }
    cfg.order = order;
    for (auto* sub : app.get_subcommands()) cfg.command = sub->get_name();

    try {
        if (cfg.command == "fsp") {
            RunConfig check = cfg;
            check.command = "enumerate";
            validate(check);
            const ReactionNetwork net = load(cfg);
            const FspResult r = staged("fsp", [&] {
                return fsp_solve(net, {{net.initial_state(), 1.0}}, cfg.t_stop, cfg.eps);
            });
            const fs::path dir(cfg.output_dir);
            write_with(dir / "fsp.csv", [&](std::ostream& os) {
                os << "ordinal";
                for (const auto& s : net.species()) os << ',' << io::csv_field(s.name);
                os << ",probability\n";
                for (std::size_t i = 0; i < r.space->size(); ++i) {
                    os << (i + 1);
                    for (int v : r.space->state(i)) os << ',' << v;
                    os << ',' << io::format_double(r.p(static_cast<Eigen::Index>(i))) << '\n';
                }
            });
            io::write_json(dir / "fsp.json", {{"config", to_json(cfg)},
                                              {"source", std::string(to_string(Source::FSP))},
                                              {"t", cfg.t_stop},
                                              {"states", r.space->size()},
                                              {"radius", r.radius},
                                              {"defect", r.defect},
                                              {"exhausted", r.exhausted}});
            out << "states=" << r.space->size() << " defect=" << io::format_double(r.defect) << '\n';
            return 0;
        }
        validate(cfg);
        if (cfg.command == "enumerate") return cmd_enumerate(cfg, out);
        if (cfg.command == "reduce") return cmd_reduce(cfg, out);
        if (cfg.command == "simulate") return cmd_simulate(cfg, out);
        if (cfg.command == "ssa") return cmd_ssa(cfg, out);
        return cmd_bench(cfg, out);
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace cmebal::cli
