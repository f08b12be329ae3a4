// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,2a,...] [--skip 4a,...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cmebal/balred.hpp"
#include "cmebal/linalg.hpp"
#include "cmebal/network.hpp"
#include "cmebal/sim.hpp"
#include "cmebal/statespace.hpp"

using namespace cmebal;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string id;
    std::string title;
    std::function<Outcome()> run;
};

std::string data(const std::string& name) { return std::string(CMEBAL_DATA_DIR) + "/" + name; }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double rel(double value, double ref) { return std::abs(value - ref) / std::abs(ref); }

struct Problem {
    ReactionNetwork net;
    Generator gen;
    OutputMatrix out;
    Vector p0;
};

Problem problem(const ReactionNetwork& net, const std::vector<std::string>& rows) {
    auto space = std::make_shared<const StateSpace>(enumerate_states(net));
    Problem p{net, build_generator(net, space), {}, point_mass(space->size())};
    OutputSelector sel;
    for (const auto& r : rows) {
        sel.rows.push_back(parse_selector_row(r, net));
        sel.labels.push_back(r);
    }
    p.out = build_output(sel, *space);
    return p;
}

BalancedSystem balanced(const Problem& p) { return balance(stabilize(p.gen, p.out, p.p0)); }

ReactionNetwork enzyme(int q) {
    const auto base = load_network(data("michaelis_menten.net"));
    return base.with_initial_state({q, q, 0, 0});
}

std::string conversion_state(int q) {
    return "state S=0 E=" + std::to_string(q) + " C=0 P=" + std::to_string(q);
}

// ---------------------------------------------------------------------------

Outcome hankel_bounds() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto p = problem(load_network(data("reversible.net")), {"state S1=0 S2=300"});
    const auto bal = balanced(p);
    const double elapsed = seconds_since(t0);
    const std::vector<std::pair<std::size_t, double>> ref = {
        {1, 427.4607e-3}, {5, 33.1963e-3}, {10, 587.9172e-6}, {15, 6.0955e-6}};
    Outcome o{p.gen.size() == 301 && elapsed < 60.0, ""};
    std::ostringstream d;
    d << "w=" << p.gen.size();
    for (const auto& [k, r] : ref) {
        const double b = error_bound(bal, k);
        o.pass = o.pass && rel(b, r) <= 0.01;
        d << " k=" << k << ":" << fmt(b) << " (ref " << fmt(r) << ", rel " << fmt(rel(b, r)) << ")";
    }
    d << " balance " << fmt(elapsed) << " s (limit 60 s)";
    o.detail = d.str();
    return o;
}

struct Reversible10 {
    Problem p;
    ReducedModel model;
};

const Reversible10& reversible_k10() {
    static const Reversible10 r = [] {
        auto p = problem(load_network(data("reversible.net")), {"state S1=0 S2=300"});
        auto bal = balanced(p);
        return Reversible10{std::move(p), truncate(bal, 10)};
    }();
    return r;
}

Outcome bound_satisfied() {
    const auto& r = reversible_k10();
    const auto g = realized_l2_gain(r.p.gen, r.p.out, r.p.p0, r.model);
    return {g.converged && g.gain <= r.model.bound,
            "realized L2 gain " + fmt(g.gain) + " <= bound " + fmt(r.model.bound) + " (horizon " + fmt(g.horizon) +
                " s, converged " + (g.converged ? "yes" : "no") + ")"};
}

Outcome truncation_sup_error() {
    const auto& r = reversible_k10();
    const auto times = time_grid(0.0, 5.0, 501);
    const auto full = project(solve_cme(r.p.gen, r.p.p0, times), r.p.out);
    const auto m = compare(full, solve_reduced(r.model, times));
    return {m.sup <= 1e-4, "sup |y - y_k| on [0,5] = " + fmt(m.sup) + " (limit 1e-4)"};
}

Outcome mm_full_network() {
    const auto p = problem(load_network(data("michaelis_menten.net")), {conversion_state(10)});
    const double b = error_bound(balanced(p), 6);
    const double ref = 0.21547e-3;
    return {p.gen.size() == 66 && rel(b, ref) <= 0.05,
            "w=" + std::to_string(p.gen.size()) + " k=6 bound " + fmt(b) + " (ref " + fmt(ref) + ", rel " +
                fmt(rel(b, ref)) + ")"};
}

Outcome mm_propensity_model() {
    const auto p = problem(load_network(data("mm_propensity_e1.net")), {"state S=0 P=10"});
    const double b = error_bound(balanced(p), 6);
    const double ref = 0.2807e-3;
    return {p.gen.size() == 11 && rel(b, ref) <= 0.05,
            "w=" + std::to_string(p.gen.size()) + " k=6 bound " + fmt(b) + " (ref " + fmt(ref) + ", rel " +
                fmt(rel(b, ref)) + ")"};
}

Outcome mm_ordering() {
    const auto times = time_grid(0.0, 20.0, 401);
    const auto full = problem(load_network(data("michaelis_menten.net")), {conversion_state(10)});
    const auto y_full = project(solve_cme(full.gen, full.p0, times), full.out);
    const auto y_bal = solve_reduced(truncate(balanced(full), 6), times);
    const auto mm = problem(load_network(data("mm_propensity.net")), {"state S=0 P=10"});
    const auto y_mm = project(solve_cme(mm.gen, mm.p0, times), mm.out);
    const double e_mm = compare(y_full, y_mm).sup;
    const double e_bal = compare(y_full, y_bal).sup;
    return {e_mm > e_bal, "sup error of MM propensity " + fmt(e_mm) + " > balanced k=6 " + fmt(e_bal)};
}

Outcome range_study_full() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto p = problem(load_network(data("michaelis_menten_q100.net")),
                           {"range P 0 30", "range P 31 70", "range P 71 100"});
    const auto bal = balanced(p);
    const double b = error_bound(bal, 16);
    const double elapsed = seconds_since(t0);
    const double ref = 6.384e-3;
    return {p.gen.size() == 5151 && rel(b, ref) <= 0.05 && elapsed <= 1800.0,
            "w=" + std::to_string(p.gen.size()) + " q=" + std::to_string(bal.q()) + " sigma_1=" + fmt(bal.hsv(0)) +
                " k=16 bound " + fmt(b) + " (ref " + fmt(ref) + ", rel " + fmt(rel(b, ref)) + ") in " + fmt(elapsed) +
                " s (limit 1800 s)"};
}

Outcome range_study_scaled() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto p = problem(enzyme(40), {"range P 0 12", "range P 13 28", "range P 29 40"});
    const auto bal = balanced(p);
    const auto k = suggest_order(bal);
    const auto model = truncate(bal, k);
    const auto g = realized_l2_gain(p.gen, p.out, p.p0, model);
    const double elapsed = seconds_since(t0);
    return {p.gen.size() == 861 && g.gain <= model.bound && elapsed <= 120.0,
            "w=" + std::to_string(p.gen.size()) + " suggested k=" + std::to_string(k) + " bound " + fmt(model.bound) +
                " >= realized gain " + fmt(g.gain) + " in " + fmt(elapsed) + " s (limit 120 s)"};
}

Outcome small_scale_oracles() {
    std::vector<std::pair<ReactionNetwork, std::vector<std::string>>> cases;
    for (int n = 1; n <= 11; ++n)
        cases.push_back({load_network(data("reversible.net")).with_initial_state({n, 0}),
                         {"state S1=0 S2=" + std::to_string(n), "range S1 0 " + std::to_string(n / 2)}});
    for (int q = 1; q <= 3; ++q) cases.push_back({enzyme(q), {conversion_state(q), "range C 1 1"}});
    cases.push_back({load_network(data("mm_propensity.net")), {"state S=0 P=10"}});
    cases.push_back({load_network(data("mm_propensity_e1.net")), {"range P 5 10"}});
    cases.push_back({parse_network("species: A B\nreaction: 2 A -> B @ 0.7\nreaction: B -> 2 A @ 1.3\ninit: A=9\n"),
                     {"range B 2 4"}});

    const auto times = time_grid(0.0, 5.0, 51);
    double worst_sup = 0.0, worst_tv = 0.0;
    std::size_t count = 0;
    for (const auto& [net, rows] : cases) {
        const auto p = problem(net, rows);
        if (p.gen.size() > 12) continue;
        ++count;
        const auto full = solve_cme(p.gen, p.p0, times);
        const auto bal = balanced(p);
        const auto y = project(full, p.out);
        for (auto method : {ReductionMethod::Truncation, ReductionMethod::Residualization})
            worst_sup = std::max(worst_sup, compare(y, solve_reduced(reduce(bal, bal.q(), method), times)).sup);

        SsaConfig cfg;
        cfg.seed = 2024 + count;
        cfg.runs = 10000;
        cfg.record = {0.5, 2.0, 5.0};
        const auto emp = empirical_distribution(ssa_ensemble(net, cfg), *p.gen.space);
        const auto exact = solve_cme(p.gen, p.p0, cfg.record);
        for (Eigen::Index i = 0; i < emp.rows(); ++i)
            worst_tv = std::max(worst_tv, tv_distance(emp.row(i).transpose(), exact.values.row(i).transpose()));
    }
    return {count == cases.size() && worst_sup <= 1e-9 && worst_tv <= 0.05,
            std::to_string(count) + " networks with w <= 12: max sup |y - y_q| " + fmt(worst_sup) +
                " (limit 1e-9), max TV(SSA 1e4 runs, CME) " + fmt(worst_tv) + " (limit 0.05)"};
}

Outcome property_suites() {
    std::ostringstream d;
    bool ok = true;
    auto note = [&](const std::string& what, double value, double limit) {
        ok = ok && value <= limit;
        d << what << " " << fmt(value) << " (<= " << fmt(limit) << "); ";
    };

    const std::vector<Problem> problems = {
        problem(load_network(data("reversible.net")), {"state S1=0 S2=300"}),
        problem(load_network(data("michaelis_menten.net")), {conversion_state(10), "range P 0 4"}),
        problem(load_network(data("mm_propensity.net")), {"state S=0 P=10"}),
    };

    double colsum = 0.0, stoch = 0.0, lyap = 0.0, diag = 0.0, dc = 0.0;
    bool monotone = true;
    for (const auto& p : problems) {
        colsum = std::max(colsum, max_relative_column_sum(p.gen.matrix));
        const Matrix a(p.gen.matrix);
        for (double t : {0.01, 0.5, 5.0}) {
            const Matrix e = linalg::expm(a * t);
            stoch = std::max(stoch, (e.colwise().sum().array() - 1.0).abs().maxCoeff());
            stoch = std::max(stoch, std::max(0.0, -e.minCoeff()));
        }

        const auto sys = stabilize(p.gen, p.out, p.p0);
        const Matrix w = sys.B * sys.B.transpose();
        const Matrix pg = linalg::solve_lyapunov(sys.A, w);
        lyap = std::max(lyap, linalg::lyapunov_residual(sys.A, pg, w));
        const Matrix v = sys.C.transpose() * sys.C;
        const Matrix at = sys.A.transpose();
        lyap = std::max(lyap, linalg::lyapunov_residual(at, linalg::solve_lyapunov(at, v), v));

        const auto bal = balance(sys);
        const Matrix pb = linalg::solve_lyapunov(bal.A, bal.B * bal.B.transpose());
        const Matrix bat = bal.A.transpose();
        const Matrix qb = linalg::solve_lyapunov(bat, bal.C.transpose() * bal.C);
        const Matrix s = bal.hsv.asDiagonal();
        diag = std::max(diag, std::max((pb - s).cwiseAbs().maxCoeff(), (qb - s).cwiseAbs().maxCoeff()) / bal.hsv(0));

        Matrix d0 = Matrix::Zero(sys.C.rows(), 1);
        d0.col(0) = bal.d;
        const Matrix g = dc_gain(bal.A, bal.B, bal.C, d0);
        for (std::size_t k = 1; k <= bal.q(); ++k) {
            const Matrix gk = dc_gain(residualize(bal, k));
            dc = std::max(dc, (gk - g).cwiseAbs().maxCoeff() / g.cwiseAbs().maxCoeff());
            if (k < bal.q() && !(error_bound(bal, k + 1) <= error_bound(bal, k))) monotone = false;
        }
    }
    note("generator column sums", colsum, 1e-12);
    note("expm(At) stochasticity", stoch, 1e-9);
    note("Lyapunov residual", lyap, 1e-8);
    note("balanced Gramian off-diagonality / sigma_1", diag, 1e-6);
    note("residualization DC gain", dc, 1e-9);
    ok = ok && monotone;
    d << "bound monotone in k " << (monotone ? "yes" : "no") << "; ";

    SsaConfig cfg;
    cfg.seed = 99;
    cfg.runs = 2000;
    cfg.record = time_grid(0.0, 5.0, 6);
    const auto& net = problems[1].net;
    cfg.threads = 1;
    const auto a = ssa_ensemble(net, cfg);
    cfg.threads = 3;
    const auto b = ssa_ensemble(net, cfg);
    const bool same = a.histograms == b.histograms;
    ok = ok && same;
    d << "SSA seed determinism " << (same ? "bitwise" : "differs");
    return {ok, d.str()};
}

Outcome speedup() {
    const auto times = time_grid(0.0, 5.0, 501);
    std::ostringstream d;
    bool ok = true;
    for (int q : {30, 40}) {
        const auto p = problem(enzyme(q), {conversion_state(q)});
        const auto model = truncate(balanced(p), 6);
        std::vector<double> tf, tr;
        for (int rep = 0; rep < 5; ++rep) {
            auto t0 = std::chrono::steady_clock::now();
            const auto full = project(solve_cme(p.gen, p.p0, times), p.out);
            tf.push_back(seconds_since(t0));
            t0 = std::chrono::steady_clock::now();
            const auto red = solve_reduced(model, times);
            tr.push_back(seconds_since(t0));
        }
        std::sort(tf.begin(), tf.end());
        std::sort(tr.begin(), tr.end());
        const auto eta = speedup_eta(tf[2], tr[2]);
        ok = ok && eta.defined && eta.value > 0.0;
        d << "count " << q << " (w=" << p.gen.size() << "): t_full " << fmt(eta.t_full) << " s, t_red "
          << fmt(eta.t_reduced) << " s, eta " << fmt(eta.value) << "; ";
    }
    d << "hardware-dependent";
    return {ok, d.str()};
}

std::set<std::string> split_ids(const std::string& s) {
    std::set<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.insert(item);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<std::string> only, skip;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if ((arg == "--only" || arg == "--skip") && i + 1 < argc) {
            (arg == "--only" ? only : skip) = split_ids(argv[++i]);
        } else {
            std::cerr << "usage: acceptance [--only ids] [--skip ids]\n";
            return 2;
        }
    }

    const std::vector<Criterion> criteria = {
        {"1", "Hankel bounds of the reversible reaction", hankel_bounds},
        {"2a", "realized L2 gain of the k=10 model within the bound", bound_satisfied},
        {"2b", "sup-norm output error of the k=10 model", truncation_sup_error},
        {"3a", "Michaelis-Menten network: 66 states, k=6 bound", mm_full_network},
        {"3b", "Michaelis-Menten propensity model: 11 states, k=6 bound", mm_propensity_model},
        {"3c", "MM propensity deviates more than the balanced model", mm_ordering},
        {"4a", "range study with 5151 states, k=16 bound", range_study_full},
        {"4b", "scaled range study: bound above realized gain", range_study_scaled},
        {"5", "small-scale oracle equivalence", small_scale_oracles},
        {"6", "property suites", property_suites},
        {"7", "reduced solve faster than the full CME", speedup},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        if (skip.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.title << ": " << o.detail << " ("
                  << fmt(seconds_since(t0)) << " s)" << std::endl;
    }
    return failed ? 1 : 0;
}
