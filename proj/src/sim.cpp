#include "cmebal/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>

#include <Eigen/LU>

namespace cmebal {

std::string_view to_string(Source s) {
    switch (s) {
        case Source::CME: return "CME";
        case Source::Reduced: return "Reduced";
        case Source::FSP: return "FSP";
        case Source::SSA: return "SSA-empirical";
    }
    return "unknown";
}

std::vector<double> time_grid(double start, double stop, std::size_t count, Spacing spacing) {
    if (!std::isfinite(start) || !std::isfinite(stop) || start < 0.0)
        throw std::invalid_argument("time_grid: start and stop must be finite and start >= 0");
    if (count == 0) throw std::invalid_argument("time_grid: count must be positive");
    if (count == 1) return {start};
    if (!(stop > start)) throw std::invalid_argument("time_grid: stop must exceed start");
    std::vector<double> t(count);
    const double last = static_cast<double>(count - 1);
    if (spacing == Spacing::Linear) {
        for (std::size_t i = 0; i < count; ++i) t[i] = start + (stop - start) * (static_cast<double>(i) / last);
    } else {
        if (!(start > 0.0)) throw std::invalid_argument("time_grid: log spacing needs start > 0");
        const double a = std::log10(start), b = std::log10(stop);
        for (std::size_t i = 0; i < count; ++i) t[i] = std::pow(10.0, a + (b - a) * (static_cast<double>(i) / last));
        t.front() = start;
        t.back() = stop;
    }
    return t;
}

void check_time_grid(const std::vector<double>& times) {
    if (times.empty()) throw std::invalid_argument("empty time grid");
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!std::isfinite(times[i]) || times[i] < 0.0)
            throw std::invalid_argument("time grid entries must be finite and non-negative");
        if (i > 0 && !(times[i] > times[i - 1]))
            throw std::invalid_argument("time grid must be strictly increasing");
    }
}

namespace {

/// Propagator expm(M dt), recomputed only when dt changes beyond rounding.
class StepCache {
public:
    explicit StepCache(const Matrix& m) : m_(m) {}

    const Matrix& operator()(double dt) {
        if (!valid_ || std::abs(dt - dt_) > 1e-12 * std::max(dt, dt_)) {
            phi_ = linalg::expm(m_ * dt);
            dt_ = dt;
            valid_ = true;
        }
        return phi_;
    }

private:
    Matrix m_;
    Matrix phi_;
    double dt_ = 0.0;
    bool valid_ = false;
};

/// Step response of x' = A x + b, y = C x + d from x(0) = x0, stepped in deviation from
/// the steady state. Only expm of the stable A is needed, which stays accurate for
/// arbitrarily long steps (unlike the augmented or full generator, whose zero eigenvalue
/// amplifies rounding under repeated squaring).
class StepResponse {
public:
    StepResponse(const Matrix& a, const Vector& b, const Matrix& c, const Vector& d, const Vector& x0)
        : c_(c), step_(a) {
        const Vector x_ss = -Eigen::PartialPivLU<Matrix>(a).solve(b);
        y_ss_ = c * x_ss + d;
        dev_ = x0 - x_ss;
    }

    static StepResponse of(const ReducedModel& m) {
        const Vector x0 = m.has_impulse() ? Vector(m.B.col(1)) : Vector::Zero(m.A.rows());
        return StepResponse(m.A, m.B.col(0), m.C, m.D.col(0), x0);
    }

    void advance(double dt) {
        if (dt > 0.0) dev_ = step_(dt) * dev_;
    }

    Vector output() const { return c_ * dev_ + y_ss_; }

private:
    Matrix c_;
    StepCache step_;
    Vector y_ss_;
    Vector dev_;
};

void check_distribution(const Vector& p0, Eigen::Index w) {
    if (p0.size() != w) throw std::invalid_argument("p0 length does not match the state space");
    if (!p0.allFinite() || p0.minCoeff() < 0.0 || std::abs(p0.sum() - 1.0) > 1e-10)
        throw std::invalid_argument("p0 is not a probability vector");
}

}  // namespace

Trajectory solve_cme(const Generator& gen, const Vector& p0, const std::vector<double>& times,
                     const linalg::Tolerances& tol) {
    check_time_grid(times);
    const auto w = static_cast<Eigen::Index>(gen.size());
    check_distribution(p0, w);
    if (gen.size() > tol.dense_limit)
        throw std::runtime_error("solve_cme: " + std::to_string(gen.size()) + " states exceed the dense limit of " +
                                 std::to_string(tol.dense_limit) + "; use fsp_solve or a reduced model");
    const Matrix a = Matrix(gen.matrix);
    StepCache step(a);
    Trajectory traj;
    traj.times = times;
    traj.source = Source::CME;
    traj.values.resize(static_cast<Eigen::Index>(times.size()), w);
    Vector p = p0;
    double t = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double dt = times[i] - t;
        if (dt > 0.0) p = step(dt) * p;
        t = times[i];
        traj.values.row(static_cast<Eigen::Index>(i)) = p.transpose();
    }
    return traj;
}

Trajectory solve_cme_rk(const Generator& gen, const Vector& p0, const std::vector<double>& times, double rtol,
                        double atol) {
    check_time_grid(times);
    const auto w = static_cast<Eigen::Index>(gen.size());
    check_distribution(p0, w);
    const SparseMatrix& a = gen.matrix;

    static constexpr double k21 = 1. / 5;
    static constexpr double k31 = 3. / 40, k32 = 9. / 40;
    static constexpr double k41 = 44. / 45, k42 = -56. / 15, k43 = 32. / 9;
    static constexpr double k51 = 19372. / 6561, k52 = -25360. / 2187, k53 = 64448. / 6561, k54 = -212. / 729;
    static constexpr double k61 = 9017. / 3168, k62 = -355. / 33, k63 = 46732. / 5247, k64 = 49. / 176,
                            k65 = -5103. / 18656;
    static constexpr double b1 = 35. / 384, b3 = 500. / 1113, b4 = 125. / 192, b5 = -2187. / 6784, b6 = 11. / 84;
    static constexpr double e1 = b1 - 5179. / 57600, e3 = b3 - 7571. / 16695, e4 = b4 - 393. / 640,
                            e5 = b5 + 92097. / 339200, e6 = b6 - 187. / 2100, e7 = -1. / 40;

    Trajectory traj;
    traj.times = times;
    traj.source = Source::CME;
    traj.values.resize(static_cast<Eigen::Index>(times.size()), w);

    Vector y = p0, f1 = a * y, f2, f3, f4, f5, f6, f7, yn, err;
    double t = 0.0;
    double h = 1e-6;
    for (std::size_t i = 0; i < times.size(); ++i) {
        while (t < times[i]) {
            const bool last = t + h >= times[i];
            const double hs = last ? times[i] - t : h;
            f2 = a * (y + hs * k21 * f1);
            f3 = a * (y + hs * (k31 * f1 + k32 * f2));
            f4 = a * (y + hs * (k41 * f1 + k42 * f2 + k43 * f3));
            f5 = a * (y + hs * (k51 * f1 + k52 * f2 + k53 * f3 + k54 * f4));
            f6 = a * (y + hs * (k61 * f1 + k62 * f2 + k63 * f3 + k64 * f4 + k65 * f5));
            yn = y + hs * (b1 * f1 + b3 * f3 + b4 * f4 + b5 * f5 + b6 * f6);
            f7 = a * yn;
            err = hs * (e1 * f1 + e3 * f3 + e4 * f4 + e5 * f5 + e6 * f6 + e7 * f7);
            double en = 0.0;
            for (Eigen::Index j = 0; j < w; ++j) {
                const double sc = atol + rtol * std::max(std::abs(y(j)), std::abs(yn(j)));
                en = std::max(en, std::abs(err(j)) / sc);
            }
            const double factor = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
            if (en <= 1.0) {
                t = last ? times[i] : t + hs;
                y = yn;
                f1 = f7;
                if (!last) h = hs * factor;
            } else {
                h = hs * factor;
            }
            if (h < 1e-300) throw std::runtime_error("solve_cme_rk: step size underflow");
        }
        traj.values.row(static_cast<Eigen::Index>(i)) = y.transpose();
    }
    return traj;
}

Trajectory project(const Trajectory& full, const OutputMatrix& out) {
    if (full.values.cols() != out.matrix.cols())
        throw std::invalid_argument("project: output matrix does not match the distribution width");
    Trajectory t;
    t.times = full.times;
    t.source = full.source;
    t.labels = out.labels;
    t.values = full.values * out.matrix.transpose();
    return t;
}

Trajectory solve_reduced(const ReducedModel& model, const std::vector<double>& times) {
    check_time_grid(times);
    auto prop = StepResponse::of(model);
    Trajectory traj;
    traj.times = times;
    traj.source = Source::Reduced;
    traj.values.resize(static_cast<Eigen::Index>(times.size()), model.C.rows());
    double t = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        prop.advance(times[i] - t);
        t = times[i];
        traj.values.row(static_cast<Eigen::Index>(i)) = prop.output().transpose();
    }
    if (!traj.values.allFinite()) throw linalg::NumericalError("solve_reduced: non-finite output");
    return traj;
}

Metrics compare(const Trajectory& full, const Trajectory& reduced) {
    if (full.times.size() != reduced.times.size())
        throw std::invalid_argument("compare: time grids differ in length");
    for (std::size_t i = 0; i < full.times.size(); ++i)
        if (std::abs(full.times[i] - reduced.times[i]) > 1e-12 * std::max(1.0, std::abs(full.times[i])))
            throw std::invalid_argument("compare: time grids differ");
    if (full.values.cols() != reduced.values.cols())
        throw std::invalid_argument("compare: channel counts differ");
    const Matrix e = full.values - reduced.values;
    const auto r = e.cols();
    Metrics m;
    m.sup_error.assign(static_cast<std::size_t>(r), 0.0);
    m.l2_error.assign(static_cast<std::size_t>(r), 0.0);
    double total = 0.0;
    for (Eigen::Index j = 0; j < r; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        m.sup_error[jj] = e.rows() ? e.col(j).cwiseAbs().maxCoeff() : 0.0;
        double acc = 0.0;
        for (Eigen::Index i = 1; i < e.rows(); ++i) {
            const double h = full.times[static_cast<std::size_t>(i)] - full.times[static_cast<std::size_t>(i - 1)];
            acc += 0.5 * h * (e(i, j) * e(i, j) + e(i - 1, j) * e(i - 1, j));
        }
        m.l2_error[jj] = std::sqrt(acc);
        total += acc;
        m.sup = std::max(m.sup, m.sup_error[jj]);
    }
    m.l2 = std::sqrt(total);
    const double span = full.times.empty() ? 0.0 : full.times.back() - full.times.front();
    m.gain = span > 0.0 ? m.l2 / std::sqrt(span) : 0.0;
    return m;
}

GainEstimate realized_l2_gain(const Generator& gen, const OutputMatrix& out, const Vector& p0,
                              const ReducedModel& model, const GainOptions& options) {
    const auto w = static_cast<Eigen::Index>(gen.size());
    check_distribution(p0, w);
    if (out.matrix.cols() != w || out.matrix.rows() != model.C.rows())
        throw std::invalid_argument("realized_l2_gain: output shapes do not match");
    if (options.steps_per_decade == 0) throw std::invalid_argument("realized_l2_gain: steps_per_decade is zero");

    const double rate = gen.matrix.diagonal().cwiseAbs().maxCoeff();
    if (!(rate > 0.0)) throw std::invalid_argument("realized_l2_gain: generator has no transitions");
    const auto ev = linalg::schur_eigenvalues(linalg::schur(model.A));
    double slowest = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < ev.size(); ++i) slowest = std::min(slowest, std::abs(ev(i).real()));
    const double t_settle = 20.0 / slowest;

    const StableSystem sys = stabilize(gen, out, p0);
    StepResponse full(sys.A, sys.B.col(0), sys.C, sys.d, sys.z0);
    auto red = StepResponse::of(model);
    auto error_sq = [&] { return (full.output() - red.output()).squaredNorm(); };

    GainEstimate g;
    double t = 0.0, integral = 0.0, e_prev = error_sq();
    const double n = static_cast<double>(options.steps_per_decade);
    double decade_start = 0.0, decade_end = 1.0 / rate;
    double previous_gain = -1.0;
    for (std::size_t d = 0; d < options.max_decades; ++d) {
        const double h = (decade_end - decade_start) / n;
        for (std::size_t i = 0; i < options.steps_per_decade; ++i) {
            full.advance(h);
            red.advance(h);
            const double e = error_sq();
            t = decade_start + h * static_cast<double>(i + 1);
            integral += 0.5 * h * (e + e_prev);
            e_prev = e;
            g.gain = std::max(g.gain, std::sqrt(integral / t));
            ++g.samples;
        }
        g.horizon = t;
        if (t >= t_settle && previous_gain > 0.0 &&
            g.gain - previous_gain <= options.rel_change * previous_gain) {
            g.converged = true;
            break;
        }
        previous_gain = g.gain;
        decade_start = decade_end;
        decade_end *= 10.0;
    }
    if (!std::isfinite(g.gain)) throw linalg::NumericalError("realized_l2_gain: non-finite error signal");
    return g;
}

Eta speedup_eta(double t_full, double t_reduced) {
    if (!(t_full > 0.0) || !(t_reduced > 0.0))
        throw std::invalid_argument("speedup_eta: times must be positive");
    Eta e{-std::numeric_limits<double>::infinity(), false, t_full, t_reduced};
    if (t_full > t_reduced) {
        e.value = std::log10((t_full - t_reduced) / t_reduced);
        e.defined = true;
    }
    return e;
}

// ---------------------------------------------------------------------------
// SSA

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Uniform on [0, 1) from the top 53 bits; avoids implementation-defined distributions.
/// Stream of run r. The seed is whitened before the xor so that nearby seeds do not
/// share streams (with a raw seed ^ r, seeds 2m and 2m+1 would permute the same runs).
std::uint64_t run_seed(std::uint64_t seed, std::size_t run) {
    return splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(run));
}

double uniform01(std::mt19937_64& eng) { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

class Stepper {
public:
    explicit Stepper(const ReactionNetwork& net) : net_(net), a_(net.reaction_count()) {
        for (const auto& r : net.reactions()) jumps_.push_back(jump_vector(r, net.species_count()));
    }

    /// Advances `state` by one event; returns the waiting time or +inf if no reaction can fire.
    double step(Population& state, std::mt19937_64& eng) {
        double a0 = 0.0;
        for (std::size_t k = 0; k < a_.size(); ++k) {
            a_[k] = propensity(net_.reactions()[k], state);
            a0 += a_[k];
        }
        if (!(a0 > 0.0)) return std::numeric_limits<double>::infinity();
        const double tau = -std::log1p(-uniform01(eng)) / a0;
        const double target = uniform01(eng) * a0;
        std::size_t pick = a_.size();
        double cum = 0.0;
        for (std::size_t k = 0; k < a_.size(); ++k) {
            if (a_[k] <= 0.0) continue;
            pick = k;
            cum += a_[k];
            if (target < cum) break;
        }
        for (std::size_t i = 0; i < state.size(); ++i) state[i] += jumps_[pick][i];
        return tau;
    }

private:
    const ReactionNetwork& net_;
    std::vector<double> a_;
    std::vector<Population> jumps_;
};

}  // namespace

SsaEnsemble ssa_ensemble(const ReactionNetwork& network, const SsaConfig& config) {
    if (config.runs == 0) throw std::invalid_argument("ssa_ensemble: runs must be >= 1");
    check_time_grid(config.record);
    const std::size_t n = network.species_count();
    const std::size_t nt = config.record.size();
    std::vector<int> store(config.runs * nt * n);

    auto simulate = [&](std::size_t run, Stepper& stepper) {
        std::mt19937_64 eng(run_seed(config.seed, run));
        Population s = network.initial_state();
        int* dst = store.data() + run * nt * n;
        double t = 0.0;
        std::size_t idx = 0;
        while (idx < nt) {
            Population before = s;
            const double tau = stepper.step(s, eng);
            const double t_next = t + tau;
            while (idx < nt && config.record[idx] < t_next) {
                std::copy(before.begin(), before.end(), dst + idx * n);
                ++idx;
            }
            t = t_next;
        }
    };

    std::size_t threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, config.runs);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        Stepper stepper(network);
        for (std::size_t r = next++; r < config.runs; r = next++) simulate(r, stepper);
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    SsaEnsemble ens;
    ens.times = config.record;
    ens.runs = config.runs;
    ens.seed = config.seed;
    ens.histograms.resize(nt);
    Population s(n);
    for (std::size_t r = 0; r < config.runs; ++r)
        for (std::size_t i = 0; i < nt; ++i) {
            const int* src = store.data() + (r * nt + i) * n;
            s.assign(src, src + n);
            ++ens.histograms[i][s];
        }
    return ens;
}

SsaPath ssa_path(const ReactionNetwork& network, std::uint64_t seed, double t_max) {
    if (!(t_max >= 0.0) || !std::isfinite(t_max)) throw std::invalid_argument("ssa_path: bad t_max");
    std::mt19937_64 eng(run_seed(seed, 0));
    Stepper stepper(network);
    SsaPath path;
    Population s = network.initial_state();
    path.times.push_back(0.0);
    path.states.push_back(s);
    double t = 0.0;
    for (;;) {
        const double tau = stepper.step(s, eng);
        if (!(t + tau <= t_max)) break;
        t += tau;
        path.times.push_back(t);
        path.states.push_back(s);
    }
    return path;
}

Matrix empirical_distribution(const SsaEnsemble& ens, const StateSpace& space) {
    Matrix p = Matrix::Zero(static_cast<Eigen::Index>(ens.times.size()), static_cast<Eigen::Index>(space.size()));
    const double inv = 1.0 / static_cast<double>(ens.runs);
    for (std::size_t i = 0; i < ens.histograms.size(); ++i)
        for (const auto& [state, count] : ens.histograms[i])
            if (auto j = space.index(state))
                p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(*j)) += static_cast<double>(count) * inv;
    return p;
}

double tv_distance(const Vector& p, const Vector& q) {
    if (p.size() != q.size()) throw std::invalid_argument("tv_distance: length mismatch");
    return 0.5 * (p - q).cwiseAbs().sum();
}

// ---------------------------------------------------------------------------
// FSP

Vector embed(const Vector& p, const StateSpace& from, const StateSpace& to) {
    if (static_cast<std::size_t>(p.size()) != from.size()) throw std::invalid_argument("embed: length mismatch");
    Vector out = Vector::Zero(static_cast<Eigen::Index>(to.size()));
    for (std::size_t i = 0; i < from.size(); ++i)
        if (auto j = to.index(from.state(i))) out(static_cast<Eigen::Index>(*j)) = p(static_cast<Eigen::Index>(i));
    return out;
}

FspResult fsp_solve(const ReactionNetwork& network, const std::vector<std::pair<Population, double>>& p0, double t,
                    double eps, const FspOptions& options) {
    if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("fsp_solve: eps must lie in (0, 1)");
    if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("fsp_solve: bad time");
    if (p0.empty()) throw std::invalid_argument("fsp_solve: empty initial distribution");
    std::vector<Population> seeds;
    double mass = 0.0;
    for (const auto& [s, pr] : p0) {
        if (pr < 0.0) throw std::invalid_argument("fsp_solve: negative probability");
        mass += pr;
        if (pr > 0.0) seeds.push_back(s);
    }
    if (std::abs(mass - 1.0) > 1e-10) throw std::invalid_argument("fsp_solve: p0 does not sum to one");

    EnumerateOptions eo;
    eo.max_states = options.max_states;
    FspResult res;
    res.radius = options.initial_radius;
    auto space = std::make_shared<const StateSpace>(enumerate_ball(network, seeds, res.radius, eo));
    for (;;) {
        ++res.iterations;
        const Generator gen = build_generator(network, space, Boundary::Absorbing);
        Vector start = Vector::Zero(static_cast<Eigen::Index>(space->size()));
        for (const auto& [s, pr] : p0) start(static_cast<Eigen::Index>(*space->index(s))) += pr;
        res.space = space;
        res.p = t > 0.0 ? Vector(linalg::expm(Matrix(gen.matrix) * t) * start) : start;
        res.defect = std::max(0.0, 1.0 - res.p.sum());
        if (res.defect <= eps) return res;
        auto bigger =
            std::make_shared<const StateSpace>(enumerate_ball(network, seeds, res.radius + 1, eo));
        if (bigger->size() == space->size()) {
            res.exhausted = true;
            return res;
        }
        space = std::move(bigger);
        ++res.radius;
    }
}

}  // namespace cmebal
