#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cmebal/balred.hpp"
#include "cmebal/network.hpp"
#include "cmebal/statespace.hpp"

namespace cmebal {

enum class Source { CME, Reduced, FSP, SSA };

std::string_view to_string(Source s);

/// Samples on a time grid; values is samples x channels.
struct Trajectory {
    std::vector<double> times;
    Matrix values;
    Source source = Source::CME;
    std::vector<std::string> labels;
};

enum class Spacing { Linear, Log };

/// `count` points from start to stop inclusive. Log spacing needs start > 0.
std::vector<double> time_grid(double start, double stop, std::size_t count, Spacing spacing = Spacing::Linear);

/// Throws unless times are finite, non-negative and strictly increasing.
void check_time_grid(const std::vector<double>& times);

/**
 * Full probability vector p(t_i) of dp/dt = A p, one row per sample.
 *
 * Steps with expm(A dt); propagators are reused while dt repeats.
 */
Trajectory solve_cme(const Generator& gen, const Vector& p0, const std::vector<double>& times,
                     const linalg::Tolerances& tol = linalg::default_tolerances());

/// Adaptive Dormand-Prince integration of the same equation. Used to cross-check solve_cme.
Trajectory solve_cme_rk(const Generator& gen, const Vector& p0, const std::vector<double>& times,
                        double rtol = 1e-10, double atol = 1e-13);

/// Applies an output matrix to a full-distribution trajectory.
Trajectory project(const Trajectory& full, const OutputMatrix& out);

/// Output of the reduced model under a unit step (and the impulse channel, when present).
Trajectory solve_reduced(const ReducedModel& model, const std::vector<double>& times);

struct Metrics {
    std::vector<double> sup_error;  // per output
    std::vector<double> l2_error;   // per output, trapezoidal
    double sup = 0.0;
    double l2 = 0.0;
    /// l2 / ||u||, with u the unit step over the grid's span.
    double gain = 0.0;
};

Metrics compare(const Trajectory& full, const Trajectory& reduced);

struct GainOptions {
    /// Uniform steps per time decade.
    std::size_t steps_per_decade = 200;
    /// Stop extending the horizon once the gain moved less than this over a decade.
    double rel_change = 0.01;
    std::size_t max_decades = 24;
};

struct GainEstimate {
    /// max over tau of ||e||_{L2[0,tau]} / sqrt(tau).
    double gain = 0.0;
    double horizon = 0.0;
    std::size_t samples = 0;
    bool converged = false;
};

/**
 * Realized L2 gain of the output error under a unit step input.
 *
 * Every finite-horizon ratio is a lower estimate of the operator gain, so each
 * must lie below the certified bound. The horizon grows a decade at a time
 * until the ratio settles.
 */
GainEstimate realized_l2_gain(const Generator& gen, const OutputMatrix& out, const Vector& p0,
                              const ReducedModel& model, const GainOptions& options = {});

struct Eta {
    double value = 0.0;
    bool defined = false;
    double t_full = 0.0;
    double t_reduced = 0.0;
};

/// log10((t_full - t_red) / t_red); undefined (value -inf) when t_full <= t_red.
Eta speedup_eta(double t_full, double t_reduced);

// ---------------------------------------------------------------------------
// Stochastic simulation

struct SsaConfig {
    std::uint64_t seed = 0;
    std::size_t runs = 1;
    std::vector<double> record;
    /// 0 uses the hardware concurrency.
    std::size_t threads = 0;
};

inline constexpr std::string_view kSsaGenerator = "mt19937_64 seeded by splitmix64(splitmix64(seed) ^ run)";

using Histogram = std::map<Population, std::size_t>;

struct SsaEnsemble {
    std::vector<double> times;
    std::vector<Histogram> histograms;  // one per record time
    std::size_t runs = 0;
    std::uint64_t seed = 0;
};

/// Gillespie direct method; deterministic in the seed regardless of thread count.
SsaEnsemble ssa_ensemble(const ReactionNetwork& network, const SsaConfig& config);

struct SsaPath {
    std::vector<double> times;            // event times, starting at 0
    std::vector<Population> states;       // state after each event
};

/// One trajectory up to t_max using the stream of run 0.
SsaPath ssa_path(const ReactionNetwork& network, std::uint64_t seed, double t_max);

/// Empirical probabilities on a state space, samples x w. Mass outside the space is ignored.
Matrix empirical_distribution(const SsaEnsemble& ens, const StateSpace& space);

/// Half the 1-norm distance between two probability vectors.
double tv_distance(const Vector& p, const Vector& q);

// ---------------------------------------------------------------------------
// Finite state projection

struct FspOptions {
    std::size_t initial_radius = 1;
    std::size_t max_states = 20000;
};

struct FspResult {
    std::shared_ptr<const StateSpace> space;
    Vector p;
    double defect = 0.0;
    std::size_t radius = 0;
    std::size_t iterations = 0;
    /// The ball stopped growing: p is the exact CME solution.
    bool exhausted = false;
};

/// p0 given as (state, probability) pairs.
FspResult fsp_solve(const ReactionNetwork& network, const std::vector<std::pair<Population, double>>& p0,
                    double t, double eps, const FspOptions& options = {});

/// Embeds a distribution on `from` into `to` (zero where a state is missing).
Vector embed(const Vector& p, const StateSpace& from, const StateSpace& to);

}  // namespace cmebal
