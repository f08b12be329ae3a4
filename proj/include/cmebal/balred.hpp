#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cmebal/linalg.hpp"
#include "cmebal/statespace.hpp"

namespace cmebal {

using linalg::Matrix;
using linalg::Vector;

/// The generator violates an assumption of the reduction (reducible chain, unstable A, bad p0).
class ReductionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * CME with its zero eigenvalue removed.
 *
 * With z = (p_2, ..., p_w) and p_1 = 1 - 1^T z the master equation becomes
 *   dz/dt = A z + b,   y = C z + d,
 * i.e. a stable LTI system driven by a unit step. A nonzero z(0) is carried
 * as a second, impulsive input with column z0 so the state starts at zero.
 */
struct StableSystem {
    Matrix A;  // (w-1) x (w-1)
    Matrix B;  // column 0: b = a21 (step); column 1 (optional): z0 (impulse)
    Matrix C;  // r x (w-1)
    Vector d;  // r
    Vector z0;

    bool has_impulse() const noexcept { return B.cols() > 1; }
    std::size_t order() const noexcept { return static_cast<std::size_t>(A.rows()); }
};

/**
 * Builds the stable system from a generator, output matrix and initial distribution.
 *
 * Requires exactly one closed communicating class (a simple zero eigenvalue).
 * For w - 1 <= 200 the spectrum of A is also checked directly.
 */
StableSystem stabilize(const Generator& gen, const OutputMatrix& out, const Vector& p0,
                       const linalg::Tolerances& tol = linalg::default_tolerances());

/// Point mass on ordinal 0 of a space with w states.
Vector point_mass(std::size_t w, std::size_t ordinal = 0);

struct BalancedSystem {
    Matrix A;
    Matrix B;
    Matrix C;
    Vector d;
    /// Hankel singular values kept (length q), descending and positive.
    Vector hsv;
    /// All singular values of L_Q^T L_P, including the ones dropped as non-minimal.
    Vector hsv_all;

    std::size_t q() const noexcept { return static_cast<std::size_t>(hsv.size()); }
};

/// Square-root balancing; near-zero Hankel values (< cutoff * sigma_1) are dropped.
BalancedSystem balance(const StableSystem& sys,
                       const linalg::Tolerances& tol = linalg::default_tolerances());

enum class ReductionMethod { Truncation, Residualization };

std::string_view to_string(ReductionMethod m);
ReductionMethod parse_method(std::string_view s);

/**
 * Reduced model  dx/dt = A x + B u,  y = C x + D u,  u = (h(t)[, delta(t)]), x(0) = 0.
 *
 * D(:,0) carries the feedthrough d of the step channel.
 */
struct ReducedModel {
    Matrix A;
    Matrix B;
    Matrix C;
    Matrix D;
    std::size_t k = 0;
    ReductionMethod method = ReductionMethod::Truncation;
    double bound = 0.0;
    Vector hsv;

    bool has_impulse() const noexcept { return B.cols() > 1; }
};

ReducedModel truncate(const BalancedSystem& bal, std::size_t k);
ReducedModel residualize(const BalancedSystem& bal, std::size_t k);
ReducedModel reduce(const BalancedSystem& bal, std::size_t k, ReductionMethod method);

/// 2 * sum_{i>k} sigma_i. Throws std::out_of_range unless 1 <= k <= q.
double error_bound(const BalancedSystem& bal, std::size_t k);

/// Smallest k with sigma_{k+1} < ratio * sigma_1, or q.
std::size_t suggest_order(const BalancedSystem& bal, double ratio = 1e-3);

/// D - C A^{-1} B.
Matrix dc_gain(const Matrix& a, const Matrix& b, const Matrix& c, const Matrix& d);
Matrix dc_gain(const ReducedModel& m);

/// Plain-text model document with 17 significant digits, matrices column-major.
std::string serialize_model(const ReducedModel& m);
ReducedModel parse_model(std::string_view text);

}  // namespace cmebal
