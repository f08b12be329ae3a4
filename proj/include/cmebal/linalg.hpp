#pragma once

#include <complex>
#include <stdexcept>

#include <Eigen/Core>

namespace cmebal::linalg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;

/// Convergence failure, instability or a non-finite result in a dense kernel.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tolerances shared by the dense kernels and the balancing code.
struct Tolerances {
    /// A Lyapunov operator is rejected when max Re(lambda) >= -stability_margin.
    double stability_margin = 1e-12;
    /// psd_factor clips eigenvalues below clip * lambda_max to zero.
    double gramian_clip = 1e-12;
    /// Hankel singular values below hsv_cutoff * sigma_1 are treated as non-minimal.
    double hsv_cutoff = 1e-12;
    /// solve_cme refuses dense propagation above this many states.
    std::size_t dense_limit = 6000;
};

const Tolerances& default_tolerances();

/// Real Schur form A = Q T Q^T.
struct SchurForm {
    Matrix Q;
    Matrix T;
};

/// Complex Schur form A = Z T Z^H with T upper triangular.
struct ComplexSchurForm {
    CMatrix Z;
    CMatrix T;
};

/// Hessenberg reduction plus shifted QR (LAPACK dgees).
SchurForm schur(const Matrix& a);

/// Unitary conversion of a real Schur form to a triangular complex one.
ComplexSchurForm to_complex_schur(const SchurForm& s);

/// True when the quasi-triangular T has no 2x2 blocks.
bool is_triangular(const SchurForm& s);

/// Eigenvalues read off the diagonal blocks of a real Schur form.
Eigen::VectorXcd schur_eigenvalues(const SchurForm& s);

/**
 * Solves A P + P A^T + W = 0 by Bartels-Stewart.
 *
 * A must be stable. The returned P is exactly symmetric.
 */
Matrix solve_lyapunov(const Matrix& a, const Matrix& w,
                      const Tolerances& tol = default_tolerances());
Matrix solve_lyapunov(const SchurForm& a_schur, const Matrix& w,
                      const Tolerances& tol = default_tolerances());

/// Relative residual ||A P + P A^T + W||_F / ||W||_F.
double lyapunov_residual(const Matrix& a, const Matrix& p, const Matrix& w);

/**
 * Square factor L with L L^T = P where A P + P A^T + B B^T = 0.
 *
 * Hammarling's method: the Cholesky factor is obtained directly from the
 * triangular Schur form, never forming P, so small Gramian directions keep
 * their relative accuracy. `transpose` selects the dual equation
 * A^T Q + Q A + B B^T = 0 using the same Schur form of A.
 */
Matrix lyapunov_factor(const ComplexSchurForm& a_schur, const Matrix& b, bool transpose = false,
                       const Tolerances& tol = default_tolerances());
Matrix lyapunov_factor(const SchurForm& a_schur, const Matrix& b, bool transpose = false,
                       const Tolerances& tol = default_tolerances());

struct SymEig {
    Vector values;   // descending
    Matrix vectors;  // orthonormal columns
};

SymEig sym_eig(const Matrix& s);

/// L with L L^T ~= P from a symmetric eigendecomposition; eigenvalues below clip * max are dropped.
Matrix psd_factor(const Matrix& p, const Tolerances& tol = default_tolerances());

struct Svd {
    Matrix U;
    Vector sigma;  // descending, non-negative
    Matrix V;
};

/// Thin SVD M = U diag(sigma) V^T.
Svd svd(const Matrix& m);

/// Matrix exponential by scaling and squaring with a diagonal Pade approximant (degree up to 13).
Matrix expm(const Matrix& a);

/// R factor of a thin QR of `m` (rows >= cols), upper triangular cols x cols.
Matrix qr_r_factor(const Matrix& m);

}  // namespace cmebal::linalg
