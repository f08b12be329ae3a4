#include "cmebal/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/LU>

extern "C" {

// LAPACK (OpenBLAS). Trailing size_t arguments are the hidden Fortran string lengths.
void dgees_(const char* jobvs, const char* sort, int (*select)(const double*, const double*),
            const int* n, double* a, const int* lda, int* sdim, double* wr, double* wi, double* vs,
            const int* ldvs, double* work, const int* lwork, int* bwork, int* info, std::size_t,
            std::size_t);
void dtrsyl_(const char* trana, const char* tranb, const int* isgn, const int* m, const int* n,
             const double* a, const int* lda, const double* b, const int* ldb, double* c,
             const int* ldc, double* scale, int* info, std::size_t, std::size_t);
void dsyevd_(const char* jobz, const char* uplo, const int* n, double* a, const int* lda, double* w,
             double* work, const int* lwork, int* iwork, const int* liwork, int* info, std::size_t,
             std::size_t);
void dgesdd_(const char* jobz, const int* m, const int* n, double* a, const int* lda, double* s,
             double* u, const int* ldu, double* vt, const int* ldvt, double* work, const int* lwork,
             int* iwork, int* info, std::size_t);
void dgeqrf_(const int* m, const int* n, double* a, const int* lda, double* tau, double* work,
             const int* lwork, int* info);
}

namespace cmebal::linalg {

namespace {

int as_int(Eigen::Index n) { return static_cast<int>(n); }

void require_square(const Matrix& a, const char* who) {
    if (a.rows() != a.cols()) throw std::invalid_argument(std::string(who) + ": matrix is not square");
}

void require_finite(const Matrix& a, const char* who) {
    if (!a.allFinite()) throw NumericalError(std::string(who) + ": non-finite entries");
}

}  // namespace

const Tolerances& default_tolerances() {
    static const Tolerances tol{};
    return tol;
}

SchurForm schur(const Matrix& a) {
    require_square(a, "schur");
    require_finite(a, "schur");
    const int n = as_int(a.rows());
    SchurForm out{Matrix(n, n), a};
    if (n == 0) return out;
    std::vector<double> wr(n), wi(n);
    std::vector<int> bwork(n);
    int sdim = 0, info = 0, lwork = -1;
    double query = 0;
    dgees_("V", "N", nullptr, &n, out.T.data(), &n, &sdim, wr.data(), wi.data(), out.Q.data(), &n,
           &query, &lwork, bwork.data(), &info, 1, 1);
    lwork = static_cast<int>(query);
    std::vector<double> work(static_cast<std::size_t>(std::max(lwork, 1)));
    dgees_("V", "N", nullptr, &n, out.T.data(), &n, &sdim, wr.data(), wi.data(), out.Q.data(), &n,
           work.data(), &lwork, bwork.data(), &info, 1, 1);
    if (info != 0) {
        throw NumericalError("schur: QR iteration failed to converge (info=" + std::to_string(info) +
                             ", ||A||_F=" + std::to_string(a.norm()) + ")");
    }
    // dgees leaves rounding noise below the quasi-diagonal; make the structure exact.
    for (int j = 0; j < n; ++j)
        for (int i = j + 2; i < n; ++i) out.T(i, j) = 0.0;
    return out;
}

bool is_triangular(const SchurForm& s) {
    for (Eigen::Index i = 1; i < s.T.rows(); ++i)
        if (s.T(i, i - 1) != 0.0) return false;
    return true;
}

Eigen::VectorXcd schur_eigenvalues(const SchurForm& s) {
    const auto n = s.T.rows();
    Eigen::VectorXcd ev(n);
    for (Eigen::Index i = 0; i < n;) {
        if (i + 1 < n && s.T(i + 1, i) != 0.0) {
            const double a = s.T(i, i), b = s.T(i, i + 1), c = s.T(i + 1, i), d = s.T(i + 1, i + 1);
            const double mid = 0.5 * (a + d);
            const std::complex<double> disc = std::sqrt(std::complex<double>(0.25 * (a - d) * (a - d) + b * c));
            ev(i) = mid + disc;
            ev(i + 1) = mid - disc;
            i += 2;
        } else {
            ev(i) = s.T(i, i);
            ++i;
        }
    }
    return ev;
}

ComplexSchurForm to_complex_schur(const SchurForm& s) {
    using C = std::complex<double>;
    const auto n = s.T.rows();
    ComplexSchurForm out{s.Q.cast<C>(), s.T.cast<C>()};
    auto& T = out.T;
    auto& Z = out.Z;
    for (Eigen::Index m = n - 1; m >= 1; --m) {
        if (T(m, m - 1) == C(0.0)) continue;
        const C a = T(m - 1, m - 1), b = T(m - 1, m), c = T(m, m - 1), d = T(m, m);
        const C mid = 0.5 * (a + d);
        const C lambda = mid + std::sqrt(0.25 * (a - d) * (a - d) + b * c);
        const C mu = lambda - d;
        const double r = std::sqrt(std::norm(mu) + std::norm(c));
        const C cs = mu / r;
        const C sn = c / r;
        // G = [conj(cs) sn; -sn cs], applied as T <- G T G^H, Z <- Z G^H.
        for (Eigen::Index j = m - 1; j < n; ++j) {
            const C t1 = T(m - 1, j), t2 = T(m, j);
            T(m - 1, j) = std::conj(cs) * t1 + sn * t2;
            T(m, j) = -sn * t1 + cs * t2;
        }
        for (Eigen::Index i = 0; i <= m; ++i) {
            const C t1 = T(i, m - 1), t2 = T(i, m);
            T(i, m - 1) = cs * t1 + std::conj(sn) * t2;
            T(i, m) = -std::conj(sn) * t1 + std::conj(cs) * t2;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            const C z1 = Z(i, m - 1), z2 = Z(i, m);
            Z(i, m - 1) = cs * z1 + std::conj(sn) * z2;
            Z(i, m) = -std::conj(sn) * z1 + std::conj(cs) * z2;
        }
        T(m, m - 1) = 0.0;
    }
    return out;
}

Matrix solve_lyapunov(const Matrix& a, const Matrix& w, const Tolerances& tol) {
    require_square(a, "solve_lyapunov");
    return solve_lyapunov(schur(a), w, tol);
}

Matrix solve_lyapunov(const SchurForm& s, const Matrix& w, const Tolerances& tol) {
    const int n = as_int(s.T.rows());
    if (w.rows() != n || w.cols() != n)
        throw std::invalid_argument("solve_lyapunov: W has the wrong shape");
    const auto ev = schur_eigenvalues(s);
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i).real() >= -tol.stability_margin)
            throw NumericalError("solve_lyapunov: A is not stable (eigenvalue with real part " +
                                 std::to_string(ev(i).real()) + ")");
    }
    if (n == 0) return Matrix(0, 0);
    Matrix c = -(s.Q.transpose() * w * s.Q);
    double scale = 1.0;
    int isgn = 1, info = 0;
    dtrsyl_("N", "T", &isgn, &n, &n, s.T.data(), &n, s.T.data(), &n, c.data(), &n, &scale, &info, 1, 1);
    if (info < 0) throw std::logic_error("solve_lyapunov: dtrsyl argument error");
    if (info == 1)
        throw NumericalError("solve_lyapunov: nearly singular Sylvester block (A has eigenvalues close to -lambda)");
    c /= scale;
    Matrix p = s.Q * c * s.Q.transpose();
    Matrix sym = 0.5 * (p + p.transpose());
    require_finite(sym, "solve_lyapunov");
    return sym;
}

double lyapunov_residual(const Matrix& a, const Matrix& p, const Matrix& w) {
    const double wn = w.norm();
    const double r = (a * p + p * a.transpose() + w).norm();
    return wn > 0.0 ? r / wn : r;
}

namespace {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

double real_part(double x) { return x; }
double real_part(const std::complex<double>& x) { return x.real(); }
double conj_of(double x) { return x; }
std::complex<double> conj_of(const std::complex<double>& x) { return std::conj(x); }

// Upper-triangular U with T (U U^H) + (U U^H) T^H + B B^H = 0, T upper triangular.
// Processes the last row/column first; B is deflated by one row per step.
template <class Scalar>
Mat<Scalar> hammarling(const Mat<Scalar>& t, Mat<Scalar> b, const Tolerances& tol) {
    const Eigen::Index n = t.rows();
    Mat<Scalar> u = Mat<Scalar>::Zero(n, n);
    Vec<Scalar> rhs(n), sol(n);
    // For low-rank right-hand sides the deflated rows decay geometrically and eventually reach
    // the denormal range, where dividing by ups amplifies rounding without bound. Rows this
    // small contribute below 1e-200 relative to B B^H and are dropped.
    const double negligible = 1e-100 * b.norm();
    for (Eigen::Index j = n - 1; j >= 0; --j) {
        const Scalar tau = t(j, j);
        const double re = real_part(tau);
        if (re >= -tol.stability_margin)
            throw NumericalError("lyapunov_factor: A is not stable (eigenvalue with real part " +
                                 std::to_string(re) + ")");
        const double beta_norm = b.row(j).norm();
        if (beta_norm <= negligible) continue;
        const double ups = beta_norm / std::sqrt(-2.0 * re);
        u(j, j) = ups;
        if (j == 0) break;

        // (T11 + conj(tau) I) u = -(t12 ups^2 + B1 beta) / ups
        auto r = rhs.head(j);
        r.noalias() = b.topRows(j) * b.row(j).adjoint();
        r += t.col(j).head(j) * Scalar(ups * ups);
        r *= Scalar(-1.0 / ups);
        const Scalar shift = conj_of(tau);
        for (Eigen::Index l = j - 1; l >= 0; --l) {
            const Scalar ul = r(l) / (t(l, l) + shift);
            sol(l) = ul;
            if (l > 0) r.head(l) -= t.col(l).head(l) * ul;
        }
        u.col(j).head(j) = sol.head(j);
        b.topRows(j).noalias() -= sol.head(j) * (b.row(j) / Scalar(ups));
    }
    return u;
}

// Reversal similarity: for A = Z T Z^H, A^H = (Z J)(J T^H J)(Z J)^H with J T^H J upper triangular.
template <class Scalar>
std::pair<Mat<Scalar>, Mat<Scalar>> dual_form(const Mat<Scalar>& z, const Mat<Scalar>& t) {
    const Eigen::Index n = t.rows();
    Mat<Scalar> td(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) td(i, j) = conj_of(t(n - 1 - j, n - 1 - i));
    Mat<Scalar> zd = z.rowwise().reverse();
    return {std::move(zd), std::move(td)};
}

void check_factor_input(Eigen::Index n, const Matrix& b) {
    if (b.rows() != n) throw std::invalid_argument("lyapunov_factor: B has the wrong number of rows");
    if (!b.allFinite()) throw NumericalError("lyapunov_factor: non-finite B");
}

}  // namespace

Matrix lyapunov_factor(const ComplexSchurForm& s, const Matrix& b, bool transpose, const Tolerances& tol) {
    using C = std::complex<double>;
    const auto n = s.T.rows();
    check_factor_input(n, b);
    CMatrix l;
    if (transpose) {
        auto [zd, td] = dual_form<C>(s.Z, s.T);
        CMatrix u = hammarling<C>(td, zd.adjoint() * b.cast<C>(), tol);
        l = zd * u.triangularView<Eigen::Upper>();
    } else {
        CMatrix u = hammarling<C>(s.T, s.Z.adjoint() * b.cast<C>(), tol);
        l = s.Z * u.triangularView<Eigen::Upper>();
    }
    // P = Re(L L^H) = [Re L, Im L][Re L, Im L]^T; compress to a square real factor.
    Matrix stacked(2 * n, n);
    stacked.topRows(n) = l.real().transpose();
    stacked.bottomRows(n) = l.imag().transpose();
    l.resize(0, 0);
    return qr_r_factor(stacked).transpose();
}

Matrix lyapunov_factor(const SchurForm& s, const Matrix& b, bool transpose, const Tolerances& tol) {
    if (!is_triangular(s)) return lyapunov_factor(to_complex_schur(s), b, transpose, tol);
    const auto n = s.T.rows();
    check_factor_input(n, b);
    if (transpose) {
        auto [zd, td] = dual_form<double>(s.Q, s.T);
        Matrix u = hammarling<double>(td, zd.transpose() * b, tol);
        return zd * u.triangularView<Eigen::Upper>();
    }
    Matrix u = hammarling<double>(s.T, s.Q.transpose() * b, tol);
    return s.Q * u.triangularView<Eigen::Upper>();
}

Matrix qr_r_factor(const Matrix& m) {
    const int rows = as_int(m.rows()), cols = as_int(m.cols());
    if (rows < cols) throw std::invalid_argument("qr_r_factor: need rows >= cols");
    if (cols == 0) return Matrix(0, 0);
    Matrix a = m;
    std::vector<double> tau(static_cast<std::size_t>(cols));
    int info = 0, lwork = -1;
    double query = 0;
    dgeqrf_(&rows, &cols, a.data(), &rows, tau.data(), &query, &lwork, &info);
    lwork = static_cast<int>(query);
    std::vector<double> work(static_cast<std::size_t>(std::max(lwork, 1)));
    dgeqrf_(&rows, &cols, a.data(), &rows, tau.data(), work.data(), &lwork, &info);
    if (info != 0) throw NumericalError("qr_r_factor: dgeqrf failed");
    return a.topRows(cols).triangularView<Eigen::Upper>();
}

SymEig sym_eig(const Matrix& s) {
    require_square(s, "sym_eig");
    require_finite(s, "sym_eig");
    const int n = as_int(s.rows());
    SymEig out{Vector(n), s};
    if (n == 0) return out;
    int info = 0, lwork = -1, liwork = -1, iquery = 0;
    double query = 0;
    dsyevd_("V", "L", &n, out.vectors.data(), &n, out.values.data(), &query, &lwork, &iquery, &liwork,
            &info, 1, 1);
    lwork = static_cast<int>(query);
    liwork = iquery;
    std::vector<double> work(static_cast<std::size_t>(std::max(lwork, 1)));
    std::vector<int> iwork(static_cast<std::size_t>(std::max(liwork, 1)));
    dsyevd_("V", "L", &n, out.vectors.data(), &n, out.values.data(), work.data(), &lwork, iwork.data(),
            &liwork, &info, 1, 1);
    if (info != 0) throw NumericalError("sym_eig: dsyevd failed to converge (info=" + std::to_string(info) + ")");
    out.values.reverseInPlace();
    out.vectors = out.vectors.rowwise().reverse().eval();
    return out;
}

Matrix psd_factor(const Matrix& p, const Tolerances& tol) {
    const auto e = sym_eig(p);
    if (e.values.size() == 0) return Matrix(0, 0);
    const double cut = tol.gramian_clip * std::max(e.values(0), 0.0);
    Vector root(e.values.size());
    for (Eigen::Index i = 0; i < root.size(); ++i) root(i) = e.values(i) > cut ? std::sqrt(e.values(i)) : 0.0;
    return e.vectors * root.asDiagonal();
}

Svd svd(const Matrix& m) {
    require_finite(m, "svd");
    const int rows = as_int(m.rows()), cols = as_int(m.cols());
    const int k = std::min(rows, cols);
    Svd out{Matrix(rows, k), Vector(k), Matrix(cols, k)};
    if (k == 0) return out;
    Matrix a = m;
    Matrix vt(k, cols);
    std::vector<int> iwork(static_cast<std::size_t>(8 * k));
    int info = 0, lwork = -1;
    double query = 0;
    dgesdd_("S", &rows, &cols, a.data(), &rows, out.sigma.data(), out.U.data(), &rows, vt.data(), &k,
            &query, &lwork, iwork.data(), &info, 1);
    lwork = static_cast<int>(query);
    std::vector<double> work(static_cast<std::size_t>(std::max(lwork, 1)));
    dgesdd_("S", &rows, &cols, a.data(), &rows, out.sigma.data(), out.U.data(), &rows, vt.data(), &k,
            work.data(), &lwork, iwork.data(), &info, 1);
    if (info != 0) throw NumericalError("svd: dgesdd failed to converge (info=" + std::to_string(info) + ")");
    out.V = vt.transpose();
    return out;
}

Matrix expm(const Matrix& a) {
    require_square(a, "expm");
    require_finite(a, "expm");
    const auto n = a.rows();
    const Matrix id = Matrix::Identity(n, n);
    if (n == 0) return id;
    const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();

    // Higham (2005) thresholds for degrees 3, 5, 7, 9, 13.
    static constexpr double theta[] = {1.495585217958292e-2, 2.539398330063230e-1,
                                       9.504178996162932e-1, 2.097847961257068e0,
                                       5.371920351148152e0};
    static constexpr double b3[] = {120., 60., 12., 1.};
    static constexpr double b5[] = {30240., 15120., 3360., 420., 30., 1.};
    static constexpr double b7[] = {17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.};
    static constexpr double b9[] = {17643225600., 8821612800., 2075673600., 302702400., 30270240.,
                                    2162160.,     110880.,     3960.,       90.,        1.};
    static constexpr double b13[] = {64764752532480000., 32382376266240000., 7771770303897600.,
                                     1187353796428800.,  129060195264000.,   10559470521600.,
                                     670442572800.,      33522128640.,       1323241920.,
                                     40840800.,          960960.,            16380.,
                                     182.,               1.};

    auto pade_low = [&](const double* b, int m) {
        const Matrix a2 = a * a;
        Matrix even_power = id;
        Matrix u = b[1] * id;
        Matrix v = b[0] * id;
        for (int k = 2; k <= m; k += 2) {
            even_power = even_power * a2;
            v += b[k] * even_power;
            u += b[k + 1] * even_power;
        }
        u = a * u;
        return Matrix((v - u).partialPivLu().solve(v + u));
    };

    if (norm1 <= theta[0]) return pade_low(b3, 3);
    if (norm1 <= theta[1]) return pade_low(b5, 5);
    if (norm1 <= theta[2]) return pade_low(b7, 7);
    if (norm1 <= theta[3]) return pade_low(b9, 9);

    int s = std::max(0, static_cast<int>(std::ceil(std::log2(norm1 / theta[4]))));
    if (s > 1000)
        throw NumericalError("expm: norm " + std::to_string(norm1) + " requires " + std::to_string(s) +
                             " squarings");
    const Matrix as = a * std::ldexp(1.0, -s);
    const Matrix a2 = as * as, a4 = a2 * a2, a6 = a4 * a2;
    Matrix u = as * (a6 * (b13[13] * a6 + b13[11] * a4 + b13[9] * a2) + b13[7] * a6 + b13[5] * a4 +
                     b13[3] * a2 + b13[1] * id);
    Matrix v = a6 * (b13[12] * a6 + b13[10] * a4 + b13[8] * a2) + b13[6] * a6 + b13[4] * a4 +
               b13[2] * a2 + b13[0] * id;
    Matrix r = (v - u).partialPivLu().solve(v + u);
    for (int k = 0; k < s; ++k) r = r * r;
    if (!r.allFinite()) throw NumericalError("expm: overflow after " + std::to_string(s) + " squarings");
    return r;
}

}  // namespace cmebal::linalg
