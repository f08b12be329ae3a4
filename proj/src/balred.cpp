#include "cmebal/balred.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace cmebal {

namespace {

double max_real_eigenvalue(const Matrix& a) {
    if (a.rows() == 0) return -std::numeric_limits<double>::infinity();
    const auto ev = linalg::schur_eigenvalues(linalg::schur(a));
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < ev.size(); ++i) m = std::max(m, ev(i).real());
    return m;
}

void check_order(const BalancedSystem& bal, std::size_t k) {
    if (k < 1 || k > bal.q())
        throw std::out_of_range("order k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(bal.q()) + "]");
}

}  // namespace

Vector point_mass(std::size_t w, std::size_t ordinal) {
    if (ordinal >= w) throw std::out_of_range("point_mass: ordinal outside the state space");
    Vector p = Vector::Zero(static_cast<Eigen::Index>(w));
    p(static_cast<Eigen::Index>(ordinal)) = 1.0;
    return p;
}

StableSystem stabilize(const Generator& gen, const OutputMatrix& out, const Vector& p0,
                       const linalg::Tolerances& tol) {
    const auto w = static_cast<Eigen::Index>(gen.size());
    if (w < 2) throw ReductionError("stabilize: need at least two states, got " + std::to_string(w));
    if (out.matrix.cols() != w)
        throw std::invalid_argument("stabilize: output matrix has " + std::to_string(out.matrix.cols()) +
                                    " columns, generator has " + std::to_string(w) + " states");
    if (p0.size() != w) throw std::invalid_argument("stabilize: p0 has the wrong length");
    if (!p0.allFinite() || p0.minCoeff() < 0.0 || std::abs(p0.sum() - 1.0) > 1e-12)
        throw ReductionError("stabilize: p0 is not a probability vector");

    const std::size_t closed = count_closed_classes(gen.matrix);
    if (closed != 1)
        throw ReductionError("stabilize: the chain has " + std::to_string(closed) +
                             " closed classes; the zero eigenvalue is not simple");

    const Matrix full = Matrix(gen.matrix);
    const Eigen::Index n = w - 1;
    StableSystem sys;
    const Vector a21 = full.col(0).tail(n);
    sys.A = full.bottomRightCorner(n, n);
    sys.A.colwise() -= a21;
    sys.z0 = p0.tail(n);
    const bool impulse = sys.z0.cwiseAbs().maxCoeff() > 0.0;
    sys.B.resize(n, impulse ? 2 : 1);
    sys.B.col(0) = a21;
    if (impulse) sys.B.col(1) = sys.z0;
    sys.C = out.matrix.rightCols(n);
    sys.C.colwise() -= out.matrix.col(0);
    sys.d = out.matrix.col(0);

    const double tr_full = full.trace();
    const double tr = sys.A.trace();
    if (std::abs(tr - tr_full) > 1e-9 * std::max(1.0, std::abs(tr_full)))
        throw ReductionError("stabilize: trace identity violated (" + std::to_string(tr) + " vs " +
                             std::to_string(tr_full) + ")");

    if (n <= 200) {
        const double m = max_real_eigenvalue(sys.A);
        if (m >= -tol.stability_margin)
            throw ReductionError("stabilize: A is not stable (max Re lambda = " + std::to_string(m) + ")");
    }
    return sys;
}

BalancedSystem balance(const StableSystem& sys, const linalg::Tolerances& tol) {
    const auto s = linalg::schur(sys.A);
    const Matrix lp = linalg::lyapunov_factor(s, sys.B, false, tol);
    const Matrix lq = linalg::lyapunov_factor(s, sys.C.transpose(), true, tol);
    const auto sv = linalg::svd(lq.transpose() * lp);

    BalancedSystem bal;
    bal.d = sys.d;
    bal.hsv_all = sv.sigma;
    if (sv.sigma.size() == 0 || !(sv.sigma(0) > 0.0))
        throw ReductionError("balance: all Hankel singular values vanish; the output does not depend on the input");
    Eigen::Index q = 0;
    while (q < sv.sigma.size() && sv.sigma(q) >= tol.hsv_cutoff * sv.sigma(0)) ++q;
    bal.hsv = sv.sigma.head(q);

    const Vector root = bal.hsv.cwiseSqrt().cwiseInverse();
    const Matrix t = lp * (sv.V.leftCols(q) * root.asDiagonal());
    const Matrix tinv = (root.asDiagonal() * sv.U.leftCols(q).transpose()) * lq.transpose();
    bal.A = tinv * (sys.A * t);
    bal.B = tinv * sys.B;
    bal.C = sys.C * t;
    return bal;
}

std::string_view to_string(ReductionMethod m) {
    return m == ReductionMethod::Truncation ? "truncate" : "residualize";
}

ReductionMethod parse_method(std::string_view s) {
    if (s == "truncate" || s == "truncation") return ReductionMethod::Truncation;
    if (s == "residualize" || s == "residualization") return ReductionMethod::Residualization;
    throw std::invalid_argument("unknown reduction method '" + std::string(s) + "'");
}

double error_bound(const BalancedSystem& bal, std::size_t k) {
    check_order(bal, k);
    // Accumulate from the smallest value so the bound is exactly nonincreasing in k.
    double sum = 0.0;
    for (auto i = static_cast<Eigen::Index>(bal.q()) - 1; i >= static_cast<Eigen::Index>(k); --i) sum += bal.hsv(i);
    return 2.0 * sum;
}

std::size_t suggest_order(const BalancedSystem& bal, double ratio) {
    if (bal.q() == 0) throw std::invalid_argument("suggest_order: no Hankel singular values");
    for (std::size_t k = 1; k < bal.q(); ++k)
        if (bal.hsv(static_cast<Eigen::Index>(k)) < ratio * bal.hsv(0)) return k;
    return bal.q();
}

ReducedModel truncate(const BalancedSystem& bal, std::size_t k) {
    check_order(bal, k);
    const auto kk = static_cast<Eigen::Index>(k);
    ReducedModel m;
    m.k = k;
    m.method = ReductionMethod::Truncation;
    m.A = bal.A.topLeftCorner(kk, kk);
    m.B = bal.B.topRows(kk);
    m.C = bal.C.leftCols(kk);
    m.D = Matrix::Zero(bal.C.rows(), bal.B.cols());
    m.D.col(0) = bal.d;
    m.bound = error_bound(bal, k);
    m.hsv = bal.hsv;
    const double re = max_real_eigenvalue(m.A);
    if (re >= 0.0)
        throw ReductionError("truncate: reduced A is not stable (max Re lambda = " + std::to_string(re) + ")");
    return m;
}

ReducedModel residualize(const BalancedSystem& bal, std::size_t k) {
    check_order(bal, k);
    ReducedModel m = truncate(bal, k);
    m.method = ReductionMethod::Residualization;
    const auto kk = static_cast<Eigen::Index>(k);
    const auto rest = static_cast<Eigen::Index>(bal.q()) - kk;
    if (rest == 0) return m;

    const Matrix a12 = bal.A.topRightCorner(kk, rest);
    const Matrix a21 = bal.A.bottomLeftCorner(rest, kk);
    const Matrix a22 = bal.A.bottomRightCorner(rest, rest);
    const Matrix b2 = bal.B.bottomRows(rest);
    const Matrix c2 = bal.C.rightCols(rest);
    Eigen::FullPivLU<Matrix> lu(a22);
    if (!lu.isInvertible()) throw ReductionError("residualize: A22 is singular");
    const Matrix x21 = lu.solve(a21);
    const Matrix xb2 = lu.solve(b2);
    m.A -= a12 * x21;
    m.B -= a12 * xb2;
    m.C -= c2 * x21;
    m.D -= c2 * xb2;
    const double re = max_real_eigenvalue(m.A);
    if (re >= 0.0)
        throw ReductionError("residualize: reduced A is not stable (max Re lambda = " + std::to_string(re) + ")");
    return m;
}

ReducedModel reduce(const BalancedSystem& bal, std::size_t k, ReductionMethod method) {
    return method == ReductionMethod::Truncation ? truncate(bal, k) : residualize(bal, k);
}

Matrix dc_gain(const Matrix& a, const Matrix& b, const Matrix& c, const Matrix& d) {
    return d - c * a.partialPivLu().solve(b);
}

Matrix dc_gain(const ReducedModel& m) { return dc_gain(m.A, m.B, m.C, m.D); }

// ---------------------------------------------------------------------------
// Model document

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void put_matrix(std::ostringstream& os, const char* name, const Matrix& m) {
    os << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) os << fmt17(m(i, j)) << '\n';
}

std::string expect_key(std::istringstream& is, std::string_view key) {
    std::string tok;
    if (!(is >> tok) || tok != key)
        throw std::invalid_argument("model document: expected '" + std::string(key) + "', found '" + tok + "'");
    return tok;
}

Matrix get_matrix(std::istringstream& is, std::string_view name) {
    expect_key(is, name);
    Eigen::Index r = 0, c = 0;
    if (!(is >> r >> c) || r < 0 || c < 0)
        throw std::invalid_argument("model document: bad shape for " + std::string(name));
    Matrix m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i)
            if (!(is >> m(i, j))) throw std::invalid_argument("model document: truncated " + std::string(name));
    return m;
}

}  // namespace

std::string serialize_model(const ReducedModel& m) {
    std::ostringstream os;
    os << "cmebal-reduced-model 1\n";
    os << "method " << to_string(m.method) << '\n';
    os << "order " << m.k << '\n';
    os << "bound " << fmt17(m.bound) << '\n';
    os << "hsv " << m.hsv.size() << '\n';
    for (Eigen::Index i = 0; i < m.hsv.size(); ++i) os << fmt17(m.hsv(i)) << '\n';
    put_matrix(os, "A", m.A);
    put_matrix(os, "B", m.B);
    put_matrix(os, "C", m.C);
    put_matrix(os, "D", m.D);
    return os.str();
}

ReducedModel parse_model(std::string_view text) {
    std::istringstream is{std::string(text)};
    ReducedModel m;
    int version = 0;
    expect_key(is, "cmebal-reduced-model");
    if (!(is >> version) || version != 1) throw std::invalid_argument("model document: unsupported version");
    std::string method;
    expect_key(is, "method");
    is >> method;
    m.method = parse_method(method);
    expect_key(is, "order");
    is >> m.k;
    expect_key(is, "bound");
    is >> m.bound;
    expect_key(is, "hsv");
    Eigen::Index nh = 0;
    is >> nh;
    if (!is || nh < 0) throw std::invalid_argument("model document: bad hsv count");
    m.hsv.resize(nh);
    for (Eigen::Index i = 0; i < nh; ++i)
        if (!(is >> m.hsv(i))) throw std::invalid_argument("model document: truncated hsv");
    m.A = get_matrix(is, "A");
    m.B = get_matrix(is, "B");
    m.C = get_matrix(is, "C");
    m.D = get_matrix(is, "D");
    const auto k = static_cast<Eigen::Index>(m.k);
    if (m.A.rows() != k || m.A.cols() != k || m.B.rows() != k || m.C.cols() != k ||
        m.D.rows() != m.C.rows() || m.D.cols() != m.B.cols())
        throw std::invalid_argument("model document: inconsistent matrix shapes");
    return m;
}

}  // namespace cmebal
