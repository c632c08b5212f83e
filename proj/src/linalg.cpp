#include "divst/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#ifdef DIVST_HAVE_CBLAS
#include <cblas.h>
#endif

namespace divst {

namespace {

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data()[i]));
    return m;
}

// Off-diagonal Frobenius norm, the Jacobi convergence measure.
double off_diag_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

// Largest-magnitude entry positive; first such entry decides on ties.
// Keeps seeded runs bit-stable regardless of rotation sign drift.
void fix_sign(Matrix& vecs, std::size_t col) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < vecs.rows(); ++i) {
        double v = std::fabs(vecs(i, col));
        if (v > best) {
            best = v;
            arg = i;
        }
    }
    if (vecs(arg, col) < 0.0)
        for (std::size_t i = 0; i < vecs.rows(); ++i) vecs(i, col) = -vecs(i, col);
}

} // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions disagree (" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + ")");
    Matrix c(a.rows(), b.cols());
    if (a.rows() == 0 || b.cols() == 0 || a.cols() == 0) return c;
#ifdef DIVST_HAVE_CBLAS
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(a.rows()),
                static_cast<int>(b.cols()), static_cast<int>(a.cols()), 1.0, a.data(),
                static_cast<int>(a.cols()), b.data(), static_cast<int>(b.cols()), 0.0, c.data(),
                static_cast<int>(c.cols()));
#else
    // ikj order so the inner loop streams along rows of b and c.
    const std::size_t m = a.rows(), kk = a.cols(), n = b.cols();
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c.row(i);
        for (std::size_t l = 0; l < kk; ++l) {
            const double ail = a(i, l);
            if (ail == 0.0) continue;
            const double* bl = b.row(l);
            for (std::size_t j = 0; j < n; ++j) ci[j] += ail * bl[j];
        }
    }
#endif
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add: shape mismatch");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("sub: shape mismatch");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
    return c;
}

Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= s;
    return c;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
    return std::sqrt(s);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const std::vector<double>& a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return s;
}

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
    if (a.cols() != x.size()) throw ShapeError("matvec: shape mismatch");
    std::vector<double> y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ri = a.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += ri[j] * x[j];
        y[i] = s;
    }
    return y;
}

// ===========================================================================
// Symmetric eigendecomposition: cyclic Jacobi
// ===========================================================================

EigenResult sym_eigen(const Matrix& a) {
    if (a.rows() != a.cols()) throw ShapeError("sym_eigen: matrix not square");
    const std::size_t n = a.rows();
    const double scale0 = std::max(1.0, max_abs(a));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::fabs(a(i, j) - a(j, i)) > 1e-10 * scale0)
                throw ShapeError("sym_eigen: matrix not symmetric within 1e-10");

    Matrix A = a;
    // Symmetrize exactly so rounding asymmetry cannot accumulate.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = 0.5 * (A(i, j) + A(j, i));
            A(i, j) = v;
            A(j, i) = v;
        }
    Matrix V = Matrix::identity(n);

    const double fnorm = std::max(frobenius_norm(A), 1e-300);
    const int max_sweeps = 100;
    bool converged = (n < 2);
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        if (off_diag_norm(A) <= 1e-14 * fnorm) {
            converged = true;
            break;
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = A(p, q);
                if (std::fabs(apq) <= 1e-300) continue;
                const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const double tau = s / (1.0 + c);
                const double app = A(p, p), aqq = A(q, q);
                A(p, p) = app - t * apq;
                A(q, q) = aqq + t * apq;
                A(p, q) = 0.0;
                A(q, p) = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (i != p && i != q) {
                        const double aip = A(i, p), aiq = A(i, q);
                        A(i, p) = aip - s * (aiq + tau * aip);
                        A(p, i) = A(i, p);
                        A(i, q) = aiq + s * (aip - tau * aiq);
                        A(q, i) = A(i, q);
                    }
                    const double vip = V(i, p), viq = V(i, q);
                    V(i, p) = vip - s * (viq + tau * vip);
                    V(i, q) = viq + s * (vip - tau * viq);
                }
            }
        }
    }
    if (!converged && off_diag_norm(A) > 1e-14 * fnorm)
        throw NumericError("sym_eigen: Jacobi sweeps did not converge");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = A(i, i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return diag[x] > diag[y]; });

    EigenResult r;
    r.eigenvalues.resize(n);
    r.eigenvectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        r.eigenvalues[k] = diag[order[k]];
        for (std::size_t i = 0; i < n; ++i) r.eigenvectors(i, k) = V(i, order[k]);
        fix_sign(r.eigenvectors, k);
    }
    check_finite(r.eigenvectors, "sym_eigen eigenvectors");
    check_finite(r.eigenvalues, "sym_eigen eigenvalues");
    return r;
}

std::vector<double> column_means(const Matrix& x) {
    std::vector<double> mu(x.cols(), 0.0);
    if (x.rows() == 0) return mu;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* ri = x.row(i);
        for (std::size_t j = 0; j < x.cols(); ++j) mu[j] += ri[j];
    }
    for (double& v : mu) v /= static_cast<double>(x.rows());
    return mu;
}

std::vector<double> first_principal_component(const Matrix& x) {
    if (x.rows() < 2) throw InputError("first_principal_component: need at least 2 rows");
    const std::size_t n = x.rows(), d = x.cols();
    std::vector<double> mu = column_means(x);
    Matrix xc(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) xc(i, j) = x(i, j) - mu[j];
    Matrix cov = scale(matmul(transpose(xc), xc), 1.0 / static_cast<double>(n - 1));
    EigenResult e = sym_eigen(cov);
    std::vector<double> v(d);
    double nrm = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        v[i] = e.eigenvectors(i, 0);
        nrm += v[i] * v[i];
    }
    nrm = std::sqrt(nrm);
    if (nrm > 0.0)
        for (double& w : v) w /= nrm;
    check_finite(v, "first_principal_component");
    return v;
}

// ===========================================================================
// Linear solve: partial-pivot LU
// ===========================================================================

Matrix solve_linear(const Matrix& a, const Matrix& b) {
    if (a.rows() != a.cols()) throw ShapeError("solve_linear: matrix not square");
    if (b.rows() != a.rows()) throw ShapeError("solve_linear: rhs row count mismatch");
    const std::size_t n = a.rows(), m = b.cols();
    Matrix lu = a;
    Matrix x = b;
    const double tol = 1e-12 * std::max(1.0, max_abs(a));

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double best = std::fabs(lu(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            double v = std::fabs(lu(i, k));
            if (v > best) {
                best = v;
                piv = i;
            }
        }
        if (best <= tol) throw NumericError("solve_linear: singular within pivot tolerance");
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(piv, j));
            for (std::size_t j = 0; j < m; ++j) std::swap(x(k, j), x(piv, j));
        }
        const double d = lu(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = lu(i, k) / d;
            if (f == 0.0) continue;
            lu(i, k) = f;
            for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= f * lu(k, j);
            for (std::size_t j = 0; j < m; ++j) x(i, j) -= f * x(k, j);
        }
    }
    // Back substitution.
    for (std::size_t kk = n; kk-- > 0;) {
        for (std::size_t j = 0; j < m; ++j) {
            double s = x(kk, j);
            for (std::size_t l = kk + 1; l < n; ++l) s -= lu(kk, l) * x(l, j);
            x(kk, j) = s / lu(kk, kk);
        }
    }
    check_finite(x, "solve_linear solution");
    return x;
}

void check_finite(const Matrix& a, const char* what) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(a.data()[i]))
            throw NumericError(std::string(what) + ": non-finite entry");
}

void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite entry");
}

} // namespace divst
