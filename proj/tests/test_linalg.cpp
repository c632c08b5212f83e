#include "doctest.h"

#include <cmath>
#include <vector>

#include "divst/errors.hpp"
#include "divst/linalg.hpp"
#include "divst/rng.hpp"

using namespace divst;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
}

Matrix random_symmetric(std::size_t n, Rng& rng) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double v = rng.normal();
            m(i, j) = v;
            m(j, i) = v;
        }
    }
    return m;
}

// Independent triple-loop product, no library calls.
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k)
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += a(i, k) * b(k, j);
    return out;
}

// det(A - t I) at long double precision via Gaussian elimination with
// partial pivoting; used as an independent characteristic-polynomial oracle.
long double char_poly_det(const Matrix& a, long double t) {
    std::size_t n = a.rows();
    std::vector<std::vector<long double>> m(n, std::vector<long double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m[i][j] = static_cast<long double>(a(i, j)) - (i == j ? t : 0.0L);
    long double det = 1.0L;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs((double)m[r][col]) > std::fabs((double)m[piv][col])) piv = r;
        if (m[piv][col] == 0.0L) return 0.0L;
        if (piv != col) {
            std::swap(m[piv], m[col]);
            det = -det;
        }
        det *= m[col][col];
        for (std::size_t r = col + 1; r < n; ++r) {
            long double f = m[r][col] / m[col][col];
            for (std::size_t c = col; c < n; ++c) m[r][c] -= f * m[col][c];
        }
    }
    return det;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    REQUIRE(a.rows() == b.rows());
    REQUIRE(a.cols() == b.cols());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            worst = std::max(worst, std::fabs(a(i, j) - b(i, j)));
    return worst;
}

} // namespace

TEST_CASE("matmul: identity times A returns A") {
    Matrix a{{1.0, -2.5, 3.0}, {0.5, 4.0, -1.0}};
    Matrix out = matmul(Matrix::identity(2), a);
    CHECK(out == a);
}

TEST_CASE("matmul: hand-computed 2x2 times 2x1") {
    Matrix a{{1, 2}, {3, 4}};
    Matrix b{{1}, {1}};
    Matrix out = matmul(a, b);
    CHECK(out(0, 0) == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(out(1, 0) == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("matmul: random 5x4 * 4x3 matches naive triple-loop oracle to 1e-12") {
    Rng rng(11, "matmul-oracle");
    Matrix a = random_matrix(5, 4, rng);
    Matrix b = random_matrix(4, 3, rng);
    CHECK(max_abs_diff(matmul(a, b), naive_matmul(a, b)) <= 1e-12);
}

TEST_CASE("matmul: inner-dimension mismatch throws ShapeError") {
    Matrix a(2, 3), b(2, 3);
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("transpose, add, sub, scale behave entrywise") {
    Matrix a{{1, 2}, {3, 4}};
    Matrix t = transpose(a);
    CHECK(t(0, 1) == 3.0);
    CHECK(t(1, 0) == 2.0);
    Matrix s = add(a, a);
    CHECK(s(1, 1) == 8.0);
    Matrix d = sub(a, a);
    CHECK(frobenius_norm(d) == 0.0);
    Matrix sc = scale(a, -0.5);
    CHECK(sc(0, 0) == -0.5);
    CHECK_THROWS_AS(add(Matrix(2, 2), Matrix(2, 3)), ShapeError);
}

TEST_CASE("vector helpers: dot, squared norm, matvec") {
    std::vector<double> u{1.0, 2.0, 2.0};
    CHECK(dot(u, u) == doctest::Approx(9.0));
    CHECK(norm2(u) == doctest::Approx(9.0)); // squared Euclidean norm
    Matrix a{{1, 0, 0}, {0, 2, 0}};
    std::vector<double> y = matvec(a, u);
    REQUIRE(y.size() == 2);
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] == doctest::Approx(4.0));
    CHECK_THROWS_AS(dot(u, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("frobenius norm of a hand case") {
    Matrix a{{3, 0}, {0, 4}};
    CHECK(frobenius_norm(a) == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("sym_eigen: diag(3,1) gives eigenvalues [3,1] with axis-aligned vectors") {
    Matrix a{{3, 0}, {0, 1}};
    EigenResult e = sym_eigen(a);
    REQUIRE(e.eigenvalues.size() == 2);
    CHECK(e.eigenvalues[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(e.eigenvalues[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::fabs(e.eigenvectors(0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::fabs(e.eigenvectors(1, 0)) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sym_eigen: 2x2 ones matrix has spectrum {2, 0}") {
    Matrix a{{1, 1}, {1, 1}};
    EigenResult e = sym_eigen(a);
    CHECK(e.eigenvalues[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(e.eigenvalues[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sym_eigen: random symmetric 6x6 matches characteristic-polynomial roots") {
    Rng rng(23, "eigen-oracle");
    Matrix a = random_symmetric(6, rng);
    EigenResult e = sym_eigen(a);
    REQUIRE(e.eigenvalues.size() == 6);

    // Precondition for the sign-bracketing oracle: simple, separated roots.
    for (std::size_t i = 1; i < 6; ++i) {
        REQUIRE(e.eigenvalues[i - 1] - e.eigenvalues[i] > 1e-4);
    }
    // Each reported eigenvalue brackets a sign change of det(A - tI)
    // evaluated by an independent long-double elimination.
    for (double lambda : e.eigenvalues) {
        long double lo = char_poly_det(a, lambda - 1e-8);
        long double hi = char_poly_det(a, lambda + 1e-8);
        CHECK(((lo < 0 && hi > 0) || (lo > 0 && hi < 0)));
    }
    // The pairs must also satisfy A v = lambda v and V^T V = I.
    for (std::size_t k = 0; k < 6; ++k) {
        std::vector<double> v(6);
        for (std::size_t i = 0; i < 6; ++i) v[i] = e.eigenvectors(i, k);
        std::vector<double> av = matvec(a, v);
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(av[i] == doctest::Approx(e.eigenvalues[k] * v[i]).epsilon(1e-9));
        }
    }
    Matrix vtv = matmul(transpose(e.eigenvectors), e.eigenvectors);
    CHECK(max_abs_diff(vtv, Matrix::identity(6)) <= 1e-10);
}

TEST_CASE("sym_eigen rejects non-symmetric and non-square input") {
    Matrix ns{{0, 1}, {2, 0}};
    CHECK_THROWS_AS(sym_eigen(ns), ShapeError);
    CHECK_THROWS_AS(sym_eigen(Matrix(2, 3)), ShapeError);
}

TEST_CASE("first_principal_component: axis-aligned spread") {
    Matrix x{{-1, 0}, {1, 0}};
    std::vector<double> v = first_principal_component(x);
    CHECK(v[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(v[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("first_principal_component: diagonal cloud, sign fixed positive") {
    Matrix x{{-1, -1}, {1, 1}};
    std::vector<double> v = first_principal_component(x);
    CHECK(v[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(v[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("first_principal_component: random 50x4 cloud matches eigen oracle up to sign") {
    Rng rng(31, "pca-oracle");
    Matrix x = random_matrix(50, 4, rng);
    // Stretch one direction so the top eigenvalue is well separated.
    for (std::size_t i = 0; i < 50; ++i) x(i, 2) *= 3.0;
    std::vector<double> v = first_principal_component(x);

    std::vector<double> mean = column_means(x);
    Matrix cov(4, 4);
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < 50; ++i) s += (x(i, a) - mean[a]) * (x(i, b) - mean[b]);
            cov(a, b) = s / 49.0;
        }
    EigenResult e = sym_eigen(cov);
    double dot_abs = 0.0;
    for (std::size_t i = 0; i < 4; ++i) dot_abs += v[i] * e.eigenvectors(i, 0);
    CHECK(std::fabs(std::fabs(dot_abs) - 1.0) <= 1e-8);
}

TEST_CASE("first_principal_component rejects fewer than 2 rows") {
    CHECK_THROWS_AS(first_principal_component(Matrix(1, 3)), InputError);
}

TEST_CASE("column_means averages each column") {
    Matrix x{{0, 2}, {2, 4}};
    std::vector<double> m = column_means(x);
    CHECK(m[0] == doctest::Approx(1.0));
    CHECK(m[1] == doctest::Approx(3.0));
}

TEST_CASE("solve_linear: identity system returns the right-hand side") {
    Matrix b{{1.5}, {-2.0}};
    Matrix x = solve_linear(Matrix::identity(2), b);
    CHECK(max_abs_diff(x, b) <= 1e-14);
}

TEST_CASE("solve_linear: diagonal system") {
    Matrix a{{2, 0}, {0, 4}};
    Matrix b{{2}, {8}};
    Matrix x = solve_linear(a, b);
    CHECK(x(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(x(1, 0) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("solve_linear: random SPD 8x8 residual is tiny") {
    Rng rng(47, "spd-oracle");
    Matrix g = random_matrix(8, 8, rng);
    Matrix a = matmul(transpose(g), g);
    for (std::size_t i = 0; i < 8; ++i) a(i, i) += 1.0;
    Matrix b = random_matrix(8, 2, rng);
    Matrix x = solve_linear(a, b);
    Matrix residual = sub(matmul(a, x), b);
    CHECK(frobenius_norm(residual) <= 1e-9 * (1.0 + frobenius_norm(b)));
}

TEST_CASE("solve_linear: singular matrix throws NumericError") {
    Matrix a{{1, 1}, {1, 1}};
    Matrix b{{1}, {1}};
    CHECK_THROWS_AS(solve_linear(a, b), NumericError);
}

TEST_CASE("check_finite flags NaN and Inf") {
    Matrix a(2, 2);
    CHECK_NOTHROW(check_finite(a, "a"));
    a(1, 1) = std::nan("");
    CHECK_THROWS_AS(check_finite(a, "a"), NumericError);
    std::vector<double> v{1.0, std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(check_finite(v, "v"), NumericError);
}
