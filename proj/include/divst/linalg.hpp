#pragma once

#include <vector>

#include "divst/matrix.hpp"

namespace divst {

struct EigenResult {
    std::vector<double> eigenvalues; // descending
    Matrix eigenvectors;             // orthonormal columns, column i pairs with eigenvalues[i]
};

// Product a*b. Dimension mismatch throws ShapeError.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

// a + b, a - b, scalar scaling; small conveniences used all over.
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

double frobenius_norm(const Matrix& a);
double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a); // squared Euclidean norm

// y = A x for a vector x.
std::vector<double> matvec(const Matrix& a, const std::vector<double>& x);

// Full spectrum of a symmetric matrix via cyclic Jacobi rotations.
// Input must be square and symmetric within 1e-10 (ShapeError otherwise);
// failure to converge within the sweep cap throws NumericError.
EigenResult sym_eigen(const Matrix& a);

// Unit-norm top eigenvector of the column-centered covariance of x
// (normalized by n-1), sign fixed so the largest-magnitude entry is positive.
// Fewer than 2 rows throws InputError.
std::vector<double> first_principal_component(const Matrix& x);

// Column means of x (used with first_principal_component to project points:
// proj_1(p) = (p - mean) . v).
std::vector<double> column_means(const Matrix& x);

// Solve a*X = b by partial-pivot LU. Singularity (pivot below tolerance)
// throws NumericError.
Matrix solve_linear(const Matrix& a, const Matrix& b);

// Throws NumericError if any entry is NaN/Inf; `what` names the culprit.
void check_finite(const Matrix& a, const char* what);
void check_finite(const std::vector<double>& v, const char* what);

} // namespace divst
