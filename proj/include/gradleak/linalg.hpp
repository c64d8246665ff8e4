#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gradleak/matrix.hpp"

namespace gradleak::linalg {

// Thin SVD m = left * diag(singular) * right with r = min(rows, cols).
//
// left is rows x r with orthonormal columns, right is r x cols with
// orthonormal rows, singular is non-increasing.  Signs are canonical: the
// first significant entry (|x| > 1e-12 * max|row|) of every row of `right`
// is positive.
struct SvdResult {
    Matrix left;
    std::vector<double> singular;
    Matrix right;

    std::size_t rank_capacity() const noexcept { return singular.size(); }
    Matrix reconstruct() const;
};

struct SvdOptions {
    int max_sweeps = 100;
    // A column pair is treated as orthogonal once |<a_p, a_q>| <= tol * |a_p| |a_q|.
    double orthogonality_tol = 1e-12;
};

// One-sided (Hestenes) Jacobi SVD.  Throws ConvergenceError when the sweep
// cap is reached.
SvdResult svd(const Matrix& m, const SvdOptions& options = {});

// max(rows, cols) * machine epsilon.
double default_rank_tolerance(std::size_t rows, std::size_t cols);

// Number of singular values strictly above tol_rel * singular[0]; zero when
// singular[0] is zero or the list is empty.
std::size_t numeric_rank(std::span<const double> singular, double tol_rel);
std::size_t numeric_rank(const SvdResult& s);

// Residuals used by tests and quality gates.
double column_orthonormality_error(const Matrix& m);  // max |m^T m - I|
double row_orthonormality_error(const Matrix& m);     // max |m m^T - I|

}  // namespace gradleak::linalg
