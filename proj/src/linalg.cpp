#include "gradleak/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gradleak/errors.hpp"

namespace gradleak::linalg {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Column-major working copy: `n` columns of length `m`.
struct Columns {
    std::size_t m = 0;
    std::size_t n = 0;
    std::vector<double> data;

    double* col(std::size_t j) { return data.data() + j * m; }
    const double* col(std::size_t j) const { return data.data() + j * m; }
};

double col_dot(const double* a, const double* b, std::size_t len) {
    double s = 0.0;
    for (std::size_t i = 0; i < len; ++i) s += a[i] * b[i];
    return s;
}

void rotate(double* a, double* b, std::size_t len, double c, double s) {
    for (std::size_t i = 0; i < len; ++i) {
        const double x = a[i];
        const double y = b[i];
        a[i] = c * x - s * y;
        b[i] = s * x + c * y;
    }
}

// Replace column `j` of `u` with a unit vector orthogonal to every column in
// `done`.  Picks the coordinate axis least covered by the existing basis.
void complete_column(Columns& u, std::size_t j, const std::vector<std::size_t>& done) {
    std::vector<double> coverage(u.m, 0.0);
    for (std::size_t k : done) {
        const double* ck = u.col(k);
        for (std::size_t i = 0; i < u.m; ++i) coverage[i] += ck[i] * ck[i];
    }
    const auto axis = static_cast<std::size_t>(
        std::min_element(coverage.begin(), coverage.end()) - coverage.begin());
    double* cj = u.col(j);
    std::fill(cj, cj + u.m, 0.0);
    cj[axis] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k : done) {
            const double* ck = u.col(k);
            const double p = col_dot(cj, ck, u.m);
            for (std::size_t i = 0; i < u.m; ++i) cj[i] -= p * ck[i];
        }
    }
    const double norm = std::sqrt(col_dot(cj, cj, u.m));
    for (std::size_t i = 0; i < u.m; ++i) cj[i] /= norm;
}

}  // namespace

Matrix SvdResult::reconstruct() const {
    Matrix scaled = left;
    for (std::size_t i = 0; i < scaled.rows(); ++i)
        for (std::size_t k = 0; k < singular.size(); ++k) scaled(i, k) *= singular[k];
    return matmul(scaled, right);
}

SvdResult svd(const Matrix& input, const SvdOptions& options) {
    if (input.rows() == 0 || input.cols() == 0) throw InvalidArgument("svd: empty matrix");
    if (!input.all_finite()) throw InvalidArgument("svd: non-finite entries");

    // Orthogonalise the columns of A, where A is the input or its transpose,
    // whichever has fewer columns.  A V = U diag(sigma).
    const bool transpose = input.rows() < input.cols();
    Columns a;
    a.m = transpose ? input.cols() : input.rows();
    a.n = transpose ? input.rows() : input.cols();
    a.data.resize(a.m * a.n);
    for (std::size_t r = 0; r < input.rows(); ++r) {
        for (std::size_t c = 0; c < input.cols(); ++c) {
            const double v = input(r, c);
            if (transpose)
                a.data[r * a.m + c] = v;
            else
                a.data[c * a.m + r] = v;
        }
    }
    Columns v;
    v.m = a.n;
    v.n = a.n;
    v.data.assign(a.n * a.n, 0.0);
    for (std::size_t j = 0; j < a.n; ++j) v.col(j)[j] = 1.0;

    const double fro = input.frobenius_norm();
    // Columns at rounding level carry no information; rotating them only
    // shuffles noise.  They end up below any rank cut and are replaced by
    // the null-space completion.
    const double negligible = fro * kEps;
    const double negligible2 = negligible * negligible;

    std::vector<double> norm2(a.n);
    int sweep = 0;
    for (;; ++sweep) {
        if (sweep >= options.max_sweeps) {
            throw ConvergenceError("svd: one-sided Jacobi did not converge", sweep);
        }
        // Exact norms once per sweep, updated in closed form after each rotation.
        for (std::size_t j = 0; j < a.n; ++j) norm2[j] = col_dot(a.col(j), a.col(j), a.m);
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < a.n; ++p) {
            if (norm2[p] <= negligible2) continue;
            for (std::size_t q = p + 1; q < a.n; ++q) {
                const double alpha = norm2[p];
                const double beta = norm2[q];
                if (beta <= negligible2) continue;
                double* ap = a.col(p);
                double* aq = a.col(q);
                const double gamma = col_dot(ap, aq, a.m);
                if (std::abs(gamma) <= options.orthogonality_tol * std::sqrt(alpha) * std::sqrt(beta))
                    continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate(ap, aq, a.m, c, s);
                rotate(v.col(p), v.col(q), v.m, c, s);
                norm2[p] = std::max(0.0, alpha - t * gamma);
                norm2[q] = std::max(0.0, beta + t * gamma);
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sigma(a.n);
    for (std::size_t j = 0; j < a.n; ++j) sigma[j] = std::sqrt(col_dot(a.col(j), a.col(j), a.m));
    std::vector<std::size_t> order(a.n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    const double sigma_max = sigma[order.front()];
    // Same cut as the rotation skip, so skipped columns are always completed.
    const double null_level = std::max(sigma_max * kEps, negligible);
    std::vector<std::size_t> done;
    done.reserve(a.n);
    for (std::size_t j : order) {
        if (sigma_max > 0.0 && sigma[j] > null_level) {
            double* cj = a.col(j);
            for (std::size_t i = 0; i < a.m; ++i) cj[i] /= sigma[j];
        } else {
            complete_column(a, j, done);
        }
        done.push_back(j);
    }

    // Assemble: the input equals U S V^T (no transpose) or V S U^T (transpose).
    const std::size_t r = a.n;
    SvdResult out;
    out.singular.resize(r);
    Matrix left_cols(transpose ? input.rows() : input.rows(), r);
    Matrix right_rows(r, input.cols());
    for (std::size_t k = 0; k < r; ++k) {
        const std::size_t j = order[k];
        out.singular[k] = sigma[j];
        const double* uj = a.col(j);
        const double* vj = v.col(j);
        if (transpose) {
            for (std::size_t i = 0; i < input.rows(); ++i) left_cols(i, k) = vj[i];
            for (std::size_t i = 0; i < input.cols(); ++i) right_rows(k, i) = uj[i];
        } else {
            for (std::size_t i = 0; i < input.rows(); ++i) left_cols(i, k) = uj[i];
            for (std::size_t i = 0; i < input.cols(); ++i) right_rows(k, i) = vj[i];
        }
    }

    for (std::size_t k = 0; k < r; ++k) {
        auto row = right_rows.row(k);
        double biggest = 0.0;
        for (double x : row) biggest = std::max(biggest, std::abs(x));
        const double floor = 1e-12 * biggest;
        auto first = std::find_if(row.begin(), row.end(),
                                  [&](double x) { return std::abs(x) > floor; });
        if (first != row.end() && *first < 0.0) {
            for (double& x : row) x = -x;
            for (std::size_t i = 0; i < left_cols.rows(); ++i) left_cols(i, k) = -left_cols(i, k);
        }
    }
    out.left = std::move(left_cols);
    out.right = std::move(right_rows);
    return out;
}

double default_rank_tolerance(std::size_t rows, std::size_t cols) {
    return static_cast<double>(std::max(rows, cols)) * kEps;
}

std::size_t numeric_rank(std::span<const double> singular, double tol_rel) {
    if (singular.empty() || singular.front() <= 0.0) return 0;
    const double cut = tol_rel * singular.front();
    return static_cast<std::size_t>(
        std::count_if(singular.begin(), singular.end(), [&](double s) { return s > cut; }));
}

std::size_t numeric_rank(const SvdResult& s) {
    return numeric_rank(s.singular, default_rank_tolerance(s.left.rows(), s.right.cols()));
}

double column_orthonormality_error(const Matrix& m) {
    const Matrix g = matmul_tn(m, m);
    double err = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j)
            err = std::max(err, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
    return err;
}

double row_orthonormality_error(const Matrix& m) {
    return column_orthonormality_error(m.transposed());
}

}  // namespace gradleak::linalg
