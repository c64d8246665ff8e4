#include "gradleak/lp.hpp"

#include <cmath>
#include <limits>

#include "gradleak/errors.hpp"

namespace gradleak::lp {

namespace {

// Variable numbering fixes Bland's order: lambda_0..lambda_{n-1}, then
// s_plus_0..s_plus_{m-1}, then s_minus_0..s_minus_{m-1}.
class ConeSimplex {
public:
    ConeSimplex(const Matrix& points, std::size_t target, std::span<const std::size_t> columns,
                const SimplexOptions& options)
        : points_(points), columns_(columns), opt_(options), m_(points.cols()), n_(columns.size()) {
        rhs_.assign(points.row(target).begin(), points.row(target).end());
        basis_.resize(m_);
        is_basic_.assign(n_ + 2 * m_, false);
        binv_.assign(m_ * m_, 0.0);
        xb_.resize(m_);
        for (std::size_t k = 0; k < m_; ++k) {
            const bool plus = rhs_[k] >= 0.0;
            basis_[k] = plus ? n_ + k : n_ + m_ + k;
            is_basic_[basis_[k]] = true;
            binv_[k * m_ + k] = plus ? 1.0 : -1.0;
            xb_[k] = std::abs(rhs_[k]);
        }
        cap_ = opt_.max_iterations > 0 ? opt_.max_iterations
                                       : 1000 + 50 * static_cast<long>(m_ + n_);
    }

    ConeDistance solve() {
        std::vector<double> y(m_);
        std::vector<double> u(m_);
        std::vector<double> a(m_);
        long iter = 0;
        int since_refactor = 0;
        for (;;) {
            duals(y);
            const std::size_t enter = choose_entering(y);
            if (enter == kNone) break;
            if (iter >= cap_) throw ConvergenceError("lp: simplex iteration cap exceeded", iter);
            column(enter, a);
            for (std::size_t i = 0; i < m_; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < m_; ++j) s += binv_[i * m_ + j] * a[j];
                u[i] = s;
            }
            const std::size_t leave = choose_leaving(u);
            // Phase 1 is bounded below by zero, so an unbounded ray means the
            // factorisation has drifted.
            if (leave == kNone) throw Error("lp: unbounded direction in phase 1");
            pivot(leave, enter, u);
            ++iter;
            if (++since_refactor >= opt_.refactor_every) {
                refactor();
                since_refactor = 0;
            }
        }

        ConeDistance out;
        out.iterations = iter;
        duals(y);
        out.separator.resize(m_);
        for (std::size_t k = 0; k < m_; ++k) out.separator[k] = -y[k];
        out.multipliers.assign(n_, 0.0);
        double dist = 0.0;
        for (std::size_t i = 0; i < m_; ++i) {
            const double x = std::max(xb_[i], 0.0);
            if (basis_[i] < n_)
                out.multipliers[basis_[i]] = x;
            else
                dist += x;
        }
        out.distance = dist;
        return out;
    }

private:
    static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

    double cost(std::size_t var) const { return var < n_ ? 0.0 : 1.0; }

    void column(std::size_t var, std::vector<double>& a) const {
        if (var < n_) {
            auto p = points_.row(columns_[var]);
            std::copy(p.begin(), p.end(), a.begin());
            return;
        }
        std::fill(a.begin(), a.end(), 0.0);
        if (var < n_ + m_)
            a[var - n_] = 1.0;
        else
            a[var - n_ - m_] = -1.0;
    }

    void duals(std::vector<double>& y) const {
        std::fill(y.begin(), y.end(), 0.0);
        for (std::size_t i = 0; i < m_; ++i) {
            const double cb = cost(basis_[i]);
            if (cb == 0.0) continue;
            for (std::size_t j = 0; j < m_; ++j) y[j] += cb * binv_[i * m_ + j];
        }
    }

    // Bland: lowest-numbered variable with a negative reduced cost.
    std::size_t choose_entering(const std::vector<double>& y) const {
        const double tol = opt_.reduced_cost_tol;
        for (std::size_t t = 0; t < n_; ++t) {
            if (is_basic_[t]) continue;
            auto p = points_.row(columns_[t]);
            double s = 0.0;
            for (std::size_t k = 0; k < m_; ++k) s += y[k] * p[k];
            if (-s < -tol) return t;
        }
        for (std::size_t k = 0; k < m_; ++k) {
            if (!is_basic_[n_ + k] && 1.0 - y[k] < -tol) return n_ + k;
        }
        for (std::size_t k = 0; k < m_; ++k) {
            if (!is_basic_[n_ + m_ + k] && 1.0 + y[k] < -tol) return n_ + m_ + k;
        }
        return kNone;
    }

    // Minimum ratio; ties go to the lowest-numbered basic variable.
    std::size_t choose_leaving(const std::vector<double>& u) const {
        std::size_t best = kNone;
        double best_ratio = 0.0;
        for (std::size_t i = 0; i < m_; ++i) {
            if (u[i] <= opt_.pivot_tol) continue;
            const double ratio = std::max(xb_[i], 0.0) / u[i];
            if (best == kNone) {
                best = i;
                best_ratio = ratio;
                continue;
            }
            const double slack = 1e-14 * (1.0 + best_ratio);
            if (ratio < best_ratio - slack ||
                (ratio <= best_ratio + slack && basis_[i] < basis_[best])) {
                best = i;
                best_ratio = std::min(ratio, best_ratio);
            }
        }
        return best;
    }

    void pivot(std::size_t r, std::size_t enter, const std::vector<double>& u) {
        const double ur = u[r];
        const double theta = std::max(xb_[r], 0.0) / ur;
        for (std::size_t i = 0; i < m_; ++i) {
            if (i == r) continue;
            xb_[i] -= theta * u[i];
        }
        xb_[r] = theta;
        double* rrow = binv_.data() + r * m_;
        for (std::size_t j = 0; j < m_; ++j) rrow[j] /= ur;
        for (std::size_t i = 0; i < m_; ++i) {
            if (i == r || u[i] == 0.0) continue;
            double* irow = binv_.data() + i * m_;
            const double f = u[i];
            for (std::size_t j = 0; j < m_; ++j) irow[j] -= f * rrow[j];
        }
        is_basic_[basis_[r]] = false;
        basis_[r] = enter;
        is_basic_[enter] = true;
    }

    // Recompute B^{-1} and x_B from scratch (Gauss-Jordan, partial pivoting).
    void refactor() {
        std::vector<double> aug(m_ * 2 * m_, 0.0);
        std::vector<double> a(m_);
        const std::size_t w = 2 * m_;
        for (std::size_t i = 0; i < m_; ++i) {
            column(basis_[i], a);
            for (std::size_t k = 0; k < m_; ++k) aug[k * w + i] = a[k];
            aug[i * w + m_ + i] = 1.0;
        }
        for (std::size_t col = 0; col < m_; ++col) {
            std::size_t piv = col;
            for (std::size_t r = col + 1; r < m_; ++r)
                if (std::abs(aug[r * w + col]) > std::abs(aug[piv * w + col])) piv = r;
            if (std::abs(aug[piv * w + col]) < 1e-300) return;  // keep the product-form inverse
            if (piv != col)
                for (std::size_t j = 0; j < w; ++j) std::swap(aug[piv * w + j], aug[col * w + j]);
            const double inv = 1.0 / aug[col * w + col];
            for (std::size_t j = 0; j < w; ++j) aug[col * w + j] *= inv;
            for (std::size_t r = 0; r < m_; ++r) {
                if (r == col) continue;
                const double f = aug[r * w + col];
                if (f == 0.0) continue;
                for (std::size_t j = 0; j < w; ++j) aug[r * w + j] -= f * aug[col * w + j];
            }
        }
        for (std::size_t i = 0; i < m_; ++i)
            for (std::size_t j = 0; j < m_; ++j) binv_[i * m_ + j] = aug[i * w + m_ + j];
        for (std::size_t i = 0; i < m_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < m_; ++j) s += binv_[i * m_ + j] * rhs_[j];
            xb_[i] = s;
        }
    }

    const Matrix& points_;
    std::span<const std::size_t> columns_;
    SimplexOptions opt_;
    std::size_t m_;
    std::size_t n_;
    long cap_ = 0;
    std::vector<double> rhs_;
    std::vector<std::size_t> basis_;
    std::vector<bool> is_basic_;
    std::vector<double> binv_;  // row-major m x m
    std::vector<double> xb_;
};

}  // namespace

ConeDistance l1_cone_distance(const Matrix& points, std::size_t target,
                              std::span<const std::size_t> columns,
                              const SimplexOptions& options) {
    if (target >= points.rows()) throw InvalidArgument("lp: target index out of range");
    for (std::size_t c : columns) {
        if (c >= points.rows()) throw InvalidArgument("lp: column index out of range");
    }
    if (points.cols() == 0) throw InvalidArgument("lp: zero-dimensional points");
    return ConeSimplex(points, target, columns, options).solve();
}

}  // namespace gradleak::lp
