#include "gradleak/rlg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "gradleak/errors.hpp"
#include "gradleak/linalg.hpp"
#include "gradleak/parallel.hpp"

namespace gradleak::rlg {

namespace {

constexpr double kDegenerateFloor = 1e-30;

std::vector<std::size_t> all_but(std::size_t count, std::size_t skip) {
    std::vector<std::size_t> cols;
    cols.reserve(count - 1);
    for (std::size_t j = 0; j < count; ++j)
        if (j != skip) cols.push_back(j);
    return cols;
}

bool margin_met(double distance, const RlgConfig& cfg) {
    return cfg.lp_box_bound * distance >= cfg.lp_margin;
}

// Homogeneous perceptron on {-p_c} and the anchors: looks for w with
// w.p_c < 0 < w.p_j.  Returns w once an epoch passes without an update.
std::optional<std::vector<double>> perceptron_separator(const Matrix& points, std::size_t c,
                                                        const std::vector<std::size_t>& anchors,
                                                        int epochs) {
    const std::size_t s = points.cols();
    std::vector<double> w(s, 0.0);
    auto target = points.row(c);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        bool updated = false;
        double wx = 0.0;
        for (std::size_t k = 0; k < s; ++k) wx -= w[k] * target[k];
        if (wx <= 0.0) {
            for (std::size_t k = 0; k < s; ++k) w[k] -= target[k];
            updated = true;
        }
        for (std::size_t j : anchors) {
            if (j == c) continue;
            auto p = points.row(j);
            double v = 0.0;
            for (std::size_t k = 0; k < s; ++k) v += w[k] * p[k];
            if (v <= 0.0) {
                for (std::size_t k = 0; k < s; ++k) w[k] += p[k];
                updated = true;
            }
        }
        if (!updated) return w;
    }
    return std::nullopt;
}

// Scales w into the box and checks it against every point.
bool separator_certifies(const Matrix& points, std::size_t c, std::vector<double> w,
                         const RlgConfig& cfg) {
    double biggest = 0.0;
    for (double x : w) biggest = std::max(biggest, std::abs(x));
    if (biggest == 0.0) return false;
    for (double& x : w) x *= cfg.lp_box_bound / biggest;
    for (std::size_t j = 0; j < points.rows(); ++j) {
        const double v = dot(w, points.row(j));
        if (j == c) {
            if (!(-v >= cfg.lp_margin)) return false;
        } else if (v < 0.0) {
            return false;
        }
    }
    return true;
}

// ||sum_t lambda_t p_{cols[t]} - p_c||_1 evaluated directly.
double certificate_residual(const Matrix& points, std::size_t c,
                            const std::vector<std::size_t>& cols,
                            const std::vector<double>& lambda) {
    const std::size_t s = points.cols();
    std::vector<double> acc(s, 0.0);
    for (std::size_t t = 0; t < cols.size(); ++t) {
        if (lambda[t] < 0.0) return INFINITY;
        if (lambda[t] == 0.0) continue;
        auto p = points.row(cols[t]);
        for (std::size_t k = 0; k < s; ++k) acc[k] += lambda[t] * p[k];
    }
    auto target = points.row(c);
    double r = 0.0;
    for (std::size_t k = 0; k < s; ++k) r += std::abs(acc[k] - target[k]);
    return r;
}

}  // namespace

void RlgConfig::validate() const {
    if (!(lp_margin > 0.0)) throw InvalidArgument("rlg: lp margin must be > 0");
    if (!(lp_box_bound > 0.0)) throw InvalidArgument("rlg: lp box bound must be > 0");
    if (screen_top_m < 1) throw InvalidArgument("rlg: screen_top_m must be >= 1");
    if (rank_tol_rel && !(*rank_tol_rel > 0.0)) throw InvalidArgument("rlg: rank tolerance must be > 0");
}

QExtraction extract_q(const Matrix& delta_w, const RlgConfig& cfg) {
    cfg.validate();
    const std::size_t d = delta_w.rows();
    const std::size_t c = delta_w.cols();
    const std::size_t limit = std::min(d, c);
    if (cfg.assume_S && (*cfg.assume_S < 1 || *cfg.assume_S + 1 > limit)) {
        throw InvalidArgument("rlg: assumed S must lie in [1, min(d, C) - 1]");
    }
    if (delta_w.frobenius_norm() < kDegenerateFloor) {
        throw DegenerateUpdate("rlg: degenerate update, ||dW||_F below 1e-30");
    }
    linalg::SvdResult s = linalg::svd(delta_w);
    const double tol = cfg.rank_tol_rel.value_or(linalg::default_rank_tolerance(d, c));
    QExtraction out;
    out.rank_estimate = linalg::numeric_rank(s.singular, tol);
    out.singular = s.singular;
    if (cfg.assume_S) {
        out.S = *cfg.assume_S;
    } else {
        out.S = out.rank_estimate;
        if (out.S == 0) throw DegenerateUpdate("rlg: numeric rank is zero");
        if (out.S >= limit) {
            throw AssumptionViolated("rlg: inferred S = " + std::to_string(out.S) +
                                     " is not below min(d, C) = " + std::to_string(limit));
        }
    }
    out.Q = Matrix(out.S, c);
    for (std::size_t i = 0; i < out.S; ++i) {
        auto src = s.right.row(i);
        std::copy(src.begin(), src.end(), out.Q.row(i).begin());
    }
    return out;
}

bool lp_feasible(const Matrix& points, std::size_t c, const RlgConfig& cfg) {
    if (c >= points.rows()) throw InvalidArgument("rlg: label id out of range");
    const auto cols = all_but(points.rows(), c);
    try {
        const lp::ConeDistance cd = lp::l1_cone_distance(points, c, cols, cfg.simplex);
        return margin_met(cd.distance, cfg);
    } catch (const ConvergenceError&) {
        if (cfg.lp_failure_as_infeasible) return false;
        throw;
    }
}

bool lp_feasible_q(const Matrix& Q, std::size_t c, const RlgConfig& cfg) {
    return lp_feasible(Q.transposed(), c, cfg);
}

ScreenResult screen(const Matrix& points, const RlgConfig& cfg) {
    cfg.validate();
    const std::size_t count = points.rows();
    ScreenResult out;
    if (count <= cfg.screen_top_m) {
        out.candidates.resize(count);
        std::iota(out.candidates.begin(), out.candidates.end(), std::size_t{0});
        return out;
    }

    std::vector<double> norms(count);
    for (std::size_t j = 0; j < count; ++j) norms[j] = dot(points.row(j), points.row(j));
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });
    std::vector<std::size_t> anchors(order.begin(),
                                     order.begin() + static_cast<std::ptrdiff_t>(cfg.screen_top_m));
    std::sort(anchors.begin(), anchors.end());

    enum Verdict : char { kCandidate, kProven, kRejected };
    std::vector<char> verdict(count, kCandidate);
    parallel_for(count, cfg.jobs, [&](std::size_t c) {
        std::vector<std::size_t> others;
        others.reserve(anchors.size());
        for (std::size_t a : anchors)
            if (a != c) others.push_back(a);
        try {
            const lp::ConeDistance cd = lp::l1_cone_distance(points, c, others, cfg.simplex);
            if (!margin_met(cd.distance, cfg) &&
                !margin_met(certificate_residual(points, c, others, cd.multipliers), cfg)) {
                verdict[c] = kRejected;
                return;
            }
        } catch (const ConvergenceError&) {
            // no certificate; fall through
        }
        if (auto w = perceptron_separator(points, c, others, cfg.perceptron_epochs)) {
            if (separator_certifies(points, c, std::move(*w), cfg)) verdict[c] = kProven;
        }
    });
    for (std::size_t c = 0; c < count; ++c) {
        switch (verdict[c]) {
            case kCandidate: out.candidates.push_back(c); break;
            case kProven: out.proven_feasible.push_back(c); break;
            default: out.rejected.push_back(c); break;
        }
    }
    return out;
}

LabelSetPrediction rlg_attack(const Matrix& delta_w, const RlgConfig& cfg) {
    QExtraction q = extract_q(delta_w, cfg);
    const Matrix points = q.Q.transposed();
    const std::size_t count = points.rows();

    LabelSetPrediction out;
    out.inferred_S = q.S;
    out.rank_estimate = q.rank_estimate;
    out.singular = std::move(q.singular);
    out.per_label_status.assign(count, LabelStatus::ScreenedOut);

    std::vector<std::size_t> candidates;
    std::vector<std::size_t> proven;
    if (cfg.screening) {
        ScreenResult sr = screen(points, cfg);
        candidates = std::move(sr.candidates);
        proven = std::move(sr.proven_feasible);
        for (std::size_t c : sr.rejected) out.per_label_status[c] = LabelStatus::ScreenedOut;
    } else {
        candidates.resize(count);
        std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    }
    std::vector<char> feasible(candidates.size(), 0);
    parallel_for(candidates.size(), cfg.jobs, [&](std::size_t i) {
        feasible[i] = lp_feasible(points, candidates[i], cfg) ? 1 : 0;
    });
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const std::size_t c = candidates[i];
        out.per_label_status[c] = feasible[i] ? LabelStatus::Feasible : LabelStatus::Infeasible;
    }
    for (std::size_t c : proven) out.per_label_status[c] = LabelStatus::Feasible;
    for (std::size_t c = 0; c < count; ++c)
        if (out.per_label_status[c] == LabelStatus::Feasible) out.labels.push_back(c);
    return out;
}

const char* to_string(LabelStatus s) {
    switch (s) {
        case LabelStatus::Feasible: return "feasible";
        case LabelStatus::Infeasible: return "infeasible";
        case LabelStatus::ScreenedOut: return "screened-out";
    }
    return "?";
}

}  // namespace gradleak::rlg
