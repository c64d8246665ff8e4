#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "gradleak/lp.hpp"
#include "gradleak/matrix.hpp"

namespace gradleak::rlg {

struct RlgConfig {
    // Relative rank tolerance; unset means max(d, C) * machine epsilon.
    std::optional<double> rank_tol_rel;
    // Overrides the rank estimate of S (1 <= S <= min(d, C) - 1).
    std::optional<std::size_t> assume_S;
    bool screening = true;
    std::size_t screen_top_m = 500;
    int perceptron_epochs = 200;
    double lp_margin = 1e-6;     // delta
    double lp_box_bound = 1.0;   // |r_k| <= bound
    // When set, an LP that hits its iteration cap counts as infeasible
    // instead of propagating ConvergenceError.
    bool lp_failure_as_infeasible = false;
    lp::SimplexOptions simplex;
    unsigned jobs = 1;

    void validate() const;
};

enum class LabelStatus { Feasible, Infeasible, ScreenedOut };

struct LabelSetPrediction {
    std::size_t inferred_S = 0;
    std::size_t rank_estimate = 0;   // numeric rank, even when assume_S overrides it
    std::vector<std::size_t> labels; // sorted
    std::vector<LabelStatus> per_label_status;  // indexed by label id
    std::vector<double> singular;    // leading singular values of delta_w
};

struct QExtraction {
    std::size_t S = 0;
    std::size_t rank_estimate = 0;
    Matrix Q;  // S x C, orthonormal rows
    std::vector<double> singular;
};

// Top-S right singular vectors of delta_w.  Throws DegenerateUpdate when
// ||delta_w||_F < 1e-30 and AssumptionViolated when the inferred S is not
// below min(d, C).
QExtraction extract_q(const Matrix& delta_w, const RlgConfig& cfg);

// Does some r with |r_k| <= box satisfy r.q_c <= -delta and r.q_j >= 0 for
// every other column?  Equivalent by LP duality to
//     box * dist_1(q_c, cone{q_j : j != c}) >= delta.
// `points` is Q^T (one row per label).
bool lp_feasible(const Matrix& points, std::size_t c, const RlgConfig& cfg);
bool lp_feasible_q(const Matrix& Q, std::size_t c, const RlgConfig& cfg);

struct ScreenResult {
    std::vector<std::size_t> candidates;       // sorted; still need lp_feasible
    std::vector<std::size_t> proven_feasible;  // sorted; separator verified on all points
    std::vector<std::size_t> rejected;         // sorted; cone certificate verified
};

// Sound pre-filter over the `screen_top_m` largest-norm points (anchors).
//
// A label is rejected only with a certificate: multipliers from the
// anchor-restricted LP whose residual ||sum lambda_j q_j - q_c||_1 is
// re-evaluated directly and lies below delta / box.  Since the anchors are a
// subset of the other labels this implies lp_feasible is false.  Survivors
// get a perceptron run against the anchors; a separator it finds is checked
// against every point and, if it meets the margin, the label is accepted
// without the full LP.  Any label lp_feasible accepts is never rejected.
ScreenResult screen(const Matrix& points, const RlgConfig& cfg);

LabelSetPrediction rlg_attack(const Matrix& delta_w, const RlgConfig& cfg);

const char* to_string(LabelStatus s);

}  // namespace gradleak::rlg
