#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gradleak/matrix.hpp"

namespace gradleak::lp {

struct SimplexOptions {
    long max_iterations = 0;          // 0 selects 1000 + 50 * (rows + columns)
    double reduced_cost_tol = 1e-11;  // entering candidates need d_j < -tol
    double pivot_tol = 1e-11;         // ratio test ignores |u_i| <= tol
    int refactor_every = 64;
};

// Result of min_{lambda >= 0} || sum_t lambda_t p_{cols[t]} - p_target ||_1.
//
// `separator` is the dual certificate r: |r_k| <= 1, r . p_j >= 0 for every
// listed column and r . p_target = -distance.  `multipliers` holds lambda in
// the order of the column list.
struct ConeDistance {
    double distance = 0.0;
    std::vector<double> separator;
    std::vector<double> multipliers;
    long iterations = 0;
};

// Phase-1 revised simplex with Bland's rule on
//     sum_t lambda_t p_t + s_plus - s_minus = p_target,  lambda, s >= 0,
//     minimise sum(s_plus + s_minus).
// `points` holds one point per row (C x S).  Throws ConvergenceError when
// the iteration cap is exceeded.
ConeDistance l1_cone_distance(const Matrix& points, std::size_t target,
                              std::span<const std::size_t> columns,
                              const SimplexOptions& options = {});

}  // namespace gradleak::lp
