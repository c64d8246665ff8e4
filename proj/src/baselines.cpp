#include "gradleak/baselines.hpp"

#include <vector>

#include "gradleak/errors.hpp"
#include "gradleak/linalg.hpp"

namespace gradleak::baseline {

IdlgResult idlg_single(const Matrix& delta_w) {
    const std::size_t d = delta_w.rows();
    const std::size_t c = delta_w.cols();
    if (d == 0 || c == 0) throw InvalidArgument("idlg: empty update");

    // Gram matrix of the columns.
    const Matrix gram = matmul_tn(delta_w, delta_w);
    std::vector<char> nonzero(c, 0);
    for (std::size_t j = 0; j < c; ++j) nonzero[j] = gram(j, j) > 0.0;

    std::vector<std::size_t> hits;
    for (std::size_t j = 0; j < c; ++j) {
        if (!nonzero[j]) continue;
        bool all_negative = true;
        bool any_other = false;
        for (std::size_t k = 0; k < c && all_negative; ++k) {
            if (k == j || !nonzero[k]) continue;
            any_other = true;
            if (!(gram(j, k) < 0.0)) all_negative = false;
        }
        if (all_negative && any_other) hits.push_back(j);
    }
    if (hits.size() != 1) {
        throw NotSingleSample("idlg: not a single-sample gradient (" + std::to_string(hits.size()) +
                              " columns qualify)");
    }
    IdlgResult out;
    out.label = hits.front();
    out.rank_one = linalg::numeric_rank(linalg::svd(delta_w)) <= 1;
    return out;
}

rlg::LabelSetPrediction min_column_attack(const Matrix& delta_w) {
    rlg::LabelSetPrediction out;
    const std::size_t c = delta_w.cols();
    out.per_label_status.assign(c, rlg::LabelStatus::Infeasible);
    std::vector<char> negative(c, 0);
    for (std::size_t i = 0; i < delta_w.rows(); ++i) {
        auto row = delta_w.row(i);
        for (std::size_t j = 0; j < c; ++j)
            if (row[j] < 0.0) negative[j] = 1;
    }
    for (std::size_t j = 0; j < c; ++j) {
        if (!negative[j]) continue;
        out.labels.push_back(j);
        out.per_label_status[j] = rlg::LabelStatus::Feasible;
    }
    out.inferred_S = out.labels.size();
    out.rank_estimate = out.labels.size();
    return out;
}

}  // namespace gradleak::baseline
