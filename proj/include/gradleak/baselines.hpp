#pragma once

#include <cstddef>

#include "gradleak/matrix.hpp"
#include "gradleak/rlg.hpp"

namespace gradleak::baseline {

struct IdlgResult {
    std::size_t label = 0;
    // False when delta_w looked like more than one sample (numeric rank > 1);
    // the label is still returned if exactly one column qualified.
    bool rank_one = true;
};

// Single-sample recovery: the unique column whose dot product with every
// other non-zero column is negative.  All-zero columns are ignored.  Throws
// NotSingleSample when no column or several columns qualify.
IdlgResult idlg_single(const Matrix& delta_w);

// { j : min_i dW(i, j) < 0 }.  Strict: exact zeros never qualify.
// inferred_S is the size of the predicted set.
rlg::LabelSetPrediction min_column_attack(const Matrix& delta_w);

}  // namespace gradleak::baseline
