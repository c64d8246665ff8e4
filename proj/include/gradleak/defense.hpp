#pragma once

#include <string>

#include "gradleak/matrix.hpp"

namespace gradleak::defense {

enum class DefenseKind { SignSgd, GradDrop };

struct DefenseSpec {
    DefenseKind kind = DefenseKind::SignSgd;
    double rate = 0.0;  // GradDrop only, in [0, 1)

    void validate() const;
    std::string describe() const;  // "sign" or "drop(0.5)"
};

// Entrywise sign, sign(0) = 0.
Matrix sign_sgd(const Matrix& delta_w);

// Zeroes the floor(rate * d * C) entries of smallest magnitude.  Ties are
// broken by row-major index; surviving entries are copied bit for bit.
Matrix grad_drop(const Matrix& delta_w, double rate);

Matrix apply(const DefenseSpec& spec, const Matrix& delta_w);

}  // namespace gradleak::defense
