#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradleak/matrix.hpp"
#include "gradleak/metrics.hpp"
#include "gradleak/rlg.hpp"

namespace gradleak::harness {

enum class Attack { Rlg, Idlg, MinCol };

Attack parse_attack(const std::string& s);
const char* to_string(Attack a);

// One scored attack run.  A failed run keeps its error message and is scored
// as an empty prediction with inferred_S = 0.
struct Outcome {
    std::size_t inferred_S = 0;
    std::vector<std::size_t> predicted;  // sorted
    metrics::SetScore score;
    std::size_t length_error = 0;
    double wall_ms = 0.0;
    std::optional<std::string> error;
};

// `truth` lists label instances; its size is the true S.
Outcome run_attack(Attack attack, const Matrix& delta_w, std::span<const std::size_t> truth,
                   const rlg::RlgConfig& cfg);

}  // namespace gradleak::harness
