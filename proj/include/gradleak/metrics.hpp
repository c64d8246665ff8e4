#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gradleak::metrics {

struct SetScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool exact_match = false;
};

// Label sets are treated as sets: duplicates are ignored, order is irrelevant.
// Empty prediction: precision 1 if the truth is also empty, else 0.
// Empty truth: recall 1.
SetScore set_score(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);

std::size_t length_error(std::size_t inferred_S, std::size_t true_S);

// Levenshtein distance (unit costs) over the reference length.  Throws
// InvalidArgument for an empty reference.
double wer(std::span<const std::size_t> reference, std::span<const std::size_t> hypothesis);

struct Aggregate {
    std::size_t cases = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double exact_match = 0.0;  // fraction of cases
    double length_error = 0.0;
};

class Accumulator {
public:
    void add(const SetScore& s, std::size_t length_err);
    Aggregate result() const;

private:
    std::size_t n_ = 0;
    double p_ = 0.0, r_ = 0.0, f_ = 0.0, em_ = 0.0, le_ = 0.0;
};

}  // namespace gradleak::metrics
