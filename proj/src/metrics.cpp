#include "gradleak/metrics.hpp"

#include <algorithm>

#include "gradleak/errors.hpp"

namespace gradleak::metrics {

namespace {

std::vector<std::size_t> as_set(std::span<const std::size_t> v) {
    std::vector<std::size_t> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

}  // namespace

SetScore set_score(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
    const auto p = as_set(predicted);
    const auto t = as_set(truth);
    std::vector<std::size_t> common;
    std::set_intersection(p.begin(), p.end(), t.begin(), t.end(), std::back_inserter(common));
    const double hit = static_cast<double>(common.size());

    SetScore s;
    s.precision = p.empty() ? (t.empty() ? 1.0 : 0.0) : hit / static_cast<double>(p.size());
    s.recall = t.empty() ? 1.0 : hit / static_cast<double>(t.size());
    const double denom = s.precision + s.recall;
    s.f1 = denom == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / denom;
    s.exact_match = p == t;
    return s;
}

std::size_t length_error(std::size_t inferred_S, std::size_t true_S) {
    return inferred_S > true_S ? inferred_S - true_S : true_S - inferred_S;
}

double wer(std::span<const std::size_t> reference, std::span<const std::size_t> hypothesis) {
    if (reference.empty()) throw InvalidArgument("wer: empty reference");
    const std::size_t n = reference.size();
    const std::size_t m = hypothesis.size();
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t sub = prev[j - 1] + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return static_cast<double>(prev[m]) / static_cast<double>(n);
}

void Accumulator::add(const SetScore& s, std::size_t length_err) {
    ++n_;
    p_ += s.precision;
    r_ += s.recall;
    f_ += s.f1;
    em_ += s.exact_match ? 1.0 : 0.0;
    le_ += static_cast<double>(length_err);
}

Aggregate Accumulator::result() const {
    Aggregate a;
    a.cases = n_;
    if (n_ == 0) return a;
    const double k = static_cast<double>(n_);
    a.precision = p_ / k;
    a.recall = r_ / k;
    a.f1 = f_ / k;
    a.exact_match = em_ / k;
    a.length_error = le_ / k;
    return a;
}

}  // namespace gradleak::metrics
