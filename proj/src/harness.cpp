#include "gradleak/harness.hpp"

#include <algorithm>
#include <chrono>

#include "gradleak/baselines.hpp"
#include "gradleak/errors.hpp"

namespace gradleak::harness {

Attack parse_attack(const std::string& s) {
    if (s == "rlg") return Attack::Rlg;
    if (s == "idlg") return Attack::Idlg;
    if (s == "mincol") return Attack::MinCol;
    throw InvalidArgument("unknown attack '" + s + "'");
}

const char* to_string(Attack a) {
    switch (a) {
        case Attack::Rlg: return "rlg";
        case Attack::Idlg: return "idlg";
        case Attack::MinCol: return "mincol";
    }
    return "?";
}

Outcome run_attack(Attack attack, const Matrix& delta_w, std::span<const std::size_t> truth,
                   const rlg::RlgConfig& cfg) {
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    try {
        switch (attack) {
            case Attack::Rlg: {
                rlg::LabelSetPrediction p = rlg::rlg_attack(delta_w, cfg);
                out.inferred_S = p.inferred_S;
                out.predicted = std::move(p.labels);
                break;
            }
            case Attack::Idlg: {
                out.predicted = {baseline::idlg_single(delta_w).label};
                out.inferred_S = 1;
                break;
            }
            case Attack::MinCol: {
                rlg::LabelSetPrediction p = baseline::min_column_attack(delta_w);
                out.inferred_S = p.inferred_S;
                out.predicted = std::move(p.labels);
                break;
            }
        }
    } catch (const Error& e) {
        out.error = e.what();
        out.predicted.clear();
        out.inferred_S = 0;
    }
    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    std::sort(out.predicted.begin(), out.predicted.end());
    out.score = metrics::set_score(out.predicted, truth);
    out.length_error = metrics::length_error(out.inferred_S, truth.size());
    return out;
}

}  // namespace gradleak::harness
