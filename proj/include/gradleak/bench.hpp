#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gradleak::bench {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
    double budget_seconds = 0.0;  // pass also requires seconds < budget
};

struct BenchOptions {
    unsigned jobs = 1;
};

inline constexpr int kCriterionCount = 11;

// "latent", "updates", "defense", "transcript", "core" (the property checks) or "all".
std::vector<int> suite_criteria(const std::string& suite);

CriterionResult run_criterion(int id, const BenchOptions& opts = {});

// One line: "PASS [id] name: detail (t s, budget b s)".
std::string format(const CriterionResult& r);

}  // namespace gradleak::bench
