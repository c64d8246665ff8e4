// Acceptance gates: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <cstdio>
#include <cstdlib>
#include <string>
#include <thread>

#include "gradleak/bench.hpp"

int main(int argc, char** argv) {
    gradleak::bench::BenchOptions opts;
    opts.jobs = std::max(1u, std::thread::hardware_concurrency());
    int failed = 0;
    for (int id = 1; id <= gradleak::bench::kCriterionCount; ++id) {
        if (argc > 1 && std::to_string(id) != argv[1]) continue;
        const auto r = gradleak::bench::run_criterion(id, opts);
        std::printf("%s\n", gradleak::bench::format(r).c_str());
        std::fflush(stdout);
        failed += !r.pass;
    }
    std::printf("%d criteria failed\n", failed);
    return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
