// Runs the ten acceptance checks and prints one line per check.
#include <cstdio>
#include <exception>

#include "flowlab/checks.hpp"

int main() {
    try {
        int failures = 0;
        flowlab::run_checks({}, [&](const flowlab::CheckResult& r) {
            std::puts(flowlab::format_check(r).c_str());
            std::fflush(stdout);
            if (!r.passed) ++failures;
        });
        std::printf("%d of %d checks passed\n", flowlab::kCheckCount - failures, flowlab::kCheckCount);
        return failures == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "acceptance: %s\n", e.what());
        return 2;
    }
}
