#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace flowsde {

// One identity/consistency check. Deviations are mixed absolute/relative:
// |a - b| / max(1, |a|, |b|), so checks near coefficient poles compare at
// the precision the values actually carry.
struct CheckResult {
    std::string name;
    double tolerance = 0.0;
    double max_deviation = 0.0;
    bool passed = false;
};

struct VerifyOptions {
    // Offsets the alpha = sqrt(2) used in the singular-SDE identity check;
    // nonzero values must be caught as failures (sensitivity smoke test).
    double inject_alpha_perturbation = 0.0;
    std::uint64_t seed = 0x5eedf10ULL;
};

std::vector<std::string> verify_check_names();
std::vector<CheckResult> run_verify_checks(const VerifyOptions& options = {});

}  // namespace flowsde
