#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace eisnet {

struct SelftestResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0;
};

/// Gradient checks, mining and FIFO oracles, EMA closed form and jigsaw
/// round trips. Each check catches its own exceptions and reports them as failures.
std::vector<SelftestResult> run_selftest(std::uint64_t seed = 0);

std::string format_selftest_table(const std::vector<SelftestResult>& results);

} // namespace eisnet
