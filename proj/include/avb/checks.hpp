#pragma once

#include "avb/generation.hpp"

#include <string>
#include <vector>

namespace avb {

// Built-in verification suites, runnable from the CLI (`adavboost check`)
// and reused by the acceptance harness. The arithmetic oracles in here are
// deliberately independent reimplementations of the formulas; they must not
// call into risk.cpp internals beyond the functions under test.

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

CheckResult check_oracle_arithmetic(int draws = 10000, uint64_t seed = 101);
CheckResult check_vanilla_equivalence(int triples = 100, uint64_t seed = 202);
CheckResult check_lag_invariant(int episodes = 100, uint64_t seed = 303);
CheckResult check_mass_monotonicity(int rows = 1000, uint64_t seed = 404);
CheckResult check_cache_consistency(int sequences = 50, uint64_t seed = 505);

std::vector<CheckResult> run_all_checks();

// Pure validator behind check_lag_invariant; exposed so tests can feed it
// deliberately corrupted traces.
bool validate_lag_invariant(const std::vector<TraceStep>& trace, double m_vis_max);

} // namespace avb
