#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sage/hybrid/controller.hpp"
#include "sage/reliability/lab.hpp"

namespace sage::reliability {

using json = nlohmann::ordered_json;

struct CostBoundReport {
    std::size_t ledgers = 0;
    std::size_t violations = 0;
    double max_slack = 0.0;  // max of bound - c_total
    double min_slack = 0.0;
    double max_ratio = 0.0;
};
CostBoundReport cost_bound_check(std::span<const hybrid::CostLedger> ledgers);

// Random gate traces: length in [1, max_len], each step slow with probability
// mu, unit costs drawn from [0, 2].
std::vector<hybrid::CostLedger> random_ledgers(std::size_t count, std::size_t max_len, std::uint64_t seed);

struct Scenario {
    ReliabilityParams params;
    McConfig mc;
    std::size_t n_max = 100;
    std::vector<std::size_t> variance_ns{5, 10, 20, 40};
    std::size_t variance_trials = 10'000;
    std::size_t joints = 1000;
    std::size_t bound_joints = 500;
    std::size_t ledgers = 10'000;

    // ReliabilityParams keys plus trials, seed, partitions, n_max,
    // variance_trials, joints, bound_joints, ledgers.
    static Scenario from_key_values(const std::map<std::string, std::string>& kv);
    static Scenario from_file(const std::string& path);
};

struct Check {
    std::string name;
    bool asserted = true;  // reported-only checks never fail the run
    bool passed = true;
    json detail;
};

struct LabReport {
    std::vector<Check> checks;
    std::vector<double> survival_standard;
    std::vector<double> survival_hybrid;
    std::vector<std::pair<std::size_t, double>> variance;  // (N, sample variance)
    double eps = 0.0;

    bool all_passed() const;
    json to_json() const;
    std::string survival_csv() const;
    std::string variance_csv() const;
};

LabReport run_lab(const Scenario& scenario);

}  // namespace sage::reliability
