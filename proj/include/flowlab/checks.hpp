#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flowlab/densities.hpp"
#include "flowlab/trainer.hpp"
#include "flowlab/volpres.hpp"

namespace flowlab {

struct CheckResult {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

/// Shared, lazily built inputs: the bimodal mixture on the 400 x 400 grid
/// (spacing 0.01) and the 100-block ring flow.
class CheckContext {
public:
    const GridDensity& bimodal_grid();
    const VolumePreservingSolution& bimodal_solution();
    const TrainResult& ring_training();
    static TrainerConfig ring_config();

private:
    std::optional<GridDensity> bimodal_grid_;
    std::optional<VolumePreservingSolution> bimodal_solution_;
    std::optional<TrainResult> ring_training_;
};

CheckResult check_counterexample(CheckContext& ctx);         // 1
CheckResult check_bound_consistency(CheckContext& ctx);      // 2
CheckResult check_optimal_scale(CheckContext& ctx);          // 3
CheckResult check_gaussian_delta(CheckContext& ctx);         // 4
CheckResult check_fixed_point(CheckContext& ctx);            // 5
CheckResult check_greedy_ring(CheckContext& ctx);            // 6
CheckResult check_rearranged_delta(CheckContext& ctx);       // 7
CheckResult check_modes(CheckContext& ctx);                  // 8
CheckResult check_flow_correctness(CheckContext& ctx);       // 9
CheckResult check_decomposition(CheckContext& ctx);          // 10

inline constexpr int kCheckCount = 10;

/// Runs the checks in `ids` (all when empty) in order, reporting each as it finishes.
std::vector<CheckResult> run_checks(const std::vector<int>& ids,
                                    const std::function<void(const CheckResult&)>& on_result = {});

/// "PASS  3  optimal scale  (1.23 s)  detail"
std::string format_check(const CheckResult& r);

}  // namespace flowlab
