#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "flowlab/flow.hpp"

namespace flowlab {

inline constexpr const char* kFlowSchema = "flowlab.flow/v1";

/// {"schema": "flowlab.flow/v1", "blocks": [{"rotation": [row-major Q],
///  "bin_centers": [...], "scale_knots": [...], "shift_knots": [...],
///  "damping": alpha, "lipschitz": L}, ...]}
nlohmann::json flow_to_json(const Flow& flow);
Flow flow_from_json(const nlohmann::json& doc);

void save_flow(const std::string& path, const Flow& flow);
Flow load_flow(const std::string& path);

}  // namespace flowlab
