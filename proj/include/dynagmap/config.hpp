#pragma once

#include <filesystem>

#include <json.hpp>

#include "dynagmap/types.hpp"

namespace dynagmap {

/// Every ManageConfig field; keys not listed here are rejected on load.
nlohmann::ordered_json config_to_json(const ManageConfig& cfg);
/// Starts from the defaults and overrides the keys present. Throws ConfigError.
ManageConfig config_from_json(const nlohmann::json& j);
ManageConfig load_config(const std::filesystem::path& path);

const char* flow_mode_name(FlowMode mode);
FlowMode parse_flow_mode(const std::string& s);

}  // namespace dynagmap
