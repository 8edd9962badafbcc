#include "dynagmap/config.hpp"

#include <fstream>
#include <set>

#include "dynagmap/errors.hpp"

namespace dynagmap {

using nlohmann::json;
using nlohmann::ordered_json;

const char* flow_mode_name(FlowMode mode) {
    return mode == FlowMode::paper_literal ? "paper_literal" : "exact_correspondence";
}

FlowMode parse_flow_mode(const std::string& s) {
    if (s == "paper_literal" || s == "literal") return FlowMode::paper_literal;
    if (s == "exact_correspondence" || s == "exact") return FlowMode::exact_correspondence;
    throw ConfigError("unknown flow mode '" + s + "'");
}

ordered_json config_to_json(const ManageConfig& c) {
    ordered_json j;
    j["lambda_d"] = c.lambda_d;
    j["lambda_alpha"] = c.lambda_alpha;
    j["dyna_longevity_W"] = c.dyna_longevity_W;
    j["static_unseen_W"] = c.static_unseen_W;
    j["dyna_budget"] = c.dyna_budget;
    j["lr_static"] = {{"geometry", c.lr_static.geometry}, {"appearance", c.lr_static.appearance}};
    j["lr_dynamic"] = {{"geometry", c.lr_dynamic.geometry}, {"appearance", c.lr_dynamic.appearance}};
    j["iters_per_frame"] = c.iters_per_frame;
    j["window_K"] = c.window_K;
    j["keyframe_stride"] = c.keyframe_stride;
    j["sh_degree"] = c.sh_degree;
    j["flow_mode"] = flow_mode_name(c.flow_mode);
    j["motion_threshold_px"] = c.motion_threshold_px;
    j["depth_weight"] = c.depth_weight;
    j["optimizer"] = c.optimizer == OptimizerKind::adam ? "adam" : "sgd";
    j["seed"] = c.seed;
    j["scene_extent"] = c.scene_extent;
    j["dynamic_enabled"] = c.dynamic_enabled;
    return j;
}

namespace {

LearningRates rates_from(const json& j, const char* key) {
    if (!j.is_object()) throw ConfigError(std::string(key) + " must be an object");
    LearningRates r;
    for (const auto& [k, v] : j.items()) {
        if (k == "geometry") r.geometry = v.get<double>();
        else if (k == "appearance") r.appearance = v.get<double>();
        else throw ConfigError(std::string("unknown key '") + k + "' in " + key);
    }
    if (!(r.geometry >= 0.0) || !(r.appearance >= 0.0))
        throw ConfigError(std::string(key) + " learning rates must be >= 0");
    return r;
}

}  // namespace

ManageConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    ManageConfig c;
    try {
        for (const auto& [k, v] : j.items()) {
            if (k == "lambda_d") c.lambda_d = v.get<double>();
            else if (k == "lambda_alpha") c.lambda_alpha = v.get<double>();
            else if (k == "dyna_longevity_W") c.dyna_longevity_W = v.get<int>();
            else if (k == "static_unseen_W") c.static_unseen_W = v.get<int>();
            else if (k == "dyna_budget") c.dyna_budget = v.get<std::int64_t>();
            else if (k == "lr_static") c.lr_static = rates_from(v, "lr_static");
            else if (k == "lr_dynamic") c.lr_dynamic = rates_from(v, "lr_dynamic");
            else if (k == "iters_per_frame") c.iters_per_frame = v.get<int>();
            else if (k == "window_K") c.window_K = v.get<int>();
            else if (k == "keyframe_stride") c.keyframe_stride = v.get<int>();
            else if (k == "sh_degree") c.sh_degree = v.get<int>();
            else if (k == "flow_mode") c.flow_mode = parse_flow_mode(v.get<std::string>());
            else if (k == "motion_threshold_px") c.motion_threshold_px = v.get<double>();
            else if (k == "depth_weight") c.depth_weight = v.get<double>();
            else if (k == "optimizer") {
                const auto s = v.get<std::string>();
                if (s == "adam") c.optimizer = OptimizerKind::adam;
                else if (s == "sgd") c.optimizer = OptimizerKind::sgd;
                else throw ConfigError("unknown optimizer '" + s + "'");
            } else if (k == "seed") c.seed = v.get<std::uint64_t>();
            else if (k == "scene_extent") c.scene_extent = v.get<double>();
            else if (k == "dynamic_enabled") c.dynamic_enabled = v.get<bool>();
            else throw ConfigError("unknown config key '" + k + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
}

ManageConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

}  // namespace dynagmap
