#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynagmap/errors.hpp"
#include "dynagmap/flow.hpp"
#include "dynagmap/manage.hpp"
#include "dynagmap/optimizer.hpp"
#include "dynagmap/render.hpp"

namespace dynagmap {

/// Raised when a stage fails; names the frame and the stage.
class PipelineError : public Error {
public:
    PipelineError(std::int64_t frame, const std::string& stage, const std::string& what)
        : Error("frame " + std::to_string(frame) + ", stage '" + stage + "': " + what),
          frame_(frame), stage_(stage) {}
    std::int64_t frame() const { return frame_; }
    const std::string& stage() const { return stage_; }

private:
    std::int64_t frame_;
    std::string stage_;
};

struct FrameMetrics {
    std::int64_t frame = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    std::optional<double> dyna_psnr;    // inside the motion mask
    std::optional<double> static_psnr;  // outside it
    std::size_t n_static = 0;
    std::size_t n_dynamic = 0;
    std::size_t n_reused = 0;  // dynamic Gaussians born before this frame
    double reuse_rate = 0.0;
    std::optional<double> ms_elapsed;
};

/// Per-frame diagnostics beyond the reported metrics.
struct FrameReport {
    FrameMetrics metrics;
    std::size_t mask_pixels = 0;
    std::size_t flow_points = 0;
    double d_bar = 0.0;
    AssociationResult association;
    PruneReport prune;
    ManagementOutcome management;
    StaticReport statics;
    OptimizeReport optimize;
    std::vector<std::string> warnings;
    /// Render of the optimised map at the frame's own pose and time.
    RenderOutput render;
};

/// Incremental mapper: feed frames in time order.
class Mapper {
public:
    Mapper(const CameraModel& cam, const ManageConfig& config, const RenderSettings& settings = {});

    /// `prev_depth` overrides how the previous frame's depth is sampled
    /// when lifting flow (defaults to bilinear sampling of its depth image).
    FrameReport process(const FrameBundle& frame, const DepthSampler& prev_depth = {});

    const GaussianMap& map() const { return map_; }
    GaussianMap& map() { return map_; }
    const CameraModel& camera() const { return cam_; }
    RenderSettings render_settings() const;

    /// Stage hook used by tests; called right after the named stage.
    std::function<void(const std::string& stage, const GaussianMap&, const GsFlowField&,
                       const AssociationResult&)>
        on_stage;

private:
    CameraModel cam_;
    GaussianMap map_;
    OptimState optim_;
    RenderSettings settings_;
    std::optional<FrameBundle> prev_;
    bool warned_no_flow_ = false;
};

/// Colour, structure and masked colour metrics of a render against a frame.
FrameMetrics frame_metrics(const RenderOutput& render, const FrameBundle& frame,
                           const MaskImage* mask);

struct RunOptions {
    bool timing = false;
    std::optional<std::filesystem::path> dump_dir;  // frame_XXXXXX.render.ppm
    /// Optional exact depth of frame t for flow lifting.
    std::function<DepthSampler(std::int64_t t)> depth_sampler;
    std::function<void(const FrameReport&)> on_frame;
};

struct RunSummary {
    std::size_t frames = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    std::optional<double> dyna_psnr;
    std::optional<double> static_psnr;
    std::size_t final_n_static = 0;
    std::size_t final_n_dynamic = 0;
    double reuse_rate = 0.0;  // pooled over all frames
};

struct RunResult {
    GaussianMap map;
    std::vector<FrameMetrics> per_frame;
    RunSummary summary;
    std::vector<std::string> warnings;
};

RunResult run_sequence(const std::vector<FrameBundle>& frames, const CameraModel& cam,
                       const ManageConfig& config, const RunOptions& options = {});

RunSummary summarize(const std::vector<FrameMetrics>& per_frame);
nlohmann::ordered_json metrics_json(const RunResult& result);

}  // namespace dynagmap
