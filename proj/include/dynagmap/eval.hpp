#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynagmap/flow.hpp"
#include "dynagmap/types.hpp"

namespace dynagmap {

inline constexpr double kPsnrCap = 99.0;

/// Peak-1 PSNR over all channels of the (masked) pixels, capped at 99 dB.
double psnr(const RgbImage& a, const RgbImage& b, const MaskImage* mask = nullptr);

/// Mean SSIM of the channel-mean grayscale images; 11x11 Gaussian window
/// (sigma 1.5) over fully covered positions.
double ssim(const RgbImage& a, const RgbImage& b);

struct TrackCell {
    int interval = 1;
    int target = 0;
    std::string kind;  // "mapping", "interpolate" or "extrapolate"
    int horizon = 0;   // frames from the nearest consumed frame
    int evaluated = 0;
    int skipped = 0;   // requested frames outside the sequence
    std::optional<double> psnr;
    std::optional<double> dyna_psnr;
    bool flagged = false;  // nothing could be evaluated
};

struct TrackTable {
    int interval = 1;
    std::vector<TrackCell> cells;
    std::optional<double> mapping_psnr;
    std::optional<double> mapping_dyna_psnr;
};

/// Flow from frame t back to frame t_ref.
using FlowProvider = std::function<FlowImage(std::int64_t t, std::int64_t t_ref)>;

/// Maps only frames 0, k, 2k, ... and, after each, renders the withheld
/// frames t-k+o (0 < o < k, interpolation) and t+o (extrapolation) for every
/// target offset o. Offset 0 scores the consumed frame itself.
TrackTable run_track_predict_protocol(const std::vector<FrameBundle>& frames,
                                      const CameraModel& cam, int interval,
                                      const std::vector<int>& targets, const ManageConfig& config,
                                      const FlowProvider& flow,
                                      const std::function<DepthSampler(std::int64_t)>& depth_sampler = {});

/// Flow provider that chains the per-frame backward flows of `frames`.
FlowProvider composed_flow_provider(const std::vector<FrameBundle>& frames);

nlohmann::ordered_json track_table_json(const TrackTable& table);

}  // namespace dynagmap
