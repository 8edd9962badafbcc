#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "dynagmap/types.hpp"

namespace dynagmap {

/// Per-point 3D displacements from frame t back to frame t-1, world frame.
struct GsFlowField {
    std::vector<Vec3> points_world_t;
    std::vector<Vec3> displacements;  // point + displacement = position at t-1
    std::vector<std::pair<int, int>> pixel_coords;
    std::int64_t frame_index = 0;

    std::size_t size() const { return points_world_t.size(); }
    bool empty() const { return points_world_t.empty(); }
    Vec3 transformed(std::size_t i) const { return points_world_t[i] + displacements[i]; }
};

struct PixelPoint {
    int u = 0;
    int v = 0;
    Vec3 world = Vec3::Zero();
};

/// World points for every pixel with positive depth (restricted to `mask`
/// when given), in row-major pixel order.
std::vector<PixelPoint> backproject_points(const DepthImage& depth, const CameraModel& cam,
                                           const Pose& pose, const MaskImage* mask = nullptr);

/// Image motion a static scene would show from frame t back to frame t-1.
/// `valid` (optional) receives 1 where the flow is defined.
FlowImage compute_ego_flow(const DepthImage& depth_t, const CameraModel& cam, const Pose& pose_t,
                           const Pose& pose_prev, MaskImage* valid = nullptr);

/// Residual-flow motion segmentation: threshold |flow - ego flow|, open and
/// close with a 3x3 box, then drop connected components under min_area.
MaskImage segment_motion(const FlowImage& flow_back, const DepthImage& depth_t,
                         const CameraModel& cam, const Pose& pose_t, const Pose& pose_prev,
                         double motion_threshold_px, int min_area = 16);

/// Depth of frame t-1 at a sub-pixel location; nullopt when unusable.
using DepthSampler = std::function<std::optional<double>(double u, double v)>;

/// Bilinear interpolation of inverse depth. Rejects samples that touch an
/// invalid pixel or straddle a depth discontinuity.
std::optional<double> sample_depth_bilinear(const DepthImage& depth, double u, double v,
                                            double max_depth_ratio = 1.05);

/// Lifts the backward optical flow of the masked pixels to world-frame
/// displacements. `prev_depth` overrides how frame t-1 depth is sampled in
/// exact-correspondence mode. Throws EmptyFlow when no pixel survives.
GsFlowField lift_gs_flow(const FrameBundle& frame_t, const FrameBundle& frame_prev,
                         const CameraModel& cam, const MaskImage& mask, FlowMode mode,
                         const DepthSampler& prev_depth = {});

/// Chains backward flows: steps[0] maps frame t to t-1, steps[1] maps t-1 to
/// t-2, and so on. Pixels that leave the image become NaN.
FlowImage compose_flows(const std::vector<const FlowImage*>& steps);

}  // namespace dynagmap
