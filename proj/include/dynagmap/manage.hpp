#pragma once

#include <cstdint>
#include <vector>

#include "dynagmap/flow.hpp"
#include "dynagmap/render.hpp"
#include "dynagmap/types.hpp"

namespace dynagmap {

struct Match {
    std::size_t point = 0;
    std::uint64_t gaussian_id = 0;
    double distance = 0.0;
    /// Only the closest point (lowest index on ties) claims the Gaussian;
    /// the others are absorbed by it.
    bool claims = false;
};

struct AssociationResult {
    std::vector<Match> matches;
    std::vector<std::size_t> new_points;
    std::vector<double> d_min;  // per point; +inf when there is no Gaussian
    double d_bar = 0.0;
    std::size_t reuse_count = 0;  // claimed Gaussians
    std::size_t spawn_count = 0;

    double threshold(double lambda_d) const { return lambda_d * d_bar; }
};

/// Nearest-Gaussian association of the transformed points (point + displacement).
AssociationResult associate_dynamic(const GsFlowField& flow, const std::vector<Gaussian>& dyn_set,
                                    double lambda_d);

/// Inputs the analytic spline update needs once frame t is optimized.
struct SplineTask {
    std::uint64_t id = 0;
    Vec3 mean_prev = Vec3::Zero();
    Vec3 flow = Vec3::Zero();
    bool rest = false;  // no motion observed yet: reset to a stationary segment
};

struct ManagementOutcome {
    std::vector<SplineTask> splines;
    std::size_t reused = 0;
    std::size_t spawned = 0;
    std::size_t coasting = 0;  // survivors without a claiming point
    std::size_t budget_deleted = 0;
};

/// Reuse and spawning for frame `frame.timestamp`.
/// Matches whose Gaussian no longer exists are spawned instead.
ManagementOutcome apply_management(GaussianMap& map, const AssociationResult& assoc,
                                   const GsFlowField& flow, const FrameBundle& frame,
                                   const CameraModel& cam);

struct PruneReport {
    std::size_t unobserved = 0;
    std::size_t expired = 0;
    std::size_t over_budget = 0;
};

/// Observability, longevity and budget pruning.
PruneReport prune_dynamic(GaussianMap& map, const GsFlowField& flow, double d_bar, double lambda_d,
                          std::int64_t t);

/// Deletes the oldest dynamic Gaussians (by birth, then id) beyond the budget.
std::size_t enforce_budget(GaussianMap& map);

struct StaticReport {
    std::size_t spawned = 0;
    std::size_t deleted = 0;
};

inline constexpr int kStaticStride = 4;

/// Static map upkeep from a render of the current map at frame t made with
/// track_visibility. Pixels in `mask` are ignored.
StaticReport manage_static(GaussianMap& map, const FrameBundle& frame,
                           const RenderOutput& render_out, const CameraModel& cam,
                           const MaskImage* mask);

/// Gaussians initialised from pixels of `frame`. Scales come from the
/// spacing of the batch itself.
std::vector<Gaussian> spawn_gaussians(GaussianMap& map, GaussianKind kind,
                                      const std::vector<Vec3>& points,
                                      const std::vector<std::pair<int, int>>& pixels,
                                      const FrameBundle& frame, const CameraModel& cam);

/// Fraction of dynamic Gaussians born before the current frame.
double reuse_rate(const GaussianMap& map);

}  // namespace dynagmap
