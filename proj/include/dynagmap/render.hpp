#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dynagmap/types.hpp"

namespace dynagmap {

struct RenderSettings {
    int tile_size = 16;
    double near_clip = 0.05;
    /// Added to the projected covariance diagonal, pixels^2.
    double dilation = 0.3;
    /// Contributors with f below this are skipped. Also sets the screen-space
    /// footprint; 0 makes every splat cover the whole image.
    double min_weight = 1.0 / 255.0;
    /// Blending stops after the transmittance drops below this.
    double min_transmittance = 1e-4;
    double max_condition = 1e12;
    double lambda_alpha = 0.3;
    double cull_sigma = 3.0;
    /// Record which Gaussians blended with weight >= min_weight somewhere.
    bool track_visibility = false;
};

struct Projected2D {
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Zero();
    double depth = 0.0;  // camera-frame z of the mean
    std::uint64_t gaussian_id = 0;

    // Blending inputs.
    Eigen::Vector3d conic = Eigen::Vector3d::Zero();  // (a, b, c) of cov2d^-1
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
    double radius = 0.0;  // footprint half-size in pixels

    // Kept for the backward pass.
    std::uint32_t source = 0;  // index in static_set ++ dynamic_set
    Vec3 mean_world = Vec3::Zero();
    Vec3 p_cam = Vec3::Zero();
    Vec3 color_raw = Vec3::Zero();  // before the +0.5 offset and clamp
    bool mean_differentiable = true;
};

/// Position used when rendering `g` at time tau. Dynamic Gaussians use their
/// live mean at the map's current frame and the motion spline elsewhere.
Vec3 mean_at(const Gaussian& g, double tau, std::optional<std::int64_t> live_frame,
             bool* differentiable = nullptr);

/// Returns nullopt when the Gaussian is culled. `singular` is set when the
/// 2D covariance was too ill-conditioned to invert.
std::optional<Projected2D> project_gaussian(const Gaussian& g, const CameraModel& cam,
                                            const Pose& pose, double tau,
                                            const RenderSettings& settings = {},
                                            std::optional<std::int64_t> live_frame = std::nullopt,
                                            bool* singular = nullptr);

struct RenderOutput {
    RgbImage rgb;
    DepthImage depth;
    Image<double> alpha;
    Image<int> contributor_count;
    std::size_t skipped_singular = 0;
    /// Per source Gaussian (static then dynamic); filled with track_visibility.
    std::vector<std::uint8_t> visible;
};

/// Everything the backward pass needs from a forward pass.
struct ForwardState {
    std::vector<Projected2D> projected;  // front-to-back
    std::vector<std::vector<std::uint32_t>> tile_lists;
    std::vector<std::uint32_t> walked;  // per pixel: tile-list entries visited
    std::vector<std::int32_t> surface;  // per pixel: index into projected, -1 if none
    int tiles_x = 0;
    int tiles_y = 0;

    // Identity of the forward call.
    std::size_t n_static = 0;
    std::size_t n_dynamic = 0;
    CameraModel camera;
    Pose pose;
    double tau = 0.0;
    std::int64_t live_frame = 0;
    RenderSettings settings;
};

struct RenderResult {
    RenderOutput output;
    ForwardState state;
};

/// Joint render of static and dynamic Gaussians at time tau.
RenderResult render(const GaussianMap& map, const CameraModel& cam, const Pose& pose, double tau,
                    const RenderSettings& settings = {});

RenderOutput render_rgb(const GaussianMap& map, const CameraModel& cam, const Pose& pose,
                        double tau, const RenderSettings& settings = {});
DepthImage render_depth(const GaussianMap& map, const CameraModel& cam, const Pose& pose,
                        double tau, double lambda_alpha, RenderSettings settings = {});

struct GaussianGrad {
    Vec3 mean = Vec3::Zero();
    Eigen::Vector4d rotation = Eigen::Vector4d::Zero();  // (w, x, y, z)
    Vec3 log_scale = Vec3::Zero();
    double opacity_logit = 0.0;
    std::vector<double> sh;

    bool finite() const;
};

struct MapGradients {
    std::vector<GaussianGrad> static_grads;
    std::vector<GaussianGrad> dynamic_grads;

    bool finite() const;
};

/// Analytic gradients of sum(grad_rgb * rgb) + sum(grad_depth * depth). The
/// surface depth is differentiated with the selected contributor held fixed.
MapGradients render_backward(const GaussianMap& map, const ForwardState& state,
                             const RgbImage& grad_rgb, const DepthImage& grad_depth);

}  // namespace dynagmap
