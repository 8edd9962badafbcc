#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <unordered_map>
#include <vector>

#include "dynagmap/render.hpp"
#include "dynagmap/types.hpp"

namespace dynagmap {

struct LossValue {
    double color = 0.0;
    double depth = 0.0;
    double total = 0.0;
};

/// Mean L1 colour error plus depth_weight times the mean L1 depth error over
/// pixels where both observed and rendered depth are positive.
LossValue compute_loss(const RenderOutput& render, const FrameBundle& frame,
                       double depth_weight = 0.5);

/// Same as compute_loss and also writes d(total)/d(render.rgb) and
/// d(total)/d(render.depth).
LossValue loss_with_gradient(const RenderOutput& render, const FrameBundle& frame,
                             double depth_weight, RgbImage& grad_rgb, DepthImage& grad_depth);

/// Number of optimisable scalars of a Gaussian, in packing order:
/// mean(3) rotation wxyz(4) log_scale(3) opacity_logit(1) sh.
std::size_t parameter_count(const Gaussian& g);

struct Moments {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t mean_steps = 0;
    std::int64_t other_steps = 0;
};

struct OptimState {
    std::unordered_map<std::uint64_t, Moments> moments;
    std::deque<FrameBundle> window;  // past keyframes, oldest first
    std::mt19937_64 rng;
    std::int64_t frames_optimized = 0;
    std::int64_t skipped_iterations = 0;

    explicit OptimState(std::uint64_t seed = 0) : rng(seed) {}
    /// Forgets Gaussians that are no longer in the map.
    void sync(const GaussianMap& map);
};

struct OptimizeReport {
    int iterations = 0;
    int skipped = 0;
    double first_loss = 0.0;
    double last_loss = 0.0;
};

/// Applies one gradient step to every Gaussian. Dynamic means move only
/// when `dynamic_mean_live` is set.
void apply_gradients(GaussianMap& map, OptimState& state, const MapGradients& grads,
                     bool dynamic_mean_live);

/// iters_per_frame steps over frame_t and the keyframe window, then updates
/// the window.
OptimizeReport optimize_frame(GaussianMap& map, OptimState& state, const FrameBundle& frame_t,
                              const CameraModel& cam, const RenderSettings& base_settings = {});

}  // namespace dynagmap
