#pragma once

#include "dynagmap/types.hpp"

namespace dynagmap {

/// Local segment parameter: 0 at the previous frame, 1 at the anchor frame.
double segment_parameter(const MotionSpline& spline, double tau);

/// Cubic Hermite position at continuous time `tau` (frame units).
/// Values of the segment parameter outside [0,1] extrapolate.
Vec3 query_mean(const MotionSpline& spline, double tau);

/// Velocity in meters per frame at `tau`.
Vec3 query_velocity(const MotionSpline& spline, double tau);

/// Analytic re-anchoring after frame `t` has been optimized.
///
/// `flow` is the matched displacement F (current -> previous position) over
/// `gap` frames. The previous-segment velocity v_prev_plus, when present,
/// drives a constant-acceleration estimate of the new end velocity; otherwise
/// the start velocity is reused. Writes g.spline, g.v_prev_plus and g.mean.
void update_spline(Gaussian& g, const Vec3& mean_prev_optimized, const Vec3& mean_curr_optimized,
                   const Vec3& flow, std::int64_t t, int gap = 1);

/// Degenerate spline used for a freshly spawned dynamic Gaussian.
MotionSpline rest_spline(const Vec3& mean, const Vec3& flow, std::int64_t t, int gap = 1);

}  // namespace dynagmap
