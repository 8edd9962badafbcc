#include "dynagmap/motion.hpp"

#include <cmath>

#include "dynagmap/errors.hpp"

namespace dynagmap {

double segment_parameter(const MotionSpline& spline, double tau) {
    if (!std::isfinite(tau)) throw InvalidParameter("query time must be finite");
    return (tau - static_cast<double>(spline.t_anchor)) / spline.gap + 1.0;
}

Vec3 query_mean(const MotionSpline& spline, double tau) {
    const double s = segment_parameter(spline, tau);
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    // velocities are per frame; the segment parameter advances 1/gap per frame
    const double g = spline.gap;
    return h00 * spline.m_minus + h10 * g * spline.v_minus + h01 * spline.m_plus +
           h11 * g * spline.v_plus;
}

Vec3 query_velocity(const MotionSpline& spline, double tau) {
    const double s = segment_parameter(spline, tau);
    const double s2 = s * s;
    const double d00 = 6 * s2 - 6 * s;
    const double d10 = 3 * s2 - 4 * s + 1;
    const double d01 = -6 * s2 + 6 * s;
    const double d11 = 3 * s2 - 2 * s;
    const double g = spline.gap;
    return (d00 * spline.m_minus + d01 * spline.m_plus) / g + d10 * spline.v_minus +
           d11 * spline.v_plus;
}

void update_spline(Gaussian& g, const Vec3& mean_prev_optimized, const Vec3& mean_curr_optimized,
                   const Vec3& flow, std::int64_t t, int gap) {
    if (!g.is_dynamic()) throw InvalidParameter("update_spline on a static Gaussian");
    if (!mean_prev_optimized.allFinite() || !mean_curr_optimized.allFinite() || !flow.allFinite())
        throw InvalidParameter("update_spline: non-finite input");
    if (gap < 1 || t < 1) throw InvalidParameter("update_spline: bad frame index or gap");

    MotionSpline s;
    s.m_minus = mean_prev_optimized;
    s.m_plus = mean_curr_optimized;
    s.v_minus = -flow / static_cast<double>(gap);
    s.v_plus = g.v_prev_plus ? Vec3(2.0 * s.v_minus - *g.v_prev_plus) : s.v_minus;
    s.t_anchor = t;
    s.gap = gap;

    g.v_prev_plus = s.v_plus;
    g.spline = s;
    g.mean = s.m_plus;
}

MotionSpline rest_spline(const Vec3& mean, const Vec3& flow, std::int64_t t, int gap) {
    MotionSpline s;
    s.m_minus = mean;
    s.m_plus = mean;
    s.v_minus = -flow / static_cast<double>(gap);
    s.v_plus = s.v_minus;
    s.t_anchor = t < 1 ? 1 : t;
    s.gap = gap;
    return s;
}

}  // namespace dynagmap
