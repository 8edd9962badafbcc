#pragma once

#include <cmath>
#include <random>

#include "dynagmap/core.hpp"
#include "dynagmap/render.hpp"

namespace testing {

using namespace dynagmap;

inline Quat random_quat(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Quat q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    return q;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Gaussian make_splat(std::uint64_t id, const Vec3& mean, const Vec3& rgb, double opacity,
                           double scale, int degree = 0) {
    Gaussian g;
    g.id = id;
    g.mean = mean;
    g.log_scale = Vec3::Constant(std::log(scale));
    g.log_scale[2] = std::log(scale * 0.5);  // flatten along z, facing the camera
    g.opacity_logit = logit(opacity);
    const int basis = sh_basis_count(degree);
    g.sh.assign(3 * basis, 0.0);
    for (int c = 0; c < 3; ++c) g.sh[c * basis] = (rgb[c] - 0.5) / kShC0;
    return g;
}

inline CameraModel small_camera(int w = 32, int h = 32) {
    return {40.0, 40.0, 0.5 * w, 0.5 * h, w, h};
}

/// Straight per-pixel loop over the sorted splats with the renderer's arithmetic.
struct NaiveOutput {
    RgbImage rgb;
    DepthImage depth;
    Image<double> alpha;
};

inline NaiveOutput naive_render(const std::vector<Projected2D>& sorted, const CameraModel& cam,
                                const RenderSettings& s) {
    NaiveOutput out{RgbImage(cam.width, cam.height, 3, 0.0), DepthImage(cam.width, cam.height, 1, 0.0),
                    Image<double>(cam.width, cam.height, 1, 0.0)};
    for (int v = 0; v < cam.height; ++v)
        for (int u = 0; u < cam.width; ++u) {
            double t_acc = 1.0, c[3] = {0, 0, 0}, depth = 0.0;
            bool found = false;
            for (const auto& p : sorted) {
                const double dx = u - p.mean2d.x();
                const double dy = v - p.mean2d.y();
                const double power =
                    -0.5 * (p.conic[0] * dx * dx + p.conic[2] * dy * dy) - p.conic[1] * dx * dy;
                const double f = p.opacity * std::exp(power);
                if (f < s.min_weight) continue;
                const double w = f * t_acc;
                if (!found && w > s.lambda_alpha) {
                    found = true;
                    depth = p.depth;
                }
                for (int k = 0; k < 3; ++k) c[k] += p.color[k] * w;
                t_acc = t_acc * (1.0 - f);
                if (t_acc < s.min_transmittance) break;
            }
            for (int k = 0; k < 3; ++k) out.rgb.at(u, v, k) = c[k];
            out.depth.at(u, v) = depth;
            out.alpha.at(u, v) = 1.0 - t_acc;
        }
    return out;
}

}  // namespace testing

namespace testing {

/// Scalar objective sum(grad_rgb * rgb) + sum(grad_depth * depth).
inline double linear_objective(const GaussianMap& map, const CameraModel& cam, const Pose& pose,
                               double tau, const RenderSettings& s, const RgbImage& grgb,
                               const DepthImage& gdepth) {
    const auto out = render(map, cam, pose, tau, s).output;
    double acc = 0.0;
    for (std::size_t i = 0; i < grgb.data().size(); ++i) acc += grgb.data()[i] * out.rgb.data()[i];
    for (std::size_t i = 0; i < gdepth.data().size(); ++i) acc += gdepth.data()[i] * out.depth.data()[i];
    return acc;
}

struct GradCheck {
    // max |analytic - numeric| and max |numeric| per class:
    // mean, rotation, log_scale, opacity, sh
    double err[5] = {0, 0, 0, 0, 0};
    double scale[5] = {0, 0, 0, 0, 0};

    double relative(int k) const { return scale[k] > 0 ? err[k] / scale[k] : err[k]; }
    double worst() const {
        double w = 0;
        for (int k = 0; k < 5; ++k) w = std::max(w, relative(k));
        return w;
    }
};

/// Random scene with splats in front of the camera, colours away from the
/// clamp and well separated scale axes.
inline GaussianMap random_grad_scene(std::mt19937_64& rng, int n, int degree, const CameraModel& cam) {
    GaussianMap map;
    map.frame_index = 3;
    for (int i = 0; i < n; ++i) {
        Gaussian g;
        g.id = map.allocate_id();
        const double z = uniform(rng, 1.5, 3.5);
        const double u = uniform(rng, 0.25 * cam.width, 0.75 * cam.width);
        const double v = uniform(rng, 0.25 * cam.height, 0.75 * cam.height);
        g.mean = cam.backproject(u, v, z);
        g.rotation = random_quat(rng);
        g.rotation.coeffs() *= uniform(rng, 0.8, 1.2);  // unnormalised on purpose
        g.log_scale = Vec3(std::log(uniform(rng, 0.08, 0.12)), std::log(uniform(rng, 0.15, 0.2)),
                           std::log(uniform(rng, 0.25, 0.3)));
        g.opacity_logit = uniform(rng, -1.0, 1.5);
        const int basis = sh_basis_count(degree);
        g.sh.assign(3 * basis, 0.0);
        for (int c = 0; c < 3; ++c) {
            g.sh[c * basis] = uniform(rng, -0.5, 0.5);
            for (int b = 1; b < basis; ++b) g.sh[c * basis + b] = uniform(rng, -0.1, 0.1);
        }
        if (i % 3 == 2) {
            // dynamic, rendered either live or through its spline
            g.kind = GaussianKind::dynamic_kind;
            MotionSpline s;
            s.m_minus = g.mean + Vec3(0.05, 0.0, 0.0);
            s.m_plus = g.mean;
            s.v_minus = Vec3(-0.05, 0.01, 0.0);
            s.v_plus = Vec3(-0.05, 0.0, 0.01);
            s.t_anchor = 3;
            g.spline = s;
            map.dynamic_set.push_back(g);
        } else {
            map.static_set.push_back(g);
        }
    }
    return map;
}

/// Compares render_backward with central differences (step h) of the linear
/// objective. Depth upstream gradient is zeroed where the surface choice is
/// within `margin` of flipping, since the selection is held fixed.
inline GradCheck check_gradients(GaussianMap map, const CameraModel& cam, const Pose& pose, double tau,
                                 std::mt19937_64& rng, double h = 1e-4, double margin = 1e-3) {
    RenderSettings s;
    s.min_weight = 0.0;
    s.min_transmittance = 0.0;
    s.lambda_alpha = 0.3;
    RgbImage grgb(cam.width, cam.height, 3);
    DepthImage gdepth(cam.width, cam.height, 1);
    for (double& x : grgb.data()) x = uniform(rng, -1.0, 1.0);
    for (double& x : gdepth.data()) x = uniform(rng, -1.0, 1.0);

    const auto fwd = render(map, cam, pose, tau, s);
    // blended weights near the threshold make the depth selection unstable
    for (int v = 0; v < cam.height; ++v)
        for (int u = 0; u < cam.width; ++u) {
            double t_acc = 1.0;
            for (const auto& p : fwd.state.projected) {
                const double dx = u - p.mean2d.x(), dy = v - p.mean2d.y();
                const double f = p.opacity * std::exp(-0.5 * (p.conic[0] * dx * dx + p.conic[2] * dy * dy) -
                                                      p.conic[1] * dx * dy);
                if (std::abs(f * t_acc - s.lambda_alpha) < margin) gdepth.at(u, v) = 0.0;
                t_acc *= 1.0 - f;
            }
        }
    const MapGradients grads = render_backward(map, fwd.state, grgb, gdepth);

    GradCheck out;
    auto probe = [&](double& param, double analytic, int cls) {
        const double keep = param;
        param = keep + h;
        const double fp = linear_objective(map, cam, pose, tau, s, grgb, gdepth);
        param = keep - h;
        const double fm = linear_objective(map, cam, pose, tau, s, grgb, gdepth);
        param = keep;
        const double numeric = (fp - fm) / (2.0 * h);
        out.err[cls] = std::max(out.err[cls], std::abs(numeric - analytic));
        out.scale[cls] = std::max(out.scale[cls], std::abs(numeric));
    };
    auto visit = [&](std::vector<Gaussian>& set, const std::vector<GaussianGrad>& gs) {
        for (std::size_t i = 0; i < set.size(); ++i) {
            Gaussian& g = set[i];
            const GaussianGrad& gg = gs[i];
            for (int k = 0; k < 3; ++k) probe(g.mean[k], gg.mean[k], 0);
            probe(g.rotation.w(), gg.rotation[0], 1);
            probe(g.rotation.x(), gg.rotation[1], 1);
            probe(g.rotation.y(), gg.rotation[2], 1);
            probe(g.rotation.z(), gg.rotation[3], 1);
            for (int k = 0; k < 3; ++k) probe(g.log_scale[k], gg.log_scale[k], 2);
            probe(g.opacity_logit, gg.opacity_logit, 3);
            for (std::size_t k = 0; k < g.sh.size(); ++k) probe(g.sh[k], gg.sh[k], 4);
        }
    };
    visit(map.static_set, grads.static_grads);
    visit(map.dynamic_set, grads.dynamic_grads);
    return out;
}

}  // namespace testing
