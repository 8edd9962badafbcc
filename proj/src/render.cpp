#include "dynagmap/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "dynagmap/core.hpp"
#include "dynagmap/errors.hpp"
#include "dynagmap/motion.hpp"
#include "dynagmap/parallel.hpp"

namespace dynagmap {

namespace {

const Gaussian& source_gaussian(const GaussianMap& map, std::uint32_t source) {
    return source < map.static_set.size() ? map.static_set[source]
                                          : map.dynamic_set[source - map.static_set.size()];
}

/// Compact per-splat record for the inner blending loop.
struct BlendEntry {
    double mx, my;
    double a, b, c;
    double opacity;
    double r, g, bl;
};

std::vector<BlendEntry> blend_entries(const std::vector<Projected2D>& projected) {
    std::vector<BlendEntry> out(projected.size());
    for (std::size_t i = 0; i < projected.size(); ++i) {
        const auto& p = projected[i];
        out[i] = {p.mean2d.x(), p.mean2d.y(), p.conic[0], p.conic[1], p.conic[2],
                  p.opacity,    p.color.x(),  p.color.y(), p.color.z()};
    }
    return out;
}

struct EntryGrad {
    double mean2d_x = 0, mean2d_y = 0;
    double conic_a = 0, conic_b = 0, conic_c = 0;
    double opacity = 0;
    double color_r = 0, color_g = 0, color_b = 0;
    double depth = 0;

    EntryGrad& operator+=(const EntryGrad& o) {
        mean2d_x += o.mean2d_x;
        mean2d_y += o.mean2d_y;
        conic_a += o.conic_a;
        conic_b += o.conic_b;
        conic_c += o.conic_c;
        opacity += o.opacity;
        color_r += o.color_r;
        color_g += o.color_g;
        color_b += o.color_b;
        depth += o.depth;
        return *this;
    }
};

struct Contribution {
    std::uint32_t slot;  // position in the tile list
    double f, transmittance, gauss, dx, dy;
};

}  // namespace

Vec3 mean_at(const Gaussian& g, double tau, std::optional<std::int64_t> live_frame,
             bool* differentiable) {
    const bool live = !g.is_dynamic() || !g.spline ||
                      (live_frame && tau == static_cast<double>(*live_frame));
    if (differentiable) *differentiable = live;
    return live ? g.mean : query_mean(*g.spline, tau);
}

std::optional<Projected2D> project_gaussian(const Gaussian& g, const CameraModel& cam,
                                            const Pose& pose, double tau,
                                            const RenderSettings& settings,
                                            std::optional<std::int64_t> live_frame,
                                            bool* singular) {
    if (singular) *singular = false;
    Projected2D p;
    p.gaussian_id = g.id;
    p.mean_world = mean_at(g, tau, live_frame, &p.mean_differentiable);
    const Mat3 w = pose.rotation_matrix().transpose();
    p.p_cam = w * (p.mean_world - pose.translation);
    const double x = p.p_cam.x(), y = p.p_cam.y(), z = p.p_cam.z();
    if (!(z > settings.near_clip)) return std::nullopt;

    const Mat3 sigma_cam = w * build_covariance(g.rotation, g.log_scale) * w.transpose();
    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx / z, 0.0, -cam.fx * x / (z * z), 0.0, cam.fy / z, -cam.fy * y / (z * z);
    p.cov2d = jac * sigma_cam * jac.transpose();
    p.cov2d(1, 0) = p.cov2d(0, 1);
    p.cov2d(0, 0) += settings.dilation;
    p.cov2d(1, 1) += settings.dilation;
    p.mean2d = cam.project(p.p_cam);
    p.depth = z;

    const double mid = 0.5 * (p.cov2d(0, 0) + p.cov2d(1, 1));
    const double half = 0.5 * (p.cov2d(0, 0) - p.cov2d(1, 1));
    const double disc = std::sqrt(half * half + p.cov2d(0, 1) * p.cov2d(0, 1));
    const double lmax = mid + disc;
    const double lmin = mid - disc;
    if (!(lmin > 0.0) || lmax / lmin > settings.max_condition || !std::isfinite(lmax)) {
        if (singular) *singular = true;
        return std::nullopt;
    }
    const double sigma = std::sqrt(lmax);
    const double margin = settings.cull_sigma * sigma;
    if (p.mean2d.x() < -margin || p.mean2d.x() > cam.width - 1 + margin ||
        p.mean2d.y() < -margin || p.mean2d.y() > cam.height - 1 + margin)
        return std::nullopt;

    const double det = p.cov2d(0, 0) * p.cov2d(1, 1) - p.cov2d(0, 1) * p.cov2d(0, 1);
    p.conic = {p.cov2d(1, 1) / det, -p.cov2d(0, 1) / det, p.cov2d(0, 0) / det};
    p.opacity = sigmoid(g.opacity_logit);

    const int basis = g.sh_basis();
    const int degree = sh_degree_from_basis(basis);
    std::array<double, 16> y_sh{};
    sh_basis((p.mean_world - pose.center()).normalized(), degree, y_sh);
    for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int b = 0; b < basis; ++b) acc += y_sh[b] * g.sh[ch * basis + b];
        p.color_raw[ch] = acc;
        p.color[ch] = std::clamp(acc + 0.5, 0.0, 1.0);
    }

    if (settings.min_weight <= 0.0)
        p.radius = std::numeric_limits<double>::infinity();
    else if (p.opacity > settings.min_weight)
        p.radius = std::sqrt(2.0 * std::log(p.opacity / settings.min_weight) * lmax) + 1.0;
    else
        p.radius = -1.0;  // can never reach min_weight
    return p;
}

RenderResult render(const GaussianMap& map, const CameraModel& cam, const Pose& pose, double tau,
                    const RenderSettings& settings) {
    RenderResult result;
    ForwardState& st = result.state;
    RenderOutput& out = result.output;
    st.n_static = map.static_set.size();
    st.n_dynamic = map.dynamic_set.size();
    st.camera = cam;
    st.pose = pose;
    st.tau = tau;
    st.live_frame = map.frame_index;
    st.settings = settings;

    const std::size_t n = map.size();
    std::vector<std::optional<Projected2D>> slots(n);
    std::vector<std::uint8_t> singular(n, 0);
    parallel_for(n, [&](std::size_t i) {
        bool sing = false;
        slots[i] = project_gaussian(source_gaussian(map, static_cast<std::uint32_t>(i)), cam, pose,
                                    tau, settings, map.frame_index, &sing);
        if (slots[i]) slots[i]->source = static_cast<std::uint32_t>(i);
        singular[i] = sing;
    });
    out.skipped_singular = std::accumulate(singular.begin(), singular.end(), std::size_t{0});
    for (auto& s : slots)
        if (s) st.projected.push_back(std::move(*s));
    std::sort(st.projected.begin(), st.projected.end(),
              [](const Projected2D& a, const Projected2D& b) {
                  if (a.depth != b.depth) return a.depth < b.depth;
                  return a.gaussian_id < b.gaussian_id;
              });

    const int w = cam.width, h = cam.height, ts = settings.tile_size;
    st.tiles_x = (w + ts - 1) / ts;
    st.tiles_y = (h + ts - 1) / ts;
    st.tile_lists.assign(static_cast<std::size_t>(st.tiles_x) * st.tiles_y, {});
    for (std::uint32_t k = 0; k < st.projected.size(); ++k) {
        const auto& p = st.projected[k];
        if (p.radius < 0.0) continue;
        const int u0 = std::max(0, static_cast<int>(std::ceil(std::max(p.mean2d.x() - p.radius, -1.0))));
        const int u1 = std::min(w - 1, static_cast<int>(std::floor(std::min(p.mean2d.x() + p.radius, double(w)))));
        const int v0 = std::max(0, static_cast<int>(std::ceil(std::max(p.mean2d.y() - p.radius, -1.0))));
        const int v1 = std::min(h - 1, static_cast<int>(std::floor(std::min(p.mean2d.y() + p.radius, double(h)))));
        if (u0 > u1 || v0 > v1) continue;
        for (int ty = v0 / ts; ty <= v1 / ts; ++ty)
            for (int tx = u0 / ts; tx <= u1 / ts; ++tx)
                st.tile_lists[static_cast<std::size_t>(ty) * st.tiles_x + tx].push_back(k);
    }

    out.rgb = RgbImage(w, h, 3, 0.0);
    out.depth = DepthImage(w, h, 1, 0.0);
    out.alpha = Image<double>(w, h, 1, 0.0);
    out.contributor_count = Image<int>(w, h, 1, 0);
    st.walked.assign(static_cast<std::size_t>(w) * h, 0);
    st.surface.assign(static_cast<std::size_t>(w) * h, -1);

    const auto blend = blend_entries(st.projected);
    std::vector<std::vector<std::uint32_t>> tile_visible(settings.track_visibility ? st.tile_lists.size() : 0);

    parallel_for(st.tile_lists.size(), [&](std::size_t tile) {
        const auto& list = st.tile_lists[tile];
        const int tx = static_cast<int>(tile % st.tiles_x), ty = static_cast<int>(tile / st.tiles_x);
        std::vector<std::uint8_t> seen(settings.track_visibility ? list.size() : 0, 0);
        for (int v = ty * ts; v < std::min(h, (ty + 1) * ts); ++v) {
            for (int u = tx * ts; u < std::min(w, (tx + 1) * ts); ++u) {
                double t_acc = 1.0;
                double cr = 0.0, cg = 0.0, cb = 0.0;
                double depth = 0.0;
                std::int32_t surface = -1;
                int count = 0;
                std::uint32_t walked = 0;
                for (std::uint32_t k = 0; k < list.size(); ++k) {
                    walked = k + 1;
                    const BlendEntry& e = blend[list[k]];
                    const double dx = u - e.mx;
                    const double dy = v - e.my;
                    const double power = -0.5 * (e.a * dx * dx + e.c * dy * dy) - e.b * dx * dy;
                    const double f = e.opacity * std::exp(power);
                    if (f < settings.min_weight) continue;
                    const double weight = f * t_acc;
                    if (surface < 0 && weight > settings.lambda_alpha) {
                        surface = static_cast<std::int32_t>(list[k]);
                        depth = st.projected[list[k]].depth;
                    }
                    cr += e.r * weight;
                    cg += e.g * weight;
                    cb += e.bl * weight;
                    if (settings.track_visibility && weight >= settings.min_weight) seen[k] = 1;
                    t_acc = t_acc * (1.0 - f);
                    ++count;
                    if (t_acc < settings.min_transmittance) break;
                }
                const std::size_t pix = static_cast<std::size_t>(v) * w + u;
                out.rgb.at(u, v, 0) = cr;
                out.rgb.at(u, v, 1) = cg;
                out.rgb.at(u, v, 2) = cb;
                out.depth.at(u, v) = depth;
                out.alpha.at(u, v) = 1.0 - t_acc;
                out.contributor_count.at(u, v) = count;
                st.walked[pix] = walked;
                st.surface[pix] = surface;
            }
        }
        if (settings.track_visibility)
            for (std::uint32_t k = 0; k < list.size(); ++k)
                if (seen[k]) tile_visible[tile].push_back(list[k]);
    });

    if (settings.track_visibility) {
        out.visible.assign(n, 0);
        for (const auto& tv : tile_visible)
            for (auto k : tv) out.visible[st.projected[k].source] = 1;
    }
    return result;
}

RenderOutput render_rgb(const GaussianMap& map, const CameraModel& cam, const Pose& pose,
                        double tau, const RenderSettings& settings) {
    return render(map, cam, pose, tau, settings).output;
}

DepthImage render_depth(const GaussianMap& map, const CameraModel& cam, const Pose& pose,
                        double tau, double lambda_alpha, RenderSettings settings) {
    settings.lambda_alpha = lambda_alpha;
    return render(map, cam, pose, tau, settings).output.depth;
}

bool GaussianGrad::finite() const {
    if (!mean.allFinite() || !rotation.allFinite() || !log_scale.allFinite() ||
        !std::isfinite(opacity_logit))
        return false;
    return std::all_of(sh.begin(), sh.end(), [](double v) { return std::isfinite(v); });
}

bool MapGradients::finite() const {
    auto ok = [](const std::vector<GaussianGrad>& v) {
        return std::all_of(v.begin(), v.end(), [](const GaussianGrad& g) { return g.finite(); });
    };
    return ok(static_grads) && ok(dynamic_grads);
}

MapGradients render_backward(const GaussianMap& map, const ForwardState& st,
                             const RgbImage& grad_rgb, const DepthImage& grad_depth) {
    const CameraModel& cam = st.camera;
    const int w = cam.width, h = cam.height, ts = st.settings.tile_size;
    if (map.static_set.size() != st.n_static || map.dynamic_set.size() != st.n_dynamic ||
        map.frame_index != st.live_frame)
        throw ContractViolation("render_backward: map does not match the forward pass");
    if (!grad_rgb.same_shape(w, h) || grad_rgb.channels() != 3 || !grad_depth.same_shape(w, h) ||
        grad_depth.channels() != 1)
        throw ContractViolation("render_backward: upstream gradient has the wrong shape");
    if (st.walked.size() != static_cast<std::size_t>(w) * h)
        throw ContractViolation("render_backward: forward state is incomplete");
    for (const auto& p : st.projected)
        if (p.source >= map.size() || source_gaussian(map, p.source).id != p.gaussian_id)
            throw ContractViolation("render_backward: Gaussian ids changed since the forward pass");

    MapGradients grads;
    grads.static_grads.resize(map.static_set.size());
    grads.dynamic_grads.resize(map.dynamic_set.size());
    for (std::size_t i = 0; i < map.size(); ++i) {
        const auto& g = source_gaussian(map, static_cast<std::uint32_t>(i));
        auto& gg = i < map.static_set.size() ? grads.static_grads[i]
                                             : grads.dynamic_grads[i - map.static_set.size()];
        gg.sh.assign(g.sh.size(), 0.0);
    }

    const auto blend = blend_entries(st.projected);
    const double min_weight = st.settings.min_weight;
    const double min_t = st.settings.min_transmittance;

    std::vector<std::vector<EntryGrad>> tile_grads(st.tile_lists.size());
    parallel_for(st.tile_lists.size(), [&](std::size_t tile) {
        const auto& list = st.tile_lists[tile];
        auto& local = tile_grads[tile];
        local.assign(list.size(), EntryGrad{});
        const int tx = static_cast<int>(tile % st.tiles_x), ty = static_cast<int>(tile / st.tiles_x);
        std::vector<Contribution> contrib;
        for (int v = ty * ts; v < std::min(h, (ty + 1) * ts); ++v) {
            for (int u = tx * ts; u < std::min(w, (tx + 1) * ts); ++u) {
                const std::size_t pix = static_cast<std::size_t>(v) * w + u;
                const double gr = grad_rgb.at(u, v, 0), gg = grad_rgb.at(u, v, 1),
                             gb = grad_rgb.at(u, v, 2);
                const double gd = grad_depth.at(u, v);
                if (gr == 0.0 && gg == 0.0 && gb == 0.0 && gd == 0.0) continue;

                // replay the forward walk
                contrib.clear();
                double t_acc = 1.0;
                for (std::uint32_t k = 0; k < st.walked[pix]; ++k) {
                    const BlendEntry& e = blend[list[k]];
                    const double dx = u - e.mx;
                    const double dy = v - e.my;
                    const double power = -0.5 * (e.a * dx * dx + e.c * dy * dy) - e.b * dx * dy;
                    const double gauss = std::exp(power);
                    const double f = e.opacity * gauss;
                    if (f < min_weight) continue;
                    contrib.push_back({k, f, t_acc, gauss, dx, dy});
                    t_acc = t_acc * (1.0 - f);
                    if (t_acc < min_t) break;
                }

                const std::int32_t surface = st.surface[pix];
                double sr = 0.0, sg = 0.0, sb = 0.0;  // colour blended behind entry i
                for (std::size_t i = contrib.size(); i-- > 0;) {
                    const Contribution& c = contrib[i];
                    const BlendEntry& e = blend[list[c.slot]];
                    EntryGrad& acc = local[c.slot];
                    const double tw = c.transmittance * c.f;
                    acc.color_r += tw * gr;
                    acc.color_g += tw * gg;
                    acc.color_b += tw * gb;
                    const double dl_df = c.transmittance * ((e.r - sr) * gr + (e.g - sg) * gg +
                                                           (e.bl - sb) * gb);
                    if (gd != 0.0 && static_cast<std::int32_t>(list[c.slot]) == surface)
                        acc.depth += gd;
                    sr = e.r * c.f + (1.0 - c.f) * sr;
                    sg = e.g * c.f + (1.0 - c.f) * sg;
                    sb = e.bl * c.f + (1.0 - c.f) * sb;

                    acc.opacity += dl_df * c.gauss;
                    const double dl_dpower = dl_df * e.opacity * c.gauss;
                    acc.mean2d_x += dl_dpower * (e.a * c.dx + e.b * c.dy);
                    acc.mean2d_y += dl_dpower * (e.b * c.dx + e.c * c.dy);
                    acc.conic_a += dl_dpower * (-0.5 * c.dx * c.dx);
                    acc.conic_b += dl_dpower * (-c.dx * c.dy);
                    acc.conic_c += dl_dpower * (-0.5 * c.dy * c.dy);
                }
            }
        }
    });

    // fixed tile order keeps the reduction deterministic
    std::vector<EntryGrad> per_entry(st.projected.size());
    for (std::size_t tile = 0; tile < st.tile_lists.size(); ++tile) {
        const auto& list = st.tile_lists[tile];
        for (std::size_t k = 0; k < list.size(); ++k) per_entry[list[k]] += tile_grads[tile][k];
    }

    const Mat3 rot_wc = st.pose.rotation_matrix();
    const Mat3 w2c = rot_wc.transpose();
    parallel_for(st.projected.size(), [&](std::size_t k) {
        const Projected2D& p = st.projected[k];
        const EntryGrad& eg = per_entry[k];
        const Gaussian& g = source_gaussian(map, p.source);
        GaussianGrad& out = p.source < map.static_set.size()
                                ? grads.static_grads[p.source]
                                : grads.dynamic_grads[p.source - map.static_set.size()];

        // colour -> SH and view direction
        const int basis = g.sh_basis();
        const int degree = sh_degree_from_basis(basis);
        const Vec3 view = p.mean_world - st.pose.center();
        const double view_len = view.norm();
        const Vec3 dir = view / view_len;
        std::array<double, 16> y_sh{};
        Eigen::Matrix<double, 3, 16> dy_sh;
        sh_basis(dir, degree, y_sh, &dy_sh);
        const Vec3 gcol(eg.color_r, eg.color_g, eg.color_b);
        Vec3 g_dir = Vec3::Zero();
        for (int ch = 0; ch < 3; ++ch) {
            const double raw = p.color_raw[ch] + 0.5;
            if (raw < 0.0 || raw > 1.0) continue;  // clamped channel
            for (int b = 0; b < basis; ++b) {
                out.sh[ch * basis + b] = gcol[ch] * y_sh[b];
                g_dir += gcol[ch] * g.sh[ch * basis + b] * dy_sh.col(b);
            }
        }

        out.opacity_logit = eg.opacity * p.opacity * (1.0 - p.opacity);

        // conic -> 2D covariance
        Mat2 q;
        q << p.conic[0], p.conic[1], p.conic[1], p.conic[2];
        Mat2 g_q;
        g_q << eg.conic_a, 0.5 * eg.conic_b, 0.5 * eg.conic_b, eg.conic_c;
        const Mat2 g_cov2d = -q * g_q * q;

        const double x = p.p_cam.x(), y = p.p_cam.y(), z = p.p_cam.z();
        const double fx = cam.fx, fy = cam.fy;
        Eigen::Matrix<double, 2, 3> jac;
        jac << fx / z, 0.0, -fx * x / (z * z), 0.0, fy / z, -fy * y / (z * z);
        const Mat3 sigma = build_covariance(g.rotation, g.log_scale);
        const Mat3 sigma_cam = w2c * sigma * w2c.transpose();
        const Mat3 g_sigma_cam = jac.transpose() * g_cov2d * jac;
        const Eigen::Matrix<double, 2, 3> g_jac = 2.0 * g_cov2d * jac * sigma_cam;
        const Mat3 g_sigma = w2c.transpose() * g_sigma_cam * w2c;

        // Sigma = M M^T, M = R S
        const Quat qn = g.rotation.normalized();
        const Mat3 r = qn.toRotationMatrix();
        const ActivatedScale act = activate_scale(g.log_scale);
        const Mat3 m = r * act.scale.asDiagonal();
        const Mat3 g_m = 2.0 * g_sigma * m;
        Mat3 g_r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) g_r(i, j) = g_m(i, j) * act.scale[j];
        for (int j = 0; j < 3; ++j) {
            if (j == act.flattened_axis) continue;
            double g_s = 0.0;
            for (int i = 0; i < 3; ++i) g_s += g_m(i, j) * r(i, j);
            out.log_scale[j] = g_s * act.scale[j];
        }
        out.rotation = rotation_gradient_to_quat(g.rotation, g_r);

        if (!p.mean_differentiable) return;
        Vec3 g_cam;
        g_cam.x() = eg.mean2d_x * fx / z + g_jac(0, 2) * (-fx / (z * z));
        g_cam.y() = eg.mean2d_y * fy / z + g_jac(1, 2) * (-fy / (z * z));
        g_cam.z() = eg.mean2d_x * (-fx * x / (z * z)) + eg.mean2d_y * (-fy * y / (z * z)) +
                    g_jac(0, 0) * (-fx / (z * z)) + g_jac(1, 1) * (-fy / (z * z)) +
                    g_jac(0, 2) * (2.0 * fx * x / (z * z * z)) +
                    g_jac(1, 2) * (2.0 * fy * y / (z * z * z)) + eg.depth;
        out.mean = rot_wc * g_cam + (g_dir - dir * dir.dot(g_dir)) / view_len;
    });
    return grads;
}

}  // namespace dynagmap
