#include "dynagmap/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "dynagmap/errors.hpp"

namespace dynagmap {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-15;
constexpr double kMinLogScale = -16.0;

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

LossValue evaluate(const RenderOutput& render, const FrameBundle& frame, double depth_weight,
                   RgbImage* grad_rgb, DepthImage* grad_depth) {
    const int w = frame.rgb.width(), h = frame.rgb.height();
    if (!render.rgb.same_shape(frame.rgb) || !render.depth.same_shape(frame.depth))
        throw ShapeError("loss: render and frame sizes differ");
    LossValue loss;
    const double n_color = 3.0 * w * h;
    std::size_t n_depth = 0;
    double sum_c = 0.0, sum_d = 0.0;
    for (std::size_t i = 0; i < render.rgb.data().size(); ++i)
        sum_c += std::abs(render.rgb.data()[i] - frame.rgb.data()[i]);
    for (std::size_t i = 0; i < render.depth.data().size(); ++i) {
        const double od = frame.depth.data()[i], rd = render.depth.data()[i];
        if (od > 0.0 && rd > 0.0) {
            sum_d += std::abs(rd - od);
            ++n_depth;
        }
    }
    loss.color = sum_c / n_color;
    loss.depth = n_depth > 0 ? sum_d / static_cast<double>(n_depth) : 0.0;
    loss.total = loss.color + depth_weight * loss.depth;

    if (grad_rgb) {
        *grad_rgb = RgbImage(w, h, 3, 0.0);
        for (std::size_t i = 0; i < render.rgb.data().size(); ++i)
            grad_rgb->data()[i] = sign(render.rgb.data()[i] - frame.rgb.data()[i]) / n_color;
    }
    if (grad_depth) {
        *grad_depth = DepthImage(w, h, 1, 0.0);
        if (n_depth > 0) {
            const double scale = depth_weight / static_cast<double>(n_depth);
            for (std::size_t i = 0; i < render.depth.data().size(); ++i) {
                const double od = frame.depth.data()[i], rd = render.depth.data()[i];
                if (od > 0.0 && rd > 0.0) grad_depth->data()[i] = scale * sign(rd - od);
            }
        }
    }
    return loss;
}

void pack(const GaussianGrad& g, std::vector<double>& out) {
    out.clear();
    for (int i = 0; i < 3; ++i) out.push_back(g.mean[i]);
    for (int i = 0; i < 4; ++i) out.push_back(g.rotation[i]);
    for (int i = 0; i < 3; ++i) out.push_back(g.log_scale[i]);
    out.push_back(g.opacity_logit);
    out.insert(out.end(), g.sh.begin(), g.sh.end());
}

double* parameter(Gaussian& g, std::size_t k) {
    if (k < 3) return &g.mean[static_cast<int>(k)];
    if (k == 3) return &g.rotation.w();
    if (k == 4) return &g.rotation.x();
    if (k == 5) return &g.rotation.y();
    if (k == 6) return &g.rotation.z();
    if (k < 10) return &g.log_scale[static_cast<int>(k - 7)];
    if (k == 10) return &g.opacity_logit;
    return &g.sh[k - 11];
}

void step_gaussian(Gaussian& g, Moments& mom, const std::vector<double>& grad,
                   const LearningRates& lr, bool move_mean, OptimizerKind kind, double max_log_scale) {
    const std::size_t n = grad.size();
    if (mom.m.size() != n) {
        mom.m.assign(n, 0.0);
        mom.v.assign(n, 0.0);
    }
    const bool mean_block = move_mean && lr.geometry != 0.0;
    const bool other_geometry = lr.geometry != 0.0;
    const bool appearance = lr.appearance != 0.0;
    if (mean_block) ++mom.mean_steps;
    if (other_geometry || appearance) ++mom.other_steps;

    for (std::size_t k = 0; k < n; ++k) {
        const bool is_mean = k < 3;
        const bool geometry = k < 10;
        if (is_mean ? !mean_block : (geometry ? !other_geometry : !appearance)) continue;
        const double rate = geometry ? lr.geometry : lr.appearance;
        double& p = *parameter(g, k);
        if (kind == OptimizerKind::sgd) {
            p -= rate * grad[k];
            continue;
        }
        const auto steps = static_cast<double>(is_mean ? mom.mean_steps : mom.other_steps);
        mom.m[k] = kBeta1 * mom.m[k] + (1.0 - kBeta1) * grad[k];
        mom.v[k] = kBeta2 * mom.v[k] + (1.0 - kBeta2) * grad[k] * grad[k];
        const double m_hat = mom.m[k] / (1.0 - std::pow(kBeta1, steps));
        const double v_hat = mom.v[k] / (1.0 - std::pow(kBeta2, steps));
        p -= rate * m_hat / (std::sqrt(v_hat) + kEps);
    }
    if (other_geometry) {
        g.rotation.normalize();
        for (int i = 0; i < 3; ++i)
            g.log_scale[i] = std::clamp(g.log_scale[i], kMinLogScale, max_log_scale);
    }
}

}  // namespace

LossValue compute_loss(const RenderOutput& render, const FrameBundle& frame, double depth_weight) {
    return evaluate(render, frame, depth_weight, nullptr, nullptr);
}

LossValue loss_with_gradient(const RenderOutput& render, const FrameBundle& frame,
                             double depth_weight, RgbImage& grad_rgb, DepthImage& grad_depth) {
    return evaluate(render, frame, depth_weight, &grad_rgb, &grad_depth);
}

std::size_t parameter_count(const Gaussian& g) { return 11 + g.sh.size(); }

void OptimState::sync(const GaussianMap& map) {
    std::unordered_set<std::uint64_t> live;
    for (const auto& g : map.static_set) live.insert(g.id);
    for (const auto& g : map.dynamic_set) live.insert(g.id);
    std::erase_if(moments, [&](const auto& kv) { return live.count(kv.first) == 0; });
}

void apply_gradients(GaussianMap& map, OptimState& state, const MapGradients& grads,
                     bool dynamic_mean_live) {
    const ManageConfig& cfg = map.config;
    const double max_log_scale = std::log(cfg.scene_extent);
    std::vector<double> flat;
    for (std::size_t i = 0; i < map.static_set.size(); ++i) {
        Gaussian& g = map.static_set[i];
        pack(grads.static_grads[i], flat);
        step_gaussian(g, state.moments[g.id], flat, cfg.lr_static, true, cfg.optimizer,
                      max_log_scale);
    }
    for (std::size_t i = 0; i < map.dynamic_set.size(); ++i) {
        Gaussian& g = map.dynamic_set[i];
        pack(grads.dynamic_grads[i], flat);
        step_gaussian(g, state.moments[g.id], flat, cfg.lr_dynamic, dynamic_mean_live,
                      cfg.optimizer, max_log_scale);
    }
}

OptimizeReport optimize_frame(GaussianMap& map, OptimState& state, const FrameBundle& frame_t,
                              const CameraModel& cam, const RenderSettings& base_settings) {
    const ManageConfig& cfg = map.config;
    if (map.frame_index != frame_t.timestamp)
        throw ContractViolation("optimize_frame: map is not at the frame being optimised");
    state.sync(map);
    RenderSettings settings = base_settings;
    settings.lambda_alpha = cfg.lambda_alpha;
    settings.track_visibility = false;

    OptimizeReport rep;
    RgbImage grad_rgb;
    DepthImage grad_depth;
    for (int it = 0; it < cfg.iters_per_frame; ++it) {
        const FrameBundle* view = &frame_t;
        if (!state.window.empty()) {
            const double coin = static_cast<double>(state.rng() >> 11) * 0x1.0p-53;
            if (coin >= 0.5) view = &state.window[state.rng() % state.window.size()];
        }
        if (map.empty()) break;
        const auto fwd = render(map, cam, view->pose, static_cast<double>(view->timestamp), settings);
        const LossValue loss =
            loss_with_gradient(fwd.output, *view, cfg.depth_weight, grad_rgb, grad_depth);
        if (it == 0) rep.first_loss = loss.total;
        rep.last_loss = loss.total;
        ++rep.iterations;
        const MapGradients grads = render_backward(map, fwd.state, grad_rgb, grad_depth);
        if (!std::isfinite(loss.total) || !grads.finite()) {
            ++rep.skipped;
            ++state.skipped_iterations;
            continue;
        }
        apply_gradients(map, state, grads, view->timestamp == frame_t.timestamp);
    }
    if (rep.iterations > 0 && rep.skipped * 10 > rep.iterations)
        throw OptimizationDiverged("optimisation diverged: " + std::to_string(rep.skipped) + " of " +
                                   std::to_string(rep.iterations) + " iterations had NaN gradients");

    ++state.frames_optimized;
    if ((state.frames_optimized - 1) % cfg.keyframe_stride == 0 && cfg.window_K > 0) {
        FrameBundle kf;
        kf.rgb = frame_t.rgb;
        kf.depth = frame_t.depth;
        kf.pose = frame_t.pose;
        kf.timestamp = frame_t.timestamp;
        state.window.push_back(std::move(kf));
        while (static_cast<int>(state.window.size()) > cfg.window_K) state.window.pop_front();
    }
    return rep;
}

}  // namespace dynagmap
