#include "dynagmap/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <unordered_map>

#include "dynagmap/eval.hpp"
#include "dynagmap/io.hpp"
#include "dynagmap/motion.hpp"

namespace dynagmap {

Mapper::Mapper(const CameraModel& cam, const ManageConfig& config, const RenderSettings& settings)
    : cam_(cam), optim_(config.seed), settings_(settings) {
    cam_.validate();
    config.validate();
    map_.config = config;
    settings_.lambda_alpha = config.lambda_alpha;
}

RenderSettings Mapper::render_settings() const { return settings_; }

namespace {

template <typename F>
auto stage(std::int64_t t, const char* name, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const PipelineError&) {
        throw;
    } catch (const std::exception& e) {
        throw PipelineError(t, name, e.what());
    }
}

FrameBundle slim_copy(const FrameBundle& f) {
    FrameBundle out;
    out.rgb = f.rgb;
    out.depth = f.depth;
    out.pose = f.pose;
    out.timestamp = f.timestamp;
    return out;
}

}  // namespace

FrameReport Mapper::process(const FrameBundle& frame, const DepthSampler& prev_depth) {
    const std::int64_t t = frame.timestamp;
    const auto start = std::chrono::steady_clock::now();
    FrameReport rep;
    stage(t, "validate", [&] {
        frame.validate(cam_);
        if (prev_ && t <= prev_->timestamp)
            throw InvalidParameter("frames must arrive in increasing time order");
    });
    map_.frame_index = t;
    const ManageConfig& cfg = map_.config;

    // (1) motion mask
    const bool has_flow = frame.flow_back.has_value();
    if (cfg.dynamic_enabled && !has_flow && !warned_no_flow_) {
        rep.warnings.push_back("no backward flow: dynamic Gaussian handling is disabled");
        warned_no_flow_ = true;
    }
    const bool dynamic = cfg.dynamic_enabled && has_flow;
    std::optional<MaskImage> mask = stage(t, "segmentation", [&]() -> std::optional<MaskImage> {
        if (frame.motion_mask) return frame.motion_mask;
        if (has_flow && prev_)
            return segment_motion(*frame.flow_back, frame.depth, cam_, frame.pose, prev_->pose,
                                  cfg.motion_threshold_px);
        return std::nullopt;
    });
    rep.mask_pixels = mask ? count_set(*mask) : 0;

    // (2) GS flow
    GsFlowField field;
    field.frame_index = t;
    if (dynamic && rep.mask_pixels > 0) {
        stage(t, "gs-flow", [&] {
            if (prev_) {
                try {
                    field = lift_gs_flow(frame, *prev_, cam_, *mask, cfg.flow_mode, prev_depth);
                } catch (const EmptyFlow&) {
                    rep.warnings.push_back("no dynamic point survived flow lifting");
                }
            } else {
                for (const auto& p : backproject_points(frame.depth, cam_, frame.pose, &*mask)) {
                    field.points_world_t.push_back(p.world);
                    field.displacements.push_back(Vec3::Zero());
                    field.pixel_coords.emplace_back(p.u, p.v);
                }
            }
        });
    }
    rep.flow_points = field.size();

    // (3) dynamic management
    stage(t, "dynamic-management", [&] {
        rep.association = associate_dynamic(field, map_.dynamic_set, cfg.lambda_d);
        rep.d_bar = rep.association.d_bar;
        if (on_stage) on_stage("associate", map_, field, rep.association);
        rep.prune = prune_dynamic(map_, field, rep.association.d_bar, cfg.lambda_d, t);
        if (on_stage) on_stage("prune", map_, field, rep.association);
        rep.management = apply_management(map_, rep.association, field, frame, cam_);
        if (on_stage) on_stage("apply", map_, field, rep.association);
    });

    // (4) static management
    stage(t, "static-management", [&] {
        RenderSettings s = settings_;
        s.track_visibility = true;
        const RenderOutput current = render(map_, cam_, frame.pose, static_cast<double>(t), s).output;
        rep.statics = manage_static(map_, frame, current, cam_, dynamic && mask ? &*mask : nullptr);
    });

    // (5) optimisation
    rep.optimize = stage(t, "optimize", [&] { return optimize_frame(map_, optim_, frame, cam_, settings_); });

    // (6) analytic spline updates
    stage(t, "spline-update", [&] {
        std::unordered_map<std::uint64_t, Gaussian*> by_id;
        for (auto& g : map_.dynamic_set) by_id[g.id] = &g;
        const int gap = prev_ ? static_cast<int>(t - prev_->timestamp) : 1;
        for (const SplineTask& task : rep.management.splines) {
            const auto it = by_id.find(task.id);
            if (it == by_id.end()) continue;
            Gaussian& g = *it->second;
            if (task.rest || !prev_) {
                g.spline = rest_spline(g.mean, Vec3::Zero(), t);
                g.v_prev_plus.reset();
            } else {
                update_spline(g, task.mean_prev, g.mean, task.flow, t, gap);
            }
        }
    });

    // (7) metrics
    stage(t, "metrics", [&] {
        rep.render = render(map_, cam_, frame.pose, static_cast<double>(t), settings_).output;
        const MaskImage* metric_mask = frame.motion_mask ? &*frame.motion_mask : (mask ? &*mask : nullptr);
        rep.metrics = frame_metrics(rep.render, frame, metric_mask);
        rep.metrics.n_static = map_.static_set.size();
        rep.metrics.n_dynamic = map_.dynamic_set.size();
        rep.metrics.n_reused = static_cast<std::size_t>(std::llround(reuse_rate(map_) * map_.dynamic_set.size()));
        rep.metrics.reuse_rate = reuse_rate(map_);
    });
    prev_ = slim_copy(frame);
    rep.metrics.ms_elapsed =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return rep;
}

FrameMetrics frame_metrics(const RenderOutput& render, const FrameBundle& frame, const MaskImage* mask) {
    FrameMetrics m;
    m.frame = frame.timestamp;
    m.psnr = psnr(render.rgb, frame.rgb);
    m.ssim = ssim(render.rgb, frame.rgb);
    if (mask) {
        MaskImage outside(mask->width(), mask->height(), 1, 0);
        for (std::size_t i = 0; i < outside.data().size(); ++i) outside.data()[i] = mask->data()[i] ? 0 : 1;
        if (count_set(*mask) > 0) m.dyna_psnr = psnr(render.rgb, frame.rgb, mask);
        if (count_set(outside) > 0) m.static_psnr = psnr(render.rgb, frame.rgb, &outside);
    } else {
        m.static_psnr = m.psnr;
    }
    return m;
}

RunSummary summarize(const std::vector<FrameMetrics>& per_frame) {
    RunSummary s;
    s.frames = per_frame.size();
    if (per_frame.empty()) return s;
    double dyna = 0.0, stat = 0.0;
    int dyna_n = 0, stat_n = 0;
    std::size_t reused = 0, dynamic = 0;
    for (const auto& m : per_frame) {
        s.psnr += m.psnr;
        s.ssim += m.ssim;
        if (m.dyna_psnr) {
            dyna += *m.dyna_psnr;
            ++dyna_n;
        }
        if (m.static_psnr) {
            stat += *m.static_psnr;
            ++stat_n;
        }
        reused += m.n_reused;
        dynamic += m.n_dynamic;
    }
    s.psnr /= static_cast<double>(per_frame.size());
    s.ssim /= static_cast<double>(per_frame.size());
    if (dyna_n > 0) s.dyna_psnr = dyna / dyna_n;
    if (stat_n > 0) s.static_psnr = stat / stat_n;
    s.final_n_static = per_frame.back().n_static;
    s.final_n_dynamic = per_frame.back().n_dynamic;
    s.reuse_rate = dynamic > 0 ? static_cast<double>(reused) / static_cast<double>(dynamic) : 0.0;
    return s;
}

RunResult run_sequence(const std::vector<FrameBundle>& frames, const CameraModel& cam,
                       const ManageConfig& config, const RunOptions& options) {
    Mapper mapper(cam, config);
    RunResult result;
    if (options.dump_dir) std::filesystem::create_directories(*options.dump_dir);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const FrameBundle& f = frames[i];
        DepthSampler sampler;
        if (options.depth_sampler && i > 0) sampler = options.depth_sampler(frames[i - 1].timestamp);
        FrameReport rep = mapper.process(f, sampler);
        if (!options.timing) rep.metrics.ms_elapsed.reset();
        for (auto& w : rep.warnings) result.warnings.push_back("frame " + std::to_string(f.timestamp) + ": " + w);
        if (options.dump_dir)
            write_ppm(*options.dump_dir / frame_file(f.timestamp, "render.ppm"), rep.render.rgb);
        if (options.on_frame) options.on_frame(rep);
        result.per_frame.push_back(rep.metrics);
    }
    result.map = mapper.map();
    result.summary = summarize(result.per_frame);
    return result;
}

nlohmann::ordered_json metrics_json(const RunResult& result) {
    using nlohmann::ordered_json;
    auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
    ordered_json frames = ordered_json::array();
    for (const auto& m : result.per_frame) {
        ordered_json j;
        j["frame"] = m.frame;
        j["psnr"] = m.psnr;
        j["ssim"] = m.ssim;
        j["dyna_psnr"] = opt(m.dyna_psnr);
        j["static_psnr"] = opt(m.static_psnr);
        j["n_static"] = m.n_static;
        j["n_dynamic"] = m.n_dynamic;
        j["reuse_rate"] = m.reuse_rate;
        j["ms_elapsed"] = opt(m.ms_elapsed);
        frames.push_back(j);
    }
    const RunSummary& s = result.summary;
    ordered_json summary;
    summary["frames"] = s.frames;
    summary["psnr"] = s.psnr;
    summary["ssim"] = s.ssim;
    summary["dyna_psnr"] = opt(s.dyna_psnr);
    summary["static_psnr"] = opt(s.static_psnr);
    summary["n_static"] = s.final_n_static;
    summary["n_dynamic"] = s.final_n_dynamic;
    summary["reuse_rate"] = s.reuse_rate;
    ordered_json out;
    out["per_frame"] = frames;
    out["summary"] = summary;
    return out;
}

}  // namespace dynagmap
