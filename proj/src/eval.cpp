#include "dynagmap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dynagmap/errors.hpp"
#include "dynagmap/pipeline.hpp"
#include "dynagmap/render.hpp"

namespace dynagmap {

double psnr(const RgbImage& a, const RgbImage& b, const MaskImage* mask) {
    if (!a.same_shape(b) || a.channels() != b.channels()) throw ShapeError("psnr: image shapes differ");
    if (mask && !mask->same_shape(a)) throw ShapeError("psnr: mask shape differs");
    double sum = 0.0;
    std::size_t n = 0;
    const int ch = a.channels();
    for (int v = 0; v < a.height(); ++v)
        for (int u = 0; u < a.width(); ++u) {
            if (mask && !mask->at(u, v)) continue;
            for (int c = 0; c < ch; ++c) {
                const double d = a.at(u, v, c) - b.at(u, v, c);
                sum += d * d;
            }
            n += ch;
        }
    if (n == 0) throw UndefinedMetric("psnr: empty pixel set");
    const double mse = sum / static_cast<double>(n);
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const RgbImage& a, const RgbImage& b) {
    if (!a.same_shape(b) || a.channels() != b.channels()) throw ShapeError("ssim: image shapes differ");
    constexpr int kWin = 11, kHalf = 5;
    constexpr double kSigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const int w = a.width(), h = a.height();
    if (w < kWin || h < kWin) throw UndefinedMetric("ssim: image smaller than the 11x11 window");

    auto gray = [](const RgbImage& img) {
        std::vector<double> g(img.pixel_count());
        const int ch = img.channels();
        for (std::size_t i = 0; i < g.size(); ++i) {
            double s = 0.0;
            for (int c = 0; c < ch; ++c) s += img.data()[i * ch + c];
            g[i] = s / ch;
        }
        return g;
    };
    const auto x = gray(a), y = gray(b);

    double kernel[kWin];
    double ksum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        kernel[i] = std::exp(-0.5 * (i - kHalf) * (i - kHalf) / (kSigma * kSigma));
        ksum += kernel[i];
    }
    for (double& k : kernel) k /= ksum;

    // separable filtering, valid region only
    auto filter = [&](const std::vector<double>& img) {
        const int ow = w - kWin + 1, oh = h - kWin + 1;
        std::vector<double> tmp(static_cast<std::size_t>(ow) * h), out(static_cast<std::size_t>(ow) * oh);
        for (int v = 0; v < h; ++v)
            for (int u = 0; u < ow; ++u) {
                double s = 0.0;
                for (int k = 0; k < kWin; ++k) s += kernel[k] * img[static_cast<std::size_t>(v) * w + u + k];
                tmp[static_cast<std::size_t>(v) * ow + u] = s;
            }
        for (int v = 0; v < oh; ++v)
            for (int u = 0; u < ow; ++u) {
                double s = 0.0;
                for (int k = 0; k < kWin; ++k) s += kernel[k] * tmp[static_cast<std::size_t>(v + k) * ow + u];
                out[static_cast<std::size_t>(v) * ow + u] = s;
            }
        return out;
    };
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mx = filter(x), my = filter(y), sxx = filter(xx), syy = filter(yy), sxy = filter(xy);
    double total = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cov = sxy[i] - mx[i] * my[i];
        total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    return total / static_cast<double>(mx.size());
}

FlowProvider composed_flow_provider(const std::vector<FrameBundle>& frames) {
    std::map<std::int64_t, const FrameBundle*> by_time;
    for (const auto& f : frames) by_time[f.timestamp] = &f;
    return [by_time](std::int64_t t, std::int64_t t_ref) {
        const auto it = by_time.find(t);
        if (it == by_time.end()) throw InvalidParameter("no frame " + std::to_string(t));
        if (t == t_ref) return FlowImage(it->second->width(), it->second->height(), 2, 0.0);
        std::vector<const FlowImage*> steps;
        for (std::int64_t s = t; s > t_ref; --s) {
            const auto fs = by_time.find(s);
            if (fs == by_time.end() || !fs->second->flow_back)
                throw InvalidParameter("missing backward flow for frame " + std::to_string(s));
            steps.push_back(&*fs->second->flow_back);
        }
        return compose_flows(steps);
    };
}

namespace {

TrackCell make_cell(int interval, int target, const char* kind, int horizon) {
    TrackCell c;
    c.interval = interval;
    c.target = target;
    c.kind = kind;
    c.horizon = horizon;
    return c;
}

struct CellAccumulator {
    TrackCell cell;
    double psnr_sum = 0.0;
    double dyna_sum = 0.0;
    int dyna_n = 0;

    void add(const RgbImage& render, const FrameBundle& gt) {
        psnr_sum += psnr(render, gt.rgb);
        if (gt.motion_mask && count_set(*gt.motion_mask) > 0) {
            dyna_sum += psnr(render, gt.rgb, &*gt.motion_mask);
            ++dyna_n;
        }
        ++cell.evaluated;
    }
    TrackCell finish() {
        if (cell.evaluated > 0) cell.psnr = psnr_sum / cell.evaluated;
        if (dyna_n > 0) cell.dyna_psnr = dyna_sum / dyna_n;
        cell.flagged = cell.evaluated == 0;
        return cell;
    }
};

}  // namespace

TrackTable run_track_predict_protocol(const std::vector<FrameBundle>& frames,
                                      const CameraModel& cam, int interval,
                                      const std::vector<int>& targets, const ManageConfig& config,
                                      const FlowProvider& flow,
                                      const std::function<DepthSampler(std::int64_t)>& depth_sampler) {
    if (interval < 1) throw InvalidParameter("interval must be >= 1");
    for (int o : targets)
        if (o < 0) throw InvalidParameter("target offsets must be >= 0");
    if (frames.empty()) throw InvalidParameter("empty sequence");

    std::vector<CellAccumulator> acc;
    for (int o : targets) {
        if (o == 0) {
            acc.push_back({make_cell(interval, 0, "mapping", 0)});
            continue;
        }
        if (o < interval) acc.push_back({make_cell(interval, o, "interpolate", std::min(o, interval - o))});
        acc.push_back({make_cell(interval, o, "extrapolate", o)});
    }

    Mapper mapper(cam, config);
    const RenderSettings settings = mapper.render_settings();
    double map_psnr = 0.0, map_dyna = 0.0;
    int map_n = 0, map_dyna_n = 0;
    const auto n = static_cast<std::int64_t>(frames.size());
    for (std::int64_t i = 0; i < n; i += interval) {
        FrameBundle f = frames[i];
        const std::int64_t t = f.timestamp;
        f.flow_back = i == 0 ? FlowImage(cam.width, cam.height, 2, 0.0) : flow(t, frames[i - interval].timestamp);
        const DepthSampler sampler =
            (depth_sampler && i > 0) ? depth_sampler(frames[i - interval].timestamp) : DepthSampler{};
        const FrameReport rep = mapper.process(f, sampler);
        map_psnr += rep.metrics.psnr;
        ++map_n;
        if (rep.metrics.dyna_psnr) {
            map_dyna += *rep.metrics.dyna_psnr;
            ++map_dyna_n;
        }

        for (auto& a : acc) {
            std::int64_t j;
            if (a.cell.kind == "mapping") j = i;
            else if (a.cell.kind == "interpolate") {
                if (i < interval) continue;  // no previous consumed frame yet
                j = i - interval + a.cell.target;
            } else {
                j = i + a.cell.target;
            }
            if (j < 0 || j >= n) {
                ++a.cell.skipped;
                continue;
            }
            const FrameBundle& gt = frames[j];
            const RgbImage img =
                render_rgb(mapper.map(), cam, gt.pose, static_cast<double>(gt.timestamp), settings).rgb;
            a.add(img, gt);
        }
    }

    TrackTable table;
    table.interval = interval;
    for (auto& a : acc) table.cells.push_back(a.finish());
    if (map_n > 0) table.mapping_psnr = map_psnr / map_n;
    if (map_dyna_n > 0) table.mapping_dyna_psnr = map_dyna / map_dyna_n;
    return table;
}

nlohmann::ordered_json track_table_json(const TrackTable& table) {
    using nlohmann::ordered_json;
    auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
    ordered_json cells = ordered_json::array();
    for (const auto& c : table.cells) {
        ordered_json j;
        j["interval"] = c.interval;
        j["target"] = c.target;
        j["kind"] = c.kind;
        j["horizon"] = c.horizon;
        j["evaluated"] = c.evaluated;
        j["skipped"] = c.skipped;
        j["psnr"] = opt(c.psnr);
        j["dyna_psnr"] = opt(c.dyna_psnr);
        j["flagged"] = c.flagged;
        cells.push_back(j);
    }
    ordered_json out;
    out["interval"] = table.interval;
    out["mapping"] = {{"psnr", opt(table.mapping_psnr)}, {"dyna_psnr", opt(table.mapping_dyna_psnr)}};
    out["cells"] = cells;
    return out;
}

}  // namespace dynagmap
