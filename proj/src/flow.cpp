#include "dynagmap/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dynagmap/errors.hpp"

namespace dynagmap {

std::vector<PixelPoint> backproject_points(const DepthImage& depth, const CameraModel& cam,
                                           const Pose& pose, const MaskImage* mask) {
    if (!depth.same_shape(cam.width, cam.height))
        throw ShapeError("backproject_points: depth does not match the camera");
    if (mask && !mask->same_shape(depth)) throw ShapeError("backproject_points: mask shape");
    std::vector<PixelPoint> out;
    for (int v = 0; v < depth.height(); ++v)
        for (int u = 0; u < depth.width(); ++u) {
            if (mask && !mask->at(u, v)) continue;
            const double d = depth.at(u, v);
            if (!(d > 0.0)) continue;
            out.push_back({u, v, pose.to_world(cam.backproject(u, v, d))});
        }
    return out;
}

FlowImage compute_ego_flow(const DepthImage& depth_t, const CameraModel& cam, const Pose& pose_t,
                           const Pose& pose_prev, MaskImage* valid) {
    if (!depth_t.same_shape(cam.width, cam.height))
        throw ShapeError("compute_ego_flow: depth does not match the camera");
    FlowImage flow(cam.width, cam.height, 2, 0.0);
    if (valid) *valid = MaskImage(cam.width, cam.height, 1, 0);
    const Pose rel = relative_pose(pose_prev, pose_t);
    for (int v = 0; v < cam.height; ++v)
        for (int u = 0; u < cam.width; ++u) {
            const double d = depth_t.at(u, v);
            if (!(d > 0.0)) continue;
            const Vec3 p = rel.to_world(cam.backproject(u, v, d));
            if (!(p.z() > 0.0)) continue;
            const Vec2 q = cam.project(p);
            flow.at(u, v, 0) = q.x() - u;
            flow.at(u, v, 1) = q.y() - v;
            if (valid) valid->at(u, v) = 1;
        }
    return flow;
}

namespace {

MaskImage morph(const MaskImage& in, bool dilate) {
    MaskImage out(in.width(), in.height(), 1, 0);
    for (int v = 0; v < in.height(); ++v)
        for (int u = 0; u < in.width(); ++u) {
            bool hit = !dilate;
            for (int dv = -1; dv <= 1; ++dv)
                for (int du = -1; du <= 1; ++du) {
                    if (!in.contains(u + du, v + dv)) continue;  // border is neutral
                    const bool set = in.at(u + du, v + dv) != 0;
                    hit = dilate ? (hit || set) : (hit && set);
                }
            out.at(u, v) = hit ? 1 : 0;
        }
    return out;
}

void drop_small_components(MaskImage& mask, int min_area) {
    const int w = mask.width(), h = mask.height();
    std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
    std::vector<int> stack, members;
    for (int start = 0; start < w * h; ++start) {
        if (!mask.data()[start] || label[start] >= 0) continue;
        members.clear();
        stack.assign(1, start);
        label[start] = start;
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            members.push_back(p);
            const int u = p % w, v = p / w;
            const int nb[4][2] = {{u - 1, v}, {u + 1, v}, {u, v - 1}, {u, v + 1}};
            for (const auto& n : nb) {
                if (!mask.contains(n[0], n[1])) continue;
                const int q = n[1] * w + n[0];
                if (mask.data()[q] && label[q] < 0) {
                    label[q] = start;
                    stack.push_back(q);
                }
            }
        }
        if (static_cast<int>(members.size()) < min_area)
            for (int p : members) mask.data()[p] = 0;
    }
}

}  // namespace

MaskImage segment_motion(const FlowImage& flow_back, const DepthImage& depth_t,
                         const CameraModel& cam, const Pose& pose_t, const Pose& pose_prev,
                         double motion_threshold_px, int min_area) {
    if (!flow_back.same_shape(cam.width, cam.height) || flow_back.channels() != 2)
        throw ShapeError("segment_motion: flow does not match the camera");
    MaskImage valid;
    const FlowImage ego = compute_ego_flow(depth_t, cam, pose_t, pose_prev, &valid);
    MaskImage mask(cam.width, cam.height, 1, 0);
    for (int v = 0; v < cam.height; ++v)
        for (int u = 0; u < cam.width; ++u) {
            if (!valid.at(u, v)) continue;
            const double rx = flow_back.at(u, v, 0) - ego.at(u, v, 0);
            const double ry = flow_back.at(u, v, 1) - ego.at(u, v, 1);
            mask.at(u, v) = std::hypot(rx, ry) > motion_threshold_px ? 1 : 0;
        }
    mask = morph(morph(mask, false), true);  // open
    mask = morph(morph(mask, true), false);  // close
    // closing may reach pixels without depth; keep them out
    for (int v = 0; v < cam.height; ++v)
        for (int u = 0; u < cam.width; ++u)
            if (!valid.at(u, v)) mask.at(u, v) = 0;
    drop_small_components(mask, min_area);
    return mask;
}

std::optional<double> sample_depth_bilinear(const DepthImage& depth, double u, double v,
                                            double max_depth_ratio) {
    if (!(u >= 0.0 && v >= 0.0 && u <= depth.width() - 1 && v <= depth.height() - 1))
        return std::nullopt;
    const int u0 = std::min(static_cast<int>(u), depth.width() - 2 < 0 ? 0 : depth.width() - 2);
    const int v0 = std::min(static_cast<int>(v), depth.height() - 2 < 0 ? 0 : depth.height() - 2);
    const int u1 = std::min(u0 + 1, depth.width() - 1);
    const int v1 = std::min(v0 + 1, depth.height() - 1);
    const double a = u - u0, b = v - v0;
    const double d[4] = {depth.at(u0, v0), depth.at(u1, v0), depth.at(u0, v1), depth.at(u1, v1)};
    const double wts[4] = {(1 - a) * (1 - b), a * (1 - b), (1 - a) * b, a * b};
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0, inv = 0.0;
    for (int i = 0; i < 4; ++i) {
        if (!(d[i] > 0.0)) return std::nullopt;
        lo = std::min(lo, d[i]);
        hi = std::max(hi, d[i]);
        inv += wts[i] / d[i];
    }
    if (hi > lo * max_depth_ratio) return std::nullopt;
    return 1.0 / inv;
}

GsFlowField lift_gs_flow(const FrameBundle& frame_t, const FrameBundle& frame_prev,
                         const CameraModel& cam, const MaskImage& mask, FlowMode mode,
                         const DepthSampler& prev_depth) {
    if (!frame_t.flow_back) throw InvalidParameter("lift_gs_flow: frame has no backward flow");
    const FlowImage& flow = *frame_t.flow_back;
    if (!flow.same_shape(cam.width, cam.height) || flow.channels() != 2 ||
        !mask.same_shape(cam.width, cam.height) || !frame_t.depth.same_shape(cam.width, cam.height))
        throw ShapeError("lift_gs_flow: image shapes do not match the camera");

    GsFlowField field;
    field.frame_index = frame_t.timestamp;
    const Mat3 rot_t = frame_t.pose.rotation_matrix();
    const Pose rel = relative_pose(frame_prev.pose, frame_t.pose);
    DepthSampler sampler = prev_depth;
    if (!sampler) {
        if (!frame_prev.depth.same_shape(cam.width, cam.height))
            throw ShapeError("lift_gs_flow: previous depth does not match the camera");
        sampler = [&](double u, double v) { return sample_depth_bilinear(frame_prev.depth, u, v); };
    }

    for (int v = 0; v < cam.height; ++v)
        for (int u = 0; u < cam.width; ++u) {
            if (!mask.at(u, v)) continue;
            const double d = frame_t.depth.at(u, v);
            if (!(d > 0.0)) continue;
            const double fu = flow.at(u, v, 0), fv = flow.at(u, v, 1);
            if (!std::isfinite(fu) || !std::isfinite(fv)) continue;
            const Vec3 x_cam = cam.backproject(u, v, d);
            const Vec3 x_world = frame_t.pose.to_world(x_cam);
            Vec3 disp;
            if (mode == FlowMode::paper_literal) {
                const Vec3 lifted(d * fu / cam.fx, d * fv / cam.fy, 0.0);
                const Vec3 ego = rel.to_world(x_cam) - x_cam;
                disp = rot_t * (lifted - ego);
            } else {
                const double up = u + fu, vp = v + fv;
                if (!(up >= 0.0 && vp >= 0.0 && up <= cam.width - 1 && vp <= cam.height - 1))
                    continue;
                const auto dp = sampler(up, vp);
                if (!dp || !(*dp > 0.0)) continue;
                disp = frame_prev.pose.to_world(cam.backproject(up, vp, *dp)) - x_world;
            }
            if (!disp.allFinite()) continue;
            field.points_world_t.push_back(x_world);
            field.displacements.push_back(disp);
            field.pixel_coords.emplace_back(u, v);
        }
    if (field.empty()) throw EmptyFlow("lift_gs_flow: every masked pixel was rejected");
    return field;
}

FlowImage compose_flows(const std::vector<const FlowImage*>& steps) {
    if (steps.empty()) throw InvalidParameter("compose_flows: no flow to compose");
    const int w = steps[0]->width(), h = steps[0]->height();
    for (const FlowImage* f : steps)
        if (!f->same_shape(w, h) || f->channels() != 2) throw ShapeError("compose_flows: shape mismatch");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    FlowImage out(w, h, 2, 0.0);
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
            double x = u, y = v;
            for (const FlowImage* f : steps) {
                if (!(x >= 0.0 && y >= 0.0 && x <= w - 1 && y <= h - 1)) {
                    x = y = nan;
                    break;
                }
                const int x0 = std::min(static_cast<int>(x), std::max(w - 2, 0));
                const int y0 = std::min(static_cast<int>(y), std::max(h - 2, 0));
                const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
                const double a = x - x0, b = y - y0;
                double d[2];
                for (int c = 0; c < 2; ++c)
                    d[c] = (1 - a) * (1 - b) * f->at(x0, y0, c) + a * (1 - b) * f->at(x1, y0, c) +
                           (1 - a) * b * f->at(x0, y1, c) + a * b * f->at(x1, y1, c);
                x += d[0];
                y += d[1];
            }
            out.at(u, v, 0) = x - u;
            out.at(u, v, 1) = y - v;
        }
    return out;
}

}  // namespace dynagmap
