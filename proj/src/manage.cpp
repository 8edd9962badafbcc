#include "dynagmap/manage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "dynagmap/core.hpp"
#include "dynagmap/kdtree.hpp"
#include "dynagmap/motion.hpp"
#include "dynagmap/parallel.hpp"

namespace dynagmap {

namespace {

constexpr double kMinScale = 1e-4;
constexpr double kMaxScale = 0.5;

std::vector<Vec3> means_of(const std::vector<Gaussian>& set) {
    std::vector<Vec3> out;
    out.reserve(set.size());
    for (const auto& g : set) out.push_back(g.mean);
    return out;
}

/// Surface normal at pixel (u, v) from neighbouring depths, world frame,
/// facing the camera. Falls back to the reversed viewing ray.
Vec3 estimate_normal(const FrameBundle& frame, const CameraModel& cam, int u, int v) {
    const DepthImage& depth = frame.depth;
    const double d = depth.at(u, v);
    const Vec3 x = cam.backproject(u, v, d);
    auto neighbour = [&](int du, int dv, Vec3& out) {
        const int nu = u + du, nv = v + dv;
        if (!depth.contains(nu, nv)) return false;
        const double dn = depth.at(nu, nv);
        if (!(dn > 0.0) || std::abs(dn - d) > 0.05 * d) return false;
        out = cam.backproject(nu, nv, dn);
        return true;
    };
    auto tangent = [&](int du, int dv, Vec3& out) {
        Vec3 a, b;
        const bool fa = neighbour(du, dv, a), fb = neighbour(-du, -dv, b);
        if (fa && fb) out = a - b;
        else if (fa) out = a - x;
        else if (fb) out = x - b;
        else return false;
        return true;
    };
    Vec3 n_cam = -x.normalized();
    Vec3 tu, tv;
    if (tangent(1, 0, tu) && tangent(0, 1, tv)) {
        const Vec3 c = tu.cross(tv);
        if (c.norm() > 1e-12) {
            n_cam = c.normalized();
            if (n_cam.dot(x) > 0.0) n_cam = -n_cam;
        }
    }
    return frame.pose.rotation * n_cam;
}

Gaussian make_gaussian(std::uint64_t id, GaussianKind kind, const Vec3& mean, const Vec3& rgb,
                       const Vec3& normal, double scale, int sh_degree, std::int64_t t) {
    Gaussian g;
    g.id = id;
    g.kind = kind;
    g.mean = mean;
    // local axis 0 is the one flattened away, so it carries the normal
    g.rotation = Quat::FromTwoVectors(Vec3::UnitX(), normal).normalized();
    const double s = std::clamp(scale, kMinScale, kMaxScale);
    g.log_scale = Vec3(std::log(kMinScale), std::log(s), std::log(s));
    g.opacity_logit = logit(0.5);
    const int basis = sh_basis_count(sh_degree);
    g.sh.assign(3 * static_cast<std::size_t>(basis), 0.0);
    for (int c = 0; c < 3; ++c) g.sh[c * basis] = (rgb[c] - 0.5) / kShC0;
    g.birth_frame = t;
    g.last_observed_frame = t;
    return g;
}

std::size_t remove_if_id(std::vector<Gaussian>& set, const std::unordered_set<std::uint64_t>& ids) {
    const auto before = set.size();
    std::erase_if(set, [&](const Gaussian& g) { return ids.count(g.id) > 0; });
    return before - set.size();
}

}  // namespace

AssociationResult associate_dynamic(const GsFlowField& flow, const std::vector<Gaussian>& dyn_set,
                                    double lambda_d) {
    AssociationResult res;
    const std::size_t n = flow.size();
    res.d_min.assign(n, std::numeric_limits<double>::infinity());
    if (dyn_set.empty()) {
        res.new_points.resize(n);
        std::iota(res.new_points.begin(), res.new_points.end(), std::size_t{0});
        res.spawn_count = n;
        return res;
    }
    const KdTree tree(means_of(dyn_set));
    std::vector<std::size_t> nearest(n);
    parallel_for(n, [&](std::size_t i) {
        const Neighbor nb = tree.nearest(flow.transformed(i));
        nearest[i] = nb.index;
        res.d_min[i] = nb.distance;
    });
    double sum = 0.0;
    for (double d : res.d_min) sum += d;
    res.d_bar = n > 0 ? sum / static_cast<double>(n) : 0.0;
    const double thr = res.threshold(lambda_d);

    std::vector<std::size_t> claimant(dyn_set.size(), std::numeric_limits<std::size_t>::max());
    for (std::size_t i = 0; i < n; ++i) {
        if (!(res.d_min[i] <= thr)) {
            res.new_points.push_back(i);
            continue;
        }
        auto& c = claimant[nearest[i]];
        if (c == std::numeric_limits<std::size_t>::max() || res.d_min[i] < res.d_min[c]) c = i;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!(res.d_min[i] <= thr)) continue;
        const std::size_t gi = nearest[i];
        res.matches.push_back({i, dyn_set[gi].id, res.d_min[i], claimant[gi] == i});
    }
    res.reuse_count = static_cast<std::size_t>(
        std::count_if(res.matches.begin(), res.matches.end(), [](const Match& m) { return m.claims; }));
    res.spawn_count = res.new_points.size();
    return res;
}

std::vector<Gaussian> spawn_gaussians(GaussianMap& map, GaussianKind kind,
                                      const std::vector<Vec3>& points,
                                      const std::vector<std::pair<int, int>>& pixels,
                                      const FrameBundle& frame, const CameraModel& cam) {
    std::vector<Gaussian> out;
    if (points.empty()) return out;
    const KdTree tree(points);
    out.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto [u, v] = pixels[i];
        // nearest three others; the query point itself comes back first
        const auto nbs = tree.k_nearest(points[i], 4);
        std::vector<double> dists;
        for (const auto& nb : nbs)
            if (nb.index != i) dists.push_back(nb.distance);
        double scale;
        if (dists.empty()) {
            scale = frame.depth.at(u, v) / cam.fx;  // lone point: one pixel footprint
        } else {
            std::sort(dists.begin(), dists.end());
            scale = 0.5 * dists[dists.size() / 2];
        }
        scale = std::min(scale, map.config.scene_extent);
        const Vec3 rgb(frame.rgb.at(u, v, 0), frame.rgb.at(u, v, 1), frame.rgb.at(u, v, 2));
        out.push_back(make_gaussian(map.allocate_id(), kind, points[i], rgb,
                                    estimate_normal(frame, cam, u, v), scale,
                                    map.config.sh_degree, frame.timestamp));
    }
    return out;
}

ManagementOutcome apply_management(GaussianMap& map, const AssociationResult& assoc,
                                   const GsFlowField& flow, const FrameBundle& frame,
                                   const CameraModel& cam) {
    ManagementOutcome out;
    const std::int64_t t = frame.timestamp;
    std::unordered_map<std::uint64_t, std::size_t> index;
    for (std::size_t i = 0; i < map.dynamic_set.size(); ++i) index[map.dynamic_set[i].id] = i;

    std::vector<std::size_t> spawn_points = assoc.new_points;
    std::vector<std::uint8_t> touched(map.dynamic_set.size(), 0);
    std::unordered_set<std::uint64_t> vanished;
    for (const Match& m : assoc.matches) {
        const auto it = index.find(m.gaussian_id);
        if (it == index.end()) {
            // the Gaussian was pruned after association; its claimant starts fresh
            if (m.claims) spawn_points.push_back(m.point);
            continue;
        }
        if (!m.claims) continue;
        Gaussian& g = map.dynamic_set[it->second];
        out.splines.push_back({g.id, g.mean, flow.displacements[m.point], false});
        g.mean = flow.points_world_t[m.point];
        g.last_observed_frame = t;
        touched[it->second] = 1;
        ++out.reused;
    }

    // survivors nobody claimed follow their own trajectory
    for (std::size_t i = 0; i < map.dynamic_set.size(); ++i) {
        if (touched[i]) continue;
        Gaussian& g = map.dynamic_set[i];
        const Vec3 predicted = g.spline ? query_mean(*g.spline, static_cast<double>(t)) : g.mean;
        out.splines.push_back({g.id, g.mean, Vec3(g.mean - predicted), false});
        g.mean = predicted;
        ++out.coasting;
    }

    std::sort(spawn_points.begin(), spawn_points.end());
    std::vector<Vec3> pts;
    std::vector<std::pair<int, int>> pix;
    for (std::size_t p : spawn_points) {
        pts.push_back(flow.points_world_t[p]);
        pix.push_back(flow.pixel_coords[p]);
    }
    auto fresh = spawn_gaussians(map, GaussianKind::dynamic_kind, pts, pix, frame, cam);
    for (std::size_t k = 0; k < fresh.size(); ++k) {
        Gaussian& g = fresh[k];
        const Vec3& disp = flow.displacements[spawn_points[k]];
        g.spline = rest_spline(g.mean, disp, t);
        out.splines.push_back({g.id, Vec3(g.mean + disp), disp, t < 1});
        map.dynamic_set.push_back(std::move(g));
    }
    out.spawned = fresh.size();
    out.budget_deleted = enforce_budget(map);
    return out;
}

std::size_t enforce_budget(GaussianMap& map) {
    auto& set = map.dynamic_set;
    const auto budget = static_cast<std::size_t>(map.config.dyna_budget);
    if (set.size() <= budget) return 0;
    std::vector<std::size_t> order(set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (set[a].birth_frame != set[b].birth_frame) return set[a].birth_frame < set[b].birth_frame;
        return set[a].id < set[b].id;
    });
    std::unordered_set<std::uint64_t> doomed;
    for (std::size_t k = 0; k < set.size() - budget; ++k) doomed.insert(set[order[k]].id);
    return remove_if_id(set, doomed);
}

PruneReport prune_dynamic(GaussianMap& map, const GsFlowField& flow, double d_bar, double lambda_d,
                          std::int64_t t) {
    PruneReport rep;
    const double thr = lambda_d * d_bar;
    std::vector<Vec3> q;
    q.reserve(flow.size());
    for (std::size_t i = 0; i < flow.size(); ++i) q.push_back(flow.transformed(i));
    const KdTree tree(std::move(q));

    const std::size_t longevity = static_cast<std::size_t>(map.config.dyna_longevity_W);
    std::vector<std::uint8_t> observed(map.dynamic_set.size(), 0);
    parallel_for(map.dynamic_set.size(), [&](std::size_t i) {
        observed[i] = !tree.empty() && tree.nearest(map.dynamic_set[i].mean).distance <= thr;
    });
    std::vector<Gaussian> kept;
    kept.reserve(map.dynamic_set.size());
    for (std::size_t i = 0; i < map.dynamic_set.size(); ++i) {
        Gaussian& g = map.dynamic_set[i];
        if (!observed[i]) {
            ++rep.unobserved;
        } else if (t - g.birth_frame > static_cast<std::int64_t>(longevity)) {
            ++rep.expired;
        } else {
            kept.push_back(std::move(g));
        }
    }
    map.dynamic_set = std::move(kept);
    rep.over_budget = enforce_budget(map);
    return rep;
}

StaticReport manage_static(GaussianMap& map, const FrameBundle& frame,
                           const RenderOutput& render_out, const CameraModel& cam,
                           const MaskImage* mask) {
    StaticReport rep;
    const std::int64_t t = frame.timestamp;
    if (render_out.visible.size() >= map.static_set.size())
        for (std::size_t i = 0; i < map.static_set.size(); ++i)
            if (render_out.visible[i]) map.static_set[i].last_observed_frame = t;
    const auto before = map.static_set.size();
    std::erase_if(map.static_set, [&](const Gaussian& g) {
        return t - g.last_observed_frame >= map.config.static_unseen_W;
    });
    rep.deleted = before - map.static_set.size();

    std::vector<Vec3> pts;
    std::vector<std::pair<int, int>> pix;
    for (int v = 0; v < cam.height; v += kStaticStride)
        for (int u = 0; u < cam.width; u += kStaticStride) {
            if (mask && mask->at(u, v)) continue;
            const double d = frame.depth.at(u, v);
            if (!(d > 0.0)) continue;
            const double rd = render_out.depth.at(u, v);
            const bool uncovered = render_out.alpha.at(u, v) < 0.5;
            const bool inconsistent = rd > 0.0 && std::abs(rd - d) > 0.1;
            if (!uncovered && !inconsistent) continue;
            pts.push_back(frame.pose.to_world(cam.backproject(u, v, d)));
            pix.emplace_back(u, v);
        }
    auto fresh = spawn_gaussians(map, GaussianKind::static_kind, pts, pix, frame, cam);
    rep.spawned = fresh.size();
    for (auto& g : fresh) map.static_set.push_back(std::move(g));
    return rep;
}

double reuse_rate(const GaussianMap& map) {
    if (map.dynamic_set.empty()) return 0.0;
    const auto reused = std::count_if(map.dynamic_set.begin(), map.dynamic_set.end(),
                                      [&](const Gaussian& g) { return g.birth_frame < map.frame_index; });
    return static_cast<double>(reused) / static_cast<double>(map.dynamic_set.size());
}

}  // namespace dynagmap
