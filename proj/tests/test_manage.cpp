#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "dynagmap/core.hpp"
#include "dynagmap/kdtree.hpp"
#include "dynagmap/manage.hpp"
#include "dynagmap/motion.hpp"
#include "support.hpp"

using namespace dynagmap;
using testing::uniform;

namespace {

GsFlowField make_flow(const std::vector<Vec3>& pts, const std::vector<Vec3>& disp = {}) {
    GsFlowField f;
    f.points_world_t = pts;
    f.displacements = disp.empty() ? std::vector<Vec3>(pts.size(), Vec3::Zero()) : disp;
    for (std::size_t i = 0; i < pts.size(); ++i) f.pixel_coords.emplace_back(static_cast<int>(i % 16), static_cast<int>(i / 16));
    return f;
}

Gaussian dyn(std::uint64_t id, const Vec3& mean, std::int64_t birth = 0) {
    Gaussian g;
    g.id = id;
    g.kind = GaussianKind::dynamic_kind;
    g.mean = mean;
    g.sh.assign(12, 0.0);
    g.birth_frame = birth;
    g.spline = rest_spline(mean, Vec3::Zero(), std::max<std::int64_t>(birth, 1));
    return g;
}

/// 16 x 16 frame of a fronto-parallel plane at 2 m.
FrameBundle plane_frame(std::int64_t t, const Vec3& rgb = Vec3(0.2, 0.4, 0.6)) {
    FrameBundle f;
    f.rgb = RgbImage(16, 16, 3);
    for (int v = 0; v < 16; ++v)
        for (int u = 0; u < 16; ++u)
            for (int c = 0; c < 3; ++c) f.rgb.at(u, v, c) = rgb[c];
    f.depth = DepthImage(16, 16, 1, 2.0);
    f.timestamp = t;
    return f;
}

const CameraModel kCam{20, 20, 8, 8, 16, 16};

std::vector<Vec3> random_cloud(std::mt19937_64& rng, std::size_t n, double extent) {
    std::vector<Vec3> out(n);
    for (auto& p : out) p = Vec3(uniform(rng, -extent, extent), uniform(rng, -extent, extent), uniform(rng, -extent, extent));
    return out;
}

}  // namespace

TEST_CASE("association distances and threshold by hand") {
    const GsFlowField f = make_flow({Vec3(0, 0, 0), Vec3(1, 0, 0)});
    const std::vector<Gaussian> set{dyn(1, Vec3(0, 0, 0.1)), dyn(2, Vec3(2, 0, 0))};
    auto a = associate_dynamic(f, set, 1.0);
    CHECK(a.d_min[0] == doctest::Approx(0.1));
    CHECK(a.d_min[1] == doctest::Approx(1.0));
    CHECK(a.d_bar == doctest::Approx(0.55));
    REQUIRE(a.matches.size() == 1);
    CHECK(a.matches[0].point == 0);
    CHECK(a.matches[0].gaussian_id == 1);
    CHECK(a.matches[0].claims);
    CHECK(a.new_points == std::vector<std::size_t>{1});
    CHECK(a.reuse_count == 1);
    CHECK(a.spawn_count == 1);

    a = associate_dynamic(f, set, 0.0);
    CHECK(a.matches.empty());
    CHECK(a.new_points.size() == 2);
    CHECK(a.reuse_count == 0);
}

TEST_CASE("association uses the transformed points") {
    const GsFlowField f = make_flow({Vec3(1, 0, 0)}, {Vec3(-1, 0, 0)});
    const auto a = associate_dynamic(f, {dyn(7, Vec3::Zero())}, 0.5);
    CHECK(a.d_min[0] == 0.0);
    CHECK(a.d_bar == 0.0);
    REQUIRE(a.matches.size() == 1);  // exact coincidence passes a zero threshold
    CHECK(a.matches[0].gaussian_id == 7);
}

TEST_CASE("empty dynamic set spawns everything") {
    std::mt19937_64 rng(1);
    const GsFlowField f = make_flow(random_cloud(rng, 100, 1.0));
    const auto a = associate_dynamic(f, {}, 0.05);
    CHECK(a.new_points.size() == 100);
    CHECK(a.d_bar == 0.0);
    CHECK(a.matches.empty());

    GaussianMap map;
    const FrameBundle frame = plane_frame(3);
    const auto out = apply_management(map, a, f, frame, kCam);
    CHECK(out.spawned == 100);
    CHECK(out.reused == 0);
    CHECK(map.dynamic_set.size() == 100);
}

TEST_CASE("association equals brute force and partitions the points") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % 40, m = 1 + rng() % 40;
        const double lambda = std::array<double, 5>{0.0, 0.01, 0.05, 0.5, 2.0}[trial % 5];
        const auto pts = random_cloud(rng, n, 1.0);
        auto disp = random_cloud(rng, n, 0.05);
        std::vector<Gaussian> set;
        for (std::size_t k = 0; k < m; ++k) set.push_back(dyn(100 + k, random_cloud(rng, 1, 1.0)[0]));
        const GsFlowField f = make_flow(pts, disp);
        const auto a = associate_dynamic(f, set, lambda);

        std::vector<Vec3> means;
        for (const auto& g : set) means.push_back(g.mean);
        double sum = 0;
        std::vector<Neighbor> nn(n);
        for (std::size_t i = 0; i < n; ++i) {
            nn[i] = brute_force_nearest(means, f.transformed(i));
            sum += nn[i].distance;
            CHECK(a.d_min[i] == nn[i].distance);
        }
        CHECK(a.d_bar == doctest::Approx(sum / n).epsilon(1e-14));
        const double thr = lambda * a.d_bar;

        std::set<std::size_t> seen;
        std::map<std::uint64_t, int> claims;
        for (const auto& mt : a.matches) {
            CHECK(seen.insert(mt.point).second);
            CHECK(mt.distance <= thr);
            CHECK(mt.gaussian_id == set[nn[mt.point].index].id);
            if (mt.claims) ++claims[mt.gaussian_id];
        }
        for (std::size_t p : a.new_points) {
            CHECK(seen.insert(p).second);
            CHECK(a.d_min[p] > thr);
        }
        CHECK(seen.size() == n);
        CHECK(a.matches.size() + a.new_points.size() == n);
        // one claimant per matched Gaussian, and it is the closest point
        for (const auto& [id, c] : claims) CHECK(c == 1);
        for (const auto& mt : a.matches) {
            if (!mt.claims) continue;
            for (const auto& other : a.matches)
                if (other.gaussian_id == mt.gaussian_id)
                    CHECK((other.distance > mt.distance || (other.distance == mt.distance && other.point >= mt.point)));
        }
        CHECK(a.reuse_count == claims.size());
    }
}

TEST_CASE("reuse at zero distance keeps the mean") {
    GaussianMap map;
    map.dynamic_set.push_back(dyn(map.allocate_id(), Vec3(0.1, 0.2, 2.0)));
    const GsFlowField f = make_flow({Vec3(0.1, 0.2, 2.0)});
    const auto a = associate_dynamic(f, map.dynamic_set, 0.05);
    const auto out = apply_management(map, a, f, plane_frame(1), kCam);
    CHECK(out.reused == 1);
    CHECK(out.spawned == 0);
    REQUIRE(map.dynamic_set.size() == 1);
    CHECK(map.dynamic_set[0].mean == Vec3(0.1, 0.2, 2.0));
    CHECK(map.dynamic_set[0].last_observed_frame == 1);
    REQUIRE(out.splines.size() == 1);
    CHECK(out.splines[0].id == map.dynamic_set[0].id);
}

TEST_CASE("reuse moves the Gaussian to the untransformed point and records its flow") {
    GaussianMap map;
    map.dynamic_set.push_back(dyn(map.allocate_id(), Vec3(0, 0, 2)));
    map.dynamic_set.push_back(dyn(map.allocate_id(), Vec3(5, 0, 2)));
    const GsFlowField f = make_flow({Vec3(0.1, 0, 2), Vec3(3, 0, 2)}, {Vec3(-0.1, 0, 0), Vec3::Zero()});
    const auto a = associate_dynamic(f, map.dynamic_set, 1.0);
    const auto out = apply_management(map, a, f, plane_frame(2), kCam);
    CHECK(out.reused == 1);
    CHECK(out.spawned == 1);
    CHECK(out.coasting == 1);
    CHECK(map.dynamic_set[0].mean == Vec3(0.1, 0, 2));
    const auto it = std::find_if(out.splines.begin(), out.splines.end(), [](const SplineTask& s) { return s.id == 1; });
    REQUIRE(it != out.splines.end());
    CHECK(it->flow == Vec3(-0.1, 0, 0));
    CHECK(it->mean_prev == Vec3(0, 0, 2));
}

TEST_CASE("spawned Gaussian decodes the pixel colour") {
    GaussianMap map;
    map.config.sh_degree = 1;
    FrameBundle frame = plane_frame(4, Vec3(1, 0, 0));
    GsFlowField f = make_flow({Vec3(1, 2, 3)});
    f.pixel_coords[0] = {5, 6};
    const auto a = associate_dynamic(f, {}, 0.05);
    apply_management(map, a, f, frame, kCam);
    REQUIRE(map.dynamic_set.size() == 1);
    const Gaussian& g = map.dynamic_set[0];
    CHECK(g.mean == Vec3(1, 2, 3));
    CHECK(g.birth_frame == 4);
    CHECK(g.sh.size() == 12);
    CHECK(sigmoid(g.opacity_logit) == doctest::Approx(0.5));
    CHECK(std::abs(g.rotation.norm() - 1.0) < 1e-12);
    const Vec3 rgb = eval_sh(g.sh, Vec3(0.3, -0.1, 0.9).normalized(), 1);
    CHECK((rgb - Vec3(1, 0, 0)).norm() < 1e-6);
    REQUIRE(g.spline);
    CHECK(g.spline->m_plus == g.mean);
}

TEST_CASE("spawn scales come from the batch spacing") {
    GaussianMap map;
    FrameBundle frame = plane_frame(1);
    std::vector<Vec3> pts;
    std::vector<std::pair<int, int>> pix;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            pts.push_back(Vec3(0.02 * i, 0.02 * j, 2.0));
            pix.emplace_back(i, j);
        }
    const auto fresh = spawn_gaussians(map, GaussianKind::static_kind, pts, pix, frame, kCam);
    REQUIRE(fresh.size() == 25);
    for (const auto& g : fresh) {
        const ActivatedScale s = activate_scale(g.log_scale);
        // the two in-plane axes are half the 0.02 m spacing
        int wide = 0;
        for (int k = 0; k < 3; ++k) wide += std::abs(s.scale[k] - 0.01) < 1e-12;
        CHECK(wide == 2);
        for (int k = 0; k < 3; ++k) CHECK(g.log_scale[k] >= std::log(1e-4) - 1e-12);
    }
    // a lone far point is clamped
    const auto lone = spawn_gaussians(map, GaussianKind::static_kind, {Vec3(0, 0, 2), Vec3(10, 0, 2)},
                                      {{1, 1}, {2, 2}}, frame, kCam);
    CHECK(std::exp(lone[0].log_scale.maxCoeff()) == doctest::Approx(0.5));
}

TEST_CASE("observability pruning removes unobserved Gaussians") {
    GaussianMap map;
    map.dynamic_set.push_back(dyn(1, Vec3(5, 5, 5)));
    map.dynamic_set.push_back(dyn(2, Vec3(0.05, 0, 0)));
    const GsFlowField f = make_flow({Vec3(0, 0, 0), Vec3(0.1, 0, 0)});
    const auto rep = prune_dynamic(map, f, 1.0, 0.1, 1);
    CHECK(rep.unobserved == 1);
    REQUIRE(map.dynamic_set.size() == 1);
    CHECK(map.dynamic_set[0].id == 2);
    // empty flow: nothing is observed
    const auto rep2 = prune_dynamic(map, GsFlowField{}, 1.0, 0.1, 1);
    CHECK(rep2.unobserved == 1);
    CHECK(map.dynamic_set.empty());
}

TEST_CASE("longevity pruning removes old Gaussians regardless of observation") {
    GaussianMap map;
    map.config.dyna_longevity_W = 10;
    const std::int64_t t = 30;
    map.dynamic_set.push_back(dyn(1, Vec3::Zero(), t - 11));
    map.dynamic_set.push_back(dyn(2, Vec3::Zero(), t - 10));
    const auto rep = prune_dynamic(map, make_flow({Vec3::Zero()}), 0.0, 0.05, t);
    CHECK(rep.expired == 1);
    REQUIRE(map.dynamic_set.size() == 1);
    CHECK(map.dynamic_set[0].id == 2);
}

TEST_CASE("budget deletes the oldest first") {
    GaussianMap map;
    map.config.dyna_budget = 50000;
    std::vector<Vec3> pts;
    for (int i = 0; i < 60000; ++i) {
        const Vec3 p(0.001 * (i % 300), 0.001 * (i / 300), 2.0);
        // births interleaved so that insertion order is not age order
        map.dynamic_set.push_back(dyn(static_cast<std::uint64_t>(i + 1), p, (i * 7919) % 60000 / 6000));
        pts.push_back(p);
    }
    map.config.dyna_longevity_W = 100;
    const auto rep = prune_dynamic(map, make_flow(pts), 1.0, 0.05, 10);
    CHECK(rep.unobserved == 0);
    CHECK(rep.over_budget == 10000);
    CHECK(map.dynamic_set.size() == 50000);
    std::int64_t min_kept = 1000;
    for (const auto& g : map.dynamic_set) min_kept = std::min(min_kept, g.birth_frame);
    CHECK(min_kept == 1);  // births 0 hold exactly 10k Gaussians
}

TEST_CASE("observability postcondition on random instances") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        GaussianMap map;
        map.config.dyna_longevity_W = 1000;
        for (const Vec3& p : random_cloud(rng, 50, 1.0)) map.dynamic_set.push_back(dyn(map.allocate_id(), p));
        const GsFlowField f = make_flow(random_cloud(rng, 40, 1.0), random_cloud(rng, 40, 0.1));
        const auto a = associate_dynamic(f, map.dynamic_set, 0.5);
        prune_dynamic(map, f, a.d_bar, 0.5, 1);
        std::vector<Vec3> q;
        for (std::size_t i = 0; i < f.size(); ++i) q.push_back(f.transformed(i));
        for (const auto& g : map.dynamic_set) CHECK(brute_force_nearest(q, g.mean).distance <= 0.5 * a.d_bar);
    }
}

TEST_CASE("claimants of a vanished Gaussian spawn instead") {
    GaussianMap map;
    map.dynamic_set.push_back(dyn(map.allocate_id(), Vec3(0, 0, 2)));
    const GsFlowField f = make_flow({Vec3(0, 0, 2.001), Vec3(3, 0, 2)});
    const auto a = associate_dynamic(f, map.dynamic_set, 1.0);
    REQUIRE(a.reuse_count == 1);
    map.dynamic_set.clear();
    const auto out = apply_management(map, a, f, plane_frame(5), kCam);
    CHECK(out.spawned == 2);
    CHECK(out.reused == 0);
}

TEST_CASE("static management spawns over uncovered pixels only") {
    GaussianMap map;
    const FrameBundle frame = plane_frame(2);
    RenderOutput r;
    r.alpha = Image<double>(16, 16, 1, 1.0);
    r.depth = DepthImage(16, 16, 1, 2.0);
    auto rep = manage_static(map, frame, r, kCam, nullptr);
    CHECK(rep.spawned == 0);

    // a 12 x 8 hole aligned with the stride grid: 96 / 16 = 6 samples
    for (int v = 4; v < 12; ++v)
        for (int u = 0; u < 12; ++u) r.alpha.at(u, v) = 0.0;
    rep = manage_static(map, frame, r, kCam, nullptr);
    CHECK(rep.spawned == 6);
    CHECK(map.static_set.size() == 6);

    // depth disagreement also triggers spawning, the mask suppresses it
    map = {};
    r.alpha = Image<double>(16, 16, 1, 1.0);
    r.depth.at(8, 8) = 2.5;
    MaskImage mask(16, 16, 1, 0);
    rep = manage_static(map, frame, r, kCam, nullptr);
    CHECK(rep.spawned == 1);
    mask.at(8, 8) = 1;
    map = {};
    rep = manage_static(map, frame, r, kCam, &mask);
    CHECK(rep.spawned == 0);
}

TEST_CASE("static Gaussians unseen for the window are deleted") {
    GaussianMap map;
    map.config.static_unseen_W = 30;
    Gaussian g = dyn(1, Vec3(0, 0, -2));
    g.kind = GaussianKind::static_kind;
    g.spline.reset();
    g.last_observed_frame = 0;
    map.static_set.push_back(g);
    RenderOutput r;
    r.alpha = Image<double>(16, 16, 1, 1.0);
    r.depth = DepthImage(16, 16, 1, 2.0);
    r.visible = {0};
    manage_static(map, plane_frame(29), r, kCam, nullptr);
    CHECK(map.static_set.size() == 1);
    r.visible = {1};
    manage_static(map, plane_frame(30), r, kCam, nullptr);  // seen again: clock resets
    CHECK(map.static_set[0].last_observed_frame == 30);
    r.visible = {0};
    const auto rep = manage_static(map, plane_frame(60), r, kCam, nullptr);
    CHECK(rep.deleted == 1);
    CHECK(map.static_set.empty());
}

TEST_CASE("reuse rate counts Gaussians older than the current frame") {
    GaussianMap map;
    map.frame_index = 5;
    CHECK(reuse_rate(map) == 0.0);
    map.dynamic_set = {dyn(1, Vec3::Zero(), 5), dyn(2, Vec3::Zero(), 4), dyn(3, Vec3::Zero(), 1), dyn(4, Vec3::Zero(), 5)};
    CHECK(reuse_rate(map) == 0.5);
}
