#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "dynagmap/errors.hpp"
#include "dynagmap/flow.hpp"
#include "dynagmap/synth.hpp"
#include "support.hpp"

using namespace dynagmap;
using testing::uniform;

namespace {

DepthImage constant_depth(int w, int h, double d) { return DepthImage(w, h, 1, d); }

CameraPath linear_path(const Vec3& start, const Vec3& velocity, double yaw_rate = 0.0) {
    CameraPath p;
    p.kind = CameraPath::Kind::linear;
    p.position = start;
    p.velocity = velocity;
    p.yaw_rate = yaw_rate;
    return p;
}

double iou(const MaskImage& a, const MaskImage& b) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        inter += a.data()[i] && b.data()[i];
        uni += a.data()[i] || b.data()[i];
    }
    return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

/// True when the frame-(t-1) ray through the flowed pixel sees the same
/// surface point, i.e. the point was not hidden at t-1.
bool visible_before(const SceneSpec& spec, std::int64_t t, const FlowImage& flow, int u, int v,
                    const Vec3& expected_world) {
    const RayHit hit = cast_pixel(spec, t - 1.0, u + flow.at(u, v, 0), v + flow.at(u, v, 1));
    return hit.depth > 0 && (hit.world - expected_world).norm() < 1e-6;
}

}  // namespace

TEST_CASE("backprojection examples") {
    const CameraModel cam{50, 60, 20, 15, 40, 30};
    DepthImage depth = constant_depth(40, 30, 0.0);
    depth.at(20, 15) = 2.0;
    depth.at(70 - 50, 15) = 2.0;
    auto pts = backproject_points(depth, cam, Pose{});
    REQUIRE(pts.size() == 1);
    CHECK(pts[0].world == Vec3(0, 0, 2));

    const CameraModel wide{10, 10, 5, 5, 20, 12};
    DepthImage d2 = constant_depth(20, 12, 0.0);
    d2.at(15, 5) = 2.0;  // u = cx + fx
    pts = backproject_points(d2, wide, Pose{});
    REQUIRE(pts.size() == 1);
    CHECK(pts[0].world == Vec3(2, 0, 2));

    Pose shifted;
    shifted.translation = Vec3(0.5, -1.0, 3.0);
    d2.at(3, 9) = 1.5;
    const auto base = backproject_points(d2, wide, Pose{});
    const auto moved = backproject_points(d2, wide, shifted);
    REQUIRE(base.size() == moved.size());
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(moved[i].world == base[i].world + shifted.translation);
}

TEST_CASE("backprojection honours the mask and skips invalid depth") {
    const CameraModel cam{10, 10, 4, 4, 8, 8};
    DepthImage depth = constant_depth(8, 8, 1.0);
    depth.at(2, 2) = 0.0;
    MaskImage mask(8, 8, 1, 0);
    mask.at(2, 2) = 1;
    mask.at(3, 2) = 1;
    mask.at(5, 6) = 255;
    const auto pts = backproject_points(depth, cam, Pose{}, &mask);
    REQUIRE(pts.size() == 2);
    CHECK(pts[0].u == 3);
    CHECK(pts[1].v == 6);
    CHECK(backproject_points(depth, cam, Pose{}).size() == 63);
}

TEST_CASE("ego flow") {
    const CameraModel cam{80, 80, 32, 24, 64, 48};
    const double z = 2.5, delta = 0.05;
    Pose prev;
    prev.translation = Vec3(delta, 0, 0);
    MaskImage valid;
    const FlowImage zero = compute_ego_flow(constant_depth(64, 48, z), cam, Pose{}, Pose{}, &valid);
    for (double x : zero.data()) CHECK(x == 0.0);
    CHECK(count_set(valid) == 64u * 48u);

    const FlowImage f = compute_ego_flow(constant_depth(64, 48, z), cam, Pose{}, prev);
    for (int v = 0; v < 48; v += 7)
        for (int u = 0; u < 64; u += 5) {
            CHECK(f.at(u, v, 0) == doctest::Approx(-cam.fx * delta / z).epsilon(1e-12));
            CHECK(std::abs(f.at(u, v, 1)) < 1e-12);
        }

    // pure rotation: depth cancels
    Pose rot;
    rot.rotation = Quat(Eigen::AngleAxisd(0.03, Vec3(0.2, 1, 0.1).normalized()));
    DepthImage varied(64, 48, 1);
    std::mt19937_64 rng(1);
    for (double& d : varied.data()) d = uniform(rng, 0.5, 5.0);
    const FlowImage a = compute_ego_flow(constant_depth(64, 48, 1.0), cam, Pose{}, rot);
    const FlowImage b = compute_ego_flow(varied, cam, Pose{}, rot);
    double worst = 0;
    for (std::size_t i = 0; i < a.data().size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    CHECK(worst < 1e-9);

    DepthImage holes = constant_depth(64, 48, z);
    holes.at(10, 10) = 0.0;
    compute_ego_flow(holes, cam, Pose{}, prev, &valid);
    CHECK(valid.at(10, 10) == 0);
    CHECK(valid.at(11, 10) != 0);
}

TEST_CASE("segmentation of static and synthetic residuals") {
    const CameraModel cam{80, 80, 32, 24, 64, 48};
    Pose prev;
    prev.translation = Vec3(0.03, -0.01, 0.02);
    prev.rotation = Quat(Eigen::AngleAxisd(0.02, Vec3::UnitY()));
    DepthImage depth(64, 48, 1);
    std::mt19937_64 rng(2);
    for (double& d : depth.data()) d = uniform(rng, 1.0, 3.0);
    FlowImage flow = compute_ego_flow(depth, cam, Pose{}, prev);
    CHECK(count_set(segment_motion(flow, depth, cam, Pose{}, prev, 1.0)) == 0);

    // a 9x7 block moving 5 px on top of the ego motion
    MaskImage block(64, 48, 1, 0);
    for (int v = 20; v < 27; ++v)
        for (int u = 30; u < 39; ++u) {
            flow.at(u, v, 0) += 3.0;
            flow.at(u, v, 1) += 4.0;
            block.at(u, v) = 1;
        }
    const MaskImage m = segment_motion(flow, depth, cam, Pose{}, prev, 1.0);
    for (std::size_t i = 0; i < m.data().size(); ++i) CHECK((m.data()[i] != 0) == (block.data()[i] != 0));

    // a 3x3 speck is removed
    for (int v = 2; v < 5; ++v)
        for (int u = 2; u < 5; ++u) flow.at(u, v, 0) += 6.0;
    CHECK(count_set(segment_motion(flow, depth, cam, Pose{}, prev, 1.0)) == 63u);
}

TEST_CASE("segmentation matches the simulator mask on a moving sphere") {
    // about 2.5 px of object motion per frame
    const SceneSpec spec = linear_sphere_scene(64, 64, 4, Vec3(0.1, 0.03, 0.0),
                                               linear_path(Vec3(0, 0, 0), Vec3(0.01, 0.005, 0), 0.004));
    const Sequence seq = generate_scene(spec);
    for (int t = 1; t < 4; ++t) {
        const auto& f = seq.frames[t];
        const MaskImage m = segment_motion(*f.flow_back, f.depth, seq.cam, f.pose, seq.frames[t - 1].pose, 1.0);
        CHECK(iou(m, *f.motion_mask) >= 0.9);
    }
}

TEST_CASE("bilinear inverse-depth sampling") {
    DepthImage d(4, 4, 1, 2.0);
    CHECK(*sample_depth_bilinear(d, 1.3, 2.7) == doctest::Approx(2.0).epsilon(1e-15));
    d.at(2, 1) = 2.04;
    const double a = 0.25;
    const auto s = sample_depth_bilinear(d, 1 + a, 1.0);
    REQUIRE(s);
    CHECK(*s == doctest::Approx(1.0 / ((1 - a) / 2.0 + a / 2.04)).epsilon(1e-14));
    d.at(2, 1) = 3.0;  // discontinuity
    CHECK_FALSE(sample_depth_bilinear(d, 1.5, 1.0));
    d.at(2, 1) = 0.0;  // invalid neighbour
    CHECK_FALSE(sample_depth_bilinear(d, 1.5, 1.5));
    CHECK(sample_depth_bilinear(d, 0.5, 2.5));
    CHECK_FALSE(sample_depth_bilinear(d, -0.5, 1.0));
    CHECK_FALSE(sample_depth_bilinear(d, 3.5, 1.0));
    CHECK(*sample_depth_bilinear(d, 3.0, 3.0) == 2.0);
}

TEST_CASE("zero flow with identical poses lifts to zero displacement") {
    const CameraModel cam{50, 50, 16, 16, 32, 32};
    FrameBundle prev, cur;
    prev.depth = cur.depth = constant_depth(32, 32, 1.7);
    prev.rgb = cur.rgb = RgbImage(32, 32, 3, 0.5);
    prev.timestamp = 0;
    cur.timestamp = 1;
    cur.flow_back = FlowImage(32, 32, 2, 0.0);
    MaskImage mask(32, 32, 1, 0);
    for (int v = 8; v < 20; ++v)
        for (int u = 5; u < 15; ++u) mask.at(u, v) = 1;
    for (FlowMode mode : {FlowMode::exact_correspondence, FlowMode::paper_literal}) {
        const GsFlowField f = lift_gs_flow(cur, prev, cam, mask, mode);
        CHECK(f.size() == 120);
        CHECK(f.frame_index == 1);
        for (const Vec3& d : f.displacements) CHECK(d.norm() == 0.0);
    }
}

TEST_CASE("flow lifting fails cleanly when nothing survives") {
    const CameraModel cam{50, 50, 16, 16, 32, 32};
    FrameBundle prev, cur;
    prev.depth = constant_depth(32, 32, 1.0);
    cur.depth = constant_depth(32, 32, 0.0);
    prev.rgb = cur.rgb = RgbImage(32, 32, 3, 0.5);
    cur.flow_back = FlowImage(32, 32, 2, 0.0);
    MaskImage mask(32, 32, 1, 1);
    CHECK_THROWS_AS(lift_gs_flow(cur, prev, cam, mask, FlowMode::exact_correspondence), EmptyFlow);
    cur.depth = constant_depth(32, 32, 1.0);
    for (double& x : cur.flow_back->data()) x = 100.0;  // everything leaves the image
    CHECK_THROWS_AS(lift_gs_flow(cur, prev, cam, mask, FlowMode::exact_correspondence), EmptyFlow);
}

TEST_CASE("exact lifting recovers the object motion regardless of camera motion") {
    const Vec3 vel(-0.1, 0.0, 0.0);
    const CameraPath paths[] = {CameraPath{}, linear_path(Vec3(0, 0, 0), Vec3(0.03, 0, 0.01)),
                                linear_path(Vec3(0.1, 0, 0), Vec3(-0.02, 0.01, 0), 0.01)};
    for (const CameraPath& path : paths) {
        const SceneSpec spec = linear_sphere_scene(48, 48, 4, vel, path);
        const Sequence seq = generate_scene(spec);
        for (int t = 1; t < 4; ++t) {
            const auto& cur = seq.frames[t];
            const GsFlowField f = lift_gs_flow(cur, seq.frames[t - 1], seq.cam, *cur.motion_mask,
                                               FlowMode::exact_correspondence, analytic_depth_sampler(spec, t - 1));
            REQUIRE(f.size() > 50);
            std::size_t checked = 0;
            double worst = 0.0;
            for (std::size_t i = 0; i < f.size(); ++i) {
                const auto [u, v] = f.pixel_coords[i];
                const Vec3 expected_prev = f.points_world_t[i] - vel;
                if (!visible_before(spec, t, *cur.flow_back, u, v, expected_prev)) continue;
                ++checked;
                worst = std::max(worst, (f.displacements[i] + vel).norm());
            }
            CHECK(checked >= f.size() * 9 / 10);
            CHECK(worst < 1e-6);
        }
    }
}

TEST_CASE("unmasked static pixels lift to zero displacement") {
    const SceneSpec spec = linear_sphere_scene(48, 48, 3, Vec3(0.05, 0, 0),
                                               linear_path(Vec3(0, 0, 0), Vec3(0.02, -0.01, 0.01), 0.01));
    const Sequence seq = generate_scene(spec);
    const auto& cur = seq.frames[2];
    MaskImage statics(48, 48, 1, 0);
    const Image<int> ids = surface_ids(spec, 2);
    for (int v = 0; v < 48; v += 3)
        for (int u = 0; u < 48; u += 3)
            if (ids.at(u, v) == 0 &&
                visible_before(spec, 2, *cur.flow_back, u, v, cast_pixel(spec, 2.0, u, v).world))
                statics.at(u, v) = 1;
    const GsFlowField f = lift_gs_flow(cur, seq.frames[1], seq.cam, statics, FlowMode::exact_correspondence,
                                       analytic_depth_sampler(spec, 1));
    REQUIRE(f.size() > 100);
    double worst = 0;
    for (const Vec3& d : f.displacements) worst = std::max(worst, d.norm());
    CHECK(worst < 1e-6);
}

TEST_CASE("literal and exact modes agree for small sideways motion") {
    const SceneSpec spec = linear_sphere_scene(64, 64, 3, Vec3(0.02, 0.01, 0.0), CameraPath{});
    const Sequence seq = generate_scene(spec);
    const auto& cur = seq.frames[2];
    const auto exact = lift_gs_flow(cur, seq.frames[1], seq.cam, *cur.motion_mask, FlowMode::exact_correspondence,
                                    analytic_depth_sampler(spec, 1));
    const auto literal = lift_gs_flow(cur, seq.frames[1], seq.cam, *cur.motion_mask, FlowMode::paper_literal);
    std::map<std::pair<int, int>, std::size_t> exact_at;
    for (std::size_t j = 0; j < exact.size(); ++j) exact_at[exact.pixel_coords[j]] = j;
    std::size_t compared = 0, within = 0;
    for (std::size_t i = 0; i < literal.size(); ++i) {
        auto it = exact_at.find(literal.pixel_coords[i]);
        if (it == exact_at.end()) continue;
        const std::size_t j = it->second;
        ++compared;
        const double rel = (literal.displacements[i] - exact.displacements[j]).norm() / exact.displacements[j].norm();
        within += rel <= 0.05;
    }
    REQUIRE(compared > 100);
    CHECK(within >= compared * 9 / 10);
}

TEST_CASE("composed flows chain per-frame steps") {
    FlowImage a(10, 8, 2), b(10, 8, 2);
    for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 10; ++u) {
            a.at(u, v, 0) = 1.0;
            a.at(u, v, 1) = 0.5;
            b.at(u, v, 0) = -2.0;
            b.at(u, v, 1) = 0.25;
        }
    const FlowImage c = compose_flows({&a, &b});
    CHECK(c.at(3, 3, 0) == doctest::Approx(-1.0));
    CHECK(c.at(3, 3, 1) == doctest::Approx(0.75));
    CHECK(std::isnan(c.at(9, 3, 0)));  // 9 + 1 leaves the image after the first step
    CHECK(compose_flows({&a}).at(2, 2, 0) == 1.0);
}
