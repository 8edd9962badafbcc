#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dynagmap/errors.hpp"
#include "dynagmap/flow.hpp"
#include "dynagmap/synth.hpp"

using namespace dynagmap;

namespace {

SceneSpec on_axis_sphere(const Vec3& velocity, int frames = 3) {
    SceneSpec s;
    s.cam = {100.0, 100.0, 50.0, 50.0, 100, 100};
    s.frames = frames;
    ObjectSpec o;
    o.size = 0.2;
    o.trajectory.kind = Trajectory::Kind::constant_velocity;
    o.trajectory.start = Vec3(0, 0, 2);
    o.trajectory.velocity = velocity;
    s.objects.push_back(o);
    return s;
}

int count(const MaskImage& m) {
    int n = 0;
    for (auto x : m.data()) n += x != 0;
    return n;
}

/// First hit of the pixel ray with a sphere, camera at the origin looking along +z.
Vec3 ray_sphere(const CameraModel& cam, double u, double v, const Vec3& c, double r) {
    const Vec3 d = cam.backproject(u, v, 1.0);
    const double b = d.dot(c), a = d.squaredNorm();
    const double s = (b - std::sqrt(b * b - a * (c.squaredNorm() - r * r))) / a;
    return s * d;
}

}  // namespace

TEST_CASE("frozen world gives identical frames and zero flow") {
    SceneSpec s;
    s.cam = {40, 40, 16, 16, 32, 32};
    s.frames = 3;
    const Sequence seq = generate_scene(s);
    REQUIRE(seq.frames.size() == 3);
    for (int t = 0; t < 3; ++t) {
        const auto& f = seq.frames[t];
        CHECK(f.timestamp == t);
        CHECK(count(*f.motion_mask) == 0);
        for (double x : f.flow_back->data()) CHECK(x == 0.0);
        if (t > 0) {
            CHECK(f.rgb.data() == seq.frames[0].rgb.data());
            CHECK(f.depth.data() == seq.frames[0].depth.data());
        }
    }
}

TEST_CASE("room depth and shading") {
    SceneSpec s;
    s.cam = {40, 40, 16, 16, 32, 32};
    s.frames = 1;
    const auto f = generate_scene(s).frames[0];
    CHECK(f.depth.at(16, 16) == doctest::Approx(s.room_max.z()).epsilon(1e-12));
    for (double x : f.depth.data()) CHECK(x > 0.0);
    for (double x : f.rgb.data()) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
    }
}

TEST_CASE("sphere mask is a disc of the projected radius") {
    const SceneSpec s = on_axis_sphere(Vec3(0.001, 0, 0), 1);
    const auto [flow, mask] = analytic_flow_and_mask(s, 0);
    const double radius = std::sqrt(count(mask) / std::numbers::pi);
    CHECK(std::abs(radius - 100.0 * 0.2 / 2.0) <= 2.0);
    CHECK(mask.at(50, 50) == 255);
    CHECK(mask.at(50, 50 + 14) == 0);
    for (double x : flow.data()) CHECK(x == 0.0);  // frame 0 convention
}

TEST_CASE("exact lift on a translating sphere recovers the motion") {
    const SceneSpec s = on_axis_sphere(Vec3(-0.1, 0, 0));
    const Sequence seq = generate_scene(s);
    const auto& f1 = seq.frames[1];
    const GsFlowField field = lift_gs_flow(f1, seq.frames[0], s.cam, *f1.motion_mask,
                                           FlowMode::exact_correspondence, analytic_depth_sampler(s, 0));
    REQUIRE(field.size() > 100);
    std::size_t checked = 0;
    for (std::size_t i = 0; i < field.size(); ++i) {
        const auto [u, v] = field.pixel_coords[i];
        // a point hidden behind the sphere itself at t-1 has no correspondence
        const Vec3 prev = field.points_world_t[i] + Vec3(0.1, 0, 0);
        const RayHit h = cast_pixel(s, 0.0, u + f1.flow_back->at(u, v, 0), v + f1.flow_back->at(u, v, 1));
        if ((h.world - prev).norm() > 1e-6) continue;
        ++checked;
        CHECK((field.displacements[i] - Vec3(0.1, 0, 0)).norm() < 1e-6);
    }
    CHECK(checked > field.size() * 9 / 10);
}

TEST_CASE("flow reprojects the moved hit point") {
    SceneSpec s = moving_sphere_scene();
    s.frames = 6;
    const Sequence seq = generate_scene(s);
    const auto& traj = s.objects[0].trajectory;
    for (int t = 1; t < 6; ++t) {
        const auto& f = seq.frames[t];
        const Pose prev = s.camera_path.pose(t - 1);
        int n = 0;
        for (int v = 0; v < s.cam.height; ++v)
            for (int u = 0; u < s.cam.width; ++u) {
                if (!f.motion_mask->at(u, v)) continue;
                ++n;
                const Vec3 x = f.pose.to_world(s.cam.backproject(u, v, f.depth.at(u, v)));
                const Vec3 back = x + traj.position(t - 1) - traj.position(t);
                const Vec2 q = s.cam.project(prev.to_camera(back));
                CHECK(std::abs(q.x() - (u + f.flow_back->at(u, v, 0))) < 1e-6);
                CHECK(std::abs(q.y() - (v + f.flow_back->at(u, v, 1))) < 1e-6);
            }
        CHECK(n > 200);
    }
}

TEST_CASE("mask marks exactly the moving surfaces") {
    SceneSpec s;
    s.cam = {60, 60, 32, 32, 64, 64};
    s.frames = 2;
    ObjectSpec still;
    still.shape = ObjectSpec::Shape::box;
    still.size = 0.2;
    still.trajectory.start = Vec3(-0.5, 0, 2);
    ObjectSpec mover;
    mover.size = 0.2;
    mover.trajectory.kind = Trajectory::Kind::constant_velocity;
    mover.trajectory.start = Vec3(0.5, 0, 2);
    mover.trajectory.velocity = Vec3(0, 0.02, 0);
    s.objects = {still, mover};
    const auto seq = generate_scene(s);
    const auto ids = surface_ids(s, 1);
    int box = 0;
    for (int v = 0; v < 64; ++v)
        for (int u = 0; u < 64; ++u) {
            CHECK((seq.frames[1].motion_mask->at(u, v) == 255) == (ids.at(u, v) == 2));
            box += ids.at(u, v) == 1;
        }
    CHECK(box > 50);
    // box front face sits at z - half
    const RayHit h = cast_pixel(s, 1.0, 32 - 0.5 * 60 / 1.8, 32);
    CHECK(h.surface == 1);
    CHECK(h.depth == doctest::Approx(1.8).epsilon(1e-12));
}

TEST_CASE("pure rotation flow equals the ego flow") {
    SceneSpec s;
    s.cam = {60, 60, 32, 32, 64, 64};
    s.frames = 3;
    s.camera_path.kind = CameraPath::Kind::linear;
    s.camera_path.yaw_rate = 0.02;
    const auto seq = generate_scene(s);
    for (int t = 1; t < 3; ++t) {
        MaskImage valid;
        const FlowImage ego = compute_ego_flow(seq.frames[t].depth, s.cam, seq.frames[t].pose,
                                               seq.frames[t - 1].pose, &valid);
        for (std::size_t i = 0; i < ego.data().size(); ++i)
            if (valid.data()[i / 2]) CHECK(std::abs(ego.data()[i] - seq.frames[t].flow_back->data()[i]) < 1e-9);
    }
}

TEST_CASE("circular motion flow at the object centre") {
    SceneSpec s;
    s.cam = {100, 100, 50, 50, 100, 100};
    s.frames = 8;
    ObjectSpec o;
    o.size = 0.2;
    o.trajectory.kind = Trajectory::Kind::circular;
    o.trajectory.center = Vec3(0, 0, 2.2);
    o.trajectory.radius = 0.3;
    o.trajectory.angular_rate = 0.1;
    o.trajectory.phase = 0.4;
    s.objects.push_back(o);
    const auto& traj = s.objects[0].trajectory;
    for (int t = 1; t < 8; ++t) {
        const Vec3 c = traj.position(t);
        const Vec2 px = s.cam.project(c);
        const int u = static_cast<int>(std::lround(px.x())), v = static_cast<int>(std::lround(px.y()));
        const Vec3 hit = ray_sphere(s.cam, u, v, c, 0.2);
        const Vec2 q = s.cam.project(hit + traj.position(t - 1) - c);
        const FlowImage flow = analytic_flow(s, t, t - 1);
        CHECK(std::abs(flow.at(u, v, 0) - (q.x() - u)) < 1e-6);
        CHECK(std::abs(flow.at(u, v, 1) - (q.y() - v)) < 1e-6);
    }
}

TEST_CASE("circular trajectory matches its closed form") {
    Trajectory tr;
    tr.kind = Trajectory::Kind::circular;
    tr.center = Vec3(1, 0.5, 2);
    tr.radius = 0.4;
    tr.angular_rate = 0.3;
    tr.phase = 0.2;
    for (double t : {0.0, 1.5, 7.0}) {
        const Vec3 p = tr.position(t);
        CHECK((p - tr.center).norm() == doctest::Approx(0.4));
        CHECK(p.y() == 0.5);
        const double h = 1e-6;
        const Vec3 fd = (tr.position(t + h) - tr.position(t - h)) / (2 * h);
        CHECK((fd - tr.velocity_at(t)).norm() < 1e-7);
    }
    Trajectory cubic;
    cubic.kind = Trajectory::Kind::cubic;
    cubic.coeffs = {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(1, 1, 1)};
    CHECK((cubic.position(2.0) - Vec3(1 + 8, 2 + 8, 4 + 8)).norm() < 1e-12);
    CHECK((cubic.velocity_at(2.0) - Vec3(12, 1 + 12, 4 + 12)).norm() < 1e-12);
}

TEST_CASE("generation is deterministic") {
    SceneSpec s = moving_sphere_scene();
    s.frames = 3;
    s.depth_noise_sigma = 0.01;
    s.seed = 5;
    const auto a = generate_scene(s), b = generate_scene(s);
    for (int t = 0; t < 3; ++t) {
        CHECK(a.frames[t].rgb.data() == b.frames[t].rgb.data());
        CHECK(a.frames[t].depth.data() == b.frames[t].depth.data());
        CHECK(a.frames[t].flow_back->data() == b.frames[t].flow_back->data());
    }
    s.seed = 6;
    CHECK(generate_scene(s).frames[1].depth.data() != a.frames[1].depth.data());
}

TEST_CASE("spec validation") {
    SceneSpec s = on_axis_sphere(Vec3(0.5, 0, 0), 10);
    CHECK_THROWS_AS(generate_scene(s), SpecValidation);
    s = on_axis_sphere(Vec3::Zero());
    s.objects[0].size = 0.0;
    CHECK_THROWS_AS(s.validate(), SpecValidation);
    s = on_axis_sphere(Vec3::Zero());
    s.camera_path.kind = CameraPath::Kind::linear;
    s.camera_path.velocity = Vec3(0, 0, 1);
    s.frames = 6;
    CHECK_THROWS_AS(s.validate(), SpecValidation);
    CHECK_NOTHROW(moving_sphere_scene().validate());
    CHECK_NOTHROW(static_room_scene().validate());
}

TEST_CASE("scene spec JSON round trip") {
    SceneSpec s = moving_sphere_scene();
    s.objects.push_back(on_axis_sphere(Vec3(0.01, 0, 0)).objects[0]);
    s.objects.back().shape = ObjectSpec::Shape::box;
    s.objects.back().texture.kind = Texture::Kind::gradient;
    s.camera_path.kind = CameraPath::Kind::orbit;
    s.depth_noise_sigma = 0.003;
    nlohmann::json j = s;
    const SceneSpec back = j.get<SceneSpec>();
    CHECK(nlohmann::json(back) == j);
    CHECK(back.objects.size() == 2);
    CHECK(back.objects[1].shape == ObjectSpec::Shape::box);
    CHECK(back.cam.width == 120);

    j["objects"][0]["shape"] = "torus";
    CHECK_THROWS_AS(j.get<SceneSpec>(), SpecValidation);
}
