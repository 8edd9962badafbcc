#include "dynagmap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "dynagmap/errors.hpp"
#include "dynagmap/parallel.hpp"

namespace dynagmap {

using nlohmann::json;

Vec3 Texture::albedo(const Vec3& p) const {
    switch (kind) {
        case Kind::solid:
            return color_a;
        case Kind::checker: {
            const auto cell = [&](double x) { return static_cast<long long>(std::floor(x / period)); };
            const long long parity = cell(p.x()) + cell(p.y()) + cell(p.z());
            return (parity & 1) ? color_b : color_a;
        }
        case Kind::gradient: {
            const double s = std::clamp(direction.normalized().dot(p) - offset, 0.0, 1.0);
            return (1.0 - s) * color_a + s * color_b;
        }
    }
    return color_a;
}

Vec3 Trajectory::position(double t) const {
    switch (kind) {
        case Kind::stationary:
            return start;
        case Kind::constant_velocity:
            return start + velocity * t;
        case Kind::circular: {
            const double a = phase + angular_rate * t;
            return center + radius * Vec3(std::cos(a), 0.0, std::sin(a));
        }
        case Kind::cubic:
            return coeffs[0] + t * (coeffs[1] + t * (coeffs[2] + t * coeffs[3]));
    }
    return start;
}

Vec3 Trajectory::velocity_at(double t) const {
    switch (kind) {
        case Kind::stationary:
            return Vec3::Zero();
        case Kind::constant_velocity:
            return velocity;
        case Kind::circular: {
            const double a = phase + angular_rate * t;
            return radius * angular_rate * Vec3(-std::sin(a), 0.0, std::cos(a));
        }
        case Kind::cubic:
            return coeffs[1] + t * (2.0 * coeffs[2] + 3.0 * t * coeffs[3]);
    }
    return Vec3::Zero();
}

namespace {

Mat3 look_at(const Vec3& eye, const Vec3& target) {
    const Vec3 z = (target - eye).normalized();
    Vec3 x = Vec3::UnitY().cross(z);  // world y is down
    if (x.norm() < 1e-9) x = Vec3::UnitX();
    x.normalize();
    const Vec3 y = z.cross(x);
    Mat3 r;
    r.col(0) = x;
    r.col(1) = y;
    r.col(2) = z;
    return r;
}

}  // namespace

Pose CameraPath::pose(double t) const {
    Pose p;
    switch (kind) {
        case Kind::static_path:
            p.translation = position;
            p.rotation = Quat(Eigen::AngleAxisd(yaw, Vec3::UnitY()));
            break;
        case Kind::linear:
            p.translation = position + velocity * t;
            p.rotation = Quat(Eigen::AngleAxisd(yaw + yaw_rate * t, Vec3::UnitY()));
            break;
        case Kind::orbit: {
            const double a = orbit_phase + orbit_rate * t;
            p.translation = target + Vec3(orbit_radius * std::sin(a), position.y(),
                                          -orbit_radius * std::cos(a));
            p.rotation = Quat(look_at(p.translation, target));
            break;
        }
    }
    p.rotation.normalize();
    return p;
}

void SceneSpec::validate() const {
    cam.validate();
    if (frames < 1) throw SpecValidation("scene needs at least one frame");
    if (!((room_max - room_min).array() > 0.0).all()) throw SpecValidation("room box is empty");
    if (!(light_dir.norm() > 0.0)) throw SpecValidation("light direction is zero");
    for (std::size_t k = 0; k < objects.size(); ++k) {
        const auto& o = objects[k];
        if (!(o.size > 0.0)) throw SpecValidation("object " + std::to_string(k) + " has no size");
        for (int t = 0; t < frames; ++t) {
            const Vec3 p = o.trajectory.position(t);
            if (!p.allFinite())
                throw SpecValidation("object " + std::to_string(k) + " has a non-finite trajectory");
            if (((p.array() - o.size) <= room_min.array()).any() ||
                ((p.array() + o.size) >= room_max.array()).any())
                throw SpecValidation("object " + std::to_string(k) + " leaves the room at frame " +
                                     std::to_string(t));
        }
    }
    for (int t = 0; t < frames; ++t) {
        const Vec3 c = camera_path.pose(t).translation;
        if (!c.allFinite() || ((c.array() <= room_min.array()) || (c.array() >= room_max.array())).any())
            throw SpecValidation("camera leaves the room at frame " + std::to_string(t));
    }
}

namespace {

/// Smallest s > 0 with origin + s*dir on the sphere, or +inf.
double hit_sphere(const Vec3& origin, const Vec3& dir, const Vec3& center, double radius) {
    const Vec3 oc = origin - center;
    const double a = dir.squaredNorm();
    const double b = 2.0 * dir.dot(oc);
    const double c = oc.squaredNorm() - radius * radius;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return std::numeric_limits<double>::infinity();
    const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    double s0 = q / a, s1 = c / q;
    if (s0 > s1) std::swap(s0, s1);
    if (s0 > 1e-9) return s0;
    if (s1 > 1e-9) return s1;
    return std::numeric_limits<double>::infinity();
}

double hit_box(const Vec3& origin, const Vec3& dir, const Vec3& center, double half, int* axis) {
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    int near_axis = 0;
    for (int i = 0; i < 3; ++i) {
        const double lo = center[i] - half, hi = center[i] + half;
        if (dir[i] == 0.0) {
            if (origin[i] < lo || origin[i] > hi) return std::numeric_limits<double>::infinity();
            continue;
        }
        double a = (lo - origin[i]) / dir[i], b = (hi - origin[i]) / dir[i];
        if (a > b) std::swap(a, b);
        if (a > t_near) {
            t_near = a;
            near_axis = i;
        }
        t_far = std::min(t_far, b);
    }
    if (t_near > t_far || t_near <= 1e-9) return std::numeric_limits<double>::infinity();
    *axis = near_axis;
    return t_near;
}

Vec3 shade(const SceneSpec& spec, const Vec3& albedo, const Vec3& normal) {
    const double lambert = std::max(0.0, -normal.dot(spec.light_dir.normalized()));
    return (albedo * (spec.ambient + (1.0 - spec.ambient) * lambert)).cwiseMin(1.0).cwiseMax(0.0);
}

struct FullHit {
    RayHit hit;
    Vec3 color = Vec3::Zero();
};

FullHit trace(const SceneSpec& spec, double t, double u, double v, bool want_color) {
    const Pose pose = spec.camera_path.pose(t);
    const CameraModel& cam = spec.cam;
    const Vec3 origin = pose.translation;
    const Vec3 dir = pose.rotation * Vec3((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);

    FullHit out;
    double best = std::numeric_limits<double>::infinity();
    int best_surface = -1;
    int best_axis = 0;
    for (std::size_t k = 0; k < spec.objects.size(); ++k) {
        const auto& o = spec.objects[k];
        const Vec3 c = o.trajectory.position(t);
        int axis = 0;
        const double s = o.shape == ObjectSpec::Shape::sphere ? hit_sphere(origin, dir, c, o.size)
                                                              : hit_box(origin, dir, c, o.size, &axis);
        if (s < best) {
            best = s;
            best_surface = static_cast<int>(k) + 1;
            best_axis = axis;
        }
    }
    // room interior: exit distance of the slab intersection
    double room_s = std::numeric_limits<double>::infinity();
    int room_axis = 0;
    for (int i = 0; i < 3; ++i) {
        if (dir[i] == 0.0) continue;
        const double s = ((dir[i] > 0.0 ? spec.room_max[i] : spec.room_min[i]) - origin[i]) / dir[i];
        if (s < room_s) {
            room_s = s;
            room_axis = i;
        }
    }
    if (room_s < best) {
        best = room_s;
        best_surface = 0;
        best_axis = room_axis;
    }
    if (!std::isfinite(best)) return out;

    RayHit& h = out.hit;
    h.depth = best;
    h.surface = best_surface;
    h.world = origin + best * dir;
    if (best_surface == 0) {
        h.normal = Vec3::Zero();
        h.normal[best_axis] = dir[best_axis] > 0.0 ? -1.0 : 1.0;
        if (want_color) out.color = shade(spec, spec.room_texture.albedo(h.world), h.normal);
    } else {
        const auto& o = spec.objects[best_surface - 1];
        const Vec3 c = o.trajectory.position(t);
        if (o.shape == ObjectSpec::Shape::sphere) {
            h.normal = (h.world - c).normalized();
        } else {
            h.normal = Vec3::Zero();
            h.normal[best_axis] = dir[best_axis] > 0.0 ? -1.0 : 1.0;
        }
        if (want_color) out.color = shade(spec, o.texture.albedo(h.world - c), h.normal);
    }
    return out;
}

bool surface_moving(const SceneSpec& spec, int surface, double t) {
    return surface > 0 && spec.objects[surface - 1].trajectory.velocity_at(t).norm() > 0.0;
}

FlowImage flow_between(const SceneSpec& spec, std::int64_t t, std::int64_t t_ref,
                       const std::vector<RayHit>& hits) {
    const CameraModel& cam = spec.cam;
    FlowImage flow(cam.width, cam.height, 2, 0.0);
    if (t == t_ref) return flow;
    const Pose ref = spec.camera_path.pose(static_cast<double>(t_ref));
    const Pose cur = spec.camera_path.pose(static_cast<double>(t));
    const bool same_view = ref.rotation.coeffs() == cur.rotation.coeffs() && ref.translation == cur.translation;
    for (int v = 0; v < cam.height; ++v)
        for (int u = 0; u < cam.width; ++u) {
            const RayHit& h = hits[static_cast<std::size_t>(v) * cam.width + u];
            if (h.surface < 0) continue;
            Vec3 x = h.world;
            Vec3 moved = Vec3::Zero();
            if (h.surface > 0) {
                const auto& traj = spec.objects[h.surface - 1].trajectory;
                moved = traj.position(static_cast<double>(t_ref)) - traj.position(static_cast<double>(t));
                x += moved;
            }
            if (same_view && moved.isZero(0.0)) continue;  // exact zero, no round trip
            const Vec3 p = ref.to_camera(x);
            if (!(p.z() > 0.0)) continue;
            const Vec2 q = cam.project(p);
            flow.at(u, v, 0) = q.x() - u;
            flow.at(u, v, 1) = q.y() - v;
        }
    return flow;
}

std::vector<RayHit> cast_all(const SceneSpec& spec, double t, RgbImage* rgb) {
    const CameraModel& cam = spec.cam;
    std::vector<RayHit> hits(static_cast<std::size_t>(cam.width) * cam.height);
    parallel_for(static_cast<std::size_t>(cam.height), [&](std::size_t row) {
        const int v = static_cast<int>(row);
        for (int u = 0; u < cam.width; ++u) {
            const FullHit fh = trace(spec, t, u, v, rgb != nullptr);
            hits[static_cast<std::size_t>(v) * cam.width + u] = fh.hit;
            if (rgb)
                for (int c = 0; c < 3; ++c) rgb->at(u, v, c) = fh.color[c];
        }
    });
    return hits;
}

MaskImage mask_from(const SceneSpec& spec, double t, const std::vector<RayHit>& hits) {
    MaskImage mask(spec.cam.width, spec.cam.height, 1, 0);
    for (std::size_t i = 0; i < hits.size(); ++i)
        mask.data()[i] = surface_moving(spec, hits[i].surface, t) ? 255 : 0;
    return mask;
}

}  // namespace

RayHit cast_pixel(const SceneSpec& spec, double t, double u, double v) {
    return trace(spec, t, u, v, false).hit;
}

Sequence generate_scene(const SceneSpec& spec) {
    spec.validate();
    Sequence seq;
    seq.cam = spec.cam;
    seq.frames.resize(spec.frames);
    seq.object_positions.resize(spec.frames);
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.depth_noise_sigma > 0 ? spec.depth_noise_sigma : 1.0);
    for (int t = 0; t < spec.frames; ++t) {
        FrameBundle& f = seq.frames[t];
        f.timestamp = t;
        f.pose = spec.camera_path.pose(t);
        f.rgb = RgbImage(spec.cam.width, spec.cam.height, 3, 0.0);
        const auto hits = cast_all(spec, t, &f.rgb);
        f.depth = DepthImage(spec.cam.width, spec.cam.height, 1, 0.0);
        for (std::size_t i = 0; i < hits.size(); ++i) {
            double d = hits[i].depth;
            if (spec.depth_noise_sigma > 0.0 && d > 0.0) d = std::max(0.0, d + noise(rng));
            f.depth.data()[i] = d;
        }
        f.motion_mask = mask_from(spec, t, hits);
        f.flow_back = flow_between(spec, t, t > 0 ? t - 1 : 0, hits);
        for (const auto& o : spec.objects) seq.object_positions[t].push_back(o.trajectory.position(t));
    }
    return seq;
}

std::pair<FlowImage, MaskImage> analytic_flow_and_mask(const SceneSpec& spec, std::int64_t t) {
    const auto hits = cast_all(spec, static_cast<double>(t), nullptr);
    return {flow_between(spec, t, t > 0 ? t - 1 : 0, hits), mask_from(spec, t, hits)};
}

FlowImage analytic_flow(const SceneSpec& spec, std::int64_t t, std::int64_t t_ref) {
    return flow_between(spec, t, t_ref, cast_all(spec, static_cast<double>(t), nullptr));
}

Image<int> surface_ids(const SceneSpec& spec, std::int64_t t) {
    const auto hits = cast_all(spec, static_cast<double>(t), nullptr);
    Image<int> ids(spec.cam.width, spec.cam.height, 1, -1);
    for (std::size_t i = 0; i < hits.size(); ++i) ids.data()[i] = hits[i].surface;
    return ids;
}

DepthSampler analytic_depth_sampler(const SceneSpec& spec, std::int64_t t) {
    return [spec, t](double u, double v) -> std::optional<double> {
        const double d = cast_pixel(spec, static_cast<double>(t), u, v).depth;
        if (!(d > 0.0)) return std::nullopt;
        return d;
    };
}

SceneSpec moving_sphere_scene() {
    SceneSpec s;
    s.cam = {90.0, 90.0, 60.0, 45.0, 120, 90};
    s.frames = 60;
    s.room_max = {2.05, 1.55, 3.3};
    s.room_texture = {Texture::Kind::checker, {0.85, 0.8, 0.7}, {0.25, 0.3, 0.45}, 0.25};
    ObjectSpec sphere;
    sphere.shape = ObjectSpec::Shape::sphere;
    sphere.size = 0.3;
    sphere.texture = {Texture::Kind::checker, {0.95, 0.2, 0.15}, {0.95, 0.85, 0.2}, 0.12};
    sphere.trajectory.kind = Trajectory::Kind::circular;
    sphere.trajectory.center = {0.0, 0.1, 2.2};
    sphere.trajectory.radius = 0.5;
    sphere.trajectory.angular_rate = 2.0 * std::numbers::pi / 60.0;
    s.objects.push_back(sphere);
    s.camera_path.kind = CameraPath::Kind::linear;
    s.camera_path.position = {-0.1, 0.0, 0.0};
    s.camera_path.velocity = {0.004, 0.0, 0.0};
    return s;
}

SceneSpec static_room_scene() {
    SceneSpec s;
    s.cam = {60.0, 60.0, 32.0, 32.0, 64, 64};
    s.frames = 20;
    // small room so a checker cell spans about nine pixels on the far wall
    s.room_min = {-1.05, -1.05, -0.55};
    s.room_max = {1.05, 1.05, 1.65};
    s.room_texture = {Texture::Kind::checker, {0.85, 0.8, 0.7}, {0.25, 0.3, 0.45}, 0.25};
    s.camera_path.kind = CameraPath::Kind::linear;
    s.camera_path.velocity = {0.01, 0.0, 0.0};
    s.camera_path.yaw_rate = 0.002;
    return s;
}

SceneSpec linear_sphere_scene(int width, int height, int frames, const Vec3& velocity,
                              const CameraPath& path) {
    SceneSpec s;
    const double f = 0.8 * width;
    s.cam = {f, f, 0.5 * width, 0.5 * height, width, height};
    s.frames = frames;
    s.room_texture = {Texture::Kind::checker, {0.85, 0.8, 0.7}, {0.25, 0.3, 0.45}, 0.25};
    ObjectSpec sphere;
    sphere.size = 0.3;
    sphere.texture = {Texture::Kind::checker, {0.95, 0.2, 0.15}, {0.95, 0.85, 0.2}, 0.12};
    sphere.trajectory.kind = Trajectory::Kind::constant_velocity;
    sphere.trajectory.start = Vec3(0.0, 0.0, 2.2) - 0.5 * (frames - 1) * velocity;
    sphere.trajectory.velocity = velocity;
    s.objects.push_back(sphere);
    s.camera_path = path;
    return s;
}

// ---- JSON ----

namespace {

json vec(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec(const json& j) {
    if (!j.is_array() || j.size() != 3) throw SpecValidation("expected a 3-vector, got " + j.dump());
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <typename E>
E parse_enum(const json& j, std::initializer_list<std::pair<const char*, E>> names, const char* what) {
    const auto s = j.get<std::string>();
    for (const auto& [n, e] : names)
        if (s == n) return e;
    throw SpecValidation(std::string("unknown ") + what + " '" + s + "'");
}

template <typename E>
std::string enum_name(E e, std::initializer_list<std::pair<const char*, E>> names) {
    for (const auto& [n, v] : names)
        if (v == e) return n;
    return "?";
}

const std::initializer_list<std::pair<const char*, Texture::Kind>> kTextureKinds = {
    {"solid", Texture::Kind::solid}, {"checker", Texture::Kind::checker}, {"gradient", Texture::Kind::gradient}};
const std::initializer_list<std::pair<const char*, Trajectory::Kind>> kTrajKinds = {
    {"stationary", Trajectory::Kind::stationary},
    {"constant_velocity", Trajectory::Kind::constant_velocity},
    {"circular", Trajectory::Kind::circular},
    {"cubic", Trajectory::Kind::cubic}};
const std::initializer_list<std::pair<const char*, ObjectSpec::Shape>> kShapes = {
    {"sphere", ObjectSpec::Shape::sphere}, {"box", ObjectSpec::Shape::box}};
const std::initializer_list<std::pair<const char*, CameraPath::Kind>> kPaths = {
    {"static", CameraPath::Kind::static_path}, {"linear", CameraPath::Kind::linear}, {"orbit", CameraPath::Kind::orbit}};

json texture_json(const Texture& t) {
    return {{"kind", enum_name(t.kind, kTextureKinds)}, {"color_a", vec(t.color_a)},
            {"color_b", vec(t.color_b)},                {"period", t.period},
            {"direction", vec(t.direction)},            {"offset", t.offset}};
}

Texture texture_from(const json& j) {
    Texture t;
    if (j.contains("kind")) t.kind = parse_enum(j.at("kind"), kTextureKinds, "texture");
    if (j.contains("color_a")) t.color_a = vec(j.at("color_a"));
    if (j.contains("color_b")) t.color_b = vec(j.at("color_b"));
    if (j.contains("period")) t.period = j.at("period").get<double>();
    if (j.contains("direction")) t.direction = vec(j.at("direction"));
    if (j.contains("offset")) t.offset = j.at("offset").get<double>();
    if (t.kind == Texture::Kind::checker && !(t.period > 0.0))
        throw SpecValidation("checker period must be positive");
    return t;
}

}  // namespace

void to_json(json& j, const SceneSpec& s) {
    json objects = json::array();
    for (const auto& o : s.objects) {
        const auto& tr = o.trajectory;
        json coeffs = json::array();
        for (const auto& c : tr.coeffs) coeffs.push_back(vec(c));
        objects.push_back({{"shape", enum_name(o.shape, kShapes)},
                           {"size", o.size},
                           {"texture", texture_json(o.texture)},
                           {"trajectory",
                            {{"kind", enum_name(tr.kind, kTrajKinds)},
                             {"start", vec(tr.start)},
                             {"velocity", vec(tr.velocity)},
                             {"center", vec(tr.center)},
                             {"radius", tr.radius},
                             {"angular_rate", tr.angular_rate},
                             {"phase", tr.phase},
                             {"coeffs", coeffs}}}});
    }
    const auto& p = s.camera_path;
    j = {{"room", {{"min", vec(s.room_min)}, {"max", vec(s.room_max)}, {"texture", texture_json(s.room_texture)}}},
         {"objects", objects},
         {"camera_path",
          {{"kind", enum_name(p.kind, kPaths)},
           {"position", vec(p.position)},
           {"velocity", vec(p.velocity)},
           {"yaw", p.yaw},
           {"yaw_rate", p.yaw_rate},
           {"target", vec(p.target)},
           {"orbit_radius", p.orbit_radius},
           {"orbit_rate", p.orbit_rate},
           {"orbit_phase", p.orbit_phase}}},
         {"frames", s.frames},
         {"camera",
          {{"fx", s.cam.fx}, {"fy", s.cam.fy}, {"cx", s.cam.cx}, {"cy", s.cam.cy},
           {"width", s.cam.width}, {"height", s.cam.height}}},
         {"seed", s.seed},
         {"depth_noise_sigma", s.depth_noise_sigma},
         {"light_dir", vec(s.light_dir)},
         {"ambient", s.ambient}};
}

void from_json(const json& j, SceneSpec& s) {
    try {
        s = SceneSpec{};
        if (j.contains("room")) {
            const auto& r = j.at("room");
            if (r.contains("min")) s.room_min = vec(r.at("min"));
            if (r.contains("max")) s.room_max = vec(r.at("max"));
            if (r.contains("texture")) s.room_texture = texture_from(r.at("texture"));
        }
        if (j.contains("objects")) {
            for (const auto& oj : j.at("objects")) {
                ObjectSpec o;
                if (oj.contains("shape")) o.shape = parse_enum(oj.at("shape"), kShapes, "shape");
                if (oj.contains("size")) o.size = oj.at("size").get<double>();
                if (oj.contains("texture")) o.texture = texture_from(oj.at("texture"));
                if (oj.contains("trajectory")) {
                    const auto& tj = oj.at("trajectory");
                    auto& tr = o.trajectory;
                    if (tj.contains("kind")) tr.kind = parse_enum(tj.at("kind"), kTrajKinds, "trajectory");
                    if (tj.contains("start")) tr.start = vec(tj.at("start"));
                    if (tj.contains("velocity")) tr.velocity = vec(tj.at("velocity"));
                    if (tj.contains("center")) tr.center = vec(tj.at("center"));
                    if (tj.contains("radius")) tr.radius = tj.at("radius").get<double>();
                    if (tj.contains("angular_rate")) tr.angular_rate = tj.at("angular_rate").get<double>();
                    if (tj.contains("phase")) tr.phase = tj.at("phase").get<double>();
                    if (tj.contains("coeffs")) {
                        const auto& cj = tj.at("coeffs");
                        if (!cj.is_array() || cj.size() > 4)
                            throw SpecValidation("cubic trajectory takes at most 4 coefficients");
                        for (std::size_t i = 0; i < cj.size(); ++i) tr.coeffs[i] = vec(cj[i]);
                    }
                }
                s.objects.push_back(o);
            }
        }
        if (j.contains("camera_path")) {
            const auto& pj = j.at("camera_path");
            auto& p = s.camera_path;
            if (pj.contains("kind")) p.kind = parse_enum(pj.at("kind"), kPaths, "camera path");
            if (pj.contains("position")) p.position = vec(pj.at("position"));
            if (pj.contains("velocity")) p.velocity = vec(pj.at("velocity"));
            if (pj.contains("yaw")) p.yaw = pj.at("yaw").get<double>();
            if (pj.contains("yaw_rate")) p.yaw_rate = pj.at("yaw_rate").get<double>();
            if (pj.contains("target")) p.target = vec(pj.at("target"));
            if (pj.contains("orbit_radius")) p.orbit_radius = pj.at("orbit_radius").get<double>();
            if (pj.contains("orbit_rate")) p.orbit_rate = pj.at("orbit_rate").get<double>();
            if (pj.contains("orbit_phase")) p.orbit_phase = pj.at("orbit_phase").get<double>();
        }
        if (j.contains("frames")) s.frames = j.at("frames").get<int>();
        if (j.contains("camera")) {
            const auto& cj = j.at("camera");
            s.cam.fx = cj.at("fx").get<double>();
            s.cam.fy = cj.at("fy").get<double>();
            s.cam.cx = cj.at("cx").get<double>();
            s.cam.cy = cj.at("cy").get<double>();
            s.cam.width = cj.at("width").get<int>();
            s.cam.height = cj.at("height").get<int>();
        }
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("depth_noise_sigma")) s.depth_noise_sigma = j.at("depth_noise_sigma").get<double>();
        if (j.contains("light_dir")) s.light_dir = vec(j.at("light_dir"));
        if (j.contains("ambient")) s.ambient = j.at("ambient").get<double>();
    } catch (const json::exception& e) {
        throw SpecValidation(std::string("malformed scene spec: ") + e.what());
    }
}

}  // namespace dynagmap
