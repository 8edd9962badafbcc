#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dynagmap/flow.hpp"
#include "dynagmap/types.hpp"

namespace dynagmap {

struct Texture {
    enum class Kind { solid, checker, gradient };
    Kind kind = Kind::checker;
    Vec3 color_a{0.8, 0.8, 0.8};
    Vec3 color_b{0.2, 0.2, 0.2};
    double period = 0.25;                 // checker cell size, meters
    Vec3 direction{1.0, 0.0, 0.0};        // gradient axis
    double offset = 0.0;                  // gradient: value 0 at this coordinate

    /// Albedo at a point expressed in the textured body's frame.
    Vec3 albedo(const Vec3& p) const;
};

struct Trajectory {
    enum class Kind { stationary, constant_velocity, circular, cubic };
    Kind kind = Kind::stationary;
    Vec3 start = Vec3::Zero();       // stationary / constant_velocity origin
    Vec3 velocity = Vec3::Zero();    // meters per frame
    Vec3 center = Vec3::Zero();      // circular, in the x-z plane
    double radius = 0.0;
    double angular_rate = 0.0;       // radians per frame
    double phase = 0.0;
    std::array<Vec3, 4> coeffs{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};  // c0 + c1 t + ...

    Vec3 position(double t) const;
    Vec3 velocity_at(double t) const;
};

struct ObjectSpec {
    enum class Shape { sphere, box };
    Shape shape = Shape::sphere;
    double size = 0.2;  // sphere radius or box half-extent, meters
    Texture texture;
    Trajectory trajectory;
};

struct CameraPath {
    enum class Kind { static_path, linear, orbit };
    Kind kind = Kind::static_path;
    Vec3 position = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();  // linear: meters per frame
    double yaw = 0.0;              // rotation about world y, radians
    double yaw_rate = 0.0;         // linear: radians per frame
    Vec3 target{0.0, 0.0, 2.0};    // orbit look-at point
    double orbit_radius = 1.0;
    double orbit_rate = 0.0;       // radians per frame
    double orbit_phase = 0.0;

    Pose pose(double t) const;
};

/// Room is an axis-aligned box seen from inside. World y points down, so an
/// identity camera looks along +z with image rows increasing downward.
struct SceneSpec {
    Vec3 room_min{-2.05, -1.55, -1.05};
    Vec3 room_max{2.05, 1.55, 4.05};
    Texture room_texture;
    std::vector<ObjectSpec> objects;
    CameraPath camera_path;
    int frames = 10;
    CameraModel cam{100.0, 100.0, 50.0, 50.0, 100, 100};
    std::uint64_t seed = 0;
    double depth_noise_sigma = 0.0;
    Vec3 light_dir{0.3, 0.8, 0.5};  // direction the light travels
    double ambient = 0.2;

    void validate() const;
};

void to_json(nlohmann::json& j, const SceneSpec& s);
void from_json(const nlohmann::json& j, SceneSpec& s);

struct Sequence {
    CameraModel cam;
    std::vector<FrameBundle> frames;
    /// object_positions[t][k]: world position of object k at frame t.
    std::vector<std::vector<Vec3>> object_positions;
};

struct RayHit {
    double depth = 0.0;  // camera z, 0 when nothing was hit
    int surface = -1;    // -1 none, 0 room, k+1 object k
    Vec3 world = Vec3::Zero();
    Vec3 normal = Vec3::Zero();
};

/// Primary ray through pixel (u, v) of the frame-t camera.
RayHit cast_pixel(const SceneSpec& spec, double t, double u, double v);

/// Frames with rgb, depth, pose, backward flow and motion mask.
Sequence generate_scene(const SceneSpec& spec);

/// Ground-truth flow from frame t back to frame t_ref, and the frame-t mask of
/// pixels showing a moving object. t == 0 gives zero flow.
std::pair<FlowImage, MaskImage> analytic_flow_and_mask(const SceneSpec& spec, std::int64_t t);
FlowImage analytic_flow(const SceneSpec& spec, std::int64_t t, std::int64_t t_ref);

/// Which surface each pixel of frame t sees (see RayHit::surface).
Image<int> surface_ids(const SceneSpec& spec, std::int64_t t);

/// Exact depth of frame t at sub-pixel positions, by ray casting.
DepthSampler analytic_depth_sampler(const SceneSpec& spec, std::int64_t t);

/// Scenes used by the tests, the acceptance suite and the examples.
SceneSpec moving_sphere_scene();                 // 120x90, 60 frames, circular motion
SceneSpec static_room_scene();                   // 64x64, 20 frames, no objects
SceneSpec linear_sphere_scene(int width, int height, int frames, const Vec3& velocity,
                              const CameraPath& path);

}  // namespace dynagmap
