#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "dynagmap/image.hpp"

namespace dynagmap {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// Pinhole intrinsics. Pixel (u, v) is sampled at coordinates (u, v).
struct CameraModel {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    void validate() const;

    Vec2 project(const Vec3& p_cam) const {
        return {fx * p_cam.x() / p_cam.z() + cx, fy * p_cam.y() / p_cam.z() + cy};
    }
    /// Camera-frame point at depth d (camera z) along the ray through (u, v).
    Vec3 backproject(double u, double v, double d) const {
        return {d * (u - cx) / fx, d * (v - cy) / fy, d};
    }

    friend bool operator==(const CameraModel&, const CameraModel&) = default;
};

/// Rigid transform world <- camera.
struct Pose {
    Quat rotation = Quat::Identity();
    Vec3 translation = Vec3::Zero();

    void validate() const;

    Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
    Vec3 to_world(const Vec3& p_cam) const { return rotation * p_cam + translation; }
    Vec3 to_camera(const Vec3& p_world) const {
        return rotation.conjugate() * (p_world - translation);
    }
    Vec3 center() const { return translation; }
    Pose inverse() const;
    /// (*this) * other, i.e. apply other first.
    Pose compose(const Pose& other) const;
};

/// Relative transform mapping frame-`from` camera coordinates into frame-`to`
/// camera coordinates.
Pose relative_pose(const Pose& to, const Pose& from);

/// One cubic Hermite segment. The segment spans frames
/// [t_anchor - gap, t_anchor]; velocities are in meters per frame.
struct MotionSpline {
    Vec3 m_minus = Vec3::Zero();
    Vec3 m_plus = Vec3::Zero();
    Vec3 v_minus = Vec3::Zero();
    Vec3 v_plus = Vec3::Zero();
    std::int64_t t_anchor = 1;
    int gap = 1;
};

enum class GaussianKind { static_kind, dynamic_kind };

struct Gaussian {
    std::uint64_t id = 0;
    GaussianKind kind = GaussianKind::static_kind;
    Vec3 mean = Vec3::Zero();
    Quat rotation = Quat::Identity();
    Vec3 log_scale = Vec3::Zero();
    double opacity_logit = 0.0;
    /// Channel-major: sh[c * basis + b].
    std::vector<double> sh;
    std::optional<MotionSpline> spline;
    std::optional<Vec3> v_prev_plus;
    std::int64_t birth_frame = 0;
    std::int64_t last_observed_frame = 0;

    bool is_dynamic() const { return kind == GaussianKind::dynamic_kind; }
    int sh_basis() const { return static_cast<int>(sh.size() / 3); }
};

enum class FlowMode { paper_literal, exact_correspondence };
enum class OptimizerKind { adam, sgd };

struct LearningRates {
    double geometry = 0.0;    // mean, rotation, log_scale
    double appearance = 0.0;  // opacity, sh
};

struct ManageConfig {
    double lambda_d = 0.05;
    double lambda_alpha = 0.3;
    int dyna_longevity_W = 10;
    int static_unseen_W = 30;
    std::int64_t dyna_budget = 50000;
    LearningRates lr_static{1e-2, 5e-2};
    LearningRates lr_dynamic{1e-2, 1e-1};
    int iters_per_frame = 50;
    int window_K = 3;
    int keyframe_stride = 2;
    int sh_degree = 1;
    FlowMode flow_mode = FlowMode::exact_correspondence;
    double motion_threshold_px = 1.0;
    double depth_weight = 0.5;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::uint64_t seed = 0;
    double scene_extent = 5.0;
    bool dynamic_enabled = true;

    void validate() const;
};

struct GaussianMap {
    std::vector<Gaussian> static_set;
    std::vector<Gaussian> dynamic_set;
    std::int64_t frame_index = 0;
    ManageConfig config;
    std::uint64_t next_id = 1;

    std::uint64_t allocate_id() { return next_id++; }
    std::size_t size() const { return static_set.size() + dynamic_set.size(); }
    bool empty() const { return size() == 0; }
};

struct FrameBundle {
    RgbImage rgb;
    DepthImage depth;
    Pose pose;
    std::int64_t timestamp = 0;
    std::optional<FlowImage> flow_back;
    std::optional<MaskImage> motion_mask;

    int width() const { return rgb.width(); }
    int height() const { return rgb.height(); }
    void validate(const CameraModel& cam) const;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline int sh_basis_count(int degree) { return (degree + 1) * (degree + 1); }

}  // namespace dynagmap
