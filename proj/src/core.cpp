#include "dynagmap/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dynagmap/errors.hpp"

namespace dynagmap {

namespace {

constexpr double kShC1 = 0.4886025119029199;
constexpr std::array<double, 5> kShC2 = {1.0925484305920792, -1.0925484305920792,
                                         0.31539156525252005, -1.0925484305920792,
                                         0.5462742152960396};
constexpr std::array<double, 7> kShC3 = {-0.5900435899266435, 2.890611442640554,
                                         -0.4570457994644658, 0.3731763325901154,
                                         -0.4570457994644658, 1.445305721320277,
                                         -0.5900435899266435};

bool finite(const Vec3& v) { return v.allFinite(); }

}  // namespace

void CameraModel::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidParameter("camera focal lengths must be positive");
    if (width <= 0 || height <= 0) throw InvalidParameter("camera image size must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
        throw InvalidParameter("principal point outside the image");
}

void Pose::validate() const {
    if (!rotation.coeffs().allFinite() || !finite(translation))
        throw InvalidParameter("pose has non-finite components");
    if (std::abs(rotation.norm() - 1.0) > 1e-9)
        throw InvalidParameter("pose quaternion is not unit length");
}

Pose Pose::inverse() const {
    Pose inv;
    inv.rotation = rotation.conjugate();
    inv.translation = -(inv.rotation * translation);
    return inv;
}

Pose Pose::compose(const Pose& other) const {
    Pose out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
}

Pose relative_pose(const Pose& to, const Pose& from) { return to.inverse().compose(from); }

void FrameBundle::validate(const CameraModel& cam) const {
    if (!rgb.same_shape(cam.width, cam.height) || rgb.channels() != 3)
        throw ShapeError("rgb image does not match the camera size");
    if (!depth.same_shape(cam.width, cam.height) || depth.channels() != 1)
        throw ShapeError("depth image does not match the camera size");
    for (double d : depth.data())
        if (!(d >= 0.0)) throw InvalidParameter("depth must be non-negative");
    if (flow_back && (!flow_back->same_shape(cam.width, cam.height) || flow_back->channels() != 2))
        throw ShapeError("flow image does not match the camera size");
    if (motion_mask && !motion_mask->same_shape(cam.width, cam.height))
        throw ShapeError("motion mask does not match the camera size");
}

void ManageConfig::validate() const {
    if (!(lambda_d >= 0.0)) throw ConfigError("lambda_d must be >= 0");
    if (!(lambda_alpha > 0.0 && lambda_alpha < 1.0)) throw ConfigError("lambda_alpha must be in (0,1)");
    if (dyna_budget < 1) throw ConfigError("dyna_budget must be >= 1");
    if (iters_per_frame < 1) throw ConfigError("iters_per_frame must be >= 1");
    if (window_K < 0) throw ConfigError("window_K must be >= 0");
    if (keyframe_stride < 1) throw ConfigError("keyframe_stride must be >= 1");
    if (sh_degree != 0 && sh_degree != 1 && sh_degree != 3)
        throw ConfigError("sh_degree must be 0, 1 or 3");
    if (dyna_longevity_W < 0 || static_unseen_W < 1)
        throw ConfigError("longevity windows must be positive");
    if (!(motion_threshold_px >= 0.0)) throw ConfigError("motion_threshold_px must be >= 0");
    if (!(scene_extent > 0.0)) throw ConfigError("scene_extent must be > 0");
    if (!(depth_weight >= 0.0)) throw ConfigError("depth_weight must be >= 0");
}

ActivatedScale activate_scale(const Vec3& log_scale) {
    // scalar exp per axis: packet exp can differ by an ulp between lanes
    ActivatedScale out{Vec3(std::exp(log_scale[0]), std::exp(log_scale[1]), std::exp(log_scale[2])), 0};
    for (int k = 1; k < 3; ++k)
        if (out.scale[k] <= out.scale[out.flattened_axis]) out.flattened_axis = k;
    out.scale[out.flattened_axis] = kFlattenEps;
    return out;
}

Mat3 build_covariance(const Quat& rotation, const Vec3& log_scale) {
    if (!rotation.coeffs().allFinite() || !finite(log_scale))
        throw InvalidParameter("build_covariance: non-finite input");
    const Mat3 r = rotation.normalized().toRotationMatrix();
    const Vec3 s = activate_scale(log_scale).scale;
    const Mat3 m = r * s.asDiagonal();
    Mat3 sigma = m * m.transpose();
    // exact symmetry
    sigma(1, 0) = sigma(0, 1);
    sigma(2, 0) = sigma(0, 2);
    sigma(2, 1) = sigma(1, 2);
    return sigma;
}

int sh_degree_from_basis(int basis) {
    switch (basis) {
        case 1: return 0;
        case 4: return 1;
        case 9: return 2;
        case 16: return 3;
        default: throw ShapeError("unsupported SH basis count " + std::to_string(basis));
    }
}

void sh_basis(const Vec3& dir, int degree, std::span<double> values,
              Eigen::Matrix<double, 3, 16>* jacobian) {
    const int n = sh_basis_count(degree);
    if (degree < 0 || degree > 3 || static_cast<int>(values.size()) < n)
        throw ShapeError("sh_basis: bad degree or output size");
    const double x = dir.x(), y = dir.y(), z = dir.z();
    if (jacobian) jacobian->setZero();
    auto set = [&](int b, double v, double dx, double dy, double dz) {
        values[b] = v;
        if (jacobian) jacobian->col(b) << dx, dy, dz;
    };
    set(0, kShC0, 0, 0, 0);
    if (degree < 1) return;
    set(1, -kShC1 * y, 0, -kShC1, 0);
    set(2, kShC1 * z, 0, 0, kShC1);
    set(3, -kShC1 * x, -kShC1, 0, 0);
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    set(4, kShC2[0] * x * y, kShC2[0] * y, kShC2[0] * x, 0);
    set(5, kShC2[1] * y * z, 0, kShC2[1] * z, kShC2[1] * y);
    set(6, kShC2[2] * (2 * zz - xx - yy), -2 * kShC2[2] * x, -2 * kShC2[2] * y, 4 * kShC2[2] * z);
    set(7, kShC2[3] * x * z, kShC2[3] * z, 0, kShC2[3] * x);
    set(8, kShC2[4] * (xx - yy), 2 * kShC2[4] * x, -2 * kShC2[4] * y, 0);
    if (degree < 3) return;
    set(9, kShC3[0] * y * (3 * xx - yy), kShC3[0] * 6 * x * y, kShC3[0] * (3 * xx - 3 * yy), 0);
    set(10, kShC3[1] * x * y * z, kShC3[1] * y * z, kShC3[1] * x * z, kShC3[1] * x * y);
    set(11, kShC3[2] * y * (4 * zz - xx - yy), kShC3[2] * (-2 * x * y),
        kShC3[2] * (4 * zz - xx - 3 * yy), kShC3[2] * 8 * y * z);
    set(12, kShC3[3] * z * (2 * zz - 3 * xx - 3 * yy), kShC3[3] * (-6 * x * z),
        kShC3[3] * (-6 * y * z), kShC3[3] * (6 * zz - 3 * xx - 3 * yy));
    set(13, kShC3[4] * x * (4 * zz - xx - yy), kShC3[4] * (4 * zz - 3 * xx - yy),
        kShC3[4] * (-2 * x * y), kShC3[4] * 8 * x * z);
    set(14, kShC3[5] * z * (xx - yy), kShC3[5] * 2 * x * z, kShC3[5] * (-2 * y * z),
        kShC3[5] * (xx - yy));
    set(15, kShC3[6] * x * (xx - 3 * yy), kShC3[6] * (3 * xx - 3 * yy), kShC3[6] * (-6 * x * y), 0);
}

Vec3 eval_sh(std::span<const double> sh, const Vec3& view_dir, int degree) {
    const int n = sh_basis_count(degree);
    if (degree < 0 || degree > 3 || static_cast<int>(sh.size()) != 3 * n)
        throw ShapeError("eval_sh: coefficient count does not match degree");
    std::array<double, 16> basis{};
    sh_basis(view_dir, degree, basis);
    Vec3 rgb;
    for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int b = 0; b < n; ++b) acc += basis[b] * sh[c * n + b];
        rgb[c] = std::clamp(acc + 0.5, 0.0, 1.0);
    }
    return rgb;
}

Eigen::Vector4d rotation_gradient_to_quat(const Quat& q, const Mat3& g) {
    const double norm = q.norm();
    const Quat u = q.normalized();
    const double w = u.w(), x = u.x(), y = u.y(), z = u.z();
    // (w, x, y, z) ordering
    Eigen::Vector4d d;
    d[0] = 2 * (z * (g(1, 0) - g(0, 1)) + y * (g(0, 2) - g(2, 0)) + x * (g(2, 1) - g(1, 2)));
    d[1] = 2 * (y * (g(1, 0) + g(0, 1)) + z * (g(2, 0) + g(0, 2)) + w * (g(2, 1) - g(1, 2))) -
           4 * x * (g(1, 1) + g(2, 2));
    d[2] = 2 * (x * (g(1, 0) + g(0, 1)) + w * (g(0, 2) - g(2, 0)) + z * (g(2, 1) + g(1, 2))) -
           4 * y * (g(0, 0) + g(2, 2));
    d[3] = 2 * (w * (g(1, 0) - g(0, 1)) + x * (g(2, 0) + g(0, 2)) + y * (g(2, 1) + g(1, 2))) -
           4 * z * (g(0, 0) + g(1, 1));
    const Eigen::Vector4d uh(w, x, y, z);
    return (d - uh * uh.dot(d)) / norm;
}

}  // namespace dynagmap
