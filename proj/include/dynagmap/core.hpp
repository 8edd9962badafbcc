#pragma once

#include <array>
#include <span>

#include "dynagmap/types.hpp"

namespace dynagmap {

/// Length of the axis that replaces the shortest principal axis.
inline constexpr double kFlattenEps = 1e-6;

inline constexpr double kShC0 = 0.28209479177387814;

struct ActivatedScale {
    Vec3 scale;          // exp(log_scale) with the flattened axis replaced
    int flattened_axis;  // index of the smallest axis (highest index on ties)
};

ActivatedScale activate_scale(const Vec3& log_scale);

/// Sigma = R diag(s^2) R^T where the smallest s is replaced by kFlattenEps.
/// The quaternion is normalized before use.
Mat3 build_covariance(const Quat& rotation, const Vec3& log_scale);

/// Real SH basis values at a unit direction. Fills sh_basis_count(degree)
/// entries of `values`; `jacobian`, when given, receives d(value_b)/d(dir) in
/// column b.
void sh_basis(const Vec3& dir, int degree, std::span<double> values,
              Eigen::Matrix<double, 3, 16>* jacobian = nullptr);

/// clamp(sum_b Y_b(dir) * sh_b + 0.5, 0, 1) per channel.
Vec3 eval_sh(std::span<const double> sh, const Vec3& view_dir, int degree);

int sh_degree_from_basis(int basis);

/// d(L)/d(q) given d(L)/d(R) for R = R(q / |q|).
Eigen::Vector4d rotation_gradient_to_quat(const Quat& q, const Mat3& dL_dR);

}  // namespace dynagmap
