/******************************************************************************
 * Copyright 2026 The gbpba Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *****************************************************************************/
#include "gbpba/camera_geometry.h"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>

namespace gbpba {

Vec6 Pose::to_vector() const {
  Vec6 v;
  v << rotation, translation;
  return v;
}

Pose Pose::from_vector(const Vec6& v) {
  return Pose{v.head<3>(), v.tail<3>()};
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),  //
      v.z(), 0.0, -v.x(),   //
      -v.y(), v.x(), 0.0;
  return m;
}

Mat3 rotation_matrix(const Vec3& angle_axis) {
  const double theta2 = angle_axis.squaredNorm();
  const Mat3 w = skew(angle_axis);
  double a, b;
  if (theta2 < 1e-10) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * w + b * w * w;
}

Vec3 log_rotation(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return canonicalize_angle_axis(aa.angle() * aa.axis());
}

Vec3 canonicalize_angle_axis(const Vec3& angle_axis) {
  constexpr double kPi = std::numbers::pi;
  const double theta = angle_axis.norm();
  if (theta <= kPi) return angle_axis;
  const Vec3 axis = angle_axis / theta;
  double wrapped = std::fmod(theta, 2.0 * kPi);
  if (wrapped > kPi) return -(2.0 * kPi - wrapped) * axis;
  return wrapped * axis;
}

Mat3 left_jacobian(const Vec3& angle_axis) {
  const double theta2 = angle_axis.squaredNorm();
  const Mat3 w = skew(angle_axis);
  double a, b;
  if (theta2 < 1e-10) {
    a = 0.5 - theta2 / 24.0;
    b = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = (1.0 - std::cos(theta)) / theta2;
    b = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Mat3::Identity() + a * w + b * w * w;
}

Vec3 to_camera(const Pose& pose, const Vec3& landmark) {
  return rotation_matrix(pose.rotation) * landmark + pose.translation;
}

std::optional<Vec2> try_project(const Pose& pose, const Vec3& landmark,
                                const Intrinsics& k) {
  const Vec3 p = to_camera(pose, landmark);
  if (!(p.z() > kDepthEpsilon)) return std::nullopt;
  return Vec2(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy);
}

Vec2 project(const Pose& pose, const Vec3& landmark, const Intrinsics& k) {
  const Vec3 p = to_camera(pose, landmark);
  if (!(p.z() > kDepthEpsilon)) throw BehindCamera(p.z());
  return Vec2(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy);
}

std::optional<Linearization> try_linearize(const Pose& pose,
                                           const Vec3& landmark,
                                           const Intrinsics& k) {
  const Mat3 r = rotation_matrix(pose.rotation);
  const Vec3 rl = r * landmark;
  const Vec3 p = rl + pose.translation;
  if (!(p.z() > kDepthEpsilon)) return std::nullopt;
  const double inv_z = 1.0 / p.z();

  Mat<2, 3> d_proj;
  d_proj << k.fx * inv_z, 0.0, -k.fx * p.x() * inv_z * inv_z,  //
      0.0, k.fy * inv_z, -k.fy * p.y() * inv_z * inv_z;

  Linearization lin;
  lin.prediction =
      Vec2(k.fx * p.x() * inv_z + k.cx, k.fy * p.y() * inv_z + k.cy);
  lin.jacobian.block<2, 3>(0, 0) =
      -d_proj * skew(rl) * left_jacobian(pose.rotation);
  lin.jacobian.block<2, 3>(0, 3) = d_proj;
  lin.jacobian.block<2, 3>(0, 6) = d_proj * r;
  return lin;
}

Mat29 measurement_jacobian(const Pose& pose, const Vec3& landmark,
                           const Intrinsics& k) {
  auto lin = try_linearize(pose, landmark, k);
  if (!lin) throw BehindCamera(to_camera(pose, landmark).z());
  return lin->jacobian;
}

Vec9 retract(const Vec9& state, const Vec9& delta) {
  Vec9 out = state + delta;
  out.head<3>() = canonicalize_angle_axis(out.head<3>());
  return out;
}

Pose retract(const Pose& pose, const Vec6& delta) {
  return Pose{canonicalize_angle_axis(pose.rotation + delta.head<3>()),
              pose.translation + delta.tail<3>()};
}

Vec3 back_project_bearing(const Vec2& pixel, const Intrinsics& k) {
  return Vec3((pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy, 1.0)
      .normalized();
}

Vec3 camera_center(const Pose& pose) {
  return -rotation_matrix(pose.rotation).transpose() * pose.translation;
}

}  // namespace gbpba
