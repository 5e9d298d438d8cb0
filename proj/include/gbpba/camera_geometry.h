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
#pragma once

#include <optional>
#include <stdexcept>

#include "gbpba/info_gaussian.h"

namespace gbpba {

using Vec2 = Vec<2>;
using Vec3 = Vec<3>;
using Vec6 = Vec<6>;
using Vec9 = Vec<9>;
using Mat3 = Mat<3, 3>;
using Mat29 = Mat<2, 9>;

/// Points closer to the image plane than this are treated as behind the camera.
inline constexpr double kDepthEpsilon = 1e-6;

class BehindCamera : public std::runtime_error {
 public:
  explicit BehindCamera(double depth)
      : std::runtime_error("point is behind the camera (depth " +
                           std::to_string(depth) + ")"),
        depth_(depth) {}
  double depth() const { return depth_; }

 private:
  double depth_;
};

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  bool valid() const { return fx > 0.0 && fy > 0.0; }
  bool operator==(const Intrinsics&) const = default;
};

/// World-to-camera transform: a point l in the world has camera coordinates
/// p = R(rotation) * l + translation. The rotation is an angle-axis vector
/// whose magnitude is kept in [0, pi].
struct Pose {
  Vec3 rotation = Vec3::Zero();
  Vec3 translation = Vec3::Zero();

  Vec6 to_vector() const;
  static Pose from_vector(const Vec6& v);
  bool operator==(const Pose& o) const {
    return rotation == o.rotation && translation == o.translation;
  }
};

Mat3 skew(const Vec3& v);
Mat3 rotation_matrix(const Vec3& angle_axis);
/// Inverse of rotation_matrix; returns the canonical angle-axis.
Vec3 log_rotation(const Mat3& r);
/// Wraps the angle-axis magnitude into [0, pi], flipping the axis when needed.
Vec3 canonicalize_angle_axis(const Vec3& angle_axis);
/// d(R(w) p)/dw = -[R(w) p]x * left_jacobian(w)
Mat3 left_jacobian(const Vec3& angle_axis);

Vec3 to_camera(const Pose& pose, const Vec3& landmark);

/// Pinhole projection h(x, l); throws BehindCamera.
Vec2 project(const Pose& pose, const Vec3& landmark, const Intrinsics& k);
std::optional<Vec2> try_project(const Pose& pose, const Vec3& landmark,
                                const Intrinsics& k);

/// 2x9 Jacobian of h at (pose, landmark). Columns 0-2 rotation, 3-5
/// translation, 6-8 landmark. Throws BehindCamera.
Mat29 measurement_jacobian(const Pose& pose, const Vec3& landmark,
                           const Intrinsics& k);

struct Linearization {
  Vec2 prediction;
  Mat29 jacobian;
};
std::optional<Linearization> try_linearize(const Pose& pose,
                                           const Vec3& landmark,
                                           const Intrinsics& k);

/// Additive update of a stacked (pose, landmark) state followed by
/// angle-axis canonicalisation.
Vec9 retract(const Vec9& state, const Vec9& delta);
Pose retract(const Pose& pose, const Vec6& delta);

/// Unit-norm bearing of pixel (u, v) in the camera frame.
Vec3 back_project_bearing(const Vec2& pixel, const Intrinsics& k);

/// Camera centre in world coordinates, -R^T t.
Vec3 camera_center(const Pose& pose);

}  // namespace gbpba
