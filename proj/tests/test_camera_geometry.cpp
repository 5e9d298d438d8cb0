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
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "frozen_values.h"
#include "gbpba/camera_geometry.h"
#include "gbpba/dense_oracle.h"

namespace gbpba {
namespace {

Pose frozen_pose() {
  Vec6 v;
  for (int i = 0; i < 6; ++i) v[i] = frozen::kPose[i];
  return Pose::from_vector(v);
}

Vec3 frozen_landmark() { return Vec3(frozen::kLandmark[0], frozen::kLandmark[1], frozen::kLandmark[2]); }

Intrinsics frozen_intrinsics() {
  return {frozen::kIntrinsics[0], frozen::kIntrinsics[1], frozen::kIntrinsics[2],
          frozen::kIntrinsics[3]};
}

TEST(CameraGeometry, RotationMatchesFrozen) {
  const Mat3 r = rotation_matrix(frozen_pose().rotation);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(r(i, j), frozen::kRotation[i][j], 1e-14);
  }
}

TEST(CameraGeometry, ProjectionMatchesFrozen) {
  const Vec2 px = project(frozen_pose(), frozen_landmark(), frozen_intrinsics());
  EXPECT_NEAR(px.x(), frozen::kPixel[0], 1e-10);
  EXPECT_NEAR(px.y(), frozen::kPixel[1], 1e-10);
}

TEST(CameraGeometry, JacobianMatchesFrozen) {
  const Mat29 j = measurement_jacobian(frozen_pose(), frozen_landmark(), frozen_intrinsics());
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 9; ++c) {
      EXPECT_NEAR(j(r, c), frozen::kJacobian[r][c], 1e-9 * (1 + std::abs(frozen::kJacobian[r][c])))
          << "entry " << r << "," << c;
    }
  }
}

TEST(CameraGeometry, IdentityPoseProjectsPinhole) {
  const Intrinsics k{100.0, 200.0, 10.0, 20.0};
  const Vec2 px = project(Pose{}, Vec3(1.0, 2.0, 4.0), k);
  EXPECT_DOUBLE_EQ(px.x(), 35.0);
  EXPECT_DOUBLE_EQ(px.y(), 120.0);
}

TEST(CameraGeometry, BehindCamera) {
  const Intrinsics k{100.0, 100.0, 0.0, 0.0};
  EXPECT_THROW(project(Pose{}, Vec3(0.0, 0.0, -1.0), k), BehindCamera);
  EXPECT_THROW(measurement_jacobian(Pose{}, Vec3(0.0, 0.0, 0.0), k), BehindCamera);
  EXPECT_FALSE(try_project(Pose{}, Vec3(1.0, 0.0, 0.0), k).has_value());
  try {
    project(Pose{}, Vec3(0.0, 0.0, -2.0), k);
  } catch (const BehindCamera& e) {
    EXPECT_DOUBLE_EQ(e.depth(), -2.0);
  }
}

TEST(CameraGeometry, RotationIsOrthonormal) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    const Mat3 r = rotation_matrix(Vec3(u(rng), u(rng), u(rng)));
    EXPECT_LT((r * r.transpose() - Mat3::Identity()).norm(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
  }
  EXPECT_TRUE(rotation_matrix(Vec3::Zero()).isIdentity());
  EXPECT_TRUE(rotation_matrix(Vec3(1e-12, 0, 0)).isApprox(Mat3::Identity()));
}

TEST(CameraGeometry, LogInvertsExp) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int i = 0; i < 100; ++i) {
    const Vec3 w(u(rng), u(rng), u(rng));
    EXPECT_LT((log_rotation(rotation_matrix(w)) - w).norm(), 1e-9);
  }
}

TEST(CameraGeometry, CanonicalAngleAxisKeepsRotation) {
  const Vec3 axis = Vec3(1.0, 2.0, -1.0).normalized();
  for (double theta : {0.5, 3.0, 4.0, 7.0, 13.0}) {
    const Vec3 w = theta * axis;
    const Vec3 c = canonicalize_angle_axis(w);
    EXPECT_LE(c.norm(), std::numbers::pi + 1e-12);
    EXPECT_LT((rotation_matrix(c) - rotation_matrix(w)).norm(), 1e-12);
  }
}

TEST(CameraGeometry, PoseVectorRoundTrip) {
  Vec6 v;
  v << 0.1, 0.2, 0.3, 1.0, 2.0, 3.0;
  EXPECT_EQ(Pose::from_vector(v).to_vector(), v);
}

TEST(CameraGeometry, CameraCentreMapsToOrigin) {
  const Pose p = frozen_pose();
  EXPECT_LT(to_camera(p, camera_center(p)).norm(), 1e-14);
}

TEST(CameraGeometry, BearingPointsAtPixel) {
  const Intrinsics k = frozen_intrinsics();
  const Vec2 px(400.0, 100.0);
  const Vec3 b = back_project_bearing(px, k);
  EXPECT_NEAR(b.norm(), 1.0, 1e-15);
  const Vec2 re = project(Pose{}, 3.0 * b, k);
  EXPECT_LT((re - px).norm(), 1e-10);
}

TEST(CameraGeometry, RetractIsAdditive) {
  Vec9 s = Vec9::Zero();
  Vec9 d;
  d << 0.1, 0, 0, 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(retract(s, d), d);
}

TEST(CameraGeometry, RandomJacobiansAgainstFiniteDifferences) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Intrinsics k{450.0, 460.0, 320.0, 240.0};
  for (int i = 0; i < 100; ++i) {
    const Pose pose{Vec3(u(rng), u(rng), u(rng)) * 0.8, Vec3(u(rng), u(rng), u(rng)) * 0.5};
    const Vec3 pc(u(rng), u(rng), 2.0 + u(rng));
    const Vec3 l = rotation_matrix(pose.rotation).transpose() * (pc - pose.translation);
    const Mat29 a = measurement_jacobian(pose, l, k);
    const Mat29 n = finite_diff_measurement_jacobian(pose, l, k);
    EXPECT_LT(((a - n).cwiseAbs().array() / n.cwiseAbs().array().max(1.0)).maxCoeff(), 1e-5);
  }
}

}  // namespace
}  // namespace gbpba
