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

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gbpba/camera_geometry.h"

namespace gbpba {

struct KeyframeSpec {
  int id = 0;
  Pose initial;
  std::optional<Pose> ground_truth;
};

struct LandmarkSpec {
  int id = 0;
  Vec3 initial = Vec3::Zero();
  std::optional<Vec3> ground_truth;
};

struct MeasurementSpec {
  int keyframe = 0;
  int landmark = 0;
  Vec2 pixel = Vec2::Zero();
  /// Isotropic pixel standard deviation.
  double sigma = 1.0;
  /// Ground-truth label set by outlier injection.
  bool outlier = false;
};

/// A bundle-adjustment problem instance: fixed intrinsics, initial (and
/// optionally true) keyframe poses and landmark positions, and the
/// pre-associated observations. Ids are contiguous per kind and equal to the
/// index in their vector.
struct ProblemSpec {
  Intrinsics intrinsics;
  int image_width = 640;
  int image_height = 480;
  std::vector<KeyframeSpec> keyframes;
  std::vector<LandmarkSpec> landmarks;
  std::vector<MeasurementSpec> measurements;
  std::map<std::string, std::string> metadata;

  bool has_ground_truth() const;
  size_t outlier_count() const;
  bool operator==(const ProblemSpec& o) const;
};

}  // namespace gbpba
