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

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "gbpba/problem.h"

namespace gbpba {

inline constexpr int kProblemFormatVersion = 1;

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class VersionMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Native line-oriented problem format; see docs/problem_format.md.
void save(const ProblemSpec& problem, std::ostream& out);
void save(const ProblemSpec& problem, const std::string& path);
std::string to_string(const ProblemSpec& problem);
ProblemSpec load(std::istream& in);
ProblemSpec load(const std::string& path);
ProblemSpec from_string(const std::string& text);

struct BalImportReport {
  ProblemSpec problem;
  std::vector<std::string> warnings;
};

/// Reads a Bundle-Adjustment-in-the-Large text file. Cameras become
/// keyframes (rotated from the format's -z viewing convention into ours),
/// points become landmarks; radial distortion is dropped with a warning and
/// the first camera's focal length is used for all cameras.
BalImportReport import_bal(std::istream& in);
BalImportReport import_bal(const std::string& path);

enum class TrajectoryShape { kArc, kLine };

struct SynthParams {
  int keyframes = 10;
  int landmarks = 100;
  TrajectoryShape trajectory = TrajectoryShape::kArc;
  /// Arc: radius around the scene centre; line: distance to the scene centre.
  double radius = 1.0;
  /// Arc: swept angle in degrees; line: trajectory length in metres.
  double extent = 90.0;
  /// Landmarks are drawn uniformly in [-h, h]^3 around the origin.
  double box_half_extent = 0.3;
  /// Landmarks further than this from a camera centre are not observed.
  double visibility_radius = 1.5;
  /// Standard deviation of the Gaussian noise added to each pixel.
  double pixel_noise = 1.0;
  /// Measurement sigma written to the problem (the solver's noise model).
  double measurement_sigma = 1.0;
  Intrinsics intrinsics{500.0, 500.0, 320.0, 240.0};
  int image_width = 640;
  int image_height = 480;
  std::uint64_t seed = 1;
};

/// Deterministic synthetic scene. Initial states equal ground truth; use
/// perturb() for a realistic initialisation. Landmarks seen fewer than
/// twice are dropped and ids compacted. Measurements are ordered by keyframe.
ProblemSpec synthesize(const SynthParams& params);

enum class LandmarkInit {
  /// Back-projected at 1 m range along the first observation's bearing.
  kUnitRange,
  /// Ground truth plus isotropic Gaussian noise.
  kGaussian,
};

struct PerturbParams {
  double keyframe_sigma = 0.07;
  LandmarkInit landmark_init = LandmarkInit::kUnitRange;
  double landmark_sigma = 0.5;
  std::uint64_t seed = 1;
};

/// Re-initialises keyframes (translation noise) and landmarks from ground
/// truth. Throws GenerationError without ground truth.
ProblemSpec perturb(const ProblemSpec& problem, const PerturbParams& params);

/// Landmark initialisation helper shared with incremental replay: the point
/// at `range` along the bearing of pixel as seen from pose.
Vec3 initialise_along_bearing(const Pose& pose, const Vec2& pixel,
                              const Intrinsics& k, double range = 1.0);

enum class OutlierMode { kReassign, kUniform };

/// Corrupts exactly round(fraction * N) measurements (minus skips, which are
/// counted in metadata "outliers_skipped") and labels them.
ProblemSpec inject_outliers(const ProblemSpec& problem, double fraction,
                            OutlierMode mode, std::uint64_t seed);

std::string to_string(OutlierMode mode);
OutlierMode parse_outlier_mode(const std::string& s);

}  // namespace gbpba
