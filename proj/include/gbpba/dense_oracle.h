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

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gbpba/factor_graph.h"

namespace gbpba {

class SingularSystem : public std::runtime_error {
 public:
  SingularSystem(const std::string& what, std::vector<std::string> blocks)
      : std::runtime_error(what), blocks_(std::move(blocks)) {}
  /// Variable blocks (e.g. "keyframe 3", "landmark 12") spanned by the null
  /// space.
  const std::vector<std::string>& blocks() const { return blocks_; }

 private:
  std::vector<std::string> blocks_;
};

class OracleTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The linearised joint in information form, stacked as all keyframes
/// (6 each) followed by all landmarks (3 each). The quadratic form
/// x^T lambda x - 2 eta^T x + constant equals linearised_energy().
struct DenseSystem {
  VecX eta;
  MatX lambda;
  double constant = 0.0;
  int num_keyframes = 0;
  int num_landmarks = 0;

  long keyframe_offset(int id) const { return 6L * id; }
  long landmark_offset(int id) const { return 6L * num_keyframes + 3L * id; }
  long dim() const { return eta.size(); }
  double quadratic_energy(const VecX& x) const;
};

struct AssembleOptions {
  bool include_priors = true;
  /// Restrict to these factor ids; empty means all.
  std::vector<int> factor_subset;
  /// Prior strength scale; negative means the graph's current scale.
  double prior_scale = -1.0;
};

DenseSystem assemble(const FactorGraph& graph, const AssembleOptions& opts = {});

/// Current states stacked in DenseSystem order.
VecX stacked_states(const FactorGraph& graph);

/// Solves lambda * mu = eta. Throws SingularSystem naming null-space blocks.
VecX map_solve(const DenseSystem& system);

struct VariableMarginal {
  VecX mean;
  MatX covariance;
};

/// Per-variable marginals by inverting lambda, keyframes first. Refuses
/// systems larger than max_dim.
std::vector<VariableMarginal> marginals(const DenseSystem& system,
                                        long max_dim = 600);

struct LmParams {
  int max_steps = 100;
  double initial_lambda = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  double max_lambda = 1e12;
  /// Stop once ARE drops below this; <= 0 runs to numerical convergence.
  double are_target = 1.5;
  bool huber = true;
  /// Number of initial steps that only update keyframes.
  int fix_landmarks_steps = 0;
  /// Stop when the relative cost decrease of an accepted step is below this.
  double function_tolerance = 1e-12;
};

struct LmReport {
  std::vector<Vec6> keyframes;
  std::vector<Vec3> landmarks;
  /// are_trace[0] is the initial ARE; one entry per step after that.
  std::vector<double> are_trace;
  std::vector<double> cost_trace;
  int steps = 0;
  int accepted_steps = 0;
  bool converged = false;
  bool failed = false;
};

/// Levenberg-Marquardt on the prior + reprojection objective with the
/// graph's priors at their final strength and (optionally) Huber
/// reweighting. Landmarks are eliminated with a dense Schur complement.
LmReport lm_solve(const FactorGraph& graph, const LmParams& params = {});

/// Objective minimised by lm_solve at the given states. A measurement whose
/// point is behind its camera adds the constant kBehindCameraPenalty.
double lm_objective(const FactorGraph& graph, const std::vector<Vec6>& keyframes,
                    const std::vector<Vec3>& landmarks, bool huber);

/// Writes LM states into the graph (beliefs are left untouched).
void apply_states(FactorGraph& graph, const LmReport& report);

/// Central differences, column by column.
MatX finite_diff_jacobian(const std::function<VecX(const VecX&)>& fn,
                          const VecX& point, double step);

/// Central-difference 2x9 Jacobian of the projection with respect to the
/// stacked (pose, landmark) vector. Throws BehindCamera if any perturbed
/// point leaves the front of the camera.
Mat29 finite_diff_measurement_jacobian(const Pose& pose, const Vec3& landmark,
                                       const Intrinsics& k, double step = 1e-6);

}  // namespace gbpba
