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

#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gbpba/camera_geometry.h"
#include "gbpba/info_gaussian.h"
#include "gbpba/problem.h"

namespace gbpba {

using Mat2 = Mat<2, 2>;
using Mat6 = Mat<6, 6>;
using Mat9 = Mat<9, 9>;

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Counters for conditions that are reported instead of thrown.
struct Diagnostics {
  int behind_camera = 0;
  int fallback_priors = 0;
  int duplicate_measurements = 0;
  int singular_messages = 0;
  int singular_beliefs = 0;
  int stale_relinearisations = 0;
  int psd_violations = 0;

  Diagnostics& operator+=(const Diagnostics& o);
};

struct GraphOptions {
  /// Huber threshold in Mahalanobis units; <= 0 or infinity disables it.
  double huber_nsigma = 2.0;
  /// Prior strength after weakening, relative to the generated strength.
  double prior_final_scale = 0.01;
  /// Iterations over which priors weaken geometrically.
  int prior_weaken_iters = 10;
  /// Isotropic strength used for variables with no measurement.
  double fallback_prior_strength = 1.0;
};

/// Variable node of dimension Dim: 6 for keyframes (angle-axis, translation),
/// 3 for landmarks.
template <int Dim>
struct VariableNode {
  int id = 0;
  Vec<Dim> state = Vec<Dim>::Zero();
  InfoGaussianT<Dim> belief;
  Vec<Dim> prior_mean = Vec<Dim>::Zero();
  /// Diagonal of the prior information at full (unweakened) strength.
  Vec<Dim> prior_strength = Vec<Dim>::Zero();
  bool prior_pending = true;
  bool prior_fallback = false;
  /// Set once the belief has been invertible and state tracks its mean.
  bool belief_valid = false;
  /// Adjacent measurement factor ids, ascending.
  std::vector<int> factors;
};

using KeyframeNode = VariableNode<6>;
using LandmarkNode = VariableNode<3>;

/// Pairwise reprojection factor between one keyframe and one landmark.
/// Blocks of the 9-dim joint are ordered (keyframe, landmark).
struct MeasurementFactor {
  int id = 0;
  int keyframe = 0;
  int landmark = 0;
  Vec2 z = Vec2::Zero();
  /// Sigma_M^-1
  Mat2 noise_information = Mat2::Identity();
  double huber_nsigma = 2.0;

  Vec9 lin_point = Vec9::Zero();
  Mat29 jacobian = Mat29::Zero();
  Vec2 lin_residual = Vec2::Zero();
  double huber_weight = 1.0;
  /// (eta_km, lambda_km) of the linearised factor.
  Gaussian9 factor;
  bool linearised = false;
  int iters_since_relin = 0;

  /// Last transmitted factor-to-variable messages.
  Gaussian6 msg_to_keyframe;
  Gaussian3 msg_to_landmark;
  /// Variable-to-factor messages recovered as belief / msg_to_variable.
  Gaussian6 msg_from_keyframe;
  Gaussian3 msg_from_landmark;

  bool huber_enabled() const {
    return huber_nsigma > 0.0 && std::isfinite(huber_nsigma);
  }
};

/// Huber weight that rescales Sigma_M so the Gaussian exponent matches the
/// linear branch of the loss: 1 inside the threshold, 2N/M - N^2/M^2 beyond.
double huber_weight(double mahalanobis, double nsigma);

/// Mahalanobis distance ||r||_Sigma.
double mahalanobis(const Vec2& residual, const Mat2& information);

/// Linearises the factor at (keyframe_state, landmark_state), including the
/// Huber weight of the residual there. Returns false and leaves the factor
/// untouched when the landmark is behind the camera.
bool linearize_factor(MeasurementFactor& f, const Vec6& keyframe_state,
                      const Vec3& landmark_state, const Intrinsics& k);

/// The bundle-adjustment factor graph: keyframe and landmark variables, one
/// prior per variable and one measurement factor per observation.
class FactorGraph {
 public:
  FactorGraph() = default;
  FactorGraph(const Intrinsics& intrinsics, GraphOptions options);

  /// Builds the graph, linearises every factor at the initial states and
  /// generates priors. Throws GraphError on dangling ids.
  static FactorGraph build(const ProblemSpec& problem,
                           const GraphOptions& options = {});

  int add_keyframe(const Pose& initial);
  /// SLAM helper: new keyframe initialised at the latest keyframe's estimate.
  int add_keyframe_at_latest();
  int add_landmark(const Vec3& initial);
  /// Adds a factor linearised at the current states. Duplicate
  /// (keyframe, landmark) pairs are accepted and counted.
  int add_measurement(int keyframe, int landmark, const Vec2& z, double sigma);
  int add_measurement(int keyframe, int landmark, const Vec2& z,
                      const Mat2& covariance);

  /// Generates priors for variables added since the last call.
  void generate_pending_priors();
  bool has_pending_priors() const;

  /// Prior scale at iteration t: final^(min(t, n) / n).
  double prior_scale(int iteration) const;
  double current_prior_scale() const { return prior_scale(iteration_); }
  template <int Dim>
  InfoGaussianT<Dim> prior_at(const VariableNode<Dim>& v, int iteration) const;

  const Intrinsics& intrinsics() const { return intrinsics_; }
  const GraphOptions& options() const { return options_; }
  void set_huber_nsigma(double nsigma);

  std::vector<KeyframeNode>& keyframes() { return keyframes_; }
  const std::vector<KeyframeNode>& keyframes() const { return keyframes_; }
  std::vector<LandmarkNode>& landmarks() { return landmarks_; }
  const std::vector<LandmarkNode>& landmarks() const { return landmarks_; }
  std::vector<MeasurementFactor>& factors() { return factors_; }
  const std::vector<MeasurementFactor>& factors() const { return factors_; }

  size_t variable_count() const { return keyframes_.size() + landmarks_.size(); }
  /// Measurement factors plus one prior factor per variable.
  size_t factor_node_count() const { return factors_.size() + variable_count(); }

  int iteration() const { return iteration_; }
  void advance_iteration() { ++iteration_; }

  Pose keyframe_pose(int id) const;
  /// Recomputes factor id's stacked (keyframe, landmark) current state.
  Vec9 stacked_state(const MeasurementFactor& f) const;

  Diagnostics& diagnostics() { return diagnostics_; }
  const Diagnostics& diagnostics() const { return diagnostics_; }

  /// Checks bipartite structure and adjacency bookkeeping.
  bool check_structure(std::string* why = nullptr) const;

 private:
  Intrinsics intrinsics_;
  GraphOptions options_;
  std::vector<KeyframeNode> keyframes_;
  std::vector<LandmarkNode> landmarks_;
  std::vector<MeasurementFactor> factors_;
  std::set<std::pair<int, int>> observed_pairs_;
  int iteration_ = 0;
  Diagnostics diagnostics_;
};

/// Bundle-adjustment objective at the current states: prior Mahalanobis terms at
/// the current prior strength plus (Huber-modified) measurement terms.
/// Behind-camera measurements use their stale linearisation residual.
double energy(const FactorGraph& graph, Diagnostics* diag = nullptr);

/// Sum of squared residuals of the linearised model at the current states,
/// using the frozen Huber weights. Equals energy() when every factor is
/// evaluated at its linearisation point.
double linearised_energy(const FactorGraph& graph);

/// Mean pixel distance between observations and projections. Behind-camera
/// measurements contribute kBehindCameraPenalty. If mask is non-empty only
/// measurements with mask[i] set are averaged.
inline constexpr double kBehindCameraPenalty = 1e6;
double average_reprojection_error(const FactorGraph& graph,
                                  const std::vector<bool>& mask = {},
                                  Diagnostics* diag = nullptr);

/// Per-measurement Mahalanobis distance at the current states (infinity when
/// behind the camera).
std::vector<double> current_mahalanobis(const FactorGraph& graph);

template <int Dim>
InfoGaussianT<Dim> FactorGraph::prior_at(const VariableNode<Dim>& v,
                                         int iteration) const {
  InfoGaussianT<Dim> p;
  if (v.prior_pending) return p;
  const Vec<Dim> diag = v.prior_strength * prior_scale(iteration);
  p.lambda = diag.asDiagonal();
  p.eta = diag.cwiseProduct(v.prior_mean);
  return p;
}

}  // namespace gbpba
