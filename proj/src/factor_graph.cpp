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
#include "gbpba/factor_graph.h"

#include <algorithm>
#include <cmath>

namespace gbpba {

Diagnostics& Diagnostics::operator+=(const Diagnostics& o) {
  behind_camera += o.behind_camera;
  fallback_priors += o.fallback_priors;
  duplicate_measurements += o.duplicate_measurements;
  singular_messages += o.singular_messages;
  singular_beliefs += o.singular_beliefs;
  stale_relinearisations += o.stale_relinearisations;
  psd_violations += o.psd_violations;
  return *this;
}

double huber_weight(double mahalanobis, double nsigma) {
  if (!(mahalanobis > nsigma)) return 1.0;
  const double ratio = nsigma / mahalanobis;
  return 2.0 * ratio - ratio * ratio;
}

double mahalanobis(const Vec2& residual, const Mat2& information) {
  return std::sqrt(std::max(0.0, residual.dot(information * residual)));
}

bool linearize_factor(MeasurementFactor& f, const Vec6& keyframe_state,
                      const Vec3& landmark_state, const Intrinsics& k) {
  const auto lin = try_linearize(Pose::from_vector(keyframe_state),
                                 landmark_state, k);
  if (!lin) return false;
  Vec9 x0;
  x0 << keyframe_state, landmark_state;
  const Vec2 residual = f.z - lin->prediction;
  const double w =
      f.huber_enabled()
          ? huber_weight(mahalanobis(residual, f.noise_information),
                         f.huber_nsigma)
          : 1.0;
  const Mat2 weighted = w * f.noise_information;
  const Mat<9, 2> jt_w = lin->jacobian.transpose() * weighted;
  f.lin_point = x0;
  f.jacobian = lin->jacobian;
  f.lin_residual = residual;
  f.huber_weight = w;
  f.factor.eta = jt_w * (lin->jacobian * x0 + residual);
  f.factor.lambda = jt_w * lin->jacobian;
  symmetrize(f.factor.lambda);
  f.linearised = true;
  return true;
}

FactorGraph::FactorGraph(const Intrinsics& intrinsics, GraphOptions options)
    : intrinsics_(intrinsics), options_(options) {
  if (!intrinsics_.valid()) throw GraphError("focal lengths must be positive");
}

FactorGraph FactorGraph::build(const ProblemSpec& problem,
                               const GraphOptions& options) {
  const int nk = static_cast<int>(problem.keyframes.size());
  const int nl = static_cast<int>(problem.landmarks.size());
  for (size_t i = 0; i < problem.measurements.size(); ++i) {
    const auto& m = problem.measurements[i];
    if (m.keyframe < 0 || m.keyframe >= nk || m.landmark < 0 ||
        m.landmark >= nl) {
      throw GraphError("measurement " + std::to_string(i) +
                       " references a missing keyframe " +
                       std::to_string(m.keyframe) + " or landmark " +
                       std::to_string(m.landmark));
    }
  }
  FactorGraph g(problem.intrinsics, options);
  for (const auto& kf : problem.keyframes) g.add_keyframe(kf.initial);
  for (const auto& lm : problem.landmarks) g.add_landmark(lm.initial);
  for (const auto& m : problem.measurements) {
    g.add_measurement(m.keyframe, m.landmark, m.pixel, m.sigma);
  }
  g.generate_pending_priors();
  return g;
}

int FactorGraph::add_keyframe(const Pose& initial) {
  KeyframeNode v;
  v.id = static_cast<int>(keyframes_.size());
  v.state = initial.to_vector();
  keyframes_.push_back(std::move(v));
  return keyframes_.back().id;
}

int FactorGraph::add_keyframe_at_latest() {
  if (keyframes_.empty()) throw GraphError("no keyframe to copy");
  return add_keyframe(keyframe_pose(static_cast<int>(keyframes_.size()) - 1));
}

int FactorGraph::add_landmark(const Vec3& initial) {
  if (!initial.allFinite()) throw GraphError("landmark must be finite");
  LandmarkNode v;
  v.id = static_cast<int>(landmarks_.size());
  v.state = initial;
  landmarks_.push_back(std::move(v));
  return landmarks_.back().id;
}

int FactorGraph::add_measurement(int keyframe, int landmark, const Vec2& z,
                                 double sigma) {
  if (!(sigma > 0.0)) throw GraphError("measurement sigma must be positive");
  return add_measurement(keyframe, landmark, z,
                         Mat2(Mat2::Identity() * sigma * sigma));
}

int FactorGraph::add_measurement(int keyframe, int landmark, const Vec2& z,
                                 const Mat2& covariance) {
  if (keyframe < 0 || keyframe >= static_cast<int>(keyframes_.size()) ||
      landmark < 0 || landmark >= static_cast<int>(landmarks_.size())) {
    throw GraphError("measurement references missing keyframe " +
                     std::to_string(keyframe) + " or landmark " +
                     std::to_string(landmark));
  }
  MeasurementFactor f;
  f.id = static_cast<int>(factors_.size());
  f.keyframe = keyframe;
  f.landmark = landmark;
  f.z = z;
  f.noise_information = covariance.inverse();
  f.huber_nsigma = options_.huber_nsigma;
  if (!linearize_factor(f, keyframes_[keyframe].state,
                        landmarks_[landmark].state, intrinsics_)) {
    // Keep an all-zero factor; it starts contributing once a later
    // relinearisation succeeds.
    f.lin_point << keyframes_[keyframe].state, landmarks_[landmark].state;
    ++diagnostics_.behind_camera;
  }
  if (!observed_pairs_.insert({keyframe, landmark}).second) {
    ++diagnostics_.duplicate_measurements;
  }
  keyframes_[keyframe].factors.push_back(f.id);
  landmarks_[landmark].factors.push_back(f.id);
  factors_.push_back(std::move(f));
  return factors_.back().id;
}

namespace {

template <int Dim>
void generate_prior(VariableNode<Dim>& v,
                    const std::vector<MeasurementFactor>& factors, int offset,
                    const GraphOptions& options, Diagnostics& diag) {
  Vec<Dim> strength = Vec<Dim>::Zero();
  for (int fid : v.factors) {
    const auto& f = factors[fid];
    if (!f.linearised) continue;
    const Mat<2, Dim> j = f.jacobian.template middleCols<Dim>(offset);
    strength += (j.transpose() * f.noise_information * j).diagonal();
  }
  const double largest = strength.maxCoeff();
  if (!(largest > 0.0)) {
    strength.setConstant(options.fallback_prior_strength);
    v.prior_fallback = true;
    ++diag.fallback_priors;
  } else {
    // Degenerate coordinates would leave the prior singular.
    strength = strength.cwiseMax(1e-9 * largest);
  }
  v.prior_strength = strength;
  v.prior_mean = v.state;
  v.prior_pending = false;
}

}  // namespace

void FactorGraph::generate_pending_priors() {
  for (auto& v : keyframes_) {
    if (v.prior_pending) generate_prior(v, factors_, 0, options_, diagnostics_);
  }
  for (auto& v : landmarks_) {
    if (v.prior_pending) generate_prior(v, factors_, 6, options_, diagnostics_);
  }
}

bool FactorGraph::has_pending_priors() const {
  return std::any_of(keyframes_.begin(), keyframes_.end(),
                     [](const auto& v) { return v.prior_pending; }) ||
         std::any_of(landmarks_.begin(), landmarks_.end(),
                     [](const auto& v) { return v.prior_pending; });
}

double FactorGraph::prior_scale(int iteration) const {
  const int n = options_.prior_weaken_iters;
  if (n <= 0 || iteration >= n) return options_.prior_final_scale;
  if (iteration <= 0) return 1.0;
  return std::pow(options_.prior_final_scale,
                  static_cast<double>(iteration) / static_cast<double>(n));
}

void FactorGraph::set_huber_nsigma(double nsigma) {
  options_.huber_nsigma = nsigma;
  for (auto& f : factors_) f.huber_nsigma = nsigma;
}

Pose FactorGraph::keyframe_pose(int id) const {
  return Pose::from_vector(keyframes_.at(id).state);
}

Vec9 FactorGraph::stacked_state(const MeasurementFactor& f) const {
  Vec9 x;
  x << keyframes_[f.keyframe].state, landmarks_[f.landmark].state;
  return x;
}

bool FactorGraph::check_structure(std::string* why) const {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  const int nk = static_cast<int>(keyframes_.size());
  const int nl = static_cast<int>(landmarks_.size());
  std::vector<int> kf_degree(nk, 0), lm_degree(nl, 0);
  for (size_t i = 0; i < factors_.size(); ++i) {
    const auto& f = factors_[i];
    if (f.id != static_cast<int>(i)) return fail("factor id out of order");
    if (f.keyframe < 0 || f.keyframe >= nk) return fail("bad keyframe link");
    if (f.landmark < 0 || f.landmark >= nl) return fail("bad landmark link");
    ++kf_degree[f.keyframe];
    ++lm_degree[f.landmark];
  }
  auto check_adjacency = [&](const auto& nodes, const std::vector<int>& degree,
                             bool keyframe) {
    for (size_t i = 0; i < nodes.size(); ++i) {
      const auto& adj = nodes[i].factors;
      if (static_cast<int>(adj.size()) != degree[i]) return false;
      if (!std::is_sorted(adj.begin(), adj.end())) return false;
      for (int fid : adj) {
        const auto& f = factors_[fid];
        if ((keyframe ? f.keyframe : f.landmark) != static_cast<int>(i)) {
          return false;
        }
      }
    }
    return true;
  };
  if (!check_adjacency(keyframes_, kf_degree, true)) {
    return fail("keyframe adjacency inconsistent");
  }
  if (!check_adjacency(landmarks_, lm_degree, false)) {
    return fail("landmark adjacency inconsistent");
  }
  return true;
}

namespace {

template <int Dim>
double prior_term(const FactorGraph& g, const VariableNode<Dim>& v) {
  if (v.prior_pending) return 0.0;
  const Vec<Dim> d = v.state - v.prior_mean;
  const double s = g.current_prior_scale();
  return s * d.dot(v.prior_strength.cwiseProduct(d));
}

}  // namespace

double energy(const FactorGraph& graph, Diagnostics* diag) {
  double total = 0.0;
  for (const auto& v : graph.keyframes()) total += prior_term(graph, v);
  for (const auto& v : graph.landmarks()) total += prior_term(graph, v);
  for (const auto& f : graph.factors()) {
    const auto h = try_project(graph.keyframe_pose(f.keyframe),
                               graph.landmarks()[f.landmark].state,
                               graph.intrinsics());
    Vec2 r;
    if (h) {
      r = f.z - *h;
    } else {
      r = f.lin_residual;
      if (diag) ++diag->behind_camera;
    }
    const double m = mahalanobis(r, f.noise_information);
    if (f.huber_enabled() && m > f.huber_nsigma) {
      total += 2.0 * f.huber_nsigma * m - f.huber_nsigma * f.huber_nsigma;
    } else {
      total += m * m;
    }
  }
  return total;
}

double linearised_energy(const FactorGraph& graph) {
  double total = 0.0;
  for (const auto& v : graph.keyframes()) total += prior_term(graph, v);
  for (const auto& v : graph.landmarks()) total += prior_term(graph, v);
  for (const auto& f : graph.factors()) {
    if (!f.linearised) continue;
    const Vec9 dx = graph.stacked_state(f) - f.lin_point;
    const Vec2 r = f.lin_residual - f.jacobian * dx;
    total += f.huber_weight * r.dot(f.noise_information * r);
  }
  return total;
}

double average_reprojection_error(const FactorGraph& graph,
                                  const std::vector<bool>& mask,
                                  Diagnostics* diag) {
  const auto& factors = graph.factors();
  if (!mask.empty() && mask.size() != factors.size()) {
    throw GraphError("mask size does not match measurement count");
  }
  double sum = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < factors.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const auto& f = factors[i];
    const auto h = try_project(graph.keyframe_pose(f.keyframe),
                               graph.landmarks()[f.landmark].state,
                               graph.intrinsics());
    if (h) {
      sum += (f.z - *h).norm();
    } else {
      sum += kBehindCameraPenalty;
      if (diag) ++diag->behind_camera;
    }
    ++count;
  }
  if (count == 0) throw GraphError("average reprojection error of no measurements");
  return sum / static_cast<double>(count);
}

std::vector<double> current_mahalanobis(const FactorGraph& graph) {
  std::vector<double> out;
  out.reserve(graph.factors().size());
  for (const auto& f : graph.factors()) {
    const auto h = try_project(graph.keyframe_pose(f.keyframe),
                               graph.landmarks()[f.landmark].state,
                               graph.intrinsics());
    out.push_back(h ? mahalanobis(f.z - *h, f.noise_information)
                    : std::numeric_limits<double>::infinity());
  }
  return out;
}

}  // namespace gbpba
