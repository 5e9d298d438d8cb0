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
#include "gbpba/gbp_engine.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gbpba/parallel.h"

namespace gbpba {

void ScheduleParams::validate() const {
  if (!(damping >= 0.0 && damping < 1.0)) {
    throw std::invalid_argument("damping must lie in [0, 1)");
  }
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  if (relin_cooldown < 0 || undamped_window < 0 || max_iters < 0) {
    throw std::invalid_argument("schedule counters must be non-negative");
  }
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
}

bool relinearize(MeasurementFactor& f, const FactorGraph& graph,
                 const ScheduleParams& schedule, bool* stale) {
  if (stale) *stale = false;
  // The counter includes the current iteration, so a factor relinearised at
  // iteration r is next eligible at r + relin_cooldown.
  ++f.iters_since_relin;
  if (!schedule.relinearise) return false;
  const auto& kf = graph.keyframes()[f.keyframe];
  const auto& lm = graph.landmarks()[f.landmark];
  Vec9 x;
  x << kf.state, lm.state;
  const bool due = (x - f.lin_point).norm() > schedule.beta &&
                   f.iters_since_relin >= schedule.relin_cooldown;
  if (!due) return false;
  if (!kf.belief_valid || !lm.belief_valid ||
      !linearize_factor(f, kf.state, lm.state, graph.intrinsics())) {
    if (stale) *stale = true;
    return false;
  }
  f.iters_since_relin = 0;
  return true;
}

namespace {

template <int Dim>
double relative_change(const InfoGaussianT<Dim>& before,
                       const InfoGaussianT<Dim>& after) {
  const double de = (after.eta - before.eta).cwiseAbs().maxCoeff() /
                    std::max(1.0, before.eta.cwiseAbs().maxCoeff());
  const double dl = (after.lambda - before.lambda).cwiseAbs().maxCoeff() /
                    std::max(1.0, before.lambda.cwiseAbs().maxCoeff());
  return std::max(de, dl);
}

template <int Dim>
MessageResult store_message(std::optional<InfoGaussianT<Dim>> fresh,
                            InfoGaussianT<Dim>& stored, double damping,
                            bool single_precision) {
  MessageResult r;
  r.damping = damping;
  if (!fresh) {
    r.singular = true;
    return r;
  }
  fresh->eta = (1.0 - damping) * fresh->eta + damping * stored.eta;
  if (single_precision) round_to_float(*fresh);
  r.delta = relative_change(stored, *fresh);
  stored = *fresh;
  return r;
}

}  // namespace

MessageResult factor_to_variable_message(MeasurementFactor& f,
                                         MessageTarget target,
                                         const ScheduleParams& schedule) {
  const double d =
      f.iters_since_relin < schedule.undamped_window ? 0.0 : schedule.damping;
  const auto& eta = f.factor.eta;
  const auto& lambda = f.factor.lambda;
  if (target == MessageTarget::kKeyframe) {
    const Mat<3, 3> cond =
        lambda.bottomRightCorner<3, 3>() + f.msg_from_landmark.lambda;
    const Vec<3> cond_eta = eta.tail<3>() + f.msg_from_landmark.eta;
    auto fresh = try_schur_complement<6, 3>(
        eta.head<6>(), cond_eta, lambda.topLeftCorner<6, 6>(),
        lambda.topRightCorner<6, 3>(), cond);
    return store_message(std::move(fresh), f.msg_to_keyframe, d,
                         schedule.single_precision);
  }
  const Mat<6, 6> cond =
      lambda.topLeftCorner<6, 6>() + f.msg_from_keyframe.lambda;
  const Vec<6> cond_eta = eta.head<6>() + f.msg_from_keyframe.eta;
  auto fresh = try_schur_complement<3, 6>(
      eta.tail<3>(), cond_eta, lambda.bottomRightCorner<3, 3>(),
      lambda.bottomLeftCorner<3, 6>(), cond);
  return store_message(std::move(fresh), f.msg_to_landmark, d,
                       schedule.single_precision);
}

namespace {

template <int Dim>
bool update_belief_impl(VariableNode<Dim>& v, const FactorGraph& graph,
                        int iteration, bool single_precision) {
  InfoGaussianT<Dim> belief = graph.prior_at(v, iteration);
  const auto& factors = graph.factors();
  for (int fid : v.factors) {
    if constexpr (Dim == 6) {
      belief.eta += factors[fid].msg_to_keyframe.eta;
      belief.lambda += factors[fid].msg_to_keyframe.lambda;
    } else {
      belief.eta += factors[fid].msg_to_landmark.eta;
      belief.lambda += factors[fid].msg_to_landmark.lambda;
    }
  }
  if (single_precision) round_to_float(belief);
  v.belief = belief;
  const auto mean = try_mean(belief);
  if (!mean) return false;
  v.state = *mean;
  v.belief_valid = true;
  return true;
}

}  // namespace

bool update_belief(KeyframeNode& v, const FactorGraph& graph, int iteration) {
  return update_belief_impl(v, graph, iteration, false);
}

bool update_belief(LandmarkNode& v, const FactorGraph& graph, int iteration) {
  return update_belief_impl(v, graph, iteration, false);
}

IterationReport snapshot(const FactorGraph& graph) {
  IterationReport r;
  r.iteration = graph.iteration();
  r.prior_scale = graph.current_prior_scale();
  Diagnostics d;
  if (!graph.factors().empty()) {
    r.are = average_reprojection_error(graph, {}, &d);
  }
  r.energy = energy(graph);
  r.behind_camera = d.behind_camera;
  return r;
}

IterationReport iterate(FactorGraph& graph, const ScheduleParams& schedule) {
  schedule.validate();
  if (graph.has_pending_priors()) graph.generate_pending_priors();

  auto& factors = graph.factors();
  auto& keyframes = graph.keyframes();
  auto& landmarks = graph.landmarks();
  const size_t nf = factors.size();
  const int t = graph.iteration();
  const int workers = schedule.workers;

  IterationReport report;
  report.prior_scale = graph.prior_scale(t);

  // Phase A: relinearisation. Reads variable states from the previous
  // iteration, writes factor-local data only.
  std::vector<std::uint8_t> relin(nf, 0), stale(nf, 0);
  parallel_for(nf, workers, [&](size_t i) {
    bool s = false;
    relin[i] = relinearize(factors[i], graph, schedule, &s) ? 1 : 0;
    stale[i] = s ? 1 : 0;
  });

  // Phase B (exchange 1): factor-to-variable messages from the incoming
  // messages recovered in the previous iteration.
  std::vector<MessageResult> to_kf(nf), to_lm(nf);
  parallel_for(nf, workers, [&](size_t i) {
    to_kf[i] = factor_to_variable_message(factors[i], MessageTarget::kKeyframe,
                                          schedule);
    to_lm[i] = factor_to_variable_message(factors[i], MessageTarget::kLandmark,
                                          schedule);
  });

  // Phase C: beliefs.
  std::vector<std::uint8_t> kf_ok(keyframes.size()), lm_ok(landmarks.size());
  parallel_for(keyframes.size(), workers, [&](size_t i) {
    kf_ok[i] = update_belief_impl(keyframes[i], graph, t,
                                  schedule.single_precision);
  });
  parallel_for(landmarks.size(), workers, [&](size_t i) {
    lm_ok[i] = update_belief_impl(landmarks[i], graph, t,
                                  schedule.single_precision);
  });

  // Phase D (exchange 2): variable-to-factor messages by quotient.
  parallel_for(nf, workers, [&](size_t i) {
    auto& f = factors[i];
    f.msg_from_keyframe = quotient(keyframes[f.keyframe].belief, f.msg_to_keyframe);
    f.msg_from_landmark = quotient(landmarks[f.landmark].belief, f.msg_to_landmark);
  });

  graph.advance_iteration();

  for (size_t i = 0; i < nf; ++i) {
    report.relinearised += relin[i];
    report.stale_relinearisations += stale[i];
    for (const auto* m : {&to_kf[i], &to_lm[i]}) {
      if (m->singular) {
        ++report.singular_messages;
      } else {
        ++report.messages_sent;
        report.max_message_delta = std::max(report.max_message_delta, m->delta);
      }
    }
    if (to_kf[i].damping > 0.0) ++report.damped_factors;
  }
  for (auto ok : kf_ok) report.singular_beliefs += ok ? 0 : 1;
  for (auto ok : lm_ok) report.singular_beliefs += ok ? 0 : 1;
  report.recovered_messages = static_cast<int>(2 * nf);
  if (schedule.record_factor_events) {
    report.factor_relinearised = relin;
    report.factor_damping.resize(nf);
    for (size_t i = 0; i < nf; ++i) report.factor_damping[i] = to_kf[i].damping;
  }

  auto& diag = graph.diagnostics();
  diag.singular_messages += report.singular_messages;
  diag.singular_beliefs += report.singular_beliefs;
  diag.stale_relinearisations += report.stale_relinearisations;

  report.iteration = graph.iteration();
  Diagnostics eval;
  if (nf > 0) report.are = average_reprojection_error(graph, {}, &eval);
  report.energy = energy(graph);
  report.behind_camera = eval.behind_camera;
  return report;
}

std::vector<IterationReport> run(FactorGraph& graph,
                                 const ScheduleParams& schedule, int n) {
  std::vector<IterationReport> out;
  out.reserve(static_cast<size_t>(std::max(n, 0)));
  for (int i = 0; i < n; ++i) out.push_back(iterate(graph, schedule));
  return out;
}

SolveReport solve(FactorGraph& graph, const ScheduleParams& schedule) {
  schedule.validate();
  if (graph.has_pending_priors()) graph.generate_pending_priors();
  SolveReport report;
  report.trace.push_back(snapshot(graph));
  report.trace.back().prior_scale = graph.current_prior_scale();
  const bool has_measurements = !graph.factors().empty();
  auto reached = [&](const IterationReport& r) {
    // A graph without measurements is settled after its first belief update.
    return has_measurements ? r.are < schedule.are_target : r.iteration > 0;
  };
  report.converged = reached(report.trace.back());
  const int settle = graph.options().prior_weaken_iters;
  for (int k = 0; k < schedule.max_iters && !report.converged; ++k) {
    report.trace.push_back(iterate(graph, schedule));
    ++report.iterations;
    const auto& last = report.trace.back();
    report.converged = reached(last);
    if (!report.converged && schedule.message_delta_tol > 0.0 &&
        graph.iteration() > settle && last.relinearised == 0 &&
        last.singular_messages == 0 &&
        last.max_message_delta < schedule.message_delta_tol) {
      report.stopped_on_delta = true;
      break;
    }
  }
  report.final_are = report.trace.back().are;
  report.diagnostics = graph.diagnostics();
  return report;
}

}  // namespace gbpba
