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
#include "gbpba/experiments.h"

#include <chrono>
#include <limits>
#include <map>

#include "gbpba/parallel.h"

namespace gbpba {

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - start)
      .count();
}

std::vector<bool> inlier_mask(const ProblemSpec& p) {
  std::vector<bool> mask(p.measurements.size());
  for (size_t i = 0; i < mask.size(); ++i) mask[i] = !p.measurements[i].outlier;
  return mask;
}

}  // namespace

SolveOutcome run_solve(const ProblemSpec& problem, const SolverConfig& config,
                       bool with_lm) {
  SolveOutcome out;
  FactorGraph graph = FactorGraph::build(problem, config.graph);
  auto start = std::chrono::steady_clock::now();
  if (with_lm) {
    out.lm = lm_solve(graph, config.lm);
    out.lm_wall_ms = elapsed_ms(start);
  }
  start = std::chrono::steady_clock::now();
  out.gbp = solve(graph, config.schedule);
  out.gbp_wall_ms = elapsed_ms(start);
  return out;
}

IncrementalResult run_incremental(const ProblemSpec& problem,
                                  const SolverConfig& config,
                                  const IncrementalOptions& options) {
  IncrementalResult result;
  if (problem.keyframes.empty()) return result;

  std::vector<std::vector<const MeasurementSpec*>> by_keyframe(problem.keyframes.size());
  for (const auto& m : problem.measurements) by_keyframe[m.keyframe].push_back(&m);

  FactorGraph graph(problem.intrinsics, config.graph);
  // Snapshot of the initial values of everything added so far, used for the
  // from-scratch comparisons.
  ProblemSpec prefix;
  prefix.intrinsics = problem.intrinsics;
  prefix.image_width = problem.image_width;
  prefix.image_height = problem.image_height;
  std::map<int, int> landmark_ids;

  for (size_t k = 0; k < problem.keyframes.size(); ++k) {
    const int kf = k == 0 ? graph.add_keyframe(problem.keyframes[0].initial)
                          : graph.add_keyframe_at_latest();
    const Pose init = graph.keyframe_pose(kf);
    prefix.keyframes.push_back({kf, init, problem.keyframes[k].ground_truth});

    IncrementalRow row;
    row.keyframe = kf;
    for (const auto* m : by_keyframe[k]) {
      auto it = landmark_ids.find(m->landmark);
      if (it == landmark_ids.end()) {
        const Vec3 lm0 = initialise_along_bearing(init, m->pixel, problem.intrinsics);
        const int id = graph.add_landmark(lm0);
        it = landmark_ids.emplace(m->landmark, id).first;
        prefix.landmarks.push_back({id, lm0, problem.landmarks[m->landmark].ground_truth});
        ++row.new_landmarks;
      }
      graph.add_measurement(kf, it->second, m->pixel, m->sigma);
      MeasurementSpec copy = *m;
      copy.keyframe = kf;
      copy.landmark = it->second;
      prefix.measurements.push_back(copy);
      ++row.new_measurements;
    }
    graph.generate_pending_priors();
    if (graph.factors().empty()) continue;

    const SolveReport rep = solve(graph, config.schedule);
    if (k == 0) {
      result.initial_iterations = rep.iterations;
      continue;
    }
    row.gbp_iterations = rep.iterations;
    row.gbp_converged = rep.converged;
    row.gbp_are = rep.final_are;

    if (options.cold_gbp || options.lm) {
      FactorGraph cold = FactorGraph::build(prefix, config.graph);
      if (options.lm) {
        LmParams lm = config.lm;
        lm.fix_landmarks_steps = options.lm_fix_landmark_steps;
        const LmReport lr = lm_solve(cold, lm);
        row.lm_steps = lr.steps;
        row.lm_converged = lr.converged;
      }
      if (options.cold_gbp) {
        const SolveReport cr = solve(cold, config.schedule);
        row.cold_iterations = cr.iterations;
        row.cold_converged = cr.converged;
      }
    }
    result.rows.push_back(row);
  }
  return result;
}

std::vector<SweepRow> run_sweep(const ProblemSpec& problem,
                                const SolverConfig& config,
                                const SweepOptions& options) {
  std::vector<SweepRow> rows;
  for (size_t level = 0; level < options.noise_levels.size(); ++level) {
    const double noise = options.noise_levels[level];
    const auto trials = static_cast<size_t>(std::max(options.trials, 0));
    std::vector<std::uint8_t> gbp_ok(trials, 0), lm_ok(trials, 0);
    SolverConfig inner = config;
    inner.schedule.workers = 1;
    parallel_for(trials, config.schedule.workers, [&](size_t t) {
      PerturbParams pp;
      pp.keyframe_sigma = noise;
      pp.landmark_init = options.landmark_init;
      pp.seed = options.seed + 7919ULL * t;
      const ProblemSpec trial = perturb(problem, pp);
      const SolveOutcome out = run_solve(trial, inner, options.lm);
      gbp_ok[t] = out.gbp.converged;
      lm_ok[t] = out.lm && out.lm->converged;
    });
    SweepRow row;
    row.noise = noise;
    row.trials = static_cast<int>(trials);
    for (size_t t = 0; t < trials; ++t) {
      row.gbp_success += gbp_ok[t];
      row.lm_success += lm_ok[t];
    }
    rows.push_back(row);
  }
  return rows;
}

ClassificationScore score_outlier_classification(
    const FactorGraph& graph, const std::vector<bool>& labels) {
  const auto m = current_mahalanobis(graph);
  int tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < m.size(); ++i) {
    const auto& f = graph.factors()[i];
    const bool flagged = f.huber_enabled() && m[i] > f.huber_nsigma;
    if (flagged && labels[i]) ++tp;
    if (flagged && !labels[i]) ++fp;
    if (!flagged && labels[i]) ++fn;
  }
  ClassificationScore s;
  s.precision = tp + fp > 0 ? double(tp) / (tp + fp) : 1.0;
  s.recall = tp + fn > 0 ? double(tp) / (tp + fn) : 1.0;
  return s;
}

OutlierVariant run_gbp_with_labels(const ProblemSpec& problem,
                                   const SolverConfig& config, bool huber,
                                   bool run_to_max) {
  OutlierVariant v;
  v.name = huber ? "gbp_huber" : "gbp";
  v.huber = huber;
  GraphOptions go = config.graph;
  if (!huber) go.huber_nsigma = 0.0;
  FactorGraph graph = FactorGraph::build(problem, go);
  const auto mask = inlier_mask(problem);
  std::vector<bool> labels(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) labels[i] = !mask[i];
  const bool any_inlier = std::find(mask.begin(), mask.end(), true) != mask.end();

  auto record = [&] {
    v.inlier_are_trace.push_back(any_inlier ? average_reprojection_error(graph, mask) : 0.0);
    if (huber) v.classification.push_back(score_outlier_classification(graph, labels));
    if (v.inlier_are_trace.back() < config.schedule.are_target) v.converged = true;
  };
  record();
  for (int k = 0; k < config.schedule.max_iters; ++k) {
    if (v.converged && !run_to_max) break;
    iterate(graph, config.schedule);
    ++v.iterations;
    record();
  }
  // Converged means the target was reached and, when running on, held.
  if (run_to_max) v.converged = v.inlier_are_trace.back() < config.schedule.are_target;
  v.inlier_are = v.inlier_are_trace.back();
  v.final_are = average_reprojection_error(graph);
  return v;
}

namespace {

OutlierVariant run_lm_with_labels(const ProblemSpec& problem,
                                  const SolverConfig& config, bool huber) {
  OutlierVariant v;
  v.name = huber ? "lm_huber" : "lm";
  v.huber = huber;
  v.lm = true;
  FactorGraph graph = FactorGraph::build(problem, config.graph);
  LmParams lp = config.lm;
  lp.huber = huber;
  // Convergence is judged on inliers, so run LM to its own stopping point.
  lp.are_target = 0.0;
  const LmReport rep = lm_solve(graph, lp);
  apply_states(graph, rep);
  const auto mask = inlier_mask(problem);
  v.iterations = rep.steps;
  v.inlier_are = average_reprojection_error(graph, mask);
  v.final_are = average_reprojection_error(graph);
  v.converged = v.inlier_are < config.schedule.are_target;
  v.inlier_are_trace.push_back(v.inlier_are);
  return v;
}

}  // namespace

std::vector<OutlierRow> run_outliers(const ProblemSpec& problem,
                                     const SolverConfig& config,
                                     const OutlierOptions& options) {
  std::vector<OutlierRow> rows;
  for (double fraction : options.fractions) {
    const ProblemSpec corrupted =
        inject_outliers(problem, fraction, options.mode, options.seed);
    OutlierRow row;
    row.fraction = fraction;
    row.variants.push_back(run_gbp_with_labels(corrupted, config, true, options.run_to_max));
    row.variants.push_back(run_gbp_with_labels(corrupted, config, false, options.run_to_max));
    if (options.include_lm) {
      row.variants.push_back(run_lm_with_labels(corrupted, config, true));
      row.variants.push_back(run_lm_with_labels(corrupted, config, false));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace gbpba
