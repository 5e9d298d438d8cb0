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
#include <optional>
#include <string>
#include <vector>

#include "gbpba/dataset_io.h"
#include "gbpba/dense_oracle.h"
#include "gbpba/gbp_engine.h"

namespace gbpba {

/// Everything a solver run needs besides the problem.
struct SolverConfig {
  GraphOptions graph;
  ScheduleParams schedule;
  LmParams lm;
};

struct SolveOutcome {
  SolveReport gbp;
  std::optional<LmReport> lm;
  /// Machine-local wall time of the GBP solve; not comparable across hardware.
  double gbp_wall_ms = 0.0;
  double lm_wall_ms = 0.0;
};

SolveOutcome run_solve(const ProblemSpec& problem, const SolverConfig& config,
                       bool with_lm);

struct IncrementalOptions {
  bool cold_gbp = true;
  bool lm = true;
  /// LM keeps landmarks fixed for this many initial steps.
  int lm_fix_landmark_steps = 3;
};

struct IncrementalRow {
  int keyframe = 0;
  int new_landmarks = 0;
  int new_measurements = 0;
  int gbp_iterations = 0;
  bool gbp_converged = false;
  double gbp_are = 0.0;
  int cold_iterations = -1;
  bool cold_converged = false;
  int lm_steps = -1;
  bool lm_converged = false;
};

struct IncrementalResult {
  /// Iterations spent on the first keyframe (not a row).
  int initial_iterations = 0;
  std::vector<IncrementalRow> rows;
};

/// Replays keyframes in id order. Each new keyframe starts at the latest
/// keyframe's estimate and each new landmark 1 m along the bearing of its
/// first observation; GBP then continues from the current graph. Optionally
/// re-solves every prefix from scratch with GBP and with LM.
IncrementalResult run_incremental(const ProblemSpec& problem,
                                  const SolverConfig& config,
                                  const IncrementalOptions& options = {});

struct SweepRow {
  double noise = 0.0;
  int trials = 0;
  int gbp_success = 0;
  int lm_success = 0;
  double gbp_fraction() const { return trials ? double(gbp_success) / trials : 0.0; }
  double lm_fraction() const { return trials ? double(lm_success) / trials : 0.0; }
};

struct SweepOptions {
  std::vector<double> noise_levels;
  int trials = 50;
  std::uint64_t seed = 1;
  LandmarkInit landmark_init = LandmarkInit::kUnitRange;
  bool lm = true;
};

/// Success fraction (ARE below target) over seeded keyframe perturbations of
/// a problem with ground truth. Trials run in parallel; results are merged in
/// trial order.
std::vector<SweepRow> run_sweep(const ProblemSpec& problem,
                                const SolverConfig& config,
                                const SweepOptions& options);

struct ClassificationScore {
  double precision = 1.0;
  double recall = 1.0;
};

/// Scores "in the linear loss regime at the current states" against the
/// injected outlier labels.
ClassificationScore score_outlier_classification(
    const FactorGraph& graph, const std::vector<bool>& labels);

struct OutlierVariant {
  std::string name;
  bool huber = false;
  bool lm = false;
  int iterations = 0;
  bool converged = false;
  double final_are = 0.0;
  double inlier_are = 0.0;
  /// Per-iteration inlier ARE (GBP) or per-step inlier ARE (LM).
  std::vector<double> inlier_are_trace;
  /// Per-iteration classification quality, GBP + Huber only.
  std::vector<ClassificationScore> classification;
};

struct OutlierRow {
  double fraction = 0.0;
  std::vector<OutlierVariant> variants;
};

struct OutlierOptions {
  std::vector<double> fractions;
  OutlierMode mode = OutlierMode::kUniform;
  std::uint64_t seed = 1;
  /// Run all iterations instead of stopping at the inlier-ARE target.
  bool run_to_max = false;
  bool include_lm = true;
};

/// For each fraction, injects outliers into `problem` and solves with
/// GBP + Huber, GBP, LM + Huber and LM. Convergence means inlier ARE below
/// the target.
std::vector<OutlierRow> run_outliers(const ProblemSpec& problem,
                                     const SolverConfig& config,
                                     const OutlierOptions& options);

/// GBP on a problem with labelled outliers, reporting inlier ARE and
/// per-iteration classification.
OutlierVariant run_gbp_with_labels(const ProblemSpec& problem,
                                   const SolverConfig& config, bool huber,
                                   bool run_to_max);

}  // namespace gbpba
