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
#include <vector>

#include "gbpba/factor_graph.h"

namespace gbpba {

/// Message-passing schedule. Prior weakening lives in GraphOptions because
/// the graph owns the prior strengths.
struct ScheduleParams {
  /// Relinearise when ||stacked belief means - lin_point|| exceeds beta.
  double beta = 0.01;
  /// Minimum iterations between two relinearisations of one factor.
  int relin_cooldown = 10;
  /// Damping of the factor-to-variable information vector, in [0, 1).
  double damping = 0.4;
  /// Iterations, starting with the relinearising one, whose messages are
  /// undamped.
  int undamped_window = 8;
  int max_iters = 1000;
  /// solve() stops once ARE drops below this many pixels.
  double are_target = 1.5;
  /// false freezes every factor at its current linearisation (linear mode).
  bool relinearise = true;
  /// Early stop on relative max message change once priors are final and no
  /// factor relinearised; 0 disables.
  double message_delta_tol = 1e-8;
  int workers = 1;
  /// Rounds messages and beliefs through float after every update.
  bool single_precision = false;
  /// Keep per-factor relinearisation and damping records in each report.
  bool record_factor_events = false;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

struct IterationReport {
  /// Number of completed iterations when this row was taken.
  int iteration = 0;
  double prior_scale = 1.0;
  // Phase A
  int relinearised = 0;
  int stale_relinearisations = 0;
  // Phase B
  int messages_sent = 0;
  int singular_messages = 0;
  int damped_factors = 0;
  double max_message_delta = 0.0;
  // Phase C
  int singular_beliefs = 0;
  // Phase D
  int recovered_messages = 0;

  double are = 0.0;
  double energy = 0.0;
  int behind_camera = 0;

  /// Filled when ScheduleParams::record_factor_events is set.
  std::vector<std::uint8_t> factor_relinearised;
  std::vector<double> factor_damping;
};

struct SolveReport {
  /// trace[0] is the initial state; trace[k] follows the k-th iteration.
  std::vector<IterationReport> trace;
  int iterations = 0;
  bool converged = false;
  bool stopped_on_delta = false;
  double final_are = 0.0;
  Diagnostics diagnostics;
};

/// Phase A for one factor. Returns true if the factor was relinearised.
/// `stale` is set when relinearisation was due but the new point projects
/// behind the camera (or an adjacent belief is not invertible).
bool relinearize(MeasurementFactor& f, const FactorGraph& graph,
                 const ScheduleParams& schedule, bool* stale = nullptr);

enum class MessageTarget { kKeyframe, kLandmark };

struct MessageResult {
  bool singular = false;
  double damping = 0.0;
  double delta = 0.0;
};

/// Phase B for one side of a factor: conditions the factor on the other
/// side's incoming message, marginalises onto the target, damps eta (not
/// lambda) against the previously stored message and stores the result.
/// A singular conditioning block leaves the stored message unchanged.
MessageResult factor_to_variable_message(MeasurementFactor& f,
                                         MessageTarget target,
                                         const ScheduleParams& schedule);

/// Phase C for one variable: prior at the given iteration times every
/// incoming message in ascending factor order; moves the state to the belief
/// mean when the belief is invertible. Returns false if it was not.
bool update_belief(KeyframeNode& v, const FactorGraph& graph, int iteration);
bool update_belief(LandmarkNode& v, const FactorGraph& graph, int iteration);

/// One synchronous iteration: relinearise, factor-to-variable messages,
/// belief update, variable-to-factor recovery. Each phase reads only what
/// earlier phases wrote, so results do not depend on the worker count.
IterationReport iterate(FactorGraph& graph, const ScheduleParams& schedule);

/// Runs exactly n iterations.
std::vector<IterationReport> run(FactorGraph& graph,
                                 const ScheduleParams& schedule, int n);

/// Iterates until ARE < are_target, the delta early stop, or max_iters.
SolveReport solve(FactorGraph& graph, const ScheduleParams& schedule);

/// Report row for the current state without iterating.
IterationReport snapshot(const FactorGraph& graph);

}  // namespace gbpba
