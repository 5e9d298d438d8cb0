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

#include <iosfwd>
#include <string>
#include <vector>

#include "gbpba/experiments.h"

namespace gbpba {

/// Bumped whenever a column or key is added, removed or renamed.
inline constexpr int kTraceSchemaVersion = 1;

/// GBP per-iteration trace. First line is "# gbpba-trace <version>", then a
/// header row, then one row per iteration starting with the initial state.
void write_gbp_trace(std::ostream& os, const SolveReport& report);

/// LM per-step trace (step, are_px, cost).
void write_lm_trace(std::ostream& os, const LmReport& report);

/// Run summary. wall_ms is measured on the local machine and carries a
/// "comparable": false marker.
std::string solve_summary_json(const SolveOutcome& outcome,
                               const SolverConfig& config);

void write_incremental_table(std::ostream& os, const IncrementalResult& result);
void write_sweep_table(std::ostream& os, const std::vector<SweepRow>& rows);
/// One row per (fraction, variant) with the final values.
void write_outlier_table(std::ostream& os, const std::vector<OutlierRow>& rows);
/// Per-iteration inlier ARE and, for Huber runs, precision and recall.
void write_outlier_traces(std::ostream& os, const std::vector<OutlierRow>& rows);

/// Parses a table written by one of the writers above: checks the version
/// line and returns the header followed by the data rows, split on commas.
std::vector<std::vector<std::string>> read_table(std::istream& is);

}  // namespace gbpba
