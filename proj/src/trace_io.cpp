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
#include "gbpba/trace_io.h"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gbpba {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void version_line(std::ostream& os, const char* kind) {
  os << "# gbpba-" << kind << ' ' << kTraceSchemaVersion << '\n';
}

}  // namespace

void write_gbp_trace(std::ostream& os, const SolveReport& report) {
  version_line(os, "trace");
  os << "iteration,are_px,energy,prior_scale,relinearised,damped_factors,"
        "singular_messages,max_message_delta\n";
  for (const auto& r : report.trace) {
    os << r.iteration << ',' << num(r.are) << ',' << num(r.energy) << ','
       << num(r.prior_scale) << ',' << r.relinearised << ',' << r.damped_factors
       << ',' << r.singular_messages << ',' << num(r.max_message_delta) << '\n';
  }
}

void write_lm_trace(std::ostream& os, const LmReport& report) {
  version_line(os, "lm-trace");
  os << "step,are_px,cost\n";
  for (size_t i = 0; i < report.are_trace.size(); ++i) {
    os << i << ',' << num(report.are_trace[i]) << ',' << num(report.cost_trace[i])
       << '\n';
  }
}

std::string solve_summary_json(const SolveOutcome& outcome,
                               const SolverConfig& config) {
  using nlohmann::json;
  const auto& s = config.schedule;
  json j;
  j["schema_version"] = kTraceSchemaVersion;
  j["gbp"] = {{"converged", outcome.gbp.converged},
              {"iterations", outcome.gbp.iterations},
              {"final_are_px", outcome.gbp.final_are},
              {"stopped_on_delta", outcome.gbp.stopped_on_delta},
              {"wall_ms", outcome.gbp_wall_ms}};
  const auto& d = outcome.gbp.diagnostics;
  j["diagnostics"] = {{"behind_camera", d.behind_camera},
                      {"fallback_priors", d.fallback_priors},
                      {"duplicate_measurements", d.duplicate_measurements},
                      {"singular_messages", d.singular_messages},
                      {"singular_beliefs", d.singular_beliefs},
                      {"stale_relinearisations", d.stale_relinearisations},
                      {"psd_violations", d.psd_violations}};
  if (outcome.lm) {
    j["lm"] = {{"converged", outcome.lm->converged},
               {"steps", outcome.lm->steps},
               {"accepted_steps", outcome.lm->accepted_steps},
               {"final_are_px", outcome.lm->are_trace.back()},
               {"wall_ms", outcome.lm_wall_ms}};
  }
  j["schedule"] = {{"beta", s.beta},
                   {"relin_cooldown", s.relin_cooldown},
                   {"damping", s.damping},
                   {"undamped_window", s.undamped_window},
                   {"max_iters", s.max_iters},
                   {"are_target_px", s.are_target},
                   {"huber_nsigma", config.graph.huber_nsigma},
                   {"prior_weaken_iters", config.graph.prior_weaken_iters},
                   {"prior_final_scale", config.graph.prior_final_scale},
                   {"workers", s.workers}};
  j["timing"] = {{"comparable", false},
                 {"note", "wall_ms is machine-local; compare iteration counts"}};
  return j.dump(2);
}

void write_incremental_table(std::ostream& os, const IncrementalResult& result) {
  version_line(os, "incremental");
  os << "keyframe,new_landmarks,new_measurements,gbp_iterations,gbp_converged,"
        "gbp_are_px,cold_iterations,cold_converged,lm_steps,lm_converged\n";
  for (const auto& r : result.rows) {
    os << r.keyframe << ',' << r.new_landmarks << ',' << r.new_measurements << ','
       << r.gbp_iterations << ',' << int(r.gbp_converged) << ',' << num(r.gbp_are)
       << ',' << r.cold_iterations << ',' << int(r.cold_converged) << ','
       << r.lm_steps << ',' << int(r.lm_converged) << '\n';
  }
}

void write_sweep_table(std::ostream& os, const std::vector<SweepRow>& rows) {
  version_line(os, "sweep");
  os << "noise_m,trials,gbp_success,lm_success,gbp_fraction,lm_fraction\n";
  for (const auto& r : rows) {
    os << num(r.noise) << ',' << r.trials << ',' << r.gbp_success << ','
       << r.lm_success << ',' << num(r.gbp_fraction()) << ','
       << num(r.lm_fraction()) << '\n';
  }
}

void write_outlier_table(std::ostream& os, const std::vector<OutlierRow>& rows) {
  version_line(os, "outliers");
  os << "fraction,variant,huber,iterations,converged,final_are_px,"
        "inlier_are_px,final_precision,final_recall\n";
  for (const auto& row : rows) {
    for (const auto& v : row.variants) {
      os << num(row.fraction) << ',' << v.name << ',' << int(v.huber) << ','
         << v.iterations << ',' << int(v.converged) << ',' << num(v.final_are)
         << ',' << num(v.inlier_are) << ',';
      if (v.classification.empty()) {
        os << ",\n";
      } else {
        os << num(v.classification.back().precision) << ','
           << num(v.classification.back().recall) << '\n';
      }
    }
  }
}

void write_outlier_traces(std::ostream& os, const std::vector<OutlierRow>& rows) {
  version_line(os, "outlier-trace");
  os << "fraction,variant,iteration,inlier_are_px,precision,recall\n";
  for (const auto& row : rows) {
    for (const auto& v : row.variants) {
      for (size_t i = 0; i < v.inlier_are_trace.size(); ++i) {
        os << num(row.fraction) << ',' << v.name << ',' << i << ','
           << num(v.inlier_are_trace[i]) << ',';
        if (i < v.classification.size()) {
          os << num(v.classification[i].precision) << ','
             << num(v.classification[i].recall) << '\n';
        } else {
          os << ",\n";
        }
      }
    }
  }
}

std::vector<std::vector<std::string>> read_table(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# gbpba-", 0) != 0) {
    throw std::runtime_error("missing table version line");
  }
  const auto space = line.rfind(' ');
  if (space == std::string::npos ||
      std::stoi(line.substr(space + 1)) != kTraceSchemaVersion) {
    throw std::runtime_error("unsupported table version: " + line);
  }
  std::vector<std::vector<std::string>> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    out.push_back(std::move(cells));
  }
  return out;
}

}  // namespace gbpba
