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
// gbpba: generate, solve and benchmark bundle-adjustment problems with
// Gaussian belief propagation.
//
// Exit codes: 0 ran (also when a solve did not converge), 1 usage,
// 2 input/output, 3 internal invariant violation.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gbpba/dataset_io.h"
#include "gbpba/experiments.h"
#include "gbpba/trace_io.h"

namespace fs = std::filesystem;
using namespace gbpba;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitInvariant = 3;

struct Options {
  // Input: a problem file, or a synthetic scene.
  std::string input;
  std::string bal;
  int keyframes = 10;
  int landmarks = 100;
  std::uint64_t seed = 1;
  std::string trajectory = "arc";
  double radius = SynthParams{}.radius;
  double extent = SynthParams{}.extent;
  double box = SynthParams{}.box_half_extent;
  double visibility = SynthParams{}.visibility_radius;
  double pixel_noise = SynthParams{}.pixel_noise;
  double kf_noise = PerturbParams{}.keyframe_sigma;
  std::string landmark_init = "unit";
  double outliers = 0.0;
  std::string outlier_mode = "uniform";

  // Schedule.
  double beta = ScheduleParams{}.beta;
  double damping = ScheduleParams{}.damping;
  double nsigma = GraphOptions{}.huber_nsigma;
  int max_iters = ScheduleParams{}.max_iters;
  double are_target = ScheduleParams{}.are_target;
  int workers = 1;
  std::string baseline = "none";

  // Experiments.
  std::vector<double> noise_levels{0.0, 0.025, 0.05, 0.075, 0.1, 0.15, 0.2};
  int trials = 50;
  std::vector<double> fractions{0.0, 0.02, 0.05, 0.1};
  bool run_to_max = false;
  bool no_cold = false;

  std::string out;
};

std::string default_out_dir() {
  const char* env = std::getenv("GBPBA_OUT_DIR");
  return env && *env ? env : ".";
}

LandmarkInit parse_landmark_init(const std::string& s) {
  if (s == "unit") return LandmarkInit::kUnitRange;
  if (s == "gaussian") return LandmarkInit::kGaussian;
  throw CLI::ValidationError("--landmark-init", "expected unit or gaussian");
}

SynthParams synth_params(const Options& o) {
  SynthParams sp;
  sp.keyframes = o.keyframes;
  sp.landmarks = o.landmarks;
  sp.seed = o.seed;
  sp.trajectory = o.trajectory == "line" ? TrajectoryShape::kLine : TrajectoryShape::kArc;
  sp.radius = o.radius;
  sp.extent = o.extent;
  sp.box_half_extent = o.box;
  sp.visibility_radius = o.visibility;
  sp.pixel_noise = o.pixel_noise;
  return sp;
}

ProblemSpec load_input(const Options& o) {
  if (o.bal.empty()) return load(o.input);
  BalImportReport r = import_bal(o.bal);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  return std::move(r.problem);
}

bool has_input(const Options& o) { return !o.input.empty() || !o.bal.empty(); }

// Ground-truth scene only (sweep and outlier runs perturb it themselves).
ProblemSpec clean_problem(const Options& o) {
  if (has_input(o)) return load_input(o);
  return synthesize(synth_params(o));
}

// Solver input: the file as given, or a perturbed synthetic scene.
ProblemSpec solver_problem(const Options& o) {
  if (has_input(o)) return load_input(o);
  PerturbParams pp;
  pp.keyframe_sigma = o.kf_noise;
  pp.landmark_init = parse_landmark_init(o.landmark_init);
  pp.seed = o.seed;
  ProblemSpec p = perturb(synthesize(synth_params(o)), pp);
  if (o.outliers > 0.0) {
    p = inject_outliers(p, o.outliers, parse_outlier_mode(o.outlier_mode), o.seed);
  }
  return p;
}

SolverConfig solver_config(const Options& o) {
  SolverConfig c;
  c.schedule.beta = o.beta;
  c.schedule.damping = o.damping;
  c.schedule.max_iters = o.max_iters;
  c.schedule.are_target = o.are_target;
  c.schedule.workers = o.workers;
  c.graph.huber_nsigma = o.nsigma;
  c.lm.are_target = o.are_target;
  c.lm.huber = o.nsigma > 0.0;
  c.schedule.validate();
  return c;
}

fs::path out_dir(const Options& o) {
  fs::path dir = o.out.empty() ? fs::path(default_out_dir()) : fs::path(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string());
  return dir;
}

template <class Writer>
void write_file(const fs::path& path, Writer&& writer) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  writer(os);
  if (!os) throw IoError("failed writing " + path.string());
  std::cout << "wrote " << path.string() << '\n';
}

int cmd_gen(const Options& o) {
  const ProblemSpec p = solver_problem(o);
  const fs::path path = o.out.empty() ? fs::path(default_out_dir()) / "problem.txt"
                                      : fs::path(o.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save(p, path.string());
  std::cout << "wrote " << path.string() << ": " << p.keyframes.size()
            << " keyframes, " << p.landmarks.size() << " landmarks, "
            << p.measurements.size() << " measurements, " << p.outlier_count()
            << " outliers\n";
  return kExitOk;
}

int cmd_solve(const Options& o) {
  const ProblemSpec p = solver_problem(o);
  const SolverConfig cfg = solver_config(o);
  const SolveOutcome out = run_solve(p, cfg, o.baseline == "lm");
  const fs::path dir = out_dir(o);
  write_file(dir / "trace.csv", [&](std::ostream& os) { write_gbp_trace(os, out.gbp); });
  if (out.lm) {
    write_file(dir / "lm_trace.csv", [&](std::ostream& os) { write_lm_trace(os, *out.lm); });
  }
  write_file(dir / "summary.json",
             [&](std::ostream& os) { os << solve_summary_json(out, cfg) << '\n'; });
  std::printf("gbp: converged=%d iterations=%d final_are=%.4f px\n",
              out.gbp.converged, out.gbp.iterations, out.gbp.final_are);
  if (out.lm) {
    std::printf("lm: converged=%d steps=%d final_are=%.4f px\n", out.lm->converged,
                out.lm->steps, out.lm->are_trace.back());
  }
  return kExitOk;
}

int cmd_incremental(const Options& o) {
  const ProblemSpec p = solver_problem(o);
  const SolverConfig cfg = solver_config(o);
  IncrementalOptions io;
  io.cold_gbp = !o.no_cold;
  io.lm = o.baseline == "lm";
  const IncrementalResult r = run_incremental(p, cfg, io);
  write_file(out_dir(o) / "incremental.csv",
             [&](std::ostream& os) { write_incremental_table(os, r); });
  int fast = 0, total = 0;
  for (const auto& row : r.rows) {
    fast += row.gbp_converged && row.gbp_iterations < 10;
    total += row.gbp_iterations;
  }
  std::printf("%zu additions, %d converged in < 10 iterations, %d iterations total\n",
              r.rows.size(), fast, total);
  return kExitOk;
}

int cmd_sweep(const Options& o) {
  const ProblemSpec p = clean_problem(o);
  SolverConfig cfg = solver_config(o);
  SweepOptions so;
  so.noise_levels = o.noise_levels;
  so.trials = o.trials;
  so.seed = o.seed;
  so.landmark_init = parse_landmark_init(o.landmark_init);
  const auto rows = run_sweep(p, cfg, so);
  write_file(out_dir(o) / "sweep.csv", [&](std::ostream& os) { write_sweep_table(os, rows); });
  for (const auto& r : rows) {
    std::printf("noise %.3f m: gbp %d/%d lm %d/%d\n", r.noise, r.gbp_success, r.trials,
                r.lm_success, r.trials);
  }
  return kExitOk;
}

int cmd_outliers(const Options& o) {
  ProblemSpec p = clean_problem(o);
  if (!has_input(o)) {
    PerturbParams pp;
    pp.keyframe_sigma = o.kf_noise;
    pp.landmark_init = parse_landmark_init(o.landmark_init);
    pp.seed = o.seed;
    p = perturb(p, pp);
  }
  const SolverConfig cfg = solver_config(o);
  OutlierOptions oo;
  oo.fractions = o.fractions;
  oo.mode = parse_outlier_mode(o.outlier_mode);
  oo.seed = o.seed;
  oo.run_to_max = o.run_to_max;
  oo.include_lm = o.baseline == "lm";
  const auto rows = run_outliers(p, cfg, oo);
  const fs::path dir = out_dir(o);
  write_file(dir / "outliers.csv", [&](std::ostream& os) { write_outlier_table(os, rows); });
  write_file(dir / "outlier_trace.csv",
             [&](std::ostream& os) { write_outlier_traces(os, rows); });
  for (const auto& row : rows) {
    for (const auto& v : row.variants) {
      std::printf("fraction %.3f %-9s converged=%d inlier_are=%.4f px\n", row.fraction,
                  v.name.c_str(), v.converged, v.inlier_are);
    }
  }
  return kExitOk;
}

void add_input(CLI::App* app, Options& o) {
  auto* native = app->add_option("--input", o.input, "problem file (native format)");
  app->add_option("--bal", o.bal, "problem file (BAL text format)")
      ->excludes(native);
  app->add_option("--kf", o.keyframes, "synthetic keyframes")->check(CLI::PositiveNumber);
  app->add_option("--lm", o.landmarks, "synthetic landmarks")->check(CLI::PositiveNumber);
  app->add_option("--seed", o.seed, "random seed");
  app->add_option("--trajectory", o.trajectory, "arc or line")
      ->check(CLI::IsMember({"arc", "line"}));
  app->add_option("--radius", o.radius, "arc radius / line distance (m)");
  app->add_option("--extent", o.extent, "arc degrees / line length (m)");
  app->add_option("--box", o.box, "landmark box half extent (m)");
  app->add_option("--visibility", o.visibility, "visibility radius (m)");
  app->add_option("--pixel-noise", o.pixel_noise, "pixel noise sigma");
  app->add_option("--kf-noise", o.kf_noise, "keyframe translation noise (m)");
  app->add_option("--landmark-init", o.landmark_init, "unit or gaussian")
      ->check(CLI::IsMember({"unit", "gaussian"}));
  app->add_option("--outlier-mode", o.outlier_mode, "uniform or reassign")
      ->check(CLI::IsMember({"uniform", "reassign"}));
}

void add_schedule(CLI::App* app, Options& o) {
  app->add_option("--beta", o.beta, "relinearisation threshold");
  app->add_option("--damping", o.damping, "message damping");
  app->add_option("--nsigma", o.nsigma, "Huber threshold in sigmas (0 disables)");
  app->add_option("--max-iters", o.max_iters, "GBP iteration cap")->check(CLI::NonNegativeNumber);
  app->add_option("--are-target", o.are_target, "convergence target (px)");
  app->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
  app->add_option("--baseline", o.baseline, "none or lm")->check(CLI::IsMember({"none", "lm"}));
  app->add_option("--out", o.out, "output directory (default $GBPBA_OUT_DIR or .)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian belief propagation bundle adjustment"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen", "write a synthetic problem file");
  add_input(gen, o);
  gen->add_option("--outliers", o.outliers, "fraction of corrupted measurements")
      ->check(CLI::Range(0.0, 0.5));
  gen->add_option("--out", o.out, "output file (default $GBPBA_OUT_DIR/problem.txt)");

  auto* solve = app.add_subcommand("solve", "solve one problem, write trace and summary");
  add_input(solve, o);
  add_schedule(solve, o);

  auto* inc = app.add_subcommand("incremental", "replay keyframes one at a time");
  add_input(inc, o);
  add_schedule(inc, o);
  inc->add_flag("--no-cold", o.no_cold, "skip the from-scratch GBP comparison");

  auto* sweep = app.add_subcommand("sweep", "convergence proportion against keyframe noise");
  add_input(sweep, o);
  add_schedule(sweep, o);
  sweep->add_option("--noise-levels", o.noise_levels, "keyframe noise levels (m)")
      ->delimiter(',');
  sweep->add_option("--trials", o.trials, "trials per level")->check(CLI::PositiveNumber);

  auto* outl = app.add_subcommand("outliers", "robustness to injected outliers");
  add_input(outl, o);
  add_schedule(outl, o);
  outl->add_option("--fractions", o.fractions, "outlier fractions")->delimiter(',');
  outl->add_flag("--run-to-max", o.run_to_max, "run every variant to --max-iters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(o);
    if (*solve) return cmd_solve(o);
    if (*inc) return cmd_incremental(o);
    if (*sweep) return cmd_sweep(o);
    if (*outl) return cmd_outliers(o);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const GenerationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const VersionMismatch& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInvariant;
  }
  return kExitUsage;
}
