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
#include "gbpba/dataset_io.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace gbpba {

bool ProblemSpec::has_ground_truth() const {
  return std::all_of(keyframes.begin(), keyframes.end(),
                     [](const auto& k) { return k.ground_truth.has_value(); }) &&
         std::all_of(landmarks.begin(), landmarks.end(),
                     [](const auto& l) { return l.ground_truth.has_value(); });
}

size_t ProblemSpec::outlier_count() const {
  return static_cast<size_t>(
      std::count_if(measurements.begin(), measurements.end(),
                    [](const auto& m) { return m.outlier; }));
}

bool ProblemSpec::operator==(const ProblemSpec& o) const {
  return to_string(*this) == to_string(o);
}

// ---------------------------------------------------------------------------
// Native format

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_vec(std::ostream& out, const Vec3& v) {
  out << ' ' << fmt(v.x()) << ' ' << fmt(v.y()) << ' ' << fmt(v.z());
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  /// Next non-empty, non-comment line split into tokens.
  bool next(std::vector<std::string>& tokens, std::string* raw = nullptr) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (raw) *raw = line;
      tokens.clear();
      std::istringstream ss(line);
      std::string tok;
      while (ss >> tok) tokens.push_back(tok);
      return true;
    }
    return false;
  }

  std::vector<std::string> expect(const std::string& what) {
    std::vector<std::string> t;
    if (!next(t)) throw ParseError(line_ + 1, "unexpected end of file, expected " + what);
    return t;
  }

  int line() const { return line_; }

 private:
  std::istream& in_;
  int line_ = 0;
};

double to_double(const std::string& s, int line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw ParseError(line, "expected a number, got '" + s + "'");
  }
  return v;
}

long to_long(const std::string& s, int line) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') {
    throw ParseError(line, "expected an integer, got '" + s + "'");
  }
  return v;
}

void expect_size(const std::vector<std::string>& t, size_t n, int line,
                 const std::string& what) {
  if (t.size() != n) {
    throw ParseError(line, what + ": expected " + std::to_string(n) +
                               " fields, got " + std::to_string(t.size()));
  }
}

long section_count(LineReader& r, const std::string& name) {
  const auto t = r.expect(name);
  if (t.size() != 2 || t[0] != name) {
    throw ParseError(r.line(), "expected '" + name + " <count>'");
  }
  const long n = to_long(t[1], r.line());
  if (n < 0) throw ParseError(r.line(), "negative count");
  return n;
}

Vec3 read_vec3(const std::vector<std::string>& t, size_t at, int line) {
  return Vec3(to_double(t[at], line), to_double(t[at + 1], line),
              to_double(t[at + 2], line));
}

}  // namespace

void save(const ProblemSpec& p, std::ostream& out) {
  out << "GBPBA-PROBLEM " << kProblemFormatVersion << '\n';
  out << "intrinsics " << fmt(p.intrinsics.fx) << ' ' << fmt(p.intrinsics.fy)
      << ' ' << fmt(p.intrinsics.cx) << ' ' << fmt(p.intrinsics.cy) << '\n';
  out << "image " << p.image_width << ' ' << p.image_height << '\n';
  out << "metadata " << p.metadata.size() << '\n';
  for (const auto& [k, v] : p.metadata) out << k << ' ' << v << '\n';
  out << "keyframes " << p.keyframes.size() << '\n';
  for (const auto& k : p.keyframes) {
    out << k.id;
    write_vec(out, k.initial.rotation);
    write_vec(out, k.initial.translation);
    if (k.ground_truth) {
      out << " gt";
      write_vec(out, k.ground_truth->rotation);
      write_vec(out, k.ground_truth->translation);
    } else {
      out << " nogt";
    }
    out << '\n';
  }
  out << "landmarks " << p.landmarks.size() << '\n';
  for (const auto& l : p.landmarks) {
    out << l.id;
    write_vec(out, l.initial);
    if (l.ground_truth) {
      out << " gt";
      write_vec(out, *l.ground_truth);
    } else {
      out << " nogt";
    }
    out << '\n';
  }
  out << "measurements " << p.measurements.size() << '\n';
  for (const auto& m : p.measurements) {
    out << m.keyframe << ' ' << m.landmark << ' ' << fmt(m.pixel.x()) << ' '
        << fmt(m.pixel.y()) << ' ' << fmt(m.sigma) << ' ' << (m.outlier ? 1 : 0)
        << '\n';
  }
  out << "end\n";
}

void save(const ProblemSpec& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  save(p, out);
  if (!out) throw IoError("failed writing " + path);
}

std::string to_string(const ProblemSpec& p) {
  std::ostringstream ss;
  save(p, ss);
  return ss.str();
}

ProblemSpec load(std::istream& in) {
  LineReader r(in);
  ProblemSpec p;
  auto t = r.expect("header");
  if (t.size() != 2 || t[0] != "GBPBA-PROBLEM") {
    throw ParseError(r.line(), "missing 'GBPBA-PROBLEM <version>' header");
  }
  const long version = to_long(t[1], r.line());
  if (version != kProblemFormatVersion) {
    throw VersionMismatch("problem format version " + std::to_string(version) +
                          " is not supported (expected " +
                          std::to_string(kProblemFormatVersion) + ")");
  }
  t = r.expect("intrinsics");
  if (t.empty() || t[0] != "intrinsics") throw ParseError(r.line(), "expected intrinsics");
  expect_size(t, 5, r.line(), "intrinsics");
  p.intrinsics = {to_double(t[1], r.line()), to_double(t[2], r.line()),
                  to_double(t[3], r.line()), to_double(t[4], r.line())};
  if (!p.intrinsics.valid()) throw ParseError(r.line(), "focal lengths must be positive");
  t = r.expect("image");
  if (t.empty() || t[0] != "image") throw ParseError(r.line(), "expected image");
  expect_size(t, 3, r.line(), "image");
  p.image_width = static_cast<int>(to_long(t[1], r.line()));
  p.image_height = static_cast<int>(to_long(t[2], r.line()));

  const long nmeta = section_count(r, "metadata");
  for (long i = 0; i < nmeta; ++i) {
    std::string raw;
    if (!r.next(t, &raw)) throw ParseError(r.line() + 1, "truncated metadata");
    const auto start = raw.find_first_not_of(" \t");
    const auto split = raw.find(' ', start);
    const std::string key = raw.substr(start, split - start);
    const std::string value = split == std::string::npos ? "" : raw.substr(split + 1);
    p.metadata[key] = value;
  }

  const long nk = section_count(r, "keyframes");
  for (long i = 0; i < nk; ++i) {
    t = r.expect("keyframe");
    if (t.size() != 8 && t.size() != 14) {
      throw ParseError(r.line(), "keyframe: expected 8 or 14 fields");
    }
    KeyframeSpec k;
    k.id = static_cast<int>(to_long(t[0], r.line()));
    if (k.id != i) throw ParseError(r.line(), "keyframe ids must be contiguous");
    k.initial = {read_vec3(t, 1, r.line()), read_vec3(t, 4, r.line())};
    if (t[7] == "gt" && t.size() == 14) {
      k.ground_truth = Pose{read_vec3(t, 8, r.line()), read_vec3(t, 11, r.line())};
    } else if (!(t[7] == "nogt" && t.size() == 8)) {
      throw ParseError(r.line(), "keyframe: expected 'gt' or 'nogt'");
    }
    p.keyframes.push_back(k);
  }

  const long nl = section_count(r, "landmarks");
  for (long i = 0; i < nl; ++i) {
    t = r.expect("landmark");
    if (t.size() != 5 && t.size() != 8) {
      throw ParseError(r.line(), "landmark: expected 5 or 8 fields");
    }
    LandmarkSpec l;
    l.id = static_cast<int>(to_long(t[0], r.line()));
    if (l.id != i) throw ParseError(r.line(), "landmark ids must be contiguous");
    l.initial = read_vec3(t, 1, r.line());
    if (t[4] == "gt" && t.size() == 8) {
      l.ground_truth = read_vec3(t, 5, r.line());
    } else if (!(t[4] == "nogt" && t.size() == 5)) {
      throw ParseError(r.line(), "landmark: expected 'gt' or 'nogt'");
    }
    p.landmarks.push_back(l);
  }

  const long nm = section_count(r, "measurements");
  for (long i = 0; i < nm; ++i) {
    t = r.expect("measurement");
    expect_size(t, 6, r.line(), "measurement");
    MeasurementSpec m;
    m.keyframe = static_cast<int>(to_long(t[0], r.line()));
    m.landmark = static_cast<int>(to_long(t[1], r.line()));
    if (m.keyframe < 0 || m.keyframe >= nk || m.landmark < 0 || m.landmark >= nl) {
      throw ParseError(r.line(), "measurement references an unknown id");
    }
    m.pixel = Vec2(to_double(t[2], r.line()), to_double(t[3], r.line()));
    m.sigma = to_double(t[4], r.line());
    if (!(m.sigma > 0.0)) throw ParseError(r.line(), "sigma must be positive");
    const long label = to_long(t[5], r.line());
    if (label != 0 && label != 1) throw ParseError(r.line(), "outlier label must be 0 or 1");
    m.outlier = label == 1;
    p.measurements.push_back(m);
  }
  t = r.expect("end");
  if (t.size() != 1 || t[0] != "end") throw ParseError(r.line(), "expected 'end'");
  return p;
}

ProblemSpec load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return load(in);
}

ProblemSpec from_string(const std::string& text) {
  std::istringstream ss(text);
  return load(ss);
}

// ---------------------------------------------------------------------------
// BAL import

namespace {

class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  std::string next(const std::string& what) {
    while (pos_ >= tokens_.size()) {
      std::string line;
      if (!std::getline(in_, line)) {
        throw ParseError(line_ + 1, "truncated file, expected " + what);
      }
      ++line_;
      tokens_.clear();
      pos_ = 0;
      std::istringstream ss(line);
      std::string tok;
      while (ss >> tok) tokens_.push_back(tok);
    }
    return tokens_[pos_++];
  }
  double real(const std::string& what) { return to_double(next(what), line_); }
  long integer(const std::string& what) { return to_long(next(what), line_); }
  int line() const { return line_; }

 private:
  std::istream& in_;
  std::vector<std::string> tokens_;
  size_t pos_ = 0;
  int line_ = 0;
};

}  // namespace

BalImportReport import_bal(std::istream& in) {
  TokenReader r(in);
  const long ncam = r.integer("camera count");
  const long npts = r.integer("point count");
  const long nobs = r.integer("observation count");
  if (ncam < 0 || npts < 0 || nobs < 0) throw ParseError(r.line(), "negative count");

  BalImportReport rep;
  auto& p = rep.problem;
  p.measurements.reserve(static_cast<size_t>(nobs));
  for (long i = 0; i < nobs; ++i) {
    MeasurementSpec m;
    m.keyframe = static_cast<int>(r.integer("camera index"));
    m.landmark = static_cast<int>(r.integer("point index"));
    if (m.keyframe < 0 || m.keyframe >= ncam || m.landmark < 0 || m.landmark >= npts) {
      throw ParseError(r.line(), "observation index out of range");
    }
    const double u = r.real("u");
    const double v = r.real("v");
    // The format looks down -z with y up; our camera looks down +z, y down.
    m.pixel = Vec2(u, -v);
    p.measurements.push_back(m);
  }

  // Rotation by pi about x maps the format's camera frame onto ours.
  const Mat3 flip = Vec3(1.0, -1.0, -1.0).asDiagonal();
  bool distortion = false;
  bool mixed_focal = false;
  double focal = 0.0;
  for (long i = 0; i < ncam; ++i) {
    double c[9];
    for (double& x : c) x = r.real("camera parameter");
    const Mat3 rot = flip * rotation_matrix(Vec3(c[0], c[1], c[2]));
    KeyframeSpec k;
    k.id = static_cast<int>(i);
    k.initial = Pose{log_rotation(rot), flip * Vec3(c[3], c[4], c[5])};
    p.keyframes.push_back(k);
    if (i == 0) {
      focal = c[6];
    } else if (c[6] != focal) {
      mixed_focal = true;
    }
    if (c[7] != 0.0 || c[8] != 0.0) distortion = true;
  }
  for (long i = 0; i < npts; ++i) {
    LandmarkSpec l;
    l.id = static_cast<int>(i);
    for (int c = 0; c < 3; ++c) l.initial[c] = r.real("point coordinate");
    p.landmarks.push_back(l);
  }
  if (ncam > 0 && !(focal > 0.0)) throw ParseError(r.line(), "focal length must be positive");
  p.intrinsics = Intrinsics{ncam > 0 ? focal : 1.0, ncam > 0 ? focal : 1.0, 0.0, 0.0};
  p.metadata["source"] = "bal";
  if (distortion) {
    rep.warnings.push_back("radial distortion terms dropped; pinhole model only");
  }
  if (mixed_focal) {
    rep.warnings.push_back("per-camera focal lengths differ; using the first camera's");
  }
  return rep;
}

BalImportReport import_bal(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return import_bal(in);
}

// ---------------------------------------------------------------------------
// Synthesis

namespace {

Pose look_at(const Vec3& centre, const Vec3& target) {
  const Vec3 z = (target - centre).normalized();
  Vec3 x = Vec3::UnitY().cross(z);
  if (x.norm() < 1e-9) x = Vec3::UnitX();
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 camera_to_world;
  camera_to_world << x, y, z;
  const Mat3 r = camera_to_world.transpose();
  return Pose{log_rotation(r), -r * centre};
}

}  // namespace

ProblemSpec synthesize(const SynthParams& sp) {
  if (sp.keyframes <= 0 || sp.landmarks <= 0 || !(sp.radius > 0.0) ||
      !(sp.box_half_extent > 0.0) || !(sp.visibility_radius > 0.0) ||
      sp.pixel_noise < 0.0 || !(sp.measurement_sigma > 0.0) ||
      !sp.intrinsics.valid()) {
    throw GenerationError("synthesis parameters must be positive");
  }
  std::mt19937_64 rng(sp.seed);
  std::uniform_real_distribution<double> box(-sp.box_half_extent, sp.box_half_extent);
  std::normal_distribution<double> noise(0.0, 1.0);

  ProblemSpec p;
  p.intrinsics = sp.intrinsics;
  p.image_width = sp.image_width;
  p.image_height = sp.image_height;

  std::vector<Pose> poses;
  for (int i = 0; i < sp.keyframes; ++i) {
    const double s = sp.keyframes == 1 ? 0.5 : static_cast<double>(i) / (sp.keyframes - 1);
    Vec3 centre, target;
    if (sp.trajectory == TrajectoryShape::kArc) {
      const double phi = (s - 0.5) * sp.extent * M_PI / 180.0;
      centre = Vec3(sp.radius * std::sin(phi), -0.2 * sp.box_half_extent,
                    -sp.radius * std::cos(phi));
      target = Vec3::Zero();
    } else {
      centre = Vec3((s - 0.5) * sp.extent, -0.2 * sp.box_half_extent, -sp.radius);
      target = centre + Vec3(0.0, 0.2 * sp.box_half_extent, sp.radius);
    }
    poses.push_back(look_at(centre, target));
  }
  std::vector<Vec3> points(static_cast<size_t>(sp.landmarks));
  for (auto& pt : points) {
    const double x = box(rng);
    const double y = box(rng);
    const double z = box(rng);
    pt = Vec3(x, y, z);
  }

  struct Obs {
    int kf;
    int lm;
    Vec2 px;
  };
  std::vector<Obs> obs;
  std::vector<int> count(points.size(), 0);
  for (int k = 0; k < sp.keyframes; ++k) {
    const Vec3 c = camera_center(poses[k]);
    for (size_t l = 0; l < points.size(); ++l) {
      if ((points[l] - c).norm() > sp.visibility_radius) continue;
      const Vec3 pc = to_camera(poses[k], points[l]);
      if (pc.z() < 0.1) continue;
      const Vec2 px(sp.intrinsics.fx * pc.x() / pc.z() + sp.intrinsics.cx,
                    sp.intrinsics.fy * pc.y() / pc.z() + sp.intrinsics.cy);
      if (px.x() < 0.0 || px.y() < 0.0 || px.x() >= sp.image_width ||
          px.y() >= sp.image_height) {
        continue;
      }
      obs.push_back({k, static_cast<int>(l), px});
      ++count[l];
    }
  }
  std::vector<int> remap(points.size(), -1);
  for (size_t l = 0; l < points.size(); ++l) {
    if (count[l] >= 2) {
      remap[l] = static_cast<int>(p.landmarks.size());
      LandmarkSpec spec;
      spec.id = remap[l];
      spec.initial = points[l];
      spec.ground_truth = points[l];
      p.landmarks.push_back(spec);
    }
  }
  if (p.landmarks.empty()) {
    throw GenerationError("no landmark is observed by two or more keyframes");
  }
  for (int k = 0; k < sp.keyframes; ++k) {
    p.keyframes.push_back({k, poses[k], poses[k]});
  }
  for (const auto& o : obs) {
    if (remap[o.lm] < 0) continue;
    MeasurementSpec m;
    m.keyframe = o.kf;
    m.landmark = remap[o.lm];
    const double du = noise(rng);
    const double dv = noise(rng);
    m.pixel = o.px + sp.pixel_noise * Vec2(du, dv);
    m.sigma = sp.measurement_sigma;
    p.measurements.push_back(m);
  }
  p.metadata["generator"] = "synthesize";
  p.metadata["seed"] = std::to_string(sp.seed);
  p.metadata["trajectory"] = sp.trajectory == TrajectoryShape::kArc ? "arc" : "line";
  p.metadata["pixel_noise"] = fmt(sp.pixel_noise);
  p.metadata["requested_keyframes"] = std::to_string(sp.keyframes);
  p.metadata["requested_landmarks"] = std::to_string(sp.landmarks);
  return p;
}

Vec3 initialise_along_bearing(const Pose& pose, const Vec2& pixel,
                              const Intrinsics& k, double range) {
  const Vec3 p_cam = range * back_project_bearing(pixel, k);
  return rotation_matrix(pose.rotation).transpose() * (p_cam - pose.translation);
}

ProblemSpec perturb(const ProblemSpec& problem, const PerturbParams& pp) {
  if (!problem.has_ground_truth()) {
    throw GenerationError("perturb requires ground truth for every variable");
  }
  ProblemSpec p = problem;
  std::mt19937_64 rng(pp.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& k : p.keyframes) {
    k.initial = *k.ground_truth;
    for (int a = 0; a < 3; ++a) k.initial.translation[a] += pp.keyframe_sigma * gauss(rng);
  }
  if (pp.landmark_init == LandmarkInit::kGaussian) {
    for (auto& l : p.landmarks) {
      l.initial = *l.ground_truth;
      for (int a = 0; a < 3; ++a) l.initial[a] += pp.landmark_sigma * gauss(rng);
    }
  } else {
    // First observation = lowest keyframe id, then file order.
    std::vector<int> first(p.landmarks.size(), -1);
    for (size_t i = 0; i < p.measurements.size(); ++i) {
      const auto& m = p.measurements[i];
      const int cur = first[m.landmark];
      if (cur < 0 || m.keyframe < p.measurements[cur].keyframe) {
        first[m.landmark] = static_cast<int>(i);
      }
    }
    for (auto& l : p.landmarks) {
      if (first[l.id] < 0) {
        l.initial = *l.ground_truth;
        continue;
      }
      const auto& m = p.measurements[first[l.id]];
      l.initial = initialise_along_bearing(p.keyframes[m.keyframe].initial, m.pixel,
                                           p.intrinsics, 1.0);
    }
  }
  p.metadata["perturb_seed"] = std::to_string(pp.seed);
  p.metadata["keyframe_sigma"] = fmt(pp.keyframe_sigma);
  p.metadata["landmark_init"] =
      pp.landmark_init == LandmarkInit::kUnitRange ? "unit_range" : "gaussian";
  return p;
}

std::string to_string(OutlierMode mode) {
  return mode == OutlierMode::kReassign ? "reassign" : "uniform";
}

OutlierMode parse_outlier_mode(const std::string& s) {
  if (s == "reassign") return OutlierMode::kReassign;
  if (s == "uniform") return OutlierMode::kUniform;
  throw std::invalid_argument("unknown outlier mode '" + s + "'");
}

ProblemSpec inject_outliers(const ProblemSpec& problem, double fraction,
                            OutlierMode mode, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 0.5)) {
    throw std::invalid_argument("outlier fraction must lie in [0, 0.5]");
  }
  ProblemSpec p = problem;
  const size_t n = p.measurements.size();
  const auto target = static_cast<size_t>(std::llround(fraction * static_cast<double>(n)));
  std::mt19937_64 rng(seed);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<int>> seen_by(p.keyframes.size());
  for (const auto& m : problem.measurements) {
    auto& v = seen_by[m.keyframe];
    if (std::find(v.begin(), v.end(), m.landmark) == v.end()) v.push_back(m.landmark);
  }
  std::uniform_real_distribution<double> u(0.0, p.image_width);
  std::uniform_real_distribution<double> v(0.0, p.image_height);

  size_t done = 0;
  int skipped = 0;
  for (size_t idx = 0; idx < n && done < target; ++idx) {
    auto& m = p.measurements[order[idx]];
    if (m.outlier) continue;
    if (mode == OutlierMode::kReassign) {
      const auto& candidates = seen_by[m.keyframe];
      if (candidates.size() < 2) {
        ++skipped;
        ++done;
        continue;
      }
      std::uniform_int_distribution<size_t> pick(0, candidates.size() - 2);
      size_t j = pick(rng);
      const auto self = std::find(candidates.begin(), candidates.end(), m.landmark);
      if (self != candidates.end() &&
          j >= static_cast<size_t>(self - candidates.begin())) {
        ++j;
      }
      m.landmark = candidates[j];
    } else {
      m.pixel = Vec2(u(rng), v(rng));
    }
    m.outlier = true;
    ++done;
  }
  p.metadata["outlier_fraction"] = fmt(fraction);
  p.metadata["outlier_mode"] = to_string(mode);
  p.metadata["outlier_seed"] = std::to_string(seed);
  p.metadata["outliers_skipped"] = std::to_string(skipped);
  return p;
}

}  // namespace gbpba
