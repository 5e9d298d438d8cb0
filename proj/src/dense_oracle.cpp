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
#include "gbpba/dense_oracle.h"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace gbpba {

double DenseSystem::quadratic_energy(const VecX& x) const {
  return x.dot(lambda * x) - 2.0 * eta.dot(x) + constant;
}

DenseSystem assemble(const FactorGraph& graph, const AssembleOptions& opts) {
  DenseSystem sys;
  sys.num_keyframes = static_cast<int>(graph.keyframes().size());
  sys.num_landmarks = static_cast<int>(graph.landmarks().size());
  const long n = 6L * sys.num_keyframes + 3L * sys.num_landmarks;
  sys.eta = VecX::Zero(n);
  sys.lambda = MatX::Zero(n, n);
  const double scale =
      opts.prior_scale >= 0.0 ? opts.prior_scale : graph.current_prior_scale();

  auto add_prior = [&](const auto& v, long offset) {
    if (v.prior_pending) return;
    constexpr int kDim =
        std::remove_cvref_t<decltype(v.state)>::RowsAtCompileTime;
    const Vec<kDim> diag = v.prior_strength * scale;
    for (int i = 0; i < kDim; ++i) {
      sys.lambda(offset + i, offset + i) += diag[i];
      sys.eta[offset + i] += diag[i] * v.prior_mean[i];
    }
    sys.constant += v.prior_mean.dot(diag.cwiseProduct(v.prior_mean));
  };
  if (opts.include_priors) {
    for (const auto& v : graph.keyframes()) add_prior(v, sys.keyframe_offset(v.id));
    for (const auto& v : graph.landmarks()) add_prior(v, sys.landmark_offset(v.id));
  }

  auto add_factor = [&](const MeasurementFactor& f) {
    if (!f.linearised) return;
    const long ko = sys.keyframe_offset(f.keyframe);
    const long lo = sys.landmark_offset(f.landmark);
    const auto& l = f.factor.lambda;
    sys.lambda.block<6, 6>(ko, ko) += l.topLeftCorner<6, 6>();
    sys.lambda.block<6, 3>(ko, lo) += l.topRightCorner<6, 3>();
    sys.lambda.block<3, 6>(lo, ko) += l.bottomLeftCorner<3, 6>();
    sys.lambda.block<3, 3>(lo, lo) += l.bottomRightCorner<3, 3>();
    sys.eta.segment<6>(ko) += f.factor.eta.head<6>();
    sys.eta.segment<3>(lo) += f.factor.eta.tail<3>();
    const Vec2 b = f.lin_residual + f.jacobian * f.lin_point;
    sys.constant += f.huber_weight * b.dot(f.noise_information * b);
  };
  if (opts.factor_subset.empty()) {
    for (const auto& f : graph.factors()) add_factor(f);
  } else {
    for (int id : opts.factor_subset) add_factor(graph.factors().at(id));
  }
  return sys;
}

VecX stacked_states(const FactorGraph& graph) {
  const long nk = static_cast<long>(graph.keyframes().size());
  const long nl = static_cast<long>(graph.landmarks().size());
  VecX x(6 * nk + 3 * nl);
  for (long i = 0; i < nk; ++i) x.segment<6>(6 * i) = graph.keyframes()[i].state;
  for (long i = 0; i < nl; ++i) {
    x.segment<3>(6 * nk + 3 * i) = graph.landmarks()[i].state;
  }
  return x;
}

namespace {

std::string block_name(const DenseSystem& sys, long index) {
  const long kf_dims = 6L * sys.num_keyframes;
  if (index < kf_dims) return "keyframe " + std::to_string(index / 6);
  return "landmark " + std::to_string((index - kf_dims) / 3);
}

[[noreturn]] void throw_singular(const DenseSystem& sys) {
  Eigen::SelfAdjointEigenSolver<MatX> es(sys.lambda);
  const auto& values = es.eigenvalues();
  const double tol = kSingularPivotRatio * std::max(1.0, sys.lambda.trace());
  std::vector<std::string> blocks;
  for (long k = 0; k < values.size(); ++k) {
    if (values[k] > tol) break;
    const VecX v = es.eigenvectors().col(k);
    for (long i = 0; i < v.size(); ++i) {
      if (std::abs(v[i]) > 1e-3) {
        auto name = block_name(sys, i);
        if (std::find(blocks.begin(), blocks.end(), name) == blocks.end()) {
          blocks.push_back(std::move(name));
        }
      }
    }
  }
  std::string what = "dense system is singular; null space touches";
  for (const auto& b : blocks) what += " [" + b + "]";
  throw SingularSystem(what, std::move(blocks));
}

}  // namespace

VecX map_solve(const DenseSystem& system) {
  if (system.dim() == 0) return VecX();
  const Eigen::LDLT<MatX> ldlt(system.lambda);
  const double scale = system.lambda.diagonal().cwiseAbs().sum();
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      !(ldlt.vectorD().minCoeff() > kSingularPivotRatio * scale)) {
    throw_singular(system);
  }
  return ldlt.solve(system.eta);
}

std::vector<VariableMarginal> marginals(const DenseSystem& system,
                                        long max_dim) {
  if (system.dim() > max_dim) {
    throw OracleTooLarge("dense marginals limited to " +
                         std::to_string(max_dim) + " dimensions, got " +
                         std::to_string(system.dim()));
  }
  const Eigen::LDLT<MatX> ldlt(system.lambda);
  const double scale = system.lambda.diagonal().cwiseAbs().sum();
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      !(ldlt.vectorD().minCoeff() > kSingularPivotRatio * scale)) {
    throw_singular(system);
  }
  const MatX cov = ldlt.solve(MatX::Identity(system.dim(), system.dim()));
  const VecX mean = ldlt.solve(system.eta);
  std::vector<VariableMarginal> out;
  for (int i = 0; i < system.num_keyframes; ++i) {
    const long o = system.keyframe_offset(i);
    out.push_back({mean.segment(o, 6), cov.block(o, o, 6, 6)});
  }
  for (int i = 0; i < system.num_landmarks; ++i) {
    const long o = system.landmark_offset(i);
    out.push_back({mean.segment(o, 3), cov.block(o, o, 3, 3)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt baseline

namespace {

double robust_cost(double m, double nsigma, bool huber) {
  if (huber && nsigma > 0.0 && std::isfinite(nsigma) && m > nsigma) {
    return 2.0 * nsigma * m - nsigma * nsigma;
  }
  return m * m;
}

// d rho / d (m^2)
double robust_slope(double m, double nsigma, bool huber) {
  if (huber && nsigma > 0.0 && std::isfinite(nsigma) && m > nsigma) {
    return nsigma / m;
  }
  return 1.0;
}

double are_of(const FactorGraph& g, const std::vector<Vec6>& kfs,
              const std::vector<Vec3>& lms) {
  double sum = 0.0;
  for (const auto& f : g.factors()) {
    const auto h = try_project(Pose::from_vector(kfs[f.keyframe]),
                               lms[f.landmark], g.intrinsics());
    sum += h ? (f.z - *h).norm() : kBehindCameraPenalty;
  }
  return g.factors().empty() ? 0.0
                             : sum / static_cast<double>(g.factors().size());
}

}  // namespace

double lm_objective(const FactorGraph& graph, const std::vector<Vec6>& kfs,
                    const std::vector<Vec3>& lms, bool huber) {
  const double s = graph.options().prior_final_scale;
  double total = 0.0;
  for (const auto& v : graph.keyframes()) {
    const Vec6 d = kfs[v.id] - v.prior_mean;
    total += s * d.dot(v.prior_strength.cwiseProduct(d));
  }
  for (const auto& v : graph.landmarks()) {
    const Vec3 d = lms[v.id] - v.prior_mean;
    total += s * d.dot(v.prior_strength.cwiseProduct(d));
  }
  for (const auto& f : graph.factors()) {
    const auto h = try_project(Pose::from_vector(kfs[f.keyframe]),
                               lms[f.landmark], graph.intrinsics());
    if (!h) {
      total += kBehindCameraPenalty;
      continue;
    }
    total += robust_cost(mahalanobis(f.z - *h, f.noise_information),
                         f.huber_nsigma, huber);
  }
  return total;
}

LmReport lm_solve(const FactorGraph& input, const LmParams& params) {
  FactorGraph graph = input;
  if (graph.has_pending_priors()) graph.generate_pending_priors();
  const int nk = static_cast<int>(graph.keyframes().size());
  const int nl = static_cast<int>(graph.landmarks().size());
  const double prior_scale = graph.options().prior_final_scale;

  LmReport rep;
  rep.keyframes.resize(nk);
  rep.landmarks.resize(nl);
  for (int i = 0; i < nk; ++i) rep.keyframes[i] = graph.keyframes()[i].state;
  for (int i = 0; i < nl; ++i) rep.landmarks[i] = graph.landmarks()[i].state;

  double cost = lm_objective(graph, rep.keyframes, rep.landmarks, params.huber);
  double are = are_of(graph, rep.keyframes, rep.landmarks);
  rep.are_trace.push_back(are);
  rep.cost_trace.push_back(cost);
  auto target_reached = [&] {
    return params.are_target > 0.0 && !graph.factors().empty() &&
           are < params.are_target;
  };
  if (target_reached()) {
    rep.converged = true;
    return rep;
  }

  double lambda = params.initial_lambda;
  std::vector<Mat6> hcc(nk);
  std::vector<Vec6> gc(nk);
  std::vector<Mat<3, 3>> hll(nl);
  std::vector<Vec3> gl(nl);
  const size_t nf = graph.factors().size();
  std::vector<Mat<6, 3>> hcl(nf);
  std::vector<std::uint8_t> active(nf);

  while (rep.steps < params.max_steps) {
    // Linearise at the current states.
    for (int i = 0; i < nk; ++i) {
      const auto& v = graph.keyframes()[i];
      const Vec6 p = v.prior_strength * prior_scale;
      hcc[i] = p.asDiagonal();
      gc[i] = p.cwiseProduct(v.prior_mean - rep.keyframes[i]);
    }
    for (int i = 0; i < nl; ++i) {
      const auto& v = graph.landmarks()[i];
      const Vec3 p = v.prior_strength * prior_scale;
      hll[i] = p.asDiagonal();
      gl[i] = p.cwiseProduct(v.prior_mean - rep.landmarks[i]);
    }
    for (size_t i = 0; i < nf; ++i) {
      const auto& f = graph.factors()[i];
      const auto lin = try_linearize(Pose::from_vector(rep.keyframes[f.keyframe]),
                                     rep.landmarks[f.landmark],
                                     graph.intrinsics());
      active[i] = lin.has_value();
      if (!lin) continue;
      const Vec2 r = f.z - lin->prediction;
      const double w = robust_slope(mahalanobis(r, f.noise_information),
                                    f.huber_nsigma, params.huber);
      const Mat2 wi = w * f.noise_information;
      const Mat<6, 2> jc_t = lin->jacobian.leftCols<6>().transpose() * wi;
      const Mat<3, 2> jl_t = lin->jacobian.rightCols<3>().transpose() * wi;
      hcc[f.keyframe] += jc_t * lin->jacobian.leftCols<6>();
      hll[f.landmark] += jl_t * lin->jacobian.rightCols<3>();
      hcl[i] = jc_t * lin->jacobian.rightCols<3>();
      gc[f.keyframe] += jc_t * r;
      gl[f.landmark] += jl_t * r;
    }
    double gmax = 0.0;
    for (const auto& g : gc) gmax = std::max(gmax, g.cwiseAbs().maxCoeff());
    for (const auto& g : gl) gmax = std::max(gmax, g.cwiseAbs().maxCoeff());
    const auto behind = std::count(active.begin(), active.end(), 0);
    const double smooth_cost = cost - kBehindCameraPenalty * static_cast<double>(behind);
    if (gmax < 1e-10 * (1.0 + std::abs(smooth_cost))) {
      // Stationary. Only a success when no ARE target was requested.
      rep.converged = params.are_target <= 0.0;
      rep.failed = !rep.converged;
      break;
    }

    // Inner loop: damped solves until a step is accepted.
    bool accepted = false;
    while (!accepted && rep.steps < params.max_steps) {
      if (lambda > params.max_lambda) {
        rep.failed = true;
        break;
      }
      ++rep.steps;
      const bool fix_landmarks = rep.steps <= params.fix_landmarks_steps;
      std::vector<Vec6> dc(nk, Vec6::Zero());
      std::vector<Vec3> dl(nl, Vec3::Zero());
      bool solved = true;
      if (fix_landmarks) {
        for (int i = 0; i < nk; ++i) {
          Mat6 h = hcc[i];
          h.diagonal() *= (1.0 + lambda);
          const Eigen::LLT<Mat6> llt(h);
          if (llt.info() != Eigen::Success) {
            solved = false;
            break;
          }
          dc[i] = llt.solve(gc[i]);
        }
      } else {
        std::vector<Eigen::LLT<Mat<3, 3>>> hll_inv(nl);
        for (int i = 0; i < nl && solved; ++i) {
          Mat<3, 3> h = hll[i];
          h.diagonal() *= (1.0 + lambda);
          hll_inv[i].compute(h);
          solved = hll_inv[i].info() == Eigen::Success;
        }
        MatX s = MatX::Zero(6L * nk, 6L * nk);
        VecX rhs(6L * nk);
        for (int i = 0; i < nk && solved; ++i) {
          Mat6 h = hcc[i];
          h.diagonal() *= (1.0 + lambda);
          s.block<6, 6>(6L * i, 6L * i) = h;
          rhs.segment<6>(6L * i) = gc[i];
        }
        for (int l = 0; l < nl && solved; ++l) {
          const auto& adj = graph.landmarks()[l].factors;
          const Vec3 hinv_g = hll_inv[l].solve(gl[l]);
          for (int fa : adj) {
            if (!active[fa]) continue;
            const int ka = graph.factors()[fa].keyframe;
            const Mat<3, 6> hinv_hlc = hll_inv[l].solve(hcl[fa].transpose());
            rhs.segment<6>(6L * ka) -= hcl[fa] * hinv_g;
            for (int fb : adj) {
              if (!active[fb]) continue;
              const int kb = graph.factors()[fb].keyframe;
              s.block<6, 6>(6L * kb, 6L * ka) -= hcl[fb] * hinv_hlc;
            }
          }
        }
        if (solved) {
          const Eigen::LLT<MatX> llt(s);
          solved = llt.info() == Eigen::Success;
          if (solved) {
            const VecX x = llt.solve(rhs);
            for (int i = 0; i < nk; ++i) dc[i] = x.segment<6>(6L * i);
            for (int l = 0; l < nl; ++l) {
              Vec3 b = gl[l];
              for (int fa : graph.landmarks()[l].factors) {
                if (!active[fa]) continue;
                b -= hcl[fa].transpose() * dc[graph.factors()[fa].keyframe];
              }
              dl[l] = hll_inv[l].solve(b);
            }
          }
        }
      }
      if (!solved) {
        lambda *= params.lambda_up;
        rep.are_trace.push_back(are);
        rep.cost_trace.push_back(cost);
        continue;
      }
      std::vector<Vec6> kfs = rep.keyframes;
      std::vector<Vec3> lms = rep.landmarks;
      for (int i = 0; i < nk; ++i) {
        kfs[i] += dc[i];
        kfs[i].head<3>() = canonicalize_angle_axis(kfs[i].head<3>());
      }
      for (int i = 0; i < nl; ++i) lms[i] += dl[i];
      const double new_cost = lm_objective(graph, kfs, lms, params.huber);
      if (new_cost < cost) {
        const double rel = (cost - new_cost) / std::max(cost, 1e-300);
        rep.keyframes = std::move(kfs);
        rep.landmarks = std::move(lms);
        cost = new_cost;
        are = are_of(graph, rep.keyframes, rep.landmarks);
        lambda = std::max(lambda * params.lambda_down, 1e-15);
        ++rep.accepted_steps;
        accepted = true;
        rep.are_trace.push_back(are);
        rep.cost_trace.push_back(cost);
        if (target_reached()) {
          rep.converged = true;
        } else if (rel < params.function_tolerance) {
          rep.converged = params.are_target <= 0.0;
          rep.failed = !rep.converged;
        }
      } else {
        lambda *= params.lambda_up;
        rep.are_trace.push_back(are);
        rep.cost_trace.push_back(cost);
      }
    }
    if (rep.failed || rep.converged || !accepted) break;
  }
  return rep;
}

void apply_states(FactorGraph& graph, const LmReport& report) {
  for (size_t i = 0; i < graph.keyframes().size(); ++i) {
    graph.keyframes()[i].state = report.keyframes[i];
  }
  for (size_t i = 0; i < graph.landmarks().size(); ++i) {
    graph.landmarks()[i].state = report.landmarks[i];
  }
}

MatX finite_diff_jacobian(const std::function<VecX(const VecX&)>& fn,
                          const VecX& point, double step) {
  const VecX f0 = fn(point);
  MatX j(f0.size(), point.size());
  for (long c = 0; c < point.size(); ++c) {
    VecX plus = point, minus = point;
    plus[c] += step;
    minus[c] -= step;
    j.col(c) = (fn(plus) - fn(minus)) / (2.0 * step);
  }
  return j;
}

Mat29 finite_diff_measurement_jacobian(const Pose& pose, const Vec3& landmark,
                                       const Intrinsics& k, double step) {
  VecX x(9);
  x << pose.rotation, pose.translation, landmark;
  auto h = [&k](const VecX& s) -> VecX {
    const Pose p{s.head<3>(), s.segment<3>(3)};
    return project(p, s.tail<3>(), k);
  };
  return finite_diff_jacobian(h, x, step);
}

}  // namespace gbpba
