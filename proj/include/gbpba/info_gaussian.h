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

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gbpba {

template <int Dim>
using Vec = Eigen::Matrix<double, Dim, 1>;
template <int Rows, int Cols>
using Mat = Eigen::Matrix<double, Rows, Cols>;

using VecX = Vec<Eigen::Dynamic>;
using MatX = Mat<Eigen::Dynamic, Eigen::Dynamic>;

/// Relative pivot threshold under which a conditioning block is treated as
/// singular: |pivot| < kSingularPivotRatio * trace.
inline constexpr double kSingularPivotRatio = 1e-12;
/// Maximum tolerated |L(i,j) - L(j,i)|.
inline constexpr double kSymmetryTolerance = 1e-10;

class DimensionMismatch : public std::invalid_argument {
 public:
  DimensionMismatch(long lhs, long rhs)
      : std::invalid_argument("InfoGaussian dimension mismatch: " +
                              std::to_string(lhs) + " vs " +
                              std::to_string(rhs)) {}
};

/// Raised when the eliminated block of a joint cannot be factorised.
class SingularMarginalisation : public std::runtime_error {
 public:
  explicit SingularMarginalisation(MatX block)
      : std::runtime_error("singular block in Schur-complement marginalisation"),
        block_(std::move(block)) {}
  const MatX& block() const { return block_; }

 private:
  MatX block_;
};

class NotInvertible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gaussian in information form, N^-1(x; eta, lambda) with
/// p(x) ~ exp(-1/2 x^T lambda x + eta^T x).
///
/// Dim is a compile-time size for the hot paths of the solver (3, 6, 9) or
/// Eigen::Dynamic for the general API.
template <int Dim>
struct InfoGaussianT {
  Vec<Dim> eta;
  Mat<Dim, Dim> lambda;

  InfoGaussianT() {
    if constexpr (Dim != Eigen::Dynamic) {
      eta.setZero();
      lambda.setZero();
    }
  }
  InfoGaussianT(Vec<Dim> eta_in, Mat<Dim, Dim> lambda_in)
      : eta(std::move(eta_in)), lambda(std::move(lambda_in)) {
    if (eta.size() != lambda.rows() || lambda.rows() != lambda.cols()) {
      throw DimensionMismatch(eta.size(), lambda.rows());
    }
  }

  static InfoGaussianT zero(long dim = Dim) {
    return InfoGaussianT(Vec<Dim>::Zero(dim), Mat<Dim, Dim>::Zero(dim, dim));
  }

  long dim() const { return eta.size(); }

  template <int Other>
  InfoGaussianT<Other> cast() const {
    return InfoGaussianT<Other>(eta, lambda);
  }

  bool operator==(const InfoGaussianT& o) const {
    return eta == o.eta && lambda == o.lambda;
  }
};

using InfoGaussian = InfoGaussianT<Eigen::Dynamic>;
using Gaussian3 = InfoGaussianT<3>;
using Gaussian6 = InfoGaussianT<6>;
using Gaussian9 = InfoGaussianT<9>;

struct Moments {
  VecX mean;
  MatX covariance;
};

template <int Dim>
InfoGaussianT<Dim> product(const InfoGaussianT<Dim>& a,
                           const InfoGaussianT<Dim>& b) {
  if (a.dim() != b.dim()) throw DimensionMismatch(a.dim(), b.dim());
  return InfoGaussianT<Dim>(a.eta + b.eta, a.lambda + b.lambda);
}

/// Division of densities. The result is a message, not necessarily a density,
/// so its lambda may be indefinite.
template <int Dim>
InfoGaussianT<Dim> quotient(const InfoGaussianT<Dim>& a,
                            const InfoGaussianT<Dim>& b) {
  if (a.dim() != b.dim()) throw DimensionMismatch(a.dim(), b.dim());
  return InfoGaussianT<Dim>(a.eta - b.eta, a.lambda - b.lambda);
}

template <class Derived>
void symmetrize(Eigen::MatrixBase<Derived>& m) {
  m = (0.5 * (m + m.transpose())).eval();
}

/// Schur complement of a partitioned joint onto its "a" block:
///   eta'    = eta_a - L_ab L_bb^-1 eta_b
///   lambda' = L_aa  - L_ab L_bb^-1 L_ba
/// L_bb is factorised (LDLT) rather than inverted. Returns nullopt when a pivot
/// falls below kSingularPivotRatio * |trace(L_bb)|.
template <int KeepDim, int ElimDim>
std::optional<InfoGaussianT<KeepDim>> try_schur_complement(
    const Vec<KeepDim>& eta_a, const Vec<ElimDim>& eta_b,
    const Mat<KeepDim, KeepDim>& lambda_aa,
    const Mat<KeepDim, ElimDim>& lambda_ab,
    const Mat<ElimDim, ElimDim>& lambda_bb) {
  const double scale = lambda_bb.diagonal().cwiseAbs().sum();
  if (!(scale > 0.0)) return std::nullopt;
  const Eigen::LDLT<Mat<ElimDim, ElimDim>> ldlt(lambda_bb);
  if (ldlt.info() != Eigen::Success) return std::nullopt;
  if (!(ldlt.vectorD().cwiseAbs().minCoeff() >= kSingularPivotRatio * scale)) {
    return std::nullopt;
  }
  const Mat<ElimDim, KeepDim> lambda_ba = lambda_ab.transpose();
  const Mat<ElimDim, KeepDim> solved_lambda = ldlt.solve(lambda_ba);
  const Vec<ElimDim> solved_eta = ldlt.solve(eta_b);
  InfoGaussianT<KeepDim> out;
  out.eta = eta_a - lambda_ab * solved_eta;
  out.lambda = lambda_aa - lambda_ab * solved_lambda;
  symmetrize(out.lambda);
  return out;
}

/// Marginalises a joint onto the contiguous index range [begin, begin + count).
/// Throws SingularMarginalisation carrying the eliminated block when it cannot
/// be factorised.
InfoGaussian marginalize_onto(const InfoGaussian& joint, long begin, long count);

/// Marginalises onto an arbitrary ordered subset of indices.
InfoGaussian marginalize_onto(const InfoGaussian& joint,
                              const std::vector<long>& keep);

/// mean = lambda^-1 eta, covariance = lambda^-1. Requires lambda positive
/// definite (smallest pivot above 1e-12 * trace); throws NotInvertible.
Moments to_moments(const InfoGaussian& g);
InfoGaussian from_moments(const VecX& mean, const MatX& covariance);

/// Solves lambda * x = eta if lambda is positive definite.
template <int Dim>
std::optional<Vec<Dim>> try_mean(const InfoGaussianT<Dim>& g) {
  const double scale = g.lambda.diagonal().cwiseAbs().sum();
  if (!(scale > 0.0)) return std::nullopt;
  const Eigen::LDLT<Mat<Dim, Dim>> ldlt(g.lambda);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return std::nullopt;
  if (!(ldlt.vectorD().minCoeff() > kSingularPivotRatio * scale)) {
    return std::nullopt;
  }
  return Vec<Dim>(ldlt.solve(g.eta));
}

/// max |L(i,j) - L(j,i)|
double asymmetry(const MatX& lambda);

/// Smallest eigenvalue of the symmetric part of lambda.
double min_eigenvalue(const MatX& lambda);

/// PSD within tolerance: min eigenvalue >= -1e-8 * max(1, trace).
bool is_psd(const MatX& lambda, double rel_tol = 1e-8);

/// Rounds every entry through single precision. Used only by the optional
/// reduced-precision study mode of the engine.
template <int Dim>
void round_to_float(InfoGaussianT<Dim>& g) {
  g.eta = g.eta.template cast<float>().template cast<double>();
  g.lambda = g.lambda.template cast<float>().template cast<double>();
}

}  // namespace gbpba
