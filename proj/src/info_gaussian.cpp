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
#include "gbpba/info_gaussian.h"

#include <Eigen/Eigenvalues>

#include <algorithm>

namespace gbpba {

InfoGaussian marginalize_onto(const InfoGaussian& joint, long begin,
                              long count) {
  if (begin < 0 || count < 0 || begin + count > joint.dim()) {
    throw std::out_of_range("marginalize_onto: index range outside joint");
  }
  std::vector<long> keep(static_cast<size_t>(count));
  for (long i = 0; i < count; ++i) keep[static_cast<size_t>(i)] = begin + i;
  return marginalize_onto(joint, keep);
}

InfoGaussian marginalize_onto(const InfoGaussian& joint,
                              const std::vector<long>& keep) {
  const long n = joint.dim();
  std::vector<bool> kept(static_cast<size_t>(n), false);
  for (long k : keep) {
    if (k < 0 || k >= n || kept[static_cast<size_t>(k)]) {
      throw std::out_of_range("marginalize_onto: bad keep index");
    }
    kept[static_cast<size_t>(k)] = true;
  }
  std::vector<long> elim;
  for (long i = 0; i < n; ++i) {
    if (!kept[static_cast<size_t>(i)]) elim.push_back(i);
  }
  const long na = static_cast<long>(keep.size());
  const long nb = static_cast<long>(elim.size());

  VecX eta_a(na), eta_b(nb);
  MatX laa(na, na), lab(na, nb), lbb(nb, nb);
  for (long i = 0; i < na; ++i) {
    eta_a[i] = joint.eta[keep[i]];
    for (long j = 0; j < na; ++j) laa(i, j) = joint.lambda(keep[i], keep[j]);
    for (long j = 0; j < nb; ++j) lab(i, j) = joint.lambda(keep[i], elim[j]);
  }
  for (long i = 0; i < nb; ++i) {
    eta_b[i] = joint.eta[elim[i]];
    for (long j = 0; j < nb; ++j) lbb(i, j) = joint.lambda(elim[i], elim[j]);
  }
  if (nb == 0) {
    InfoGaussian out(eta_a, laa);
    symmetrize(out.lambda);
    return out;
  }
  auto out = try_schur_complement<Eigen::Dynamic, Eigen::Dynamic>(
      eta_a, eta_b, laa, lab, lbb);
  if (!out) throw SingularMarginalisation(lbb);
  return *out;
}

Moments to_moments(const InfoGaussian& g) {
  const double scale = g.lambda.diagonal().cwiseAbs().sum();
  const Eigen::LDLT<MatX> ldlt(g.lambda);
  if (!(scale > 0.0) || ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      !(ldlt.vectorD().minCoeff() > kSingularPivotRatio * scale)) {
    throw NotInvertible("information matrix is not positive definite");
  }
  Moments m;
  m.covariance = ldlt.solve(MatX::Identity(g.dim(), g.dim()));
  symmetrize(m.covariance);
  m.mean = ldlt.solve(g.eta);
  return m;
}

InfoGaussian from_moments(const VecX& mean, const MatX& covariance) {
  if (mean.size() != covariance.rows()) {
    throw DimensionMismatch(mean.size(), covariance.rows());
  }
  const double scale = covariance.diagonal().cwiseAbs().sum();
  const Eigen::LDLT<MatX> ldlt(covariance);
  if (!(scale > 0.0) || ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      !(ldlt.vectorD().minCoeff() > kSingularPivotRatio * scale)) {
    throw NotInvertible("covariance is not positive definite");
  }
  MatX lambda = ldlt.solve(MatX::Identity(mean.size(), mean.size()));
  symmetrize(lambda);
  VecX eta = lambda * mean;
  return InfoGaussian(std::move(eta), std::move(lambda));
}

double asymmetry(const MatX& lambda) {
  if (lambda.size() == 0) return 0.0;
  return (lambda - lambda.transpose()).cwiseAbs().maxCoeff();
}

double min_eigenvalue(const MatX& lambda) {
  if (lambda.size() == 0) return 0.0;
  const MatX sym = 0.5 * (lambda + lambda.transpose());
  Eigen::SelfAdjointEigenSolver<MatX> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool is_psd(const MatX& lambda, double rel_tol) {
  const double tr = std::max(1.0, lambda.trace());
  return min_eigenvalue(lambda) >= -rel_tol * tr;
}

}  // namespace gbpba
