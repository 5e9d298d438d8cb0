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
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "gbpba/dense_oracle.h"
#include "test_support.h"

namespace gbpba {
namespace {

TEST(DenseOracle, AssembleMatchesFactorSum) {
  FactorGraph g = FactorGraph::build(testing::desk_problem(2, 3, 12));
  AssembleOptions o;
  o.include_priors = false;
  const DenseSystem s = assemble(g, o);
  EXPECT_EQ(s.dim(), 6 * 3 + 3 * static_cast<long>(g.landmarks().size()));
  const auto& f = g.factors()[4];
  AssembleOptions one = o;
  one.factor_subset = {4};
  const DenseSystem s1 = assemble(g, one);
  EXPECT_TRUE(s1.lambda.block(s1.keyframe_offset(f.keyframe), s1.landmark_offset(f.landmark), 6, 3)
                  .isApprox(f.factor.lambda.topRightCorner<6, 3>()));
  EXPECT_EQ(asymmetry(s.lambda), 0.0);
  EXPECT_TRUE(is_psd(s.lambda));
}

TEST(DenseOracle, QuadraticEnergyMatchesLinearisedEnergy) {
  FactorGraph g = FactorGraph::build(testing::desk_problem(4, 3, 15));
  const DenseSystem s = assemble(g);
  const VecX x = stacked_states(g) + VecX::Constant(s.dim(), 1e-3);
  // Move the states and compare the model energy with the quadratic form.
  for (auto& k : g.keyframes()) k.state.array() += 1e-3;
  for (auto& l : g.landmarks()) l.state.array() += 1e-3;
  const double e = linearised_energy(g);
  EXPECT_NEAR(s.quadratic_energy(x), e, 1e-6 * (1 + e));
}

TEST(DenseOracle, MapSolveMinimisesQuadratic) {
  FactorGraph g = FactorGraph::build(testing::desk_problem(4, 3, 15));
  const DenseSystem s = assemble(g);
  const VecX mu = map_solve(s);
  EXPECT_LT((s.lambda * mu - s.eta).norm(), 1e-8 * s.eta.norm());
  const double e0 = s.quadratic_energy(mu);
  VecX bumped = mu;
  bumped[0] += 1e-3;
  EXPECT_GT(s.quadratic_energy(bumped), e0);
}

TEST(DenseOracle, SingularSystemNamesBlocks) {
  FactorGraph g = FactorGraph::build(testing::desk_problem(2, 3, 12));
  AssembleOptions o;
  o.include_priors = false;
  try {
    map_solve(assemble(g, o));
    FAIL() << "expected SingularSystem";
  } catch (const SingularSystem& e) {
    EXPECT_FALSE(e.blocks().empty());
  }
}

TEST(DenseOracle, MarginalsMatchInverse) {
  FactorGraph g = FactorGraph::build(testing::desk_problem(4, 2, 8));
  const DenseSystem s = assemble(g);
  const auto m = marginals(s);
  ASSERT_EQ(m.size(), g.variable_count());
  const MatX cov = s.lambda.inverse();
  const long o = s.landmark_offset(1);
  EXPECT_LT(testing::relative_error(m[2 + 1].covariance, MatX(cov.block(o, o, 3, 3))), 1e-8);
  EXPECT_THROW(marginals(s, 10), OracleTooLarge);
}

TEST(DenseOracle, FiniteDifferenceJacobianOfKnownFunction) {
  const auto fn = [](const VecX& x) {
    VecX y(2);
    y << x[0] * x[1], std::sin(x[0]);
    return y;
  };
  VecX p(2);
  p << 0.5, 2.0;
  const MatX j = finite_diff_jacobian(fn, p, 1e-6);
  EXPECT_NEAR(j(0, 0), 2.0, 1e-8);
  EXPECT_NEAR(j(0, 1), 0.5, 1e-8);
  EXPECT_NEAR(j(1, 0), std::cos(0.5), 1e-8);
  EXPECT_NEAR(j(1, 1), 0.0, 1e-8);
}

TEST(Lm, ConvergesOnDeskProblem) {
  const FactorGraph g = FactorGraph::build(testing::desk_problem(1));
  const LmReport r = lm_solve(g);
  EXPECT_TRUE(r.converged);
  EXPECT_FALSE(r.failed);
  EXPECT_LT(r.are_trace.back(), 1.5);
  EXPECT_EQ(r.are_trace.size(), static_cast<size_t>(r.steps) + 1);
  for (size_t i = 1; i < r.cost_trace.size(); ++i) {
    EXPECT_LE(r.cost_trace[i], r.cost_trace[i - 1] * (1 + 1e-12));
  }
}

TEST(Lm, AgreesWithGbpFixedPoint) {
  // Without Huber both solvers minimise the same objective at final prior
  // strength. GBP only relinearises beyond beta, so beta is made small here.
  const ProblemSpec p = testing::desk_problem(2, 6, 40);
  GraphOptions o;
  o.huber_nsigma = 0.0;
  FactorGraph g = FactorGraph::build(p, o);
  ScheduleParams s;
  s.are_target = 0.0;
  s.max_iters = 3000;
  s.beta = 1e-8;
  solve(g, s);
  LmParams lp;
  lp.are_target = 0.0;
  lp.max_steps = 200;
  lp.huber = false;
  const LmReport r = lm_solve(FactorGraph::build(p, o), lp);
  ASSERT_FALSE(r.failed);
  FactorGraph lm_graph = FactorGraph::build(p);
  apply_states(lm_graph, r);
  EXPECT_LT((stacked_states(g) - stacked_states(lm_graph)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Lm, ObjectiveIsFiniteBehindCamera) {
  const FactorGraph g = FactorGraph::build(testing::desk_problem(2, 3, 12));
  std::vector<Vec6> k;
  std::vector<Vec3> l;
  for (const auto& v : g.keyframes()) k.push_back(v.state);
  for (const auto& v : g.landmarks()) l.push_back(v.state);
  const double base = lm_objective(g, k, l, false);
  EXPECT_TRUE(std::isfinite(base));
  l[0] = k[0].tail<3>() * 0.0 + camera_center(Pose::from_vector(k[0]));
  const double moved = lm_objective(g, k, l, false);
  EXPECT_TRUE(std::isfinite(moved));
  EXPECT_GE(moved, kBehindCameraPenalty);
}

TEST(Lm, HuberReducesOutlierInfluence) {
  const FactorGraph g = FactorGraph::build(
      inject_outliers(testing::desk_problem(1), 0.1, OutlierMode::kUniform, 1));
  std::vector<Vec6> k;
  std::vector<Vec3> l;
  for (const auto& v : g.keyframes()) k.push_back(v.state);
  for (const auto& v : g.landmarks()) l.push_back(v.state);
  EXPECT_LT(lm_objective(g, k, l, true), lm_objective(g, k, l, false));
}

}  // namespace
}  // namespace gbpba
