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

#include "gbpba/dense_oracle.h"
#include "gbpba/gbp_engine.h"
#include "test_support.h"

namespace gbpba {
namespace {

TEST(Schedule, DefaultsAndValidation) {
  ScheduleParams s;
  EXPECT_DOUBLE_EQ(s.beta, 0.01);
  EXPECT_EQ(s.relin_cooldown, 10);
  EXPECT_DOUBLE_EQ(s.damping, 0.4);
  EXPECT_EQ(s.undamped_window, 8);
  EXPECT_NO_THROW(s.validate());
  s.damping = 1.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.beta = 0.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.workers = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.relin_cooldown = -1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Engine, FirstMessagesAreSingular) {
  // Before any variable-to-factor message exists, the eliminated block of a
  // single reprojection factor has rank 2 and cannot be conditioned.
  FactorGraph g = FactorGraph::build(testing::desk_problem(1, 3, 10));
  const IterationReport r = iterate(g, {});
  EXPECT_EQ(r.singular_messages, 2 * static_cast<int>(g.factors().size()));
  EXPECT_EQ(r.recovered_messages, 2 * static_cast<int>(g.factors().size()));
  const IterationReport r2 = iterate(g, {});
  EXPECT_EQ(r2.singular_messages, 0);
}

TEST(Engine, RecoveredMessageIsBeliefQuotient) {
  FactorGraph g = FactorGraph::build(testing::desk_problem(4, 4, 20));
  run(g, {}, 5);
  for (const auto& f : g.factors()) {
    const auto& b = g.landmarks()[f.landmark].belief;
    EXPECT_LT((f.msg_from_landmark.eta + f.msg_to_landmark.eta - b.eta).norm(),
              1e-9 * (1 + b.eta.norm()));
  }
}

TEST(Engine, BeliefIsPriorTimesMessages) {
  FactorGraph g = FactorGraph::build(testing::desk_problem(4, 4, 20));
  run(g, {}, 3);
  const auto& v = g.keyframes()[2];
  Gaussian6 expect = g.prior_at(v, 2);
  for (int fid : v.factors) expect = product(expect, g.factors()[fid].msg_to_keyframe);
  EXPECT_LT((expect.lambda - v.belief.lambda).norm(), 1e-9 * expect.lambda.norm());
  EXPECT_LT((*try_mean(v.belief) - v.state).norm(), 1e-12);
}

TEST(Engine, DampingOnlyAffectsEta) {
  FactorGraph g = FactorGraph::build(testing::desk_problem(4, 4, 20));
  run(g, {}, 3);
  MeasurementFactor f = g.factors()[0];
  MeasurementFactor undamped = f;
  ScheduleParams s;
  f.iters_since_relin = s.undamped_window;  // past the undamped window
  const Gaussian3 before = f.msg_to_landmark;
  const MessageResult damped = factor_to_variable_message(f, MessageTarget::kLandmark, s);
  EXPECT_DOUBLE_EQ(damped.damping, 0.4);
  const MessageResult plain = factor_to_variable_message(undamped, MessageTarget::kLandmark, s);
  EXPECT_DOUBLE_EQ(plain.damping, 0.0);
  EXPECT_EQ(f.msg_to_landmark.lambda, undamped.msg_to_landmark.lambda);
  const Vec3 blended = 0.6 * undamped.msg_to_landmark.eta + 0.4 * before.eta;
  EXPECT_LT((f.msg_to_landmark.eta - blended).norm(), 1e-9 * (1 + blended.norm()));
}

TEST(Engine, RelinearisationRespectsBetaAndCooldown) {
  FactorGraph g = FactorGraph::build(testing::desk_problem(4, 4, 20));
  ScheduleParams s;
  MeasurementFactor& f = g.factors()[0];
  f.iters_since_relin = 10;
  // States equal the linearisation point: not due.
  EXPECT_FALSE(relinearize(f, g, s));
  EXPECT_EQ(f.iters_since_relin, 11);
  g.keyframes()[f.keyframe].state[3] += 0.02;
  g.keyframes()[f.keyframe].belief_valid = true;
  g.landmarks()[f.landmark].belief_valid = true;
  f.iters_since_relin = 5;
  EXPECT_FALSE(relinearize(f, g, s));  // cooling down
  f.iters_since_relin = 8;
  EXPECT_FALSE(relinearize(f, g, s));
  EXPECT_TRUE(relinearize(f, g, s));  // tenth iteration since the last one
  EXPECT_EQ(f.iters_since_relin, 0);
  s.relinearise = false;
  g.keyframes()[f.keyframe].state[3] += 0.5;
  f.iters_since_relin = 100;
  EXPECT_FALSE(relinearize(f, g, s));
}

TEST(Engine, StaleRelinearisationKeepsFactor) {
  FactorGraph g = FactorGraph::build(testing::desk_problem(4, 4, 20));
  MeasurementFactor& f = g.factors()[0];
  const Gaussian9 before = f.factor;
  f.iters_since_relin = 10;
  g.landmarks()[f.landmark].state = Vec3(0, 0, 0);
  g.keyframes()[f.keyframe].state.tail<3>() = Vec3(0, 0, -5);
  g.keyframes()[f.keyframe].belief_valid = true;
  g.landmarks()[f.landmark].belief_valid = true;
  bool stale = false;
  EXPECT_FALSE(relinearize(f, g, {}, &stale));
  EXPECT_TRUE(stale);
  EXPECT_EQ(f.factor, before);
}

TEST(Engine, SmallTreeIsExact) {
  const auto tree = testing::random_tree_problem(17, 6);
  FactorGraph g = FactorGraph::build(tree.problem, testing::fixed_prior_options());
  ScheduleParams s = testing::linear_schedule();
  s.damping = 0.0;
  run(g, s, tree.diameter + 1);
  const auto marg = marginals(assemble(g));
  for (size_t i = 0; i < g.keyframes().size(); ++i) {
    const auto m = to_moments(g.keyframes()[i].belief.cast<Eigen::Dynamic>());
    EXPECT_LT(testing::relative_error(m.covariance, marg[i].covariance), 1e-9);
    EXPECT_LT(testing::relative_error(m.mean, marg[i].mean), 1e-9);
  }
}

TEST(Engine, LoopyLinearConvergesToMap) {
  const ProblemSpec p = testing::random_loopy_problem(5, 4, 15);
  GraphOptions o;
  o.huber_nsigma = 0.0;
  FactorGraph g = FactorGraph::build(p, o);
  // Weak final priors make the slowest mode decay over about a thousand
  // iterations.
  run(g, testing::linear_schedule(), 2000);
  const VecX mu = map_solve(assemble(g));
  EXPECT_LT(testing::relative_error(testing::belief_means(g), mu), 1e-6);
}

TEST(Engine, SolveTraceLayout) {
  FactorGraph g = FactorGraph::build(testing::desk_problem(2));
  ScheduleParams s;
  s.max_iters = 7;
  s.are_target = 0.0;
  const SolveReport r = solve(g, s);
  ASSERT_EQ(r.trace.size(), 8u);
  EXPECT_EQ(r.trace[0].iteration, 0);
  EXPECT_DOUBLE_EQ(r.trace[0].prior_scale, 1.0);
  EXPECT_EQ(r.trace[7].iteration, 7);
  EXPECT_EQ(r.iterations, 7);
  EXPECT_FALSE(r.converged);
  EXPECT_DOUBLE_EQ(r.final_are, r.trace.back().are);
}

TEST(Engine, SolveZeroIterations) {
  FactorGraph g = FactorGraph::build(testing::desk_problem(2));
  ScheduleParams s;
  s.max_iters = 0;
  const SolveReport r = solve(g, s);
  EXPECT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.iterations, 0);
}

TEST(Engine, DeskProblemConverges) {
  FactorGraph g = FactorGraph::build(testing::desk_problem(1));
  const SolveReport r = solve(g, {});
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.final_are, 1.5);
  EXPECT_LE(r.iterations, 300);
}

TEST(Engine, WorkerCountDoesNotChangeResult) {
  const ProblemSpec p = testing::desk_problem(3);
  FactorGraph a = FactorGraph::build(p);
  FactorGraph b = FactorGraph::build(p);
  ScheduleParams s;
  s.max_iters = 40;
  s.are_target = 0.0;
  const SolveReport ra = solve(a, s);
  s.workers = 4;
  const SolveReport rb = solve(b, s);
  ASSERT_EQ(ra.trace.size(), rb.trace.size());
  for (size_t i = 0; i < ra.trace.size(); ++i) {
    EXPECT_EQ(ra.trace[i].are, rb.trace[i].are);
    EXPECT_EQ(ra.trace[i].energy, rb.trace[i].energy);
  }
  EXPECT_EQ(stacked_states(a), stacked_states(b));
}

TEST(Engine, GraphWithoutMeasurementsSettles) {
  FactorGraph g(Intrinsics{500, 500, 320, 240}, {});
  g.add_keyframe(Pose{});
  const SolveReport r = solve(g, {});
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 1);
}

TEST(Engine, SinglePrecisionStillConverges) {
  FactorGraph g = FactorGraph::build(testing::desk_problem(1));
  ScheduleParams s;
  s.single_precision = true;
  EXPECT_TRUE(solve(g, s).converged);
}

}  // namespace
}  // namespace gbpba
