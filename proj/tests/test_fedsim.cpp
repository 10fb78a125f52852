// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "lalora/fedsim.hpp"

using namespace lalora;

namespace {

std::vector<std::size_t> flat(const std::vector<std::vector<std::size_t>>& sets) {
  std::vector<std::size_t> all;
  for (const auto& s : sets) all.insert(all.end(), s.begin(), s.end());
  std::sort(all.begin(), all.end());
  return all;
}

ClassificationTask small_task(std::uint64_t seed = 0) {
  BlobTaskOptions o;
  o.per_class = 100;
  o.pretrain_per_class = 100;
  o.pretrain_steps = 30;
  return make_blob_task(o, seed);
}

FedPlan small_plan(Strategy s) {
  FedPlan p;
  p.n_clients = 4;
  p.rounds = 4;
  p.local_steps = 4;
  p.dirichlet_beta = 1.0;
  p.strategy = s;
  return p;
}

PrivacySpec private_spec() {
  PrivacySpec p;
  p.sigma = 1.0;
  p.batch_fraction = 0.1;
  return p;
}

}  // namespace

TEST(Strategy, NamesRoundTrip) {
  for (auto s : {Strategy::kDpLora, Strategy::kFfaLora, Strategy::kRoLora, Strategy::kLaLora}) {
    EXPECT_EQ(parse_strategy(to_string(s)), s);
  }
  EXPECT_THROW(parse_strategy("fedavg"), InvalidArgument);
}

TEST(Strategy, Phases) {
  FedPlan p;
  p.strategy = Strategy::kDpLora;
  EXPECT_EQ(strategy_phase(p, 1, 1), Phase::kUpdateBoth);
  p.strategy = Strategy::kFfaLora;
  EXPECT_EQ(strategy_phase(p, 2, 3), Phase::kBOnly);
  p.strategy = Strategy::kRoLora;
  EXPECT_EQ(strategy_phase(p, 1, 1), Phase::kUpdateB);
  EXPECT_EQ(strategy_phase(p, 1, 2), Phase::kUpdateB);
  EXPECT_EQ(strategy_phase(p, 2, 1), Phase::kUpdateA);
  p.strategy = Strategy::kLaLora;
  EXPECT_EQ(strategy_phase(p, 5, 1), Phase::kUpdateB);
  EXPECT_EQ(strategy_phase(p, 5, 2), Phase::kUpdateA);
}

TEST(FedPlan, ValidateAndLrDecay) {
  FedPlan p;
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.clients_per_round(), 4u);
  EXPECT_EQ(lr_factor(p, 1), 1.0);
  EXPECT_NEAR(lr_factor(p, 3), 0.99 * 0.99, 1e-15);
  p.client_rate = 0.1;
  EXPECT_THROW(p.validate(), InvalidArgument);
  p = FedPlan{};
  p.dirichlet_beta = 0.0;
  EXPECT_THROW(p.validate(), InvalidArgument);
}

TEST(Dirichlet, PartitionIsDisjointCoverNonempty) {
  std::vector<int> labels;
  for (int i = 0; i < 300; ++i) labels.push_back(i % 3);
  for (double beta : {0.05, 0.1, 1.0, 100.0}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto sets = dirichlet_partition(labels, 8, beta, SeededRng(seed));
      ASSERT_EQ(sets.size(), 8u);
      std::vector<std::size_t> want(300);
      std::iota(want.begin(), want.end(), 0);
      EXPECT_EQ(flat(sets), want);
      for (const auto& s : sets) {
        EXPECT_FALSE(s.empty());
        EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
      }
    }
  }
}

TEST(Dirichlet, LargeBetaIsNearIid) {
  std::vector<int> labels;
  for (int i = 0; i < 4000; ++i) labels.push_back(i % 2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto sets = dirichlet_partition(labels, 4, 1000.0, SeededRng(seed));
    for (const auto& s : sets) {
      double ones = 0;
      for (std::size_t i : s) ones += labels[i];
      EXPECT_NEAR(ones / static_cast<double>(s.size()), 0.5, 0.05);
    }
  }
}

TEST(Dirichlet, Errors) {
  EXPECT_THROW(dirichlet_partition({0, 1}, 3, 1.0, SeededRng(0)), InvalidArgument);
  EXPECT_THROW(dirichlet_partition({0, 1}, 2, 0.0, SeededRng(0)), InvalidArgument);
}

TEST(Aggregate, MeanAndDrops) {
  Factors f1{DenseMatrix(1, 2, 1.0), DenseMatrix(2, 1, 2.0)};
  Factors f2{DenseMatrix(1, 2, 3.0), DenseMatrix(2, 1, 4.0)};
  Factors bad{DenseMatrix(1, 2, NAN), DenseMatrix(2, 1, 0.0)};
  const auto r = aggregate(std::vector<std::optional<Factors>>{f1, std::nullopt, bad, f2});
  EXPECT_EQ(r.used, 2u);
  EXPECT_EQ(r.dropped, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(r.factors.a, DenseMatrix(1, 2, 2.0));
  EXPECT_EQ(r.factors.b, DenseMatrix(2, 1, 3.0));
  EXPECT_THROW(aggregate(std::vector<std::optional<Factors>>{bad}), NumericFailure);
  EXPECT_THROW(aggregate(std::vector<Factors>{}), InvalidArgument);
}

TEST(LocalUpdate, FfaNeverTouchesA) {
  const auto task = small_task();
  const auto plan = small_plan(Strategy::kFfaLora);
  const auto spec = private_spec();
  const auto res = run_experiment(task, plan, spec, binomial_kernel(5), 1);
  EXPECT_EQ(res.final_factors.a, res.initial.a);
  EXPECT_NE(res.final_factors.b, res.initial.b);
}

TEST(LocalUpdate, RoLoraFreezesOneFactorPerRound) {
  const auto task = small_task();
  auto plan = small_plan(Strategy::kRoLora);
  FedRunner<ClassificationTask> run(task, plan, private_spec(), std::nullopt, 2);
  const auto f0 = run.factors();
  run.run_round();  // B only
  EXPECT_EQ(run.factors().a, f0.a);
  EXPECT_NE(run.factors().b, f0.b);
  const auto f1 = run.factors();
  run.run_round();  // A only
  EXPECT_EQ(run.factors().b, f1.b);
  EXPECT_NE(run.factors().a, f1.a);
}

TEST(LocalUpdate, LaLoraSingleStepTouchesOnlyB) {
  const auto task = small_task();
  auto plan = small_plan(Strategy::kLaLora);
  plan.local_steps = 1;
  FedRunner<ClassificationTask> run(task, plan, private_spec(), std::nullopt, 3);
  const auto f0 = run.factors();
  run.run_round();
  EXPECT_EQ(run.factors().a, f0.a);
  EXPECT_NE(run.factors().b, f0.b);
}

TEST(LocalUpdate, NonPrivateQuadraticDescends) {
  // One client, full batch, sigma = 0: loss must decrease every round.
  SeededRng rng(4);
  std::vector<DenseMatrix> ys;
  for (int i = 0; i < 10; ++i) ys.push_back(gaussian_fill(5, 6, rng, 1.0));
  const QuadraticTask task(DenseMatrix(5, 6), ys);
  FedPlan plan;
  plan.n_clients = 1;
  plan.client_rate = 1.0;
  plan.rounds = 10;
  plan.local_steps = 4;
  plan.rank = 2;
  plan.alpha = 2.0;
  plan.lr_a = plan.lr_b = 0.05;
  PrivacySpec spec;
  spec.clip_c = 1e6;
  spec.batch_fraction = 1.0;
  for (auto s : {Strategy::kDpLora, Strategy::kLaLora, Strategy::kRoLora, Strategy::kFfaLora}) {
    plan.strategy = s;
    const auto res = run_experiment(task, plan, spec, std::nullopt, 5);
    for (std::size_t t = 1; t < res.logs.size(); ++t) {
      EXPECT_LE(res.logs[t].train_loss, res.logs[t - 1].train_loss + 1e-12) << to_string(s);
    }
    EXPECT_TRUE(std::isinf(res.logs.back().eps_spent));
  }
}

TEST(LocalUpdate, ProjectedOptimizerRuns) {
  const auto task = small_task();
  auto plan = small_plan(Strategy::kLaLora);
  plan.optimizer = Optimizer::kProjected;
  // Softmax gradient rows sum to zero, so B spans at most n_classes - 1
  // directions and B^T B is singular at rank 4 with 4 classes.
  plan.rank = 2;
  PrivacySpec spec;
  spec.batch_fraction = 0.2;
  const auto res = run_experiment(task, plan, spec, std::nullopt, 6);
  EXPECT_EQ(res.logs.size(), 4u);
  for (const auto& l : res.logs) EXPECT_TRUE(std::isfinite(l.eval_loss));
}

TEST(FedRunner, ParallelEqualsSequential) {
  const auto task = small_task();
  auto plan = small_plan(Strategy::kDpLora);
  const auto seq = run_experiment(task, plan, private_spec(), binomial_kernel(5), 7);
  plan.parallel = true;
  const auto par = run_experiment(task, plan, private_spec(), binomial_kernel(5), 7);
  EXPECT_EQ(seq.final_factors.a, par.final_factors.a);
  EXPECT_EQ(seq.final_factors.b, par.final_factors.b);
  EXPECT_EQ(seq.cosines, par.cosines);
}

TEST(FedRunner, SameSeedSameRun) {
  const auto task = small_task();
  const auto plan = small_plan(Strategy::kLaLora);
  const auto r1 = run_experiment(task, plan, private_spec(), binomial_kernel(5), 8);
  const auto r2 = run_experiment(task, plan, private_spec(), binomial_kernel(5), 8);
  EXPECT_EQ(r1.final_factors.b, r2.final_factors.b);
  const auto r3 = run_experiment(task, plan, private_spec(), binomial_kernel(5), 9);
  EXPECT_NE(r1.final_factors.b, r3.final_factors.b);
}

TEST(FedRunner, ClientSampling) {
  const auto task = small_task();
  auto plan = small_plan(Strategy::kLaLora);
  plan.n_clients = 8;
  plan.client_rate = 0.5;
  FedRunner<ClassificationTask> run(task, plan, private_spec(), std::nullopt, 1);
  for (std::size_t t = 1; t <= 5; ++t) {
    const auto c = run.sample_clients(t);
    EXPECT_EQ(c.size(), 4u);
    EXPECT_TRUE(std::is_sorted(c.begin(), c.end()));
    EXPECT_EQ(std::set<std::size_t>(c.begin(), c.end()).size(), 4u);
  }
  plan.sampling = ClientSampling::kPoisson;
  FedRunner<ClassificationTask> pois(task, plan, private_spec(), std::nullopt, 1);
  std::size_t total = 0;
  for (std::size_t t = 1; t <= 400; ++t) total += pois.sample_clients(t).size();
  EXPECT_NEAR(static_cast<double>(total) / 400.0, 4.0, 0.3);
}

TEST(FedRunner, FilterDoesNotChangeEpsilon) {
  const auto task = small_task();
  const auto plan = small_plan(Strategy::kLaLora);
  const auto on = run_experiment(task, plan, private_spec(), binomial_kernel(7), 10);
  const auto off = run_experiment(task, plan, private_spec(), std::nullopt, 10);
  for (std::size_t t = 0; t < on.logs.size(); ++t) {
    EXPECT_EQ(on.logs[t].eps_spent, off.logs[t].eps_spent);
  }
}

TEST(FedRunner, DivergentClientsAreDropped) {
  const auto task = small_task();
  auto plan = small_plan(Strategy::kDpLora);
  plan.lr_a = plan.lr_b = 1e200;
  PrivacySpec spec = private_spec();
  spec.sigma = 100.0;
  FedRunner<ClassificationTask> run(task, plan, spec, std::nullopt, 11);
  EXPECT_THROW(run.run(), NumericFailure);
}
