/* Copyright 2026 The gcomp Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "gcomp/tasks.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

namespace gcomp {
namespace {

// Central differences with step h; error O(h^2).
GradientVector numeric_gradient(const Task& task, std::vector<double> theta, double h) {
  GradientVector g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double keep = theta[i];
    theta[i] = keep + h;
    const double up = task.loss(theta);
    theta[i] = keep - h;
    const double down = task.loss(theta);
    theta[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

std::vector<double> random_point(std::size_t n, double scale, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (double& x : v) x = scale * normal(gen);
  return v;
}

void expect_gradient_matches(const Task& task, const std::vector<double>& theta, double tol) {
  const auto exact = task.gradient(theta);
  const auto numeric = numeric_gradient(task, theta, 1e-5);
  ASSERT_EQ(exact.size(), numeric.size());
  for (std::size_t i = 0; i < exact.size(); ++i) {
    EXPECT_NEAR(exact[i], numeric[i], tol * (1.0 + std::abs(numeric[i]))) << "i=" << i;
  }
}

TEST(Quadratic, SpectrumSpansMuToL) {
  const QuadraticTask task(QuadraticSpec{.dim = 20, .mu = 0.1, .L = 2.0});
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(task.matrix());
  EXPECT_NEAR(eig.eigenvalues().minCoeff(), 0.1, 1e-10);
  EXPECT_NEAR(eig.eigenvalues().maxCoeff(), 2.0, 1e-10);
  EXPECT_EQ(task.smoothness(), 2.0);
}

TEST(Quadratic, OptimumHasZeroGradientAndKnownValue) {
  const QuadraticTask task(QuadraticSpec{.dim = 30, .optimum_norm = 2.5});
  const auto opt = *task.optimum();
  EXPECT_NEAR(l2_norm(opt), 2.5, 1e-12);
  EXPECT_LT(l2_norm(task.gradient(opt)), 1e-10);
  EXPECT_NEAR(task.loss(opt), *task.optimum_value(), 1e-12);
  EXPECT_LT(*task.optimum_value(), task.loss(task.initial_point()));
}

TEST(Quadratic, GradientMatchesFiniteDifferences) {
  const QuadraticTask task(QuadraticSpec{.dim = 15});
  expect_gradient_matches(task, random_point(15, 1.0, 4), 1e-6);
}

TEST(Quadratic, NoiseIsUnbiasedWithRequestedPower) {
  const QuadraticTask task(QuadraticSpec{.dim = 10, .noise_sigma2 = 4.0});
  const auto theta = random_point(10, 1.0, 2);
  const auto g = task.gradient(theta);
  const int draws = 20000;
  std::vector<double> mean(10, 0.0);
  double power = 0.0;
  for (int t = 0; t < draws; ++t) {
    const auto sg = task.stochastic_gradient(theta, static_cast<std::size_t>(t % 3), t);
    for (std::size_t i = 0; i < 10; ++i) {
      mean[i] += sg[i] / draws;
      power += (sg[i] - g[i]) * (sg[i] - g[i]) / draws;
    }
  }
  // Per-coordinate noise sd is sqrt(0.4); the mean has sd sqrt(0.4/draws).
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(mean[i], g[i], 5.0 * std::sqrt(0.4 / draws));
  // ||noise||^2 is 0.4 chi^2_10, variance 2 * 0.16 * 10 = 3.2 per draw.
  EXPECT_NEAR(power, 4.0, 5.0 * std::sqrt(3.2 / draws));
}

TEST(Quadratic, ZeroNoiseGivesExactGradient) {
  const QuadraticTask task(QuadraticSpec{.dim = 8, .noise_sigma2 = 0.0});
  const auto theta = random_point(8, 1.0, 6);
  EXPECT_EQ(task.stochastic_gradient(theta, 2, 17), task.gradient(theta));
}

TEST(Quadratic, StreamsDependOnWorkerIterationAndSampleSeed) {
  const QuadraticTask a(QuadraticSpec{.dim = 5, .sample_seed = 0});
  const QuadraticTask b(QuadraticSpec{.dim = 5, .sample_seed = 1});
  const std::vector<double> theta(5, 0.0);
  EXPECT_EQ(a.stochastic_gradient(theta, 0, 0), a.stochastic_gradient(theta, 0, 0));
  EXPECT_NE(a.stochastic_gradient(theta, 0, 0), a.stochastic_gradient(theta, 1, 0));
  EXPECT_NE(a.stochastic_gradient(theta, 0, 0), a.stochastic_gradient(theta, 0, 1));
  EXPECT_NE(a.stochastic_gradient(theta, 0, 0), b.stochastic_gradient(theta, 0, 0));
  // The instance itself does not depend on sample_seed.
  EXPECT_EQ(a.gradient(theta), b.gradient(theta));
}

TEST(Quadratic, InvalidSpecs) {
  EXPECT_THROW(QuadraticTask(QuadraticSpec{.dim = 0}), InvalidConfig);
  EXPECT_THROW(QuadraticTask(QuadraticSpec{.mu = 0.0}), InvalidConfig);
  EXPECT_THROW(QuadraticTask(QuadraticSpec{.mu = 2.0, .L = 1.0}), InvalidConfig);
  EXPECT_THROW(QuadraticTask(QuadraticSpec{.noise_sigma2 = -1.0}), InvalidConfig);
  const QuadraticTask task(QuadraticSpec{.dim = 3});
  EXPECT_THROW(task.loss(std::vector<double>(4, 0.0)), ContractViolation);
}

TEST(Logistic, GradientMatchesFiniteDifferences) {
  const LogisticTask task(LogisticSpec{.samples = 200, .features = 6});
  expect_gradient_matches(task, random_point(7, 0.5, 9), 1e-6);
}

TEST(Logistic, LossAtZeroIsLog2) {
  const LogisticTask task(LogisticSpec{.samples = 100, .features = 4});
  EXPECT_NEAR(task.loss(task.initial_point()), std::log(2.0), 1e-15);
}

TEST(Logistic, StochasticGradientIsUnbiased) {
  const LogisticTask task(LogisticSpec{.samples = 50, .features = 3, .batch = 4});
  const auto theta = random_point(4, 0.3, 1);
  const auto g = task.gradient(theta);
  const int draws = 40000;
  std::vector<double> mean(4, 0.0);
  for (int t = 0; t < draws; ++t) {
    const auto sg = task.stochastic_gradient(theta, 0, t);
    for (std::size_t i = 0; i < 4; ++i) mean[i] += sg[i] / draws;
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(mean[i], g[i], 0.02) << i;
}

TEST(Logistic, SmoothnessBoundsCurvature) {
  // Along random directions the second difference never exceeds L ||d||^2.
  const LogisticTask task(LogisticSpec{.samples = 100, .features = 5});
  const double L = *task.smoothness();
  for (std::uint64_t k = 0; k < 20; ++k) {
    const auto theta = random_point(6, 0.5, k);
    const auto d = random_point(6, 1.0, 100 + k);
    const double h = 1e-3;
    std::vector<double> up(theta), down(theta);
    for (std::size_t i = 0; i < 6; ++i) {
      up[i] += h * d[i];
      down[i] -= h * d[i];
    }
    const double curv = (task.loss(up) - 2 * task.loss(theta) + task.loss(down)) / (h * h);
    const double dn = l2_norm(d);
    EXPECT_LE(curv, L * dn * dn * (1.0 + 1e-6));
  }
}

TEST(Logistic, AccuracyInUnitInterval) {
  const LogisticTask task(LogisticSpec{.samples = 100, .features = 4, .separation = 3.0});
  const double acc = *task.accuracy(task.initial_point());
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
}

TEST(Mlp, DimensionAndLayout) {
  const TinyMlpTask task(MlpSpec{.inputs = 4, .hidden = 5, .classes = 3});
  EXPECT_EQ(task.dimension(), 5u * 4u + 5u + 3u * 5u + 3u);
  const auto theta = task.initial_point();
  // Biases start at zero.
  for (std::size_t i = 20; i < 25; ++i) EXPECT_EQ(theta[i], 0.0);
  for (std::size_t i = 40; i < 43; ++i) EXPECT_EQ(theta[i], 0.0);
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  const TinyMlpTask task(MlpSpec{.inputs = 3, .hidden = 4, .classes = 3, .samples = 60});
  expect_gradient_matches(task, random_point(task.dimension(), 0.7, 5), 1e-6);
  expect_gradient_matches(task, task.initial_point(), 1e-6);
}

TEST(Mlp, ZeroParametersGiveUniformPrediction) {
  const TinyMlpTask task(MlpSpec{.classes = 4});
  EXPECT_NEAR(task.loss(std::vector<double>(task.dimension(), 0.0)), std::log(4.0), 1e-12);
}

TEST(Mlp, InstanceDeterminedBySeed) {
  const TinyMlpTask a(MlpSpec{.seed = 3});
  const TinyMlpTask b(MlpSpec{.seed = 3, .sample_seed = 9});
  const TinyMlpTask c(MlpSpec{.seed = 4});
  EXPECT_EQ(a.initial_point(), b.initial_point());
  EXPECT_EQ(a.loss(a.initial_point()), b.loss(b.initial_point()));
  EXPECT_NE(a.initial_point(), c.initial_point());
}

TEST(Blobs, ShapesAndLabelRange) {
  const auto d = make_blobs(300, 4, 3, 2.0, 1);
  EXPECT_EQ(d.features.rows(), 300);
  EXPECT_EQ(d.features.cols(), 4);
  std::vector<int> seen(3, 0);
  for (int y : d.labels) {
    ASSERT_GE(y, 0);
    ASSERT_LT(y, 3);
    seen[static_cast<std::size_t>(y)] = 1;
  }
  EXPECT_EQ(seen, (std::vector<int>{1, 1, 1}));
  EXPECT_THROW(make_blobs(10, 2, 1, 1.0, 1), InvalidConfig);
}

}  // namespace
}  // namespace gcomp
