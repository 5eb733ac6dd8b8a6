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

#include "gcomp/quantize.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

namespace gcomp {
namespace {

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (double& x : v) x = normal(gen);
  return v;
}

// Independent statement of the rounding distribution: the two bracketing
// levels of s|x|/w and the probability of the upper one.
struct Bracket {
  double lower;
  double p_upper;
};

Bracket bracket(double x, double w, double s) {
  const double r = std::abs(x) / w * s;
  if (r >= s) return {s - 1.0, 1.0};
  const double lower = std::floor(r);
  return {lower, r - lower};
}

TEST(QsgdEncode, ZeroVectorWithZeroNorm) {
  const std::vector<double> v{0.0, 0.0};
  EXPECT_EQ(qsgd_encode(v, 0.0, 4, QuantRng(1).stream(0, 0)), (LevelVector{0, 0}));
}

TEST(QsgdEncode, DegenerateProbabilitiesAreDeterministic) {
  const std::vector<double> v{0.5, -0.25};
  for (std::uint64_t t = 0; t < 50; ++t) {
    EXPECT_EQ(qsgd_encode(v, 1.0, 4, QuantRng(3).stream(0, t)), (LevelVector{2, -1}));
  }
}

TEST(QsgdEncode, BoundaryCoordinateMapsToTopLevel) {
  const std::vector<double> v{-2.0, 0.0};
  for (std::uint64_t t = 0; t < 50; ++t) {
    EXPECT_EQ(qsgd_encode(v, 2.0, 8, QuantRng(3).stream(0, t)), (LevelVector{-8, 0}));
  }
}

TEST(QsgdEncode, ScalarMonteCarloMatchesRoundingDistribution) {
  const std::vector<double> v{0.3};
  const int draws = 100000;
  const QuantRng rng(17);
  int ones = 0;
  double decoded_sum = 0.0;
  for (int t = 0; t < draws; ++t) {
    const auto levels = qsgd_encode(v, 1.0, 2, rng.stream(0, static_cast<std::uint64_t>(t)));
    ASSERT_TRUE(levels[0] == 0 || levels[0] == 1);
    ones += levels[0];
    decoded_sum += qsgd_decode(std::span<const Level>(levels), 1.0, 2)[0];
  }
  // P(level 1) = 0.6; four standard errors of a Bernoulli(0.6) mean.
  const double se = std::sqrt(0.6 * 0.4 / draws);
  EXPECT_NEAR(static_cast<double>(ones) / draws, 0.6, 4 * se);
  EXPECT_NEAR(decoded_sum / draws, 0.300, 0.005);
}

TEST(QsgdEncode, LevelsStayWithinScale) {
  for (std::int64_t s : {1, 2, 3, 16, 255, 256, 1 << 20}) {
    const auto v = gaussian(2000, static_cast<std::uint64_t>(s));
    const double w = l2_norm(v);
    const auto levels = qsgd_encode(v, w, s, QuantRng(5).stream(1, 2));
    for (std::size_t i = 0; i < v.size(); ++i) {
      ASSERT_LE(std::abs(static_cast<std::int64_t>(levels[i])), s);
      const auto b = bracket(v[i], w, static_cast<double>(s));
      const double mag = std::abs(static_cast<double>(levels[i]));
      ASSERT_TRUE(mag == b.lower || mag == b.lower + 1.0) << "i=" << i << " s=" << s;
      if (v[i] != 0.0 && levels[i] != 0) {
        ASSERT_EQ(levels[i] > 0, v[i] > 0);
      }
    }
  }
}

TEST(QsgdEncode, LargestSingleCoordinateAtExactNorm) {
  // A one-hot vector has |v_0| = ||v||; the level must be exactly s.
  const std::vector<double> v{0.0, -0.7, 0.0};
  const double w = l2_norm(v);
  EXPECT_EQ(qsgd_encode(v, w, 16, QuantRng(1).stream(0, 0))[1], -16);
}

TEST(QsgdEncode, DeterministicForSameKey) {
  const auto v = gaussian(10000, 8);
  const double w = l2_norm(v);
  EXPECT_EQ(qsgd_encode(v, w, 16, QuantRng(4).stream(2, 9)),
            qsgd_encode(v, w, 16, QuantRng(4).stream(2, 9)));
  EXPECT_NE(qsgd_encode(v, w, 16, QuantRng(4).stream(2, 9)),
            qsgd_encode(v, w, 16, QuantRng(4).stream(2, 10)));
}

TEST(QsgdEncode, ContractViolations) {
  const std::vector<double> v{0.5, 1.5};
  EXPECT_THROW(qsgd_encode(v, 1.0, 4, QuantRng(1).stream(0, 0)), ContractViolation);
  EXPECT_THROW(qsgd_encode(std::vector<double>{0.1}, 0.0, 4, QuantRng(1).stream(0, 0)),
               ContractViolation);
  EXPECT_THROW(qsgd_encode(std::vector<double>{0.1}, 1.0, 0, QuantRng(1).stream(0, 0)),
               InvalidConfig);
  EXPECT_THROW(qsgd_encode(std::vector<double>{std::nan("")}, 1.0, 4, QuantRng(1).stream(0, 0)),
               InvalidInput);
}

TEST(QsgdDecode, Examples) {
  EXPECT_EQ(qsgd_decode(std::vector<double>{2, -1}, 1.0, 4), (GradientVector{0.5, -0.25}));
  EXPECT_EQ(qsgd_decode(std::vector<double>{0, 0, 0}, 3.0, 4), (GradientVector{0, 0, 0}));
  EXPECT_EQ(qsgd_decode(std::vector<double>{3}, 2.0, 4), (GradientVector{1.5}));
}

TEST(QsgdDecode, RejectsNonFinite) {
  EXPECT_THROW(qsgd_decode(std::vector<double>{INFINITY}, 1.0, 4), InvalidInput);
}

TEST(CoordinateVariance, MatchesBernoulliClosedForm) {
  for (double x : {0.0, 0.05, 0.3, -0.61, 0.999, 1.0}) {
    for (std::int64_t s : {1, 2, 4, 16}) {
      const auto b = bracket(x, 1.0, static_cast<double>(s));
      const double expected = b.p_upper * (1.0 - b.p_upper) / static_cast<double>(s * s);
      EXPECT_NEAR(coordinate_variance(x, 1.0, s), expected, 1e-15) << x << " " << s;
    }
  }
  EXPECT_NEAR(coordinate_variance(0.3, 2.0, 2), 4.0 * 0.3 * 0.7 / 4.0, 1e-15);
}

TEST(CoordinateVariance, MonteCarloAgreesOnScalars) {
  const QuantRng rng(99);
  const int draws = 200000;
  for (double x : {0.13, -0.52, 0.87}) {
    const std::int64_t s = 4;
    const std::vector<double> v{x};
    double sum = 0.0, sum_sq = 0.0;
    for (int t = 0; t < draws; ++t) {
      const auto lv = qsgd_encode(v, 1.0, s, rng.stream(0, static_cast<std::uint64_t>(t)));
      const double d = static_cast<double>(lv[0]) / static_cast<double>(s);
      sum += d;
      sum_sq += d * d;
    }
    const double mean = sum / draws;
    const double var = sum_sq / draws - mean * mean;
    const double exact = coordinate_variance(x, 1.0, s);
    // Relative standard error of a sample variance of a two-point variable is
    // below 3/sqrt(n) for these p.
    EXPECT_NEAR(var, exact, 4.0 * 3.0 * exact / std::sqrt(static_cast<double>(draws))) << x;
  }
}

TEST(CoordinateVariance, FinerScaleNeverWorse) {
  // Scale 16 refines scale 4 (every level of 4 is a level of 16), so the
  // squared error at 16 is at most the error at 4 for every coordinate.
  for (int k = 0; k <= 1000; ++k) {
    const double x = k / 1000.0;
    EXPECT_LE(coordinate_variance(x, 1.0, 16), coordinate_variance(x, 1.0, 4) + 1e-18) << x;
  }
}

TEST(VarianceBound, Formula) {
  EXPECT_DOUBLE_EQ(variance_bound(100, 2, 1.0), 1.0 + std::min(100.0 / 4.0, 10.0 / 2.0));
  EXPECT_DOUBLE_EQ(variance_bound(100, 100, 2.0), 4.0 * (1.0 + 0.01));
}

TEST(MultiscaleLocalScales, Examples) {
  const ScaleSet scales({4, 16});
  const std::vector<double> v{0.5, 0.2, 0.0};
  EXPECT_EQ(multiscale_local_scales(v, 1.0, scales), (ScaleIndexVector{0, 1, 1}));
}

TEST(MultiscaleLocalScales, SelectsLargestAdmissibleScale) {
  const ScaleSet scales({2, 3, 8, 32});
  const auto v = gaussian(5000, 12);
  const double w = l2_norm(v);
  const auto idx = multiscale_local_scales(v, w, scales);
  for (std::size_t i = 0; i < v.size(); ++i) {
    // Independent scan from the smallest scale upward.
    std::size_t expected = 0;
    for (std::size_t j = 0; j < scales.size(); ++j) {
      if (static_cast<double>(scales[j]) * std::abs(v[i]) <= w * 2.0) expected = j;
    }
    ASSERT_EQ(idx[i], expected) << i;
  }
}

TEST(ShareScales, ElementwiseMin) {
  const std::vector<ScaleIndexVector> local{{1, 0}, {0, 1}};
  EXPECT_EQ(share_scales(local), (ScaleIndexVector{0, 0}));
  const std::vector<ScaleIndexVector> one{{2, 1, 0}};
  EXPECT_EQ(share_scales(one), (ScaleIndexVector{2, 1, 0}));
  const std::vector<ScaleIndexVector> same(5, ScaleIndexVector{1, 3});
  EXPECT_EQ(share_scales(same), (ScaleIndexVector{1, 3}));
}

TEST(ShareScales, MismatchedLengths) {
  const std::vector<ScaleIndexVector> local{{1, 0}, {0}};
  EXPECT_THROW(share_scales(local), ContractViolation);
}

TEST(MultiscaleEncode, ExampleDistribution) {
  const ScaleSet scales({4, 16});
  const std::vector<double> v{0.5, 0.2};
  const ScaleIndexVector shared{0, 1};
  const QuantRng rng(23);
  const int draws = 100000;
  int fours = 0;
  double decoded_sum = 0.0;
  for (int t = 0; t < draws; ++t) {
    const auto lv = multiscale_encode(v, 1.0, shared, scales,
                                      rng.stream(0, static_cast<std::uint64_t>(t)));
    ASSERT_EQ(lv[0], 2);
    ASSERT_TRUE(lv[1] == 3 || lv[1] == 4);
    fours += lv[1] == 4 ? 1 : 0;
    decoded_sum += multiscale_decode(std::span<const Level>(lv), 1.0, shared, scales)[1];
  }
  EXPECT_NEAR(static_cast<double>(fours) / draws, 0.2, 4 * std::sqrt(0.2 * 0.8 / draws));
  EXPECT_NEAR(decoded_sum / draws, 0.200, 0.005);
}

TEST(MultiscaleEncode, ZeroGradient) {
  const ScaleSet scales({4, 16});
  const std::vector<double> v(4, 0.0);
  const auto shared = multiscale_local_scales(v, 0.0, scales);
  EXPECT_EQ(multiscale_encode(v, 0.0, shared, scales, QuantRng(1).stream(0, 0)),
            LevelVector(4, 0));
}

TEST(MultiscaleEncode, SingleScaleReducesToQsgd) {
  const auto v = gaussian(3000, 31);
  const double w = l2_norm(v);
  const ScaleSet one({16});
  const auto shared = multiscale_local_scales(v, w, one);
  const auto stream = QuantRng(8).stream(3, 4);
  EXPECT_EQ(multiscale_encode(v, w, shared, one, stream), qsgd_encode(v, w, 16, stream));
  const std::vector<double> zeta{3, -2, 16};
  EXPECT_EQ(multiscale_decode(zeta, w, ScaleIndexVector{0, 0, 0}, one),
            qsgd_decode(zeta, w, 16));
}

// Uniforms are indexed by coordinate, so each multi-scale level equals the
// single-scale level at that coordinate's scale on the same stream. Covers
// both small and large scale sets.
TEST(MultiscaleEncode, MatchesSingleScalePerCoordinate) {
  const auto v = gaussian(2000, 37);
  const double w = l2_norm(v);
  const auto stream = QuantRng(12).stream(1, 9);
  for (std::size_t count : {3u, 12u}) {
    std::vector<std::int64_t> sc;
    for (std::size_t j = 0; j < count; ++j) sc.push_back(static_cast<std::int64_t>(2 + 3 * j));
    const ScaleSet scales(sc);
    std::mt19937_64 gen(count);
    ScaleIndexVector shared(v.size());
    for (auto& j : shared) j = static_cast<ScaleIndex>(gen() % count);
    const auto got = multiscale_encode(v, w, shared, scales, stream);
    std::vector<LevelVector> single;
    for (auto s : sc) single.push_back(qsgd_encode(v, w, s, stream));
    for (std::size_t i = 0; i < v.size(); ++i) {
      ASSERT_EQ(got[i], single[shared[i]][i]) << "count " << count << " coordinate " << i;
    }
  }
}

TEST(MultiscaleEncode, LevelsBoundedByMinimumScale) {
  const ScaleSet scales({4, 16, 64});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    // Several workers, shared scales from the min rule.
    std::vector<std::vector<double>> grads;
    std::vector<ScaleIndexVector> local;
    double w = 0.0;
    for (int m = 0; m < 4; ++m) {
      grads.push_back(gaussian(1000, seed * 10 + static_cast<std::uint64_t>(m)));
      w = std::max(w, l2_norm(grads.back()));
    }
    for (const auto& g : grads) local.push_back(multiscale_local_scales(g, w, scales));
    const auto shared = share_scales(local);
    for (std::size_t m = 0; m < grads.size(); ++m) {
      const auto lv = multiscale_encode(grads[m], w, shared, scales, QuantRng(seed).stream(m, 0));
      for (std::size_t i = 0; i < lv.size(); ++i) {
        ASSERT_LE(std::abs(lv[i]), scales[shared[i]]);
        ASSERT_LE(std::abs(lv[i]), scales.min_scale());
      }
    }
  }
}

TEST(MultiscaleDecode, Examples) {
  const ScaleSet scales({4, 16});
  EXPECT_EQ(multiscale_decode(std::vector<double>{2, 4}, 1.0, ScaleIndexVector{0, 1}, scales),
            (GradientVector{0.5, 0.25}));
  EXPECT_EQ(multiscale_decode(std::vector<double>{0, 0}, 1.0, ScaleIndexVector{0, 1}, scales),
            (GradientVector{0, 0}));
}

TEST(MultiscaleVariance, NoWorseThanSingleScaleAtMinimum) {
  const ScaleSet scales({4, 16});
  const auto v = gaussian(2000, 77);
  const double w = l2_norm(v);
  const auto idx = multiscale_local_scales(v, w, scales);
  double multi = 0.0, single = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    multi += coordinate_variance(v[i], w, scales[idx[i]]);
    single += coordinate_variance(v[i], w, scales.min_scale());
  }
  EXPECT_LE(multi, single);
}

}  // namespace
}  // namespace gcomp
