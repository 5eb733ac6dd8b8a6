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
// Statistical and exactness checks behind `gcomp verify`.
//
// Suites:
//   unbiasedness   Monte Carlo mean of decode(encode(v)) against v
//   variance       Monte Carlo E||Q(v) - v||^2 against the closed-form bound
//   commutativity  decode of the all-reduced levels against the mean of the
//                  individually decoded gradients
//   uniformity     GlobalRandK selection frequencies (chi-square)
//   packing        pack/unpack round trips

#ifndef GCOMP_VERIFY_HPP_
#define GCOMP_VERIFY_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "gcomp/bitpack.hpp"
#include "gcomp/collectives.hpp"
#include "gcomp/core.hpp"
#include "gcomp/quantize.hpp"
#include "gcomp/rng.hpp"
#include "gcomp/sparsify.hpp"
#include "gcomp/trainer.hpp"

namespace gcomp {

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct OperatingPoint {
  std::size_t n = 0;
  std::int64_t s = 0;
};

struct VerifyOptions {
  std::vector<OperatingPoint> points{{10, 2}, {1000, 16}, {10000, 256}};
  std::int64_t samples = 100000;
  std::uint64_t seed = 1;
  std::size_t workers = 8;
  std::int64_t commutativity_cases = 1000;
  std::int64_t uniformity_iterations = 100000;
  std::size_t uniformity_n = 100;
  std::size_t uniformity_k = 10;
  std::int64_t packing_cases = 1000000;
  NormScope norm_scope = NormScope::kSubvector;
  double variance_slack = 0.05;
};

// Per-coordinate first and second moments of the integer levels over a number
// of independent encodings.
struct LevelMoments {
  std::vector<double> sum;
  std::vector<double> sum_sq;
  std::int64_t draws = 0;

  explicit LevelMoments(std::size_t n = 0) : sum(n, 0.0), sum_sq(n, 0.0) {}

  void add(std::span<const Level> levels) {
    double* __restrict s = sum.data();
    double* __restrict q = sum_sq.data();
    const Level* __restrict l = levels.data();
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const auto x = static_cast<double>(l[i]);
      s[i] += x;
      q[i] += x * x;
    }
    ++draws;
  }
};

// Random test gradient with standard normal entries.
inline GradientVector random_gradient(std::size_t n, std::uint64_t seed) {
  SplitMix64 gen(seed);
  std::normal_distribution<double> normal;
  GradientVector v(n);
  for (double& x : v) x = normal(gen);
  return v;
}

// Moments of `samples` single-scale encodings of v.
inline LevelMoments qsgd_level_moments(std::span<const double> v, double wnorm,
                                       std::int64_t s, std::int64_t samples,
                                       const QuantRng& rng) {
  LevelMoments m(v.size());
  LevelVector levels(v.size());
  for (std::int64_t t = 0; t < samples; ++t) {
    qsgd_encode_into(v, wnorm, s, rng.stream(0, static_cast<std::uint64_t>(t)), levels);
    m.add(levels);
  }
  return m;
}

inline LevelMoments multiscale_level_moments(std::span<const double> v, double wnorm,
                                             std::span<const ScaleIndex> shared,
                                             const ScaleSet& scales, std::int64_t samples,
                                             const QuantRng& rng) {
  LevelMoments m(v.size());
  LevelVector levels(v.size());
  for (std::int64_t t = 0; t < samples; ++t) {
    multiscale_encode_into(v, wnorm, shared, scales,
                           rng.stream(0, static_cast<std::uint64_t>(t)), levels);
    m.add(levels);
  }
  return m;
}

struct UnbiasednessStats {
  std::size_t coordinates = 0;
  std::size_t exceedances = 0;  // coordinates beyond `z_limit` standard errors
  double max_abs_z = 0.0;
  double expected_exceedances = 0.0;  // under exact unbiasedness, normal approx.
};

// Deviation of the per-coordinate decoded mean from v in standard errors.
// `scale_of(i)` is the scale used at coordinate i. The level at coordinate i
// takes two adjacent values with upper probability p_i = frac(s |v_i| / w), so
// the standard error of its mean over T draws is sqrt(p_i (1 - p_i) / T). The
// sample variance is not used: for p_i << 1 / T most runs never see a flip and
// it collapses to zero.
template <class ScaleOf>
UnbiasednessStats unbiasedness_stats(std::span<const double> v, double wnorm,
                                     const LevelMoments& m, ScaleOf scale_of,
                                     double z_limit = 4.0) {
  UnbiasednessStats st;
  st.coordinates = v.size();
  const auto t = static_cast<double>(m.draws);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double s = static_cast<double>(scale_of(i));
    const double target = wnorm == 0.0 ? 0.0 : v[i] * s / wnorm;
    const double a = std::abs(target);
    const double p = a >= s ? 0.0 : a - std::floor(a);
    const double se = std::sqrt(p * (1.0 - p) / t);
    const double dev = std::abs(m.sum[i] / t - target);
    double z;
    if (se > 0.0) {
      z = dev / se;
    } else {
      z = dev <= 1e-9 * std::max(1.0, s) ? 0.0 : std::numeric_limits<double>::infinity();
    }
    st.max_abs_z = std::max(st.max_abs_z, z);
    if (z > z_limit) ++st.exceedances;
  }
  const double tail = 2.0 * boost::math::cdf(boost::math::normal(), -z_limit);
  st.expected_exceedances = tail * static_cast<double>(v.size());
  return st;
}

// Empirical E||Q(v) - v||^2 from level moments.
template <class ScaleOf>
double empirical_mse(std::span<const double> v, double wnorm, const LevelMoments& m,
                     ScaleOf scale_of) {
  const auto t = static_cast<double>(m.draws);
  long double total = 0.0L;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double step = wnorm / static_cast<double>(scale_of(i));
    const double x = wnorm == 0.0 ? 0.0 : v[i] / step;
    // E[(step L - v)^2] = step^2 (E[L^2] - 2 x E[L] + x^2)
    const long double e = static_cast<long double>(m.sum_sq[i]) / t -
                          2.0L * x * m.sum[i] / t + static_cast<long double>(x) * x;
    total += static_cast<long double>(step) * step * e;
  }
  return static_cast<double>(total);
}

// Largest count c with P(Binomial(n, p) > c) < alpha.
inline std::size_t binomial_upper(std::size_t n, double p, double alpha) {
  if (n == 0 || p <= 0.0) return 0;
  boost::math::binomial dist(static_cast<double>(n), p);
  return static_cast<std::size_t>(boost::math::quantile(boost::math::complement(dist, alpha)));
}

namespace detail {

inline std::string fmt(double x, int precision = 4) {
  std::ostringstream ss;
  ss.precision(precision);
  ss << x;
  return ss.str();
}

inline ScaleSet verify_scale_set(std::int64_t s) {
  return ScaleSet({s, std::min<std::int64_t>(4 * s, std::int64_t{1} << 30)});
}

}  // namespace detail

// Exceedances of the 4-standard-error band are compared with their
// distribution under exact unbiasedness (Binomial(n, P(|Z| > 4))): the check
// fails if the count lies above the 0.999 quantile.
inline std::vector<CheckResult> verify_unbiasedness(const VerifyOptions& opt) {
  std::vector<CheckResult> out;
  const double tail = 2.0 * boost::math::cdf(boost::math::normal(), -4.0);
  for (std::size_t k = 0; k < opt.points.size(); ++k) {
    const auto [n, s] = opt.points[k];
    const GradientVector v = random_gradient(n, hash_combine(opt.seed, k));
    const double w = l2_norm(v);
    const QuantRng rng(hash_combine(opt.seed, 100 + k));
    auto report = [&](const std::string& name, const UnbiasednessStats& st) {
      const std::size_t allowed = binomial_upper(st.coordinates, tail, 1e-3);
      CheckResult r{"unbiasedness", name, st.exceedances <= allowed, ""};
      r.detail = "max|z|=" + detail::fmt(st.max_abs_z) + " beyond4SE=" +
                 std::to_string(st.exceedances) + " expected=" +
                 detail::fmt(st.expected_exceedances) + " allowed=" + std::to_string(allowed);
      out.push_back(r);
    };
    const std::string where = "n=" + std::to_string(n) + " s=" + std::to_string(s);
    {
      const auto m = qsgd_level_moments(v, w, s, opt.samples, rng);
      report("qsgd-mn " + where, unbiasedness_stats(v, w, m, [&](std::size_t) { return s; }));
    }
    {
      const ScaleSet scales = detail::verify_scale_set(s);
      const auto shared = multiscale_local_scales(v, w, scales);
      const auto m = multiscale_level_moments(v, w, shared, scales, opt.samples, rng);
      report("qsgd-mn-ts " + where,
             unbiasedness_stats(v, w, m, [&](std::size_t i) { return scales[shared[i]]; }));
    }
  }
  // GlobalRandK: conditional on the selected indices, the aggregated update is
  // an unbiased estimate of the mean gradient on those coordinates.
  {
    const std::size_t n = 1000, k = 100, workers = 4;
    const std::int64_t s = 16;
    std::vector<GradientVector> grads(workers);
    for (std::size_t m = 0; m < workers; ++m) {
      grads[m] = random_gradient(n, hash_combine(opt.seed, 900 + m));
    }
    const std::int64_t samples = std::max<std::int64_t>(opt.samples / 10, 1000);
    WorkerGroup group(workers);
    const SchemeDescriptor scheme = GlobalRandK{k, QsgdMaxNorm{s}};
    AggregateOptions ao;
    ao.shared_index_seed = opt.seed;
    ao.iteration = 3;
    ao.norm_scope = opt.norm_scope;
    std::vector<double> sum(n, 0.0), sum_sq(n, 0.0);
    IndexSet idx;
    for (std::int64_t t = 0; t < samples; ++t) {
      ao.rng = QuantRng(hash_combine(opt.seed, 5000 + static_cast<std::uint64_t>(t)));
      const auto agg = aggregate(group, grads, scheme, ao);
      group.ledger().clear();
      idx = *agg.indices;
      for (std::size_t i = 0; i < n; ++i) {
        sum[i] += agg.update[i];
        sum_sq[i] += agg.update[i] * agg.update[i];
      }
    }
    std::vector<char> selected(n, 0);
    for (auto i : idx) selected[i] = 1;
    std::size_t exceed = 0, nonzero_outside = 0;
    double max_z = 0.0;
    const auto tt = static_cast<double>(samples);
    for (std::size_t i = 0; i < n; ++i) {
      double target = 0.0;
      if (selected[i]) {
        for (const auto& g : grads) target += g[i];
        target /= static_cast<double>(workers);
      } else {
        if (sum_sq[i] != 0.0) ++nonzero_outside;
        continue;
      }
      const double mean = sum[i] / tt;
      const double var = std::max(0.0, sum_sq[i] / tt - mean * mean) * tt / (tt - 1.0);
      const double se = std::sqrt(var / tt);
      const double z = se > 0.0 ? std::abs(mean - target) / se
                                : (std::abs(mean - target) <= 1e-12 ? 0.0 : 1e300);
      max_z = std::max(max_z, z);
      if (z > 4.0) ++exceed;
    }
    const std::size_t allowed = binomial_upper(k, tail, 1e-3);
    CheckResult r{"unbiasedness",
                  std::string("grandk-mn n=1000 K=100 s=16 norm-scope=") +
                      (opt.norm_scope == NormScope::kFull ? "full" : "subvector"),
                  exceed <= allowed && nonzero_outside == 0, ""};
    r.detail = "max|z|=" + detail::fmt(max_z) + " beyond4SE=" + std::to_string(exceed) +
               " allowed=" + std::to_string(allowed) +
               " nonzero-unselected=" + std::to_string(nonzero_outside);
    out.push_back(r);
  }
  return out;
}

inline std::vector<CheckResult> verify_variance(const VerifyOptions& opt) {
  std::vector<CheckResult> out;
  for (std::size_t k = 0; k < opt.points.size(); ++k) {
    const auto [n, s] = opt.points[k];
    const GradientVector v = random_gradient(n, hash_combine(opt.seed, k));
    const double w = l2_norm(v);
    const QuantRng rng(hash_combine(opt.seed, 200 + k));
    const double bound = variance_bound(n, s, w);
    const std::string where = "n=" + std::to_string(n) + " s=" + std::to_string(s);
    auto report = [&](const std::string& name, double mse) {
      const double ratio = mse / bound;
      CheckResult r{"variance", name, ratio <= 1.0 + opt.variance_slack, ""};
      r.detail = "mse=" + detail::fmt(mse, 6) + " bound=" + detail::fmt(bound, 6) +
                 " ratio=" + detail::fmt(ratio);
      out.push_back(r);
    };
    {
      const auto m = qsgd_level_moments(v, w, s, opt.samples, rng);
      report("qsgd-mn " + where, empirical_mse(v, w, m, [&](std::size_t) { return s; }));
    }
    {
      const ScaleSet scales = detail::verify_scale_set(s);
      const auto shared = multiscale_local_scales(v, w, scales);
      const auto m = multiscale_level_moments(v, w, shared, scales, opt.samples, rng);
      report("qsgd-mn-ts " + where,
             empirical_mse(v, w, m, [&](std::size_t i) { return scales[shared[i]]; }));
    }
  }
  return out;
}

// For each case: random M, s, n and gradients. The all-reduced level sum must
// equal the integer sum of the individual encodings, and the decoded mean must
// match the mean of the individual decodings up to rounding of the final
// scale (a few ulps of w).
inline std::vector<CheckResult> verify_commutativity(const VerifyOptions& opt) {
  SplitMix64 gen(hash_combine(opt.seed, 0xc0));
  std::int64_t sum_failures = 0, value_failures = 0;
  double worst_ulps = 0.0;
  for (std::int64_t c = 0; c < opt.commutativity_cases; ++c) {
    const std::size_t workers = std::max<std::size_t>(opt.workers, 1);
    const std::int64_t s = std::int64_t{1} + static_cast<std::int64_t>(gen.below(64));
    const std::size_t n = 1 + static_cast<std::size_t>(gen.below(200));
    std::vector<GradientVector> grads(workers);
    std::vector<double> norms(workers);
    for (std::size_t m = 0; m < workers; ++m) {
      grads[m] = random_gradient(n, gen());
      norms[m] = l2_norm(grads[m]);
    }
    WorkerGroup group(workers);
    const double w = group.allreduce_max(norms);
    const QuantRng rng(gen());
    std::vector<LevelVector> levels(workers);
    for (std::size_t m = 0; m < workers; ++m) {
      levels[m] = qsgd_encode(grads[m], w, s, rng.stream(m, 0));
    }
    const auto reduced = group.allreduce_sum(std::span<const LevelVector>(levels), 32);
    std::vector<double> mean_decoded(n, 0.0);
    for (std::size_t m = 0; m < workers; ++m) {
      const auto d = qsgd_decode(std::span<const Level>(levels[m]), w, s);
      for (std::size_t i = 0; i < n; ++i) mean_decoded[i] += d[i];
    }
    std::vector<double> zeta(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::int64_t manual = 0;
      for (std::size_t m = 0; m < workers; ++m) manual += levels[m][i];
      if (manual != reduced[i]) ++sum_failures;
      zeta[i] = static_cast<double>(reduced[i]) / static_cast<double>(workers);
      mean_decoded[i] /= static_cast<double>(workers);
    }
    const auto decoded = qsgd_decode(zeta, w, s);
    const double ulp = std::numeric_limits<double>::epsilon() * w;
    for (std::size_t i = 0; i < n; ++i) {
      const double ulps = std::abs(decoded[i] - mean_decoded[i]) / ulp;
      worst_ulps = std::max(worst_ulps, ulps);
      if (ulps > 4.0 * static_cast<double>(workers)) ++value_failures;
    }
  }
  CheckResult r{"commutativity", "M=" + std::to_string(opt.workers),
                sum_failures == 0 && value_failures == 0, ""};
  r.detail = "cases=" + std::to_string(opt.commutativity_cases) +
             " level-sum-mismatches=" + std::to_string(sum_failures) +
             " value-mismatches=" + std::to_string(value_failures) +
             " worst=" + detail::fmt(worst_ulps) + "ulp(w)";
  return {r};
}

// Pearson statistic of the selection counts. Each iteration selects exactly K
// distinct coordinates, so the counts have covariance
// T p (1 - p) n / (n - 1) (I - 11'/n) with p = K / n; dividing the statistic
// by (1 - p) n / (n - 1) makes it chi-square with n - 1 degrees of freedom.
struct UniformityResult {
  double statistic = 0.0;
  double p_value = 0.0;
  double max_frequency_error = 0.0;
};

inline UniformityResult selection_uniformity(std::uint64_t seed, std::size_t n, std::size_t k,
                                             std::int64_t iterations) {
  std::vector<std::int64_t> counts(n, 0);
  for (std::int64_t t = 0; t < iterations; ++t) {
    for (auto i : global_randk_indices(seed, static_cast<std::uint64_t>(t), n, k)) ++counts[i];
  }
  const double p = static_cast<double>(k) / static_cast<double>(n);
  const double expected = static_cast<double>(iterations) * p;
  UniformityResult r;
  double chi2 = 0.0;
  for (auto c : counts) {
    const double d = static_cast<double>(c) - expected;
    chi2 += d * d / expected;
    r.max_frequency_error =
        std::max(r.max_frequency_error, std::abs(d) / static_cast<double>(iterations));
  }
  if (n < 2 || k == n) {
    r.p_value = 1.0;
    return r;
  }
  const double nd = static_cast<double>(n);
  r.statistic = chi2 / ((1.0 - p) * nd / (nd - 1.0));
  r.p_value = boost::math::cdf(
      boost::math::complement(boost::math::chi_squared(nd - 1.0), r.statistic));
  return r;
}

inline std::vector<CheckResult> verify_uniformity(const VerifyOptions& opt) {
  const auto u = selection_uniformity(opt.seed, opt.uniformity_n, opt.uniformity_k,
                                      opt.uniformity_iterations);
  CheckResult r{"uniformity",
                "n=" + std::to_string(opt.uniformity_n) + " K=" +
                    std::to_string(opt.uniformity_k),
                u.p_value > 0.01, ""};
  r.detail = "chi2=" + detail::fmt(u.statistic) + " p=" + detail::fmt(u.p_value) +
             " max|freq-K/n|=" + detail::fmt(u.max_frequency_error);
  // Agreement across workers: the selection never depends on the worker, so
  // recomputing it must give the same set.
  bool agree = true;
  for (std::uint64_t t = 0; t < 100 && agree; ++t) {
    agree = global_randk_indices(opt.seed, t, opt.uniformity_n, opt.uniformity_k) ==
            global_randk_indices(opt.seed, t, opt.uniformity_n, opt.uniformity_k);
  }
  CheckResult a{"uniformity", "cross-worker agreement", agree, agree ? "identical" : "differs"};
  return {r, a};
}

inline std::vector<CheckResult> verify_packing(const VerifyOptions& opt) {
  std::int64_t mismatches = 0, cases = 0;
  // Exhaustive for r <= 4: every level sequence of length 3.
  for (unsigned r = 1; r <= 4; ++r) {
    const int lo = -(1 << (r - 1)), hi = (1 << (r - 1)) - 1;
    for (int a = lo; a <= hi; ++a) {
      for (int b = lo; b <= hi; ++b) {
        for (int c = lo; c <= hi; ++c) {
          const LevelVector levels{a, b, c};
          ++cases;
          if (unpack(deserialize(serialize(pack(levels, r)))) != levels) ++mismatches;
        }
      }
    }
  }
  SplitMix64 gen(hash_combine(opt.seed, 0xbac));
  for (std::int64_t k = 0; k < opt.packing_cases; ++k) {
    const unsigned r = 1 + static_cast<unsigned>(gen.below(16));
    const std::size_t n = static_cast<std::size_t>(gen.below(9));
    LevelVector levels(n);
    const std::int64_t lo = -(std::int64_t{1} << (r - 1));
    for (auto& l : levels) {
      l = static_cast<Level>(lo + static_cast<std::int64_t>(gen.below(std::uint64_t{1} << r)));
    }
    ++cases;
    if (unpack(pack(levels, r)) != levels) ++mismatches;
  }
  CheckResult res{"packing", "round trips", mismatches == 0, ""};
  res.detail = "cases=" + std::to_string(cases) + " mismatches=" + std::to_string(mismatches);
  return {res};
}

inline const std::vector<std::string>& verify_suite_names() {
  static const std::vector<std::string> names{"unbiasedness", "variance", "commutativity",
                                              "uniformity", "packing"};
  return names;
}

inline std::vector<CheckResult> run_verify_suite(const std::string& suite,
                                                 const VerifyOptions& opt) {
  if (suite == "unbiasedness") return verify_unbiasedness(opt);
  if (suite == "variance") return verify_variance(opt);
  if (suite == "commutativity") return verify_commutativity(opt);
  if (suite == "uniformity") return verify_uniformity(opt);
  if (suite == "packing") return verify_packing(opt);
  throw InvalidConfig("unknown verify suite '" + suite + "'");
}

}  // namespace gcomp

#endif  // GCOMP_VERIFY_HPP_
