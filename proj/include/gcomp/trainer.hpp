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
// Data-parallel SGD over a simulated worker group.
//
// One iteration of the quantized schemes:
//
//   g_m   = local stochastic gradient of worker m
//   w     = allreduce_max ||g_m||            (shared normalizer)
//   s*    = allreduce_min local scales       (multi-scale only)
//   z_m   = encode(g_m, w)                   (integer levels)
//   zeta  = allreduce_sum z_m / M
//   g_hat = decode(zeta, w)
//   theta = theta - eta g_hat
//
// GlobalRandK runs the same pipeline on the K coordinates every worker draws
// from the shared seed and leaves the other coordinates untouched.

#ifndef GCOMP_TRAINER_HPP_
#define GCOMP_TRAINER_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcomp/collectives.hpp"
#include "gcomp/core.hpp"
#include "gcomp/quantize.hpp"
#include "gcomp/rng.hpp"
#include "gcomp/sparsify.hpp"
#include "gcomp/tasks.hpp"

namespace gcomp {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class StepRule { kConstant, kTheorem1, kCorollary1 };

// Step-size schedules. For the theorem rules:
//   gamma = (radius / sigma) * sqrt(2 / T)
//   eta   = 1 / (L + 1 / gamma)          (single oracle)
//   eta   = 1 / (L + sqrt(M) / gamma)    (M parallel oracles)
struct StepSize {
  StepRule rule = StepRule::kConstant;
  double eta = 0.1;
  double radius = 1.0;
  // Standard deviation bound of the update; estimated when unset.
  std::optional<double> sigma;
  // Smoothness; taken from the task when unset.
  std::optional<double> smoothness;
};

inline double theorem_step_size(StepRule rule, double smoothness, double radius,
                                double sigma, std::int64_t iterations, std::size_t workers) {
  if (!(radius > 0.0) || !(sigma > 0.0) || iterations < 1 || !(smoothness > 0.0)) {
    throw InvalidConfig("theorem step size needs positive radius, sigma, L and T");
  }
  const double gamma = radius / sigma * std::sqrt(2.0 / static_cast<double>(iterations));
  if (rule == StepRule::kCorollary1) {
    return 1.0 / (smoothness + std::sqrt(static_cast<double>(workers)) / gamma);
  }
  return 1.0 / (smoothness + 1.0 / gamma);
}

// Whether the sparsified schemes take the max-norm over the gathered
// K-subvectors (default) or over the full gradients.
enum class NormScope { kSubvector, kFull };

struct TrainConfig {
  SchemeDescriptor scheme = Uncompressed{};
  std::size_t workers = 4;
  std::int64_t iterations = 100;
  std::uint64_t seed = 1;
  StepSize step;
  // Projection onto ||theta - theta_0|| <= radius after each step. Only
  // applied with the theorem step rules.
  bool project = false;
  LinkProfile link;
  CostModel cost_model = CostModel::kRing;
  ComputeProfile compute;
  NormScope norm_scope = NormScope::kSubvector;
  // Loss is evaluated every eval_every iterations (and at the last one).
  std::int64_t eval_every = 1;
  double divergence_factor = 1e6;
};

// Seeds derived from the run seed. Quantization streams are keyed by
// (worker, iteration) on top of these.
inline QuantRng quant_rng_for(std::uint64_t seed) { return QuantRng(hash_combine(seed, 0x0a)); }
inline std::uint64_t shared_index_seed_for(std::uint64_t seed) {
  return hash_combine(seed, 0x0b);
}

struct AggregateOptions {
  QuantRng rng;
  std::uint64_t shared_index_seed = 0;
  std::int64_t iteration = 0;
  NormScope norm_scope = NormScope::kSubvector;
  ComputeProfile compute;
};

struct AggregateResult {
  GradientVector update;  // g_hat, identical on every worker
  double wnorm = 0.0;
  std::optional<ScaleIndexVector> shared_scales;
  std::optional<IndexSet> indices;
};

namespace detail {

inline double max_norm(WorkerGroup& group, std::span<const GradientVector> grads) {
  std::vector<double> norms(grads.size());
  for (std::size_t m = 0; m < grads.size(); ++m) norms[m] = l2_norm(grads[m]);
  return group.allreduce_max(norms);
}

inline GradientVector mean_of(const std::vector<std::int64_t>& sums, std::size_t workers) {
  GradientVector zeta(sums.size());
  const auto m = static_cast<double>(workers);
  for (std::size_t i = 0; i < sums.size(); ++i) zeta[i] = static_cast<double>(sums[i]) / m;
  return zeta;
}

// Quantized aggregation of `grads` against normalizer `wnorm`.
inline AggregateResult quantized_aggregate(WorkerGroup& group,
                                           std::span<const GradientVector> grads,
                                           double wnorm, const InnerQuantizer& inner,
                                           const AggregateOptions& opt) {
  const std::size_t workers = grads.size();
  const std::size_t n = grads.empty() ? 0 : grads[0].size();
  AggregateResult result;
  result.wnorm = wnorm;
  std::vector<LevelVector> levels(workers);
  std::visit(
      overloaded{
          [&](const QsgdMaxNorm& q) {
            for (std::size_t m = 0; m < workers; ++m) {
              levels[m] = qsgd_encode(
                  grads[m], wnorm, q.s,
                  opt.rng.stream(m, static_cast<std::uint64_t>(opt.iteration)));
            }
            group.record_compute(Phase::kEncode, "qsgd_encode",
                                 static_cast<std::int64_t>(n), opt.compute);
            const auto sums = group.allreduce_sum(std::span<const LevelVector>(levels),
                                                  nominal_level_bits(q.s));
            result.update = qsgd_decode(mean_of(sums, workers), wnorm, q.s);
            group.record_compute(Phase::kDecode, "qsgd_decode",
                                 static_cast<std::int64_t>(n), opt.compute);
          },
          [&](const QsgdMaxNormMultiScale& q) {
            std::vector<ScaleIndexVector> local(workers);
            for (std::size_t m = 0; m < workers; ++m) {
              local[m] = multiscale_local_scales(grads[m], wnorm, q.scales);
            }
            auto shared = group.allreduce_min_vec(std::span<const ScaleIndexVector>(local),
                                                  ceil_log2(q.scales.size()));
            for (std::size_t m = 0; m < workers; ++m) {
              levels[m] = multiscale_encode(
                  grads[m], wnorm, shared, q.scales,
                  opt.rng.stream(m, static_cast<std::uint64_t>(opt.iteration)));
            }
            group.record_compute(Phase::kEncode, "multiscale_encode",
                                 static_cast<std::int64_t>(n), opt.compute);
            const auto sums = group.allreduce_sum(std::span<const LevelVector>(levels),
                                                  nominal_level_bits(q.scales.min_scale()));
            result.update = multiscale_decode(mean_of(sums, workers), wnorm, shared, q.scales);
            group.record_compute(Phase::kDecode, "multiscale_decode",
                                 static_cast<std::int64_t>(n), opt.compute);
            result.shared_scales = std::move(shared);
          }},
      inner);
  return result;
}

}  // namespace detail

// Aggregated update g_hat for one iteration, given every worker's gradient.
// All collectives go through `group`, which records their cost.
inline AggregateResult aggregate(WorkerGroup& group, std::span<const GradientVector> grads,
                                 const SchemeDescriptor& scheme, const AggregateOptions& opt) {
  if (grads.size() != group.size()) {
    throw ContractViolation("aggregate expects one gradient per worker");
  }
  group.set_iteration(opt.iteration);
  return std::visit(
      overloaded{
          [&](const Uncompressed&) {
            AggregateResult r;
            const auto sums = group.allreduce_sum(grads, 32);
            r.update.resize(sums.size());
            const auto m = static_cast<double>(group.size());
            for (std::size_t i = 0; i < sums.size(); ++i) r.update[i] = sums[i] / m;
            return r;
          },
          [&](const QsgdMaxNorm& q) {
            const double w = detail::max_norm(group, grads);
            return detail::quantized_aggregate(group, grads, w, q, opt);
          },
          [&](const QsgdMaxNormMultiScale& q) {
            const double w = detail::max_norm(group, grads);
            return detail::quantized_aggregate(group, grads, w, q, opt);
          },
          [&](const GlobalRandK& g) {
            const std::size_t n = grads[0].size();
            IndexSet idx = global_randk_indices(opt.shared_index_seed,
                                                static_cast<std::uint64_t>(opt.iteration), n,
                                                g.k);
            std::vector<GradientVector> subs(grads.size());
            for (std::size_t m = 0; m < grads.size(); ++m) subs[m] = gather(grads[m], idx);
            const double w = opt.norm_scope == NormScope::kFull
                                 ? detail::max_norm(group, grads)
                                 : detail::max_norm(group, subs);
            AggregateResult r = detail::quantized_aggregate(
                group, std::span<const GradientVector>(subs), w, g.inner, opt);
            r.update = scatter(r.update, idx, n);
            r.indices = std::move(idx);
            return r;
          }},
      scheme);
}

struct MetricsRow {
  std::int64_t iteration = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::int64_t bits = 0;
  double sim_seconds = 0.0;  // cumulative
};

struct MetricsLog {
  std::string scheme;
  std::uint64_t seed = 0;
  std::vector<MetricsRow> rows;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  GradientVector final_theta;
  GradientVector averaged_theta;  // mean of theta_0 .. theta_T
  double averaged_loss = 0.0;
  std::optional<double> final_suboptimality;
  std::optional<double> averaged_suboptimality;
  std::optional<double> final_accuracy;
  double step_size = 0.0;

  // iteration,loss,grad_norm,bits,sim_seconds, then a summary comment line.
  void write_csv(std::ostream& os) const {
    os << "iteration,loss,grad_norm,bits,sim_seconds\n";
    os << std::setprecision(17);
    for (const auto& r : rows) {
      os << r.iteration << ',' << r.loss << ',' << r.grad_norm << ',' << r.bits << ','
         << r.sim_seconds << '\n';
    }
    os << "# final_loss=" << final_loss;
    if (final_suboptimality) os << " final_suboptimality=" << *final_suboptimality;
    if (averaged_suboptimality) os << " averaged_suboptimality=" << *averaged_suboptimality;
    if (final_accuracy) os << " final_accuracy=" << *final_accuracy;
    os << '\n';
  }
};

// All worker replicas of the model. Every worker applies the same update, so
// the replicas stay bitwise identical.
struct TrainerState {
  std::vector<GradientVector> replicas;
  GradientVector origin;  // theta_0, center of the projection ball
  std::int64_t iteration = 0;

  TrainerState() = default;
  TrainerState(const GradientVector& theta0, std::size_t workers)
      : replicas(workers, theta0), origin(theta0) {}

  const GradientVector& theta() const { return replicas.front(); }

  // max over workers of ||theta^m - theta^0||_inf.
  double replica_divergence() const {
    double worst = 0.0;
    for (const auto& r : replicas) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        worst = std::max(worst, std::abs(r[i] - replicas.front()[i]));
      }
    }
    return worst;
  }
};

inline void project_to_ball(GradientVector& theta, const GradientVector& center,
                            double radius) {
  GradientVector diff(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) diff[i] = theta[i] - center[i];
  const double norm = l2_norm(diff);
  if (norm <= radius) return;
  const double scale = radius / norm;
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = center[i] + diff[i] * scale;
}

inline AggregateOptions aggregate_options(const TrainConfig& config, std::int64_t iteration) {
  AggregateOptions opt;
  opt.rng = quant_rng_for(config.seed);
  opt.shared_index_seed = shared_index_seed_for(config.seed);
  opt.iteration = iteration;
  opt.norm_scope = config.norm_scope;
  opt.compute = config.compute;
  return opt;
}

// One SGD iteration for any scheme: local gradients, compressed aggregation,
// identical update on every replica. Returns the aggregation result.
inline AggregateResult sgd_step(TrainerState& state, WorkerGroup& group,
                                const TrainConfig& config, const Task& task, double eta) {
  const std::size_t workers = group.size();
  if (state.replicas.size() != workers) {
    throw ContractViolation("state has a different number of replicas than the group");
  }
  std::vector<GradientVector> grads(workers);
  for (std::size_t m = 0; m < workers; ++m) {
    grads[m] = task.stochastic_gradient(state.replicas[m], m, state.iteration);
  }
  AggregateResult agg =
      aggregate(group, grads, config.scheme, aggregate_options(config, state.iteration));
  const bool project = config.project && config.step.rule != StepRule::kConstant;
  for (auto& theta : state.replicas) {
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= eta * agg.update[i];
    if (project) project_to_ball(theta, state.origin, config.step.radius);
  }
  ++state.iteration;
  return agg;
}

// Named entry points for the individual schemes. Each checks that the config
// carries the matching scheme.
inline AggregateResult sgd_step_qsgdmaxnorm(TrainerState& state, WorkerGroup& group,
                                            const TrainConfig& config, const Task& task,
                                            double eta) {
  if (!std::holds_alternative<QsgdMaxNorm>(config.scheme)) {
    throw InvalidConfig("sgd_step_qsgdmaxnorm needs a QsgdMaxNorm scheme");
  }
  return sgd_step(state, group, config, task, eta);
}

inline AggregateResult sgd_step_multiscale(TrainerState& state, WorkerGroup& group,
                                           const TrainConfig& config, const Task& task,
                                           double eta) {
  if (!std::holds_alternative<QsgdMaxNormMultiScale>(config.scheme)) {
    throw InvalidConfig("sgd_step_multiscale needs a QsgdMaxNormMultiScale scheme");
  }
  return sgd_step(state, group, config, task, eta);
}

inline AggregateResult sgd_step_globalrandk(TrainerState& state, WorkerGroup& group,
                                            const TrainConfig& config, const Task& task,
                                            double eta) {
  if (!std::holds_alternative<GlobalRandK>(config.scheme)) {
    throw InvalidConfig("sgd_step_globalrandk needs a GlobalRandK scheme");
  }
  return sgd_step(state, group, config, task, eta);
}

// Largest mean squared deviation E||g_hat - grad f||^2 of the aggregated
// update over a set of probe points, estimated with `samples` draws each.
// Probes: theta_0, the optimum (if known), and points on the radius-ball
// around theta_0 (including the one farthest from the optimum).
inline double estimate_update_variance(const Task& task, const TrainConfig& config,
                                       double radius, std::int64_t samples,
                                       std::size_t random_probes = 4) {
  if (samples < 1) throw InvalidConfig("variance estimate needs samples >= 1");
  const GradientVector theta0 = task.initial_point();
  const std::size_t n = theta0.size();
  std::vector<GradientVector> probes{theta0};
  auto on_sphere = [&](GradientVector dir) {
    const double norm = l2_norm(dir);
    GradientVector p(theta0);
    if (norm == 0.0) return p;
    for (std::size_t i = 0; i < n; ++i) p[i] += radius * dir[i] / norm;
    return p;
  };
  if (auto opt = task.optimum()) {
    probes.push_back(*opt);
    GradientVector away(n);
    for (std::size_t i = 0; i < n; ++i) away[i] = theta0[i] - (*opt)[i];
    probes.push_back(on_sphere(away));
  }
  SplitMix64 gen(hash_combine(config.seed, 0x9b0e));
  std::normal_distribution<double> normal;
  for (std::size_t k = 0; k < random_probes; ++k) {
    GradientVector dir(n);
    for (double& x : dir) x = normal(gen);
    probes.push_back(on_sphere(std::move(dir)));
  }
  double worst = 0.0;
  WorkerGroup group(config.workers, config.link, config.cost_model);
  // Iteration indices well past any training run, so draws do not reuse
  // training streams.
  const std::int64_t base = std::int64_t{1} << 40;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const GradientVector exact = task.gradient(probes[p]);
    double acc = 0.0;
    for (std::int64_t t = 0; t < samples; ++t) {
      const std::int64_t it = base + static_cast<std::int64_t>(p) * samples + t;
      std::vector<GradientVector> grads(config.workers);
      for (std::size_t m = 0; m < config.workers; ++m) {
        grads[m] = task.stochastic_gradient(probes[p], m, it);
      }
      const auto agg = aggregate(group, grads, config.scheme, aggregate_options(config, it));
      group.ledger().clear();
      for (std::size_t i = 0; i < n; ++i) {
        const double d = agg.update[i] - exact[i];
        acc += d * d;
      }
    }
    worst = std::max(worst, acc / static_cast<double>(samples));
  }
  return worst;
}

// Step size for `config` on `task`, estimating sigma when the theorem rules
// need it and it is not configured.
inline double resolve_step_size(const Task& task, const TrainConfig& config) {
  if (config.step.rule == StepRule::kConstant) {
    if (!(config.step.eta > 0.0)) throw InvalidConfig("constant step size must be > 0");
    return config.step.eta;
  }
  const auto smooth = config.step.smoothness ? config.step.smoothness : task.smoothness();
  if (!smooth) throw InvalidConfig("theorem step size needs a smoothness constant");
  double sigma;
  if (config.step.sigma) {
    sigma = *config.step.sigma;
  } else {
    sigma = std::sqrt(estimate_update_variance(task, config, config.step.radius, 200));
  }
  return theorem_step_size(config.step.rule, *smooth, config.step.radius, sigma,
                           config.iterations, config.workers);
}

// Runs config.iterations steps from task.initial_point() and logs metrics.
// Throws DivergenceError when the loss exceeds divergence_factor times the
// initial loss (or becomes non-finite). With a known optimum both are measured
// as suboptimality f - f*.
inline MetricsLog train(const Task& task, const TrainConfig& config,
                        CostLedger* ledger_out = nullptr) {
  if (config.workers < 1) throw InvalidConfig("workers must be >= 1");
  if (config.iterations < 1) throw InvalidConfig("iterations must be >= 1");
  if (config.eval_every < 1) throw InvalidConfig("eval_every must be >= 1");
  const std::size_t n = task.dimension();
  (void)bit_cost(config.scheme, static_cast<std::int64_t>(n));  // validates the scheme

  const double eta = resolve_step_size(task, config);
  WorkerGroup group(config.workers, config.link, config.cost_model);
  TrainerState state(task.initial_point(), config.workers);

  MetricsLog log;
  log.scheme = scheme_name(config.scheme);
  log.seed = config.seed;
  log.step_size = eta;
  log.initial_loss = task.loss(state.theta());
  log.rows.push_back({0, log.initial_loss, 0.0, 0, 0.0});
  // Losses are compared above f* when it is known, so objectives that start at
  // or below zero still get a meaningful threshold.
  const double floor = task.optimum_value().value_or(0.0);
  const double limit =
      config.divergence_factor * std::max(std::abs(log.initial_loss - floor), 1e-12);

  std::vector<long double> theta_sum(state.theta().begin(), state.theta().end());
  double sim_seconds = 0.0;
  for (std::int64_t t = 0; t < config.iterations; ++t) {
    const std::size_t first = group.ledger().size();
    const auto agg = sgd_step(state, group, config, task, eta);
    const std::int64_t bits = group.ledger().payload_bits_from(first);
    sim_seconds += group.ledger().sim_seconds_from(first);
    for (std::size_t i = 0; i < n; ++i) theta_sum[i] += state.theta()[i];

    const bool last = t + 1 == config.iterations;
    if ((t + 1) % config.eval_every == 0 || last) {
      const double loss = task.loss(state.theta());
      if (!std::isfinite(loss) || loss - floor > limit) {
        throw DivergenceError("loss " + std::to_string(loss) + " at iteration " +
                              std::to_string(t + 1) + " exceeds " +
                              std::to_string(config.divergence_factor) +
                              "x the initial loss " + std::to_string(log.initial_loss) +
                              (floor != 0.0 ? " (measured above f* = " +
                                                  std::to_string(floor) + ")"
                                            : std::string()) +
                              " (scheme " + log.scheme + ", step size " +
                              std::to_string(eta) + ")");
      }
      log.rows.push_back({t + 1, loss, l2_norm(agg.update), bits, sim_seconds});
    }
  }

  log.final_theta = state.theta();
  log.final_loss = log.rows.back().loss;
  log.averaged_theta.resize(n);
  const auto count = static_cast<long double>(config.iterations + 1);
  for (std::size_t i = 0; i < n; ++i) {
    log.averaged_theta[i] = static_cast<double>(theta_sum[i] / count);
  }
  log.averaged_loss = task.loss(log.averaged_theta);
  if (auto f_star = task.optimum_value()) {
    log.final_suboptimality = log.final_loss - *f_star;
    log.averaged_suboptimality = log.averaged_loss - *f_star;
  }
  log.final_accuracy = task.accuracy(log.final_theta);
  if (ledger_out) *ledger_out = group.ledger();
  return log;
}

}  // namespace gcomp

#endif  // GCOMP_TRAINER_HPP_
