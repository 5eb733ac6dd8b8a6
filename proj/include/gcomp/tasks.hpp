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
// Desk-scale training objectives: a strongly convex quadratic with additive
// Gaussian gradient noise, L2-regularized logistic regression and a one-hidden-
// layer MLP classifier. `seed` fixes the problem instance (matrix, dataset,
// initialization); stochastic gradients are deterministic functions of
// (seed, sample_seed, worker, iteration).

#ifndef GCOMP_TASKS_HPP_
#define GCOMP_TASKS_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gcomp/core.hpp"
#include "gcomp/rng.hpp"

namespace gcomp {

class Task {
 public:
  virtual ~Task() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual GradientVector initial_point() const = 0;
  // Full objective f(theta).
  virtual double loss(std::span<const double> theta) const = 0;
  // Exact gradient of f.
  virtual GradientVector gradient(std::span<const double> theta) const = 0;
  // Unbiased stochastic gradient seen by `worker` at `iteration`.
  virtual GradientVector stochastic_gradient(std::span<const double> theta,
                                             std::size_t worker,
                                             std::int64_t iteration) const = 0;
  // min f, when known in closed form.
  virtual std::optional<double> optimum_value() const { return std::nullopt; }
  virtual std::optional<GradientVector> optimum() const { return std::nullopt; }
  // Gradient Lipschitz constant, when known.
  virtual std::optional<double> smoothness() const { return std::nullopt; }
  // Classification accuracy on the task's dataset, when meaningful.
  virtual std::optional<double> accuracy(std::span<const double>) const {
    return std::nullopt;
  }
};

namespace detail {

inline SplitMix64 stream_engine(std::uint64_t seed, std::uint64_t tag, std::size_t worker,
                                std::int64_t iteration) {
  return SplitMix64(hash_combine(
      hash_combine(hash_combine(seed, tag), static_cast<std::uint64_t>(worker)),
      static_cast<std::uint64_t>(iteration)));
}

inline Eigen::Map<const Eigen::VectorXd> as_eigen(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

inline GradientVector to_vector(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

inline void check_dim(std::span<const double> theta, std::size_t n) {
  if (theta.size() != n) {
    throw ContractViolation("parameter vector has dimension " + std::to_string(theta.size()) +
                            ", task expects " + std::to_string(n));
  }
}

}  // namespace detail

struct QuadraticSpec {
  std::size_t dim = 50;
  double mu = 0.1;  // smallest eigenvalue of A
  double L = 1.0;   // largest eigenvalue of A
  // E||noise||^2 of one worker's stochastic gradient.
  double noise_sigma2 = 1.0;
  // Norm of the minimizer; theta_0 = 0.
  double optimum_norm = 1.0;
  std::uint64_t seed = 1;
  std::uint64_t sample_seed = 0;
};

// f(theta) = 1/2 theta' A theta - b' theta with A = Q diag(lambda) Q', lambda
// spread geometrically over [mu, L], so L-smoothness is exact.
class QuadraticTask final : public Task {
 public:
  explicit QuadraticTask(QuadraticSpec spec) : spec_(spec) {
    if (spec_.dim < 1) throw InvalidConfig("quadratic dim must be >= 1");
    if (!(spec_.mu > 0.0) || !(spec_.L >= spec_.mu)) {
      throw InvalidConfig("quadratic requires 0 < mu <= L");
    }
    if (!(spec_.noise_sigma2 >= 0.0)) throw InvalidConfig("noise_sigma2 must be >= 0");
    const auto n = static_cast<Eigen::Index>(spec_.dim);
    SplitMix64 gen(hash_combine(spec_.seed, 0x9a4d));
    std::normal_distribution<double> normal;
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) g(i, j) = normal(gen);
    }
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    Eigen::VectorXd lambda(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = n == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(n - 1);
      lambda(i) = spec_.mu * std::pow(spec_.L / spec_.mu, t);
    }
    a_ = q * lambda.asDiagonal() * q.transpose();
    a_ = 0.5 * (a_ + a_.transpose());
    Eigen::VectorXd dir(n);
    for (Eigen::Index i = 0; i < n; ++i) dir(i) = normal(gen);
    theta_star_ = spec_.optimum_norm * dir / dir.norm();
    b_ = a_ * theta_star_;
    f_star_ = -0.5 * b_.dot(theta_star_);
  }

  std::string name() const override { return "quadratic"; }
  std::size_t dimension() const override { return spec_.dim; }
  GradientVector initial_point() const override { return GradientVector(spec_.dim, 0.0); }

  double loss(std::span<const double> theta) const override {
    detail::check_dim(theta, spec_.dim);
    const auto t = detail::as_eigen(theta);
    return 0.5 * t.dot(a_ * t) - b_.dot(t);
  }

  GradientVector gradient(std::span<const double> theta) const override {
    detail::check_dim(theta, spec_.dim);
    return detail::to_vector(a_ * detail::as_eigen(theta) - b_);
  }

  GradientVector stochastic_gradient(std::span<const double> theta, std::size_t worker,
                                     std::int64_t iteration) const override {
    GradientVector g = gradient(theta);
    if (spec_.noise_sigma2 > 0.0) {
      auto gen = detail::stream_engine(hash_combine(spec_.seed, spec_.sample_seed), 0x401e,
                                       worker, iteration);
      std::normal_distribution<double> normal(
          0.0, std::sqrt(spec_.noise_sigma2 / static_cast<double>(spec_.dim)));
      for (double& x : g) x += normal(gen);
    }
    return g;
  }

  std::optional<double> optimum_value() const override { return f_star_; }
  std::optional<GradientVector> optimum() const override {
    return detail::to_vector(theta_star_);
  }
  std::optional<double> smoothness() const override { return spec_.L; }

  const Eigen::MatrixXd& matrix() const { return a_; }
  const Eigen::VectorXd& rhs() const { return b_; }
  const QuadraticSpec& spec() const { return spec_; }

 private:
  QuadraticSpec spec_;
  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
  Eigen::VectorXd theta_star_;
  double f_star_ = 0.0;
};

// Labeled dataset with rows as samples.
struct Dataset {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  int classes = 2;
};

// Gaussian class blobs: class c has a random unit-scale center and isotropic
// spread; `separation` scales the centers.
inline Dataset make_blobs(std::size_t samples, std::size_t features, int classes,
                          double separation, std::uint64_t seed) {
  if (samples < 1 || features < 1 || classes < 2) {
    throw InvalidConfig("dataset needs samples >= 1, features >= 1, classes >= 2");
  }
  SplitMix64 gen(hash_combine(seed, 0xb10b));
  std::normal_distribution<double> normal;
  const auto d = static_cast<Eigen::Index>(features);
  Eigen::MatrixXd centers(classes, d);
  for (int c = 0; c < classes; ++c) {
    for (Eigen::Index j = 0; j < d; ++j) centers(c, j) = separation * normal(gen);
  }
  Dataset data;
  data.classes = classes;
  data.features.resize(static_cast<Eigen::Index>(samples), d);
  data.labels.resize(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const int c = static_cast<int>(gen.below(static_cast<std::uint64_t>(classes)));
    data.labels[i] = c;
    for (Eigen::Index j = 0; j < d; ++j) {
      data.features(static_cast<Eigen::Index>(i), j) = centers(c, j) + normal(gen);
    }
  }
  return data;
}

namespace detail {

inline std::vector<Eigen::Index> sample_batch(std::size_t rows, std::size_t batch,
                                              SplitMix64& gen) {
  std::vector<Eigen::Index> idx(batch);
  for (auto& i : idx) i = static_cast<Eigen::Index>(gen.below(rows));
  return idx;
}

}  // namespace detail

struct LogisticSpec {
  std::size_t samples = 1000;
  std::size_t features = 20;
  std::size_t batch = 32;
  double l2 = 1e-3;
  double separation = 1.0;
  std::uint64_t seed = 1;
  std::uint64_t sample_seed = 0;
};

// Binary logistic regression with bias, labels in {0, 1}:
// f = mean log(1 + exp(-y' x'theta)) + l2/2 ||theta||^2.
class LogisticTask final : public Task {
 public:
  explicit LogisticTask(LogisticSpec spec)
      : spec_(spec), data_(make_blobs(spec.samples, spec.features, 2, spec.separation,
                                      spec.seed)) {
    if (spec_.batch < 1) throw InvalidConfig("batch must be >= 1");
    row_norm_sq_max_ = 0.0;
    for (Eigen::Index i = 0; i < data_.features.rows(); ++i) {
      row_norm_sq_max_ = std::max(row_norm_sq_max_, data_.features.row(i).squaredNorm() + 1.0);
    }
  }

  std::string name() const override { return "logistic"; }
  std::size_t dimension() const override { return spec_.features + 1; }
  GradientVector initial_point() const override { return GradientVector(dimension(), 0.0); }

  double loss(std::span<const double> theta) const override {
    detail::check_dim(theta, dimension());
    double total = 0.0;
    for (Eigen::Index i = 0; i < data_.features.rows(); ++i) total += sample_loss(theta, i);
    const auto t = detail::as_eigen(theta);
    return total / static_cast<double>(data_.features.rows()) +
           0.5 * spec_.l2 * t.squaredNorm();
  }

  GradientVector gradient(std::span<const double> theta) const override {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(data_.features.rows()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Eigen::Index>(i);
    return batch_gradient(theta, all);
  }

  GradientVector stochastic_gradient(std::span<const double> theta, std::size_t worker,
                                     std::int64_t iteration) const override {
    auto gen = detail::stream_engine(hash_combine(spec_.seed, spec_.sample_seed), 0x1061,
                                     worker, iteration);
    return batch_gradient(
        theta, detail::sample_batch(static_cast<std::size_t>(data_.features.rows()),
                                    spec_.batch, gen));
  }

  std::optional<double> smoothness() const override {
    return 0.25 * row_norm_sq_max_ + spec_.l2;
  }

  std::optional<double> accuracy(std::span<const double> theta) const override {
    detail::check_dim(theta, dimension());
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < data_.features.rows(); ++i) {
      const int predicted = margin(theta, i) > 0.0 ? 1 : 0;
      correct += predicted == data_.labels[static_cast<std::size_t>(i)] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(data_.features.rows());
  }

 private:
  double margin(std::span<const double> theta, Eigen::Index i) const {
    const auto d = static_cast<Eigen::Index>(spec_.features);
    return data_.features.row(i).dot(detail::as_eigen(theta.first(spec_.features))) +
           theta[static_cast<std::size_t>(d)];
  }

  double sample_loss(std::span<const double> theta, Eigen::Index i) const {
    const double y = data_.labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
    const double z = -y * margin(theta, i);
    return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  }

  GradientVector batch_gradient(std::span<const double> theta,
                                const std::vector<Eigen::Index>& rows) const {
    detail::check_dim(theta, dimension());
    const std::size_t d = spec_.features;
    GradientVector g(d + 1, 0.0);
    for (Eigen::Index i : rows) {
      const double y = data_.labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
      const double m = margin(theta, i);
      // d/dm log(1 + exp(-y m)) = -y sigmoid(-y m)
      const double coeff = -y / (1.0 + std::exp(y * m));
      for (std::size_t j = 0; j < d; ++j) {
        g[j] += coeff * data_.features(i, static_cast<Eigen::Index>(j));
      }
      g[d] += coeff;
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (std::size_t j = 0; j <= d; ++j) g[j] = g[j] * inv + spec_.l2 * theta[j];
    return g;
  }

  LogisticSpec spec_;
  Dataset data_;
  double row_norm_sq_max_ = 0.0;
};

struct MlpSpec {
  std::size_t inputs = 8;
  std::size_t hidden = 16;
  int classes = 3;
  std::size_t samples = 600;
  std::size_t batch = 16;
  double separation = 1.0;
  double init_scale = 1.0;
  std::uint64_t seed = 1;
  std::uint64_t sample_seed = 0;
};

// inputs -> tanh(hidden) -> softmax(classes), cross-entropy loss.
// Parameters are laid out as [W1 (hidden x inputs, row-major), b1, W2
// (classes x hidden, row-major), b2].
class TinyMlpTask final : public Task {
 public:
  explicit TinyMlpTask(MlpSpec spec)
      : spec_(spec),
        data_(make_blobs(spec.samples, spec.inputs, spec.classes, spec.separation, spec.seed)) {
    if (spec_.hidden < 1 || spec_.batch < 1) {
      throw InvalidConfig("mlp needs hidden >= 1 and batch >= 1");
    }
  }

  std::string name() const override { return "mlp"; }
  std::size_t dimension() const override {
    const std::size_t c = static_cast<std::size_t>(spec_.classes);
    return spec_.hidden * spec_.inputs + spec_.hidden + c * spec_.hidden + c;
  }

  GradientVector initial_point() const override {
    GradientVector theta(dimension(), 0.0);
    SplitMix64 gen(hash_combine(spec_.seed, 0x1417));
    std::normal_distribution<double> normal;
    const double s1 = spec_.init_scale / std::sqrt(static_cast<double>(spec_.inputs));
    const double s2 = spec_.init_scale / std::sqrt(static_cast<double>(spec_.hidden));
    const std::size_t w1 = spec_.hidden * spec_.inputs;
    const std::size_t w2_off = w1 + spec_.hidden;
    const std::size_t w2 = static_cast<std::size_t>(spec_.classes) * spec_.hidden;
    for (std::size_t i = 0; i < w1; ++i) theta[i] = s1 * normal(gen);
    for (std::size_t i = 0; i < w2; ++i) theta[w2_off + i] = s2 * normal(gen);
    return theta;
  }

  double loss(std::span<const double> theta) const override {
    detail::check_dim(theta, dimension());
    const Params p = unpack(theta);
    double total = 0.0;
    for (Eigen::Index i = 0; i < data_.features.rows(); ++i) {
      Forward f = forward(p, i);
      total += f.loss;
    }
    return total / static_cast<double>(data_.features.rows());
  }

  GradientVector gradient(std::span<const double> theta) const override {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(data_.features.rows()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Eigen::Index>(i);
    return batch_gradient(theta, all);
  }

  GradientVector stochastic_gradient(std::span<const double> theta, std::size_t worker,
                                     std::int64_t iteration) const override {
    auto gen = detail::stream_engine(hash_combine(spec_.seed, spec_.sample_seed), 0x3170,
                                     worker, iteration);
    return batch_gradient(
        theta, detail::sample_batch(static_cast<std::size_t>(data_.features.rows()),
                                    spec_.batch, gen));
  }

  std::optional<double> accuracy(std::span<const double> theta) const override {
    detail::check_dim(theta, dimension());
    const Params p = unpack(theta);
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < data_.features.rows(); ++i) {
      Forward f = forward(p, i);
      Eigen::Index arg = 0;
      f.probs.maxCoeff(&arg);
      correct += static_cast<int>(arg) == data_.labels[static_cast<std::size_t>(i)] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(data_.features.rows());
  }

 private:
  struct Params {
    Eigen::MatrixXd w1;
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;
    Eigen::VectorXd b2;
  };

  struct Forward {
    Eigen::VectorXd hidden;
    Eigen::VectorXd probs;
    double loss = 0.0;
  };

  Params unpack(std::span<const double> theta) const {
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const auto h = static_cast<Eigen::Index>(spec_.hidden);
    const auto d = static_cast<Eigen::Index>(spec_.inputs);
    const auto c = static_cast<Eigen::Index>(spec_.classes);
    const double* ptr = theta.data();
    Params p;
    p.w1 = Eigen::Map<const RowMajor>(ptr, h, d);
    ptr += h * d;
    p.b1 = Eigen::Map<const Eigen::VectorXd>(ptr, h);
    ptr += h;
    p.w2 = Eigen::Map<const RowMajor>(ptr, c, h);
    ptr += c * h;
    p.b2 = Eigen::Map<const Eigen::VectorXd>(ptr, c);
    return p;
  }

  Forward forward(const Params& p, Eigen::Index row) const {
    Forward f;
    const Eigen::VectorXd x = data_.features.row(row).transpose();
    f.hidden = (p.w1 * x + p.b1).array().tanh().matrix();
    Eigen::VectorXd logits = p.w2 * f.hidden + p.b2;
    const double shift = logits.maxCoeff();
    f.probs = (logits.array() - shift).exp().matrix();
    const double z = f.probs.sum();
    f.probs /= z;
    const int y = data_.labels[static_cast<std::size_t>(row)];
    f.loss = -(logits(y) - shift - std::log(z));
    return f;
  }

  GradientVector batch_gradient(std::span<const double> theta,
                                const std::vector<Eigen::Index>& rows) const {
    detail::check_dim(theta, dimension());
    const Params p = unpack(theta);
    Eigen::MatrixXd gw1 = Eigen::MatrixXd::Zero(p.w1.rows(), p.w1.cols());
    Eigen::VectorXd gb1 = Eigen::VectorXd::Zero(p.b1.size());
    Eigen::MatrixXd gw2 = Eigen::MatrixXd::Zero(p.w2.rows(), p.w2.cols());
    Eigen::VectorXd gb2 = Eigen::VectorXd::Zero(p.b2.size());
    for (Eigen::Index row : rows) {
      const Forward f = forward(p, row);
      Eigen::VectorXd dlogits = f.probs;
      dlogits(data_.labels[static_cast<std::size_t>(row)]) -= 1.0;
      gw2 += dlogits * f.hidden.transpose();
      gb2 += dlogits;
      const Eigen::VectorXd dhidden =
          ((p.w2.transpose() * dlogits).array() * (1.0 - f.hidden.array().square())).matrix();
      gw1 += dhidden * data_.features.row(row);
      gb1 += dhidden;
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    GradientVector g;
    g.reserve(dimension());
    for (Eigen::Index i = 0; i < gw1.rows(); ++i) {
      for (Eigen::Index j = 0; j < gw1.cols(); ++j) g.push_back(gw1(i, j) * inv);
    }
    for (Eigen::Index i = 0; i < gb1.size(); ++i) g.push_back(gb1(i) * inv);
    for (Eigen::Index i = 0; i < gw2.rows(); ++i) {
      for (Eigen::Index j = 0; j < gw2.cols(); ++j) g.push_back(gw2(i, j) * inv);
    }
    for (Eigen::Index i = 0; i < gb2.size(); ++i) g.push_back(gb2(i) * inv);
    return g;
  }

  MlpSpec spec_;
  Dataset data_;
};

}  // namespace gcomp

#endif  // GCOMP_TASKS_HPP_
