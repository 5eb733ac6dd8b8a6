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
// JSON experiment configuration.
//
//   {
//     "task": {"kind": "quadratic", "dim": 50, "mu": 0.1, "L": 1.0,
//              "noise_sigma2": 1.0, "optimum_norm": 1.0, "seed": 7},
//     "scheme": {"name": "qsgd-mn", "bits": 5},
//     "workers": 4,
//     "iterations": 1000,
//     "seed": 1,
//     "repeats": 5,
//     "step": {"rule": "theorem1", "radius": 2.0},
//     "project": true,
//     "link": {"bandwidth_bytes_per_sec": 125e6, "latency_sec_per_step": 1e-4},
//     "cost_model": "ring",
//     "norm_scope": "subvector",
//     "compute": {"encode_sec_per_coord": 1e-9, "decode_sec_per_coord": 5e-10},
//     "eval_every": 10
//   }
//
// Task kinds: quadratic, logistic, mlp. Schemes:
//
//   allreduce-sgd                                   uncompressed
//   qsgd-mn        {"bits": b} or {"s": s}          single scale
//   qsgd-mn-ts     {"bits": [b1, b2]} or {"scales": [s1, s2]}
//   grandk-mn      qsgd-mn fields plus {"k": K}
//   grandk-mn-ts   qsgd-mn-ts fields plus {"k": K}
//
// A bit width b maps to s = 2^(b-1), the largest scale whose nominal level
// width ceil(log2 s) + 1 equals b. Unknown keys are rejected.

#ifndef GCOMP_CONFIG_HPP_
#define GCOMP_CONFIG_HPP_

#include <cstdint>
#include <fstream>
#include <limits>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcomp/core.hpp"
#include "gcomp/perfmodel.hpp"
#include "gcomp/tasks.hpp"
#include "gcomp/trainer.hpp"

namespace gcomp {

class ConfigError : public InvalidConfig {
 public:
  using InvalidConfig::InvalidConfig;
};

using Json = nlohmann::json;

// Scale for a user-facing bit width.
inline std::int64_t scale_for_bits(int bits) {
  if (bits < 1 || bits > 31) {
    throw ConfigError("bit width must be in [1, 31], got " + std::to_string(bits));
  }
  return std::int64_t{1} << (bits - 1);
}

struct TaskConfig {
  std::string kind = "quadratic";
  QuadraticSpec quadratic;
  LogisticSpec logistic;
  MlpSpec mlp;
};

struct ExperimentConfig {
  TaskConfig task;
  TrainConfig train;
  int repeats = 5;
};

namespace detail {

inline void check_keys(const Json& obj, const std::string& where,
                       std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!ok.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void read(const Json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

inline std::vector<std::int64_t> read_scales(const Json& obj, const std::string& where) {
  std::vector<std::int64_t> scales;
  if (obj.contains("scales") && obj.contains("bits")) {
    throw ConfigError(where + ": give either 'scales' or 'bits', not both");
  }
  if (obj.contains("scales")) {
    read(obj, "scales", scales, where);
  } else if (obj.contains("bits")) {
    std::vector<int> bits;
    read(obj, "bits", bits, where);
    for (int b : bits) scales.push_back(scale_for_bits(b));
  } else {
    throw ConfigError(where + " needs 'scales' or 'bits'");
  }
  return scales;
}

inline std::int64_t read_scale(const Json& obj, const std::string& where) {
  if (obj.contains("s") && obj.contains("bits")) {
    throw ConfigError(where + ": give either 's' or 'bits', not both");
  }
  if (obj.contains("s")) {
    std::int64_t s = 0;
    read(obj, "s", s, where);
    return s;
  }
  if (obj.contains("bits")) {
    int bits = 0;
    read(obj, "bits", bits, where);
    return scale_for_bits(bits);
  }
  throw ConfigError(where + " needs 's' or 'bits'");
}

}  // namespace detail

inline SchemeDescriptor parse_scheme(const Json& j) {
  const std::string where = "scheme";
  if (!j.is_object() || !j.contains("name")) throw ConfigError("scheme needs a 'name'");
  std::string name;
  detail::read(j, "name", name, where);
  SchemeDescriptor scheme;
  if (name == "allreduce-sgd") {
    detail::check_keys(j, where, {"name"});
    scheme = Uncompressed{};
  } else if (name == "qsgd-mn") {
    detail::check_keys(j, where, {"name", "s", "bits"});
    scheme = QsgdMaxNorm{detail::read_scale(j, where)};
  } else if (name == "qsgd-mn-ts") {
    detail::check_keys(j, where, {"name", "scales", "bits"});
    scheme = QsgdMaxNormMultiScale{ScaleSet(detail::read_scales(j, where))};
  } else if (name == "grandk-mn" || name == "grandk-mn-ts") {
    std::size_t k = 0;
    if (!j.contains("k")) throw ConfigError(where + ": " + name + " needs 'k'");
    detail::read(j, "k", k, where);
    InnerQuantizer inner;
    if (name == "grandk-mn") {
      detail::check_keys(j, where, {"name", "s", "bits", "k"});
      inner = QsgdMaxNorm{detail::read_scale(j, where)};
    } else {
      detail::check_keys(j, where, {"name", "scales", "bits", "k"});
      inner = QsgdMaxNormMultiScale{ScaleSet(detail::read_scales(j, where))};
    }
    scheme = GlobalRandK{k, inner};
  } else {
    throw ConfigError("unknown scheme '" + name +
                      "' (expected allreduce-sgd, qsgd-mn, qsgd-mn-ts, grandk-mn, grandk-mn-ts)");
  }
  (void)bit_cost(scheme, std::numeric_limits<std::int32_t>::max());  // validates scales
  return scheme;
}

inline TaskConfig parse_task(const Json& j) {
  TaskConfig t;
  const std::string where = "task";
  if (!j.is_object()) throw ConfigError("task must be an object");
  detail::read(j, "kind", t.kind, where);
  if (t.kind == "quadratic") {
    detail::check_keys(j, where,
                       {"kind", "dim", "mu", "L", "noise_sigma2", "optimum_norm", "seed"});
    auto& q = t.quadratic;
    detail::read(j, "dim", q.dim, where);
    detail::read(j, "mu", q.mu, where);
    detail::read(j, "L", q.L, where);
    detail::read(j, "noise_sigma2", q.noise_sigma2, where);
    detail::read(j, "optimum_norm", q.optimum_norm, where);
    detail::read(j, "seed", q.seed, where);
  } else if (t.kind == "logistic") {
    detail::check_keys(j, where,
                       {"kind", "samples", "features", "batch", "l2", "separation", "seed"});
    auto& l = t.logistic;
    detail::read(j, "samples", l.samples, where);
    detail::read(j, "features", l.features, where);
    detail::read(j, "batch", l.batch, where);
    detail::read(j, "l2", l.l2, where);
    detail::read(j, "separation", l.separation, where);
    detail::read(j, "seed", l.seed, where);
  } else if (t.kind == "mlp") {
    detail::check_keys(j, where,
                       {"kind", "inputs", "hidden", "classes", "samples", "batch",
                        "separation", "init_scale", "seed"});
    auto& m = t.mlp;
    detail::read(j, "inputs", m.inputs, where);
    detail::read(j, "hidden", m.hidden, where);
    detail::read(j, "classes", m.classes, where);
    detail::read(j, "samples", m.samples, where);
    detail::read(j, "batch", m.batch, where);
    detail::read(j, "separation", m.separation, where);
    detail::read(j, "init_scale", m.init_scale, where);
    detail::read(j, "seed", m.seed, where);
  } else {
    throw ConfigError("unknown task kind '" + t.kind + "' (expected quadratic, logistic, mlp)");
  }
  return t;
}

inline StepSize parse_step(const Json& j) {
  StepSize step;
  const std::string where = "step";
  detail::check_keys(j, where, {"rule", "eta", "radius", "sigma", "smoothness"});
  std::string rule = "constant";
  detail::read(j, "rule", rule, where);
  if (rule == "constant") {
    step.rule = StepRule::kConstant;
  } else if (rule == "theorem1") {
    step.rule = StepRule::kTheorem1;
  } else if (rule == "corollary1") {
    step.rule = StepRule::kCorollary1;
  } else {
    throw ConfigError("unknown step rule '" + rule + "' (expected constant, theorem1, corollary1)");
  }
  detail::read(j, "eta", step.eta, where);
  detail::read(j, "radius", step.radius, where);
  if (j.contains("sigma")) {
    double sigma = 0.0;
    detail::read(j, "sigma", sigma, where);
    step.sigma = sigma;
  }
  if (j.contains("smoothness")) {
    double smooth = 0.0;
    detail::read(j, "smoothness", smooth, where);
    step.smoothness = smooth;
  }
  return step;
}

inline LinkProfile parse_link(const Json& j, const std::string& where) {
  LinkProfile link;
  detail::check_keys(j, where, {"bandwidth_bytes_per_sec", "latency_sec_per_step"});
  detail::read(j, "bandwidth_bytes_per_sec", link.bandwidth_bytes_per_sec, where);
  detail::read(j, "latency_sec_per_step", link.latency_sec_per_step, where);
  try {
    link.validate();
  } catch (const InvalidConfig& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return link;
}

inline ExperimentConfig parse_experiment(const Json& j) {
  detail::check_keys(j, "config",
                     {"task", "scheme", "workers", "iterations", "seed", "repeats", "step",
                      "project", "link", "cost_model", "norm_scope", "compute", "eval_every",
                      "divergence_factor"});
  ExperimentConfig c;
  if (!j.contains("task")) throw ConfigError("config needs a 'task'");
  if (!j.contains("scheme")) throw ConfigError("config needs a 'scheme'");
  c.task = parse_task(j.at("task"));
  auto& t = c.train;
  t.scheme = parse_scheme(j.at("scheme"));
  detail::read(j, "workers", t.workers, "config");
  detail::read(j, "iterations", t.iterations, "config");
  detail::read(j, "seed", t.seed, "config");
  detail::read(j, "repeats", c.repeats, "config");
  detail::read(j, "project", t.project, "config");
  detail::read(j, "eval_every", t.eval_every, "config");
  detail::read(j, "divergence_factor", t.divergence_factor, "config");
  if (j.contains("step")) t.step = parse_step(j.at("step"));
  if (j.contains("link")) t.link = parse_link(j.at("link"), "link");
  if (j.contains("cost_model")) {
    std::string m;
    detail::read(j, "cost_model", m, "config");
    if (m == "ring") {
      t.cost_model = CostModel::kRing;
    } else if (m == "tree") {
      t.cost_model = CostModel::kTree;
    } else {
      throw ConfigError("unknown cost_model '" + m + "' (expected ring, tree)");
    }
  }
  if (j.contains("norm_scope")) {
    std::string s;
    detail::read(j, "norm_scope", s, "config");
    if (s == "subvector") {
      t.norm_scope = NormScope::kSubvector;
    } else if (s == "full") {
      t.norm_scope = NormScope::kFull;
    } else {
      throw ConfigError("unknown norm_scope '" + s + "' (expected subvector, full)");
    }
  }
  if (j.contains("compute")) {
    const auto& cj = j.at("compute");
    detail::check_keys(cj, "compute", {"encode_sec_per_coord", "decode_sec_per_coord"});
    detail::read(cj, "encode_sec_per_coord", t.compute.encode_sec_per_coord, "compute");
    detail::read(cj, "decode_sec_per_coord", t.compute.decode_sec_per_coord, "compute");
  }
  if (t.workers < 1) throw ConfigError("workers must be >= 1");
  if (t.iterations < 1) throw ConfigError("iterations must be >= 1");
  if (c.repeats < 1) throw ConfigError("repeats must be >= 1");
  if (t.eval_every < 1) throw ConfigError("eval_every must be >= 1");
  return c;
}

// Line and column (1-based) of a byte offset in `text`.
inline std::pair<std::size_t, std::size_t> line_col(const std::string& text,
                                                    std::size_t offset) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

// Parses JSON text; syntax errors carry "<origin>:line:col".
inline Json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    // e.byte is one past the offending character.
    const auto [line, col] = line_col(text, e.byte > 0 ? e.byte - 1 : 0);
    std::string msg = e.what();
    const auto pos = msg.find("parse error");
    throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " +
                      (pos == std::string::npos ? msg : msg.substr(pos)));
  }
}

class ConfigFileMissing : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigFileMissing("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ExperimentConfig load_experiment(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return parse_experiment(parse_json_text(text, path));
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidConfig& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// Builds the task described by `t`, with stochastic-gradient streams keyed by
// `sample_seed`.
inline std::unique_ptr<Task> make_task(TaskConfig t, std::uint64_t sample_seed) {
  if (t.kind == "quadratic") {
    t.quadratic.sample_seed = sample_seed;
    return std::make_unique<QuadraticTask>(t.quadratic);
  }
  if (t.kind == "logistic") {
    t.logistic.sample_seed = sample_seed;
    return std::make_unique<LogisticTask>(t.logistic);
  }
  if (t.kind == "mlp") {
    t.mlp.sample_seed = sample_seed;
    return std::make_unique<TinyMlpTask>(t.mlp);
  }
  throw ConfigError("unknown task kind '" + t.kind + "'");
}

// Perf-model config:
//   {"profiles": [{"name": ..., "n_params": ..., "t_compute_per_batch": ...,
//                  "encode_sec_per_coord": ..., "decode_sec_per_coord": ...,
//                  "batch_size": ...}],
//    "cluster": {"gpus_per_node": 4, "intra": {link}, "inter": {link}},
//    "workers": [4, 8, ...],
//    "schemes": [{scheme}, ...]}
struct PerfConfig {
  std::vector<ModelProfile> profiles;
  ClusterSpec cluster;
  std::vector<std::int64_t> workers;
  std::vector<SchemeDescriptor> schemes;
};

inline PerfConfig parse_perf(const Json& j) {
  detail::check_keys(j, "config", {"profiles", "cluster", "workers", "schemes"});
  PerfConfig c;
  if (j.contains("profiles")) {
    for (const auto& pj : j.at("profiles")) {
      detail::check_keys(pj, "profile",
                         {"name", "n_params", "t_compute_per_batch", "encode_sec_per_coord",
                          "decode_sec_per_coord", "batch_size"});
      ModelProfile p;
      detail::read(pj, "name", p.name, "profile");
      detail::read(pj, "n_params", p.n_params, "profile");
      detail::read(pj, "t_compute_per_batch", p.t_compute_per_batch, "profile");
      detail::read(pj, "encode_sec_per_coord", p.encode_sec_per_coord, "profile");
      detail::read(pj, "decode_sec_per_coord", p.decode_sec_per_coord, "profile");
      detail::read(pj, "batch_size", p.batch_size, "profile");
      try {
        p.validate();
      } catch (const InvalidConfig& e) {
        throw ConfigError(e.what());
      }
      c.profiles.push_back(p);
    }
  } else {
    c.profiles = {resnet50_like_profile(), vgg16_like_profile()};
  }
  if (j.contains("cluster")) {
    const auto& cj = j.at("cluster");
    detail::check_keys(cj, "cluster", {"gpus_per_node", "intra", "inter"});
    detail::read(cj, "gpus_per_node", c.cluster.gpus_per_node, "cluster");
    if (cj.contains("intra")) c.cluster.intra = parse_link(cj.at("intra"), "cluster.intra");
    if (cj.contains("inter")) c.cluster.inter = parse_link(cj.at("inter"), "cluster.inter");
  }
  if (j.contains("workers")) {
    detail::read(j, "workers", c.workers, "config");
  } else {
    c.workers = {4, 8, 16, 32, 64, 128};
  }
  if (j.contains("schemes")) {
    for (const auto& sj : j.at("schemes")) c.schemes.push_back(parse_scheme(sj));
  }
  return c;
}

}  // namespace gcomp

#endif  // GCOMP_CONFIG_HPP_
