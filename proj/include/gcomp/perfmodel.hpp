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
// Analytical throughput model for data-parallel training with compressed
// gradients.
//
// Per iteration, with W = nodes * gpus_per_node workers:
//
//   t_comm = ring_allreduce(gpus_per_node, P, intra)
//          + ring_allreduce(nodes, P, inter)
//   t_iter = t_compute + t_encode + t_comm + t_decode
//   throughput = W * batch_size / t_iter          (samples / second)
//
// P is the per-worker payload from bit_cost. Communication does not overlap
// with compute. Encode and decode times are linear in the number of
// coordinates that get quantized (K for GlobalRandK).

#ifndef GCOMP_PERFMODEL_HPP_
#define GCOMP_PERFMODEL_HPP_

#include <cstdint>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "gcomp/collectives.hpp"
#include "gcomp/core.hpp"

namespace gcomp {

struct ModelProfile {
  std::string name;
  std::int64_t n_params = 0;
  double t_compute_per_batch = 0.0;   // forward + backward, seconds
  double encode_sec_per_coord = 0.0;
  double decode_sec_per_coord = 0.0;
  std::int64_t batch_size = 128;

  void validate() const {
    if (n_params < 1) throw InvalidConfig("profile " + name + ": n_params must be >= 1");
    if (!(t_compute_per_batch > 0.0)) {
      throw InvalidConfig("profile " + name + ": t_compute_per_batch must be > 0");
    }
    if (encode_sec_per_coord < 0.0 || decode_sec_per_coord < 0.0) {
      throw InvalidConfig("profile " + name + ": per-coordinate costs must be >= 0");
    }
    if (batch_size < 1) throw InvalidConfig("profile " + name + ": batch_size must be >= 1");
  }
};

struct ClusterSpec {
  std::int64_t nodes = 1;
  std::int64_t gpus_per_node = 4;
  LinkProfile intra{100e9, 5e-6};
  LinkProfile inter{125e6, 5e-5};

  std::int64_t workers() const { return nodes * gpus_per_node; }

  void validate() const {
    if (nodes < 1 || gpus_per_node < 1) {
      throw InvalidConfig("cluster node and gpu counts must be >= 1");
    }
    intra.validate();
    inter.validate();
  }
};

// Profiles shaped like the two reference networks. The parameter counts are
// the real ones; timings are placeholders of plausible magnitude for a V100
// class GPU at batch 128 and are meant to be edited.
inline ModelProfile resnet50_like_profile() {
  return {"resnet50-like", 23520842, 0.40, 1.0e-9, 0.5e-9, 128};
}

inline ModelProfile vgg16_like_profile() {
  return {"vgg16-like", 14728266, 0.08, 1.0e-9, 0.5e-9, 128};
}

inline LinkProfile ethernet_link(double gbps) {
  return {gbps * 1e9 / 8.0, 5e-5};
}

struct IterationTime {
  double compute = 0.0;
  double encode = 0.0;
  double communicate = 0.0;
  double decode = 0.0;
  double total() const { return compute + encode + communicate + decode; }
};

inline IterationTime predict_iteration_time(const ModelProfile& profile,
                                            const ClusterSpec& cluster,
                                            const SchemeDescriptor& scheme) {
  profile.validate();
  cluster.validate();
  const BitBudget budget = bit_cost(scheme, profile.n_params);
  const double payload_bytes = static_cast<double>(budget.total_bits) / 8.0;
  IterationTime t;
  t.compute = profile.t_compute_per_batch;
  if (!std::holds_alternative<Uncompressed>(scheme)) {
    const auto coords = static_cast<double>(budget.coordinates);
    t.encode = profile.encode_sec_per_coord * coords;
    t.decode = profile.decode_sec_per_coord * coords;
  }
  t.communicate =
      collective_cost(CollectiveKind::kAllReduce, static_cast<std::size_t>(cluster.gpus_per_node),
                      payload_bytes, cluster.intra)
          .seconds +
      collective_cost(CollectiveKind::kAllReduce, static_cast<std::size_t>(cluster.nodes),
                      payload_bytes, cluster.inter)
          .seconds;
  return t;
}

// Samples per second over the whole cluster.
inline double predict_throughput(const ModelProfile& profile, const ClusterSpec& cluster,
                                 const SchemeDescriptor& scheme) {
  const IterationTime t = predict_iteration_time(profile, cluster, scheme);
  return static_cast<double>(cluster.workers() * profile.batch_size) / t.total();
}

struct ThroughputPoint {
  std::int64_t workers = 0;
  std::string profile;
  std::string scheme;
  double throughput = 0.0;
};

// Throughput for each worker count (rounded up to whole nodes) and scheme.
inline std::vector<ThroughputPoint> sweep_throughput(
    const ModelProfile& profile, ClusterSpec cluster, const std::vector<std::int64_t>& workers,
    const std::vector<SchemeDescriptor>& schemes) {
  std::vector<ThroughputPoint> out;
  for (auto w : workers) {
    if (w < 1) throw InvalidConfig("worker count must be >= 1");
    cluster.nodes = (w + cluster.gpus_per_node - 1) / cluster.gpus_per_node;
    for (const auto& scheme : schemes) {
      out.push_back({cluster.workers(), profile.name, scheme_name(scheme),
                     predict_throughput(profile, cluster, scheme)});
    }
  }
  return out;
}

inline void write_throughput_csv(std::ostream& os, const std::vector<ThroughputPoint>& points,
                                 bool with_profile = false) {
  os << (with_profile ? "profile,workers,scheme,throughput\n" : "workers,scheme,throughput\n");
  os << std::setprecision(10);
  for (const auto& p : points) {
    if (with_profile) os << p.profile << ',';
    os << p.workers << ',' << p.scheme << ',' << p.throughput << '\n';
  }
}

}  // namespace gcomp

#endif  // GCOMP_PERFMODEL_HPP_
