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
// Simulated collectives over M in-process workers, with a cost ledger.
//
// Reductions are evaluated in worker-id order, so a round is bitwise
// reproducible no matter how worker contexts are scheduled. Costs follow a
// latency-bandwidth model:
//
//   seconds = steps * latency + bytes_per_worker / bandwidth
//
//   ring all-reduce : steps = 2 (M - 1),  bytes = 2 (M - 1) / M * payload
//   tree all-reduce : steps = 2 ceil(log2 M), bytes = 2 ceil(log2 M) * payload
//   all-gather      : steps = M - 1 (ring) or ceil(log2 M) (tree),
//                     bytes = (M - 1) * payload
//
// Two execution styles share the same reduction code: WorkerGroup takes every
// worker's contribution in one call (lockstep), and Communicator lets each
// worker run on its own thread and meet the others at a rendezvous.

#ifndef GCOMP_COLLECTIVES_HPP_
#define GCOMP_COLLECTIVES_HPP_

#include <algorithm>
#include <any>
#include <cmath>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <mutex>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "gcomp/bitpack.hpp"
#include "gcomp/core.hpp"

namespace gcomp {

struct LinkProfile {
  double bandwidth_bytes_per_sec = 125e6;  // 1 Gbps
  double latency_sec_per_step = 1e-4;

  void validate() const {
    if (!(bandwidth_bytes_per_sec > 0.0) || !std::isfinite(bandwidth_bytes_per_sec)) {
      throw InvalidConfig("link bandwidth must be positive and finite");
    }
    if (!(latency_sec_per_step >= 0.0) || !std::isfinite(latency_sec_per_step)) {
      throw InvalidConfig("link latency must be non-negative and finite");
    }
  }
};

enum class CostModel { kRing, kTree };

enum class Phase { kEncode, kCommunicate, kDecode };

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::kEncode:
      return "encode";
    case Phase::kCommunicate:
      return "communicate";
    case Phase::kDecode:
      return "decode";
  }
  return "?";
}

enum class CollectiveKind { kAllReduce, kAllGather };

struct CollectiveCost {
  double bytes_per_worker = 0.0;
  std::int64_t steps = 0;
  double seconds = 0.0;
};

inline CollectiveCost collective_cost(CollectiveKind kind, std::size_t workers,
                                      double payload_bytes, const LinkProfile& link,
                                      CostModel model = CostModel::kRing) {
  if (workers < 1) throw InvalidConfig("worker count must be >= 1");
  CollectiveCost c;
  const auto m = static_cast<double>(workers);
  const auto log_m = static_cast<std::int64_t>(ceil_log2(workers));
  switch (kind) {
    case CollectiveKind::kAllReduce:
      if (model == CostModel::kRing) {
        c.steps = 2 * static_cast<std::int64_t>(workers - 1);
        c.bytes_per_worker = 2.0 * (m - 1.0) / m * payload_bytes;
      } else {
        c.steps = 2 * log_m;
        c.bytes_per_worker = 2.0 * static_cast<double>(log_m) * payload_bytes;
      }
      break;
    case CollectiveKind::kAllGather:
      c.steps = model == CostModel::kRing ? static_cast<std::int64_t>(workers - 1) : log_m;
      c.bytes_per_worker = (m - 1.0) * payload_bytes;
      break;
  }
  c.seconds = static_cast<double>(c.steps) * link.latency_sec_per_step +
              c.bytes_per_worker / link.bandwidth_bytes_per_sec;
  return c;
}

struct LedgerEntry {
  std::int64_t iteration = 0;
  Phase phase = Phase::kCommunicate;
  std::string collective;
  // Logical payload one worker contributes, in bits.
  std::int64_t payload_bits = 0;
  double bytes = 0.0;
  std::int64_t steps = 0;
  double sim_seconds = 0.0;
};

class CostLedger {
 public:
  void record(LedgerEntry e) { entries_.push_back(std::move(e)); }
  const std::vector<LedgerEntry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  std::int64_t payload_bits(std::int64_t iteration) const {
    std::int64_t total = 0;
    for (const auto& e : entries_) {
      if (e.iteration == iteration && e.phase == Phase::kCommunicate) total += e.payload_bits;
    }
    return total;
  }
  double bytes(std::int64_t iteration) const {
    double total = 0.0;
    for (const auto& e : entries_) {
      if (e.iteration == iteration) total += e.bytes;
    }
    return total;
  }
  double sim_seconds(std::int64_t iteration) const {
    double total = 0.0;
    for (const auto& e : entries_) {
      if (e.iteration == iteration) total += e.sim_seconds;
    }
    return total;
  }
  // Totals over entries()[first, end), for the entries of the step in flight.
  std::int64_t payload_bits_from(std::size_t first) const {
    std::int64_t total = 0;
    for (std::size_t i = first; i < entries_.size(); ++i) {
      if (entries_[i].phase == Phase::kCommunicate) total += entries_[i].payload_bits;
    }
    return total;
  }
  double sim_seconds_from(std::size_t first) const {
    double total = 0.0;
    for (std::size_t i = first; i < entries_.size(); ++i) total += entries_[i].sim_seconds;
    return total;
  }
  std::size_t size() const { return entries_.size(); }

  double total_sim_seconds() const {
    double total = 0.0;
    for (const auto& e : entries_) total += e.sim_seconds;
    return total;
  }

  // iteration,phase,collective,bytes,steps,sim_seconds
  void write_csv(std::ostream& os) const {
    os << "iteration,phase,collective,bytes,steps,sim_seconds\n";
    for (const auto& e : entries_) {
      os << e.iteration << ',' << phase_name(e.phase) << ',' << e.collective << ','
         << std::setprecision(17) << e.bytes << ',' << e.steps << ',' << e.sim_seconds
         << '\n';
    }
  }

 private:
  std::vector<LedgerEntry> entries_;
};

// Per-coordinate encode/decode cost used for the encode and decode ledger
// phases. Zero by default: only communication is charged.
struct ComputeProfile {
  double encode_sec_per_coord = 0.0;
  double decode_sec_per_coord = 0.0;
};

// Lockstep group: each collective receives all M contributions at once and
// returns the value every worker would hold.
class WorkerGroup {
 public:
  explicit WorkerGroup(std::size_t workers, LinkProfile link = {},
                       CostModel model = CostModel::kRing)
      : workers_(workers), link_(link), model_(model) {
    if (workers_ < 1) throw InvalidConfig("worker count must be >= 1");
    link_.validate();
  }

  std::size_t size() const { return workers_; }
  const LinkProfile& link() const { return link_; }
  CostModel cost_model() const { return model_; }
  CostLedger& ledger() { return ledger_; }
  const CostLedger& ledger() const { return ledger_; }

  void set_iteration(std::int64_t iteration) { iteration_ = iteration; }
  std::int64_t iteration() const { return iteration_; }

  // Elementwise sum in worker-id order. Integer inputs accumulate in int64 so
  // level sums are exact. Payload is charged at bits_per_element per entry.
  template <class T>
  auto allreduce_sum(std::span<const std::vector<T>> contributions, int bits_per_element)
      -> std::vector<std::conditional_t<std::is_integral_v<T>, std::int64_t, double>> {
    using Acc = std::conditional_t<std::is_integral_v<T>, std::int64_t, double>;
    const std::size_t n = check_contributions(contributions, "allreduce_sum");
    std::vector<Acc> out(n, Acc{0});
    for (const auto& c : contributions) {
      if constexpr (std::is_floating_point_v<T>) require_finite(c, "allreduce_sum input");
      for (std::size_t i = 0; i < n; ++i) out[i] += static_cast<Acc>(c[i]);
    }
    charge(CollectiveKind::kAllReduce, "allreduce_sum",
           static_cast<std::int64_t>(n) * bits_per_element);
    return out;
  }

  // Max of one scalar per worker, charged as a 32-bit payload.
  double allreduce_max(std::span<const double> values) {
    if (values.size() != workers_) {
      throw ContractViolation("allreduce_max expects one value per worker");
    }
    require_finite(values, "allreduce_max input");
    double out = values[0];
    for (double v : values) out = std::max(out, v);
    charge(CollectiveKind::kAllReduce, "allreduce_max", 32);
    return out;
  }

  // Elementwise min of scale indices, charged at bits_per_element per entry
  // (ceil(log2 N) for N scales).
  ScaleIndexVector allreduce_min_vec(std::span<const ScaleIndexVector> contributions,
                                     int bits_per_element) {
    const std::size_t n = check_contributions(contributions, "allreduce_min_vec");
    ScaleIndexVector out = contributions[0];
    for (const auto& c : contributions) {
      for (std::size_t i = 0; i < n; ++i) out[i] = std::min(out[i], c[i]);
    }
    charge(CollectiveKind::kAllReduce, "allreduce_min",
           static_cast<std::int64_t>(n) * bits_per_element);
    return out;
  }

  // Every worker receives all buffers in worker-id order. Payload is the
  // largest serialized buffer.
  std::vector<PackedBuffer> allgather(std::span<const PackedBuffer> buffers) {
    if (buffers.size() != workers_) {
      throw ContractViolation("allgather expects one buffer per worker");
    }
    std::int64_t bits = 0;
    for (const auto& b : buffers) {
      bits = std::max<std::int64_t>(bits, static_cast<std::int64_t>(serialize(b).size()) * 8);
    }
    charge(CollectiveKind::kAllGather, "allgather", bits);
    return {buffers.begin(), buffers.end()};
  }

  // Records local encode/decode work of `coordinates` coordinates.
  void record_compute(Phase phase, const std::string& what, std::int64_t coordinates,
                      const ComputeProfile& compute) {
    const double per = phase == Phase::kEncode ? compute.encode_sec_per_coord
                                               : compute.decode_sec_per_coord;
    LedgerEntry e;
    e.iteration = iteration_;
    e.phase = phase;
    e.collective = what;
    e.sim_seconds = per * static_cast<double>(coordinates);
    ledger_.record(std::move(e));
  }

 private:
  template <class V>
  std::size_t check_contributions(std::span<const V> contributions, const char* op) const {
    if (contributions.size() != workers_) {
      throw ContractViolation(std::string(op) + " expects one contribution per worker");
    }
    const std::size_t n = contributions[0].size();
    for (const auto& c : contributions) {
      if (c.size() != n) {
        throw ContractViolation(std::string(op) + ": contribution lengths differ");
      }
    }
    return n;
  }

  void charge(CollectiveKind kind, const char* name, std::int64_t payload_bits) {
    const auto cost = collective_cost(kind, workers_,
                                      static_cast<double>(payload_bits) / 8.0, link_, model_);
    LedgerEntry e;
    e.iteration = iteration_;
    e.phase = Phase::kCommunicate;
    e.collective = name;
    e.payload_bits = payload_bits;
    e.bytes = cost.bytes_per_worker;
    e.steps = cost.steps;
    e.sim_seconds = cost.seconds;
    ledger_.record(std::move(e));
  }

  std::size_t workers_;
  LinkProfile link_;
  CostModel model_;
  CostLedger ledger_;
  std::int64_t iteration_ = 0;
};

// Rendezvous for worker threads. Every worker must issue the same sequence of
// collectives; a mismatched operation or a worker that never arrives within
// the timeout raises ProtocolError on every participant.
class Rendezvous {
 public:
  Rendezvous(WorkerGroup& group, std::chrono::milliseconds timeout)
      : group_(group), timeout_(timeout), slots_(group.size()) {}

  WorkerGroup& group() { return group_; }

  // Deposits `local` for `rank`; the last worker to arrive runs `combine` on
  // all deposits (in rank order) and every worker returns its result.
  template <class In, class Out>
  Out exchange(std::size_t rank, const std::string& op, In local,
               const std::function<Out(std::span<const In>)>& combine) {
    std::unique_lock lock(mu_);
    if (failed_) throw ProtocolError("collective group already failed: " + failure_);
    if (rank >= slots_.size()) throw ContractViolation("rank out of range");
    if (arrived_ == 0) {
      op_ = op;
    } else if (op != op_) {
      fail("worker " + std::to_string(rank) + " issued " + op + " while others issued " +
           op_);
    }
    slots_[rank] = std::move(local);
    const std::uint64_t my_generation = generation_;
    if (++arrived_ == slots_.size()) {
      std::vector<In> inputs;
      inputs.reserve(slots_.size());
      for (auto& s : slots_) inputs.push_back(std::any_cast<In>(std::move(s)));
      try {
        result_ = combine(std::span<const In>(inputs));
      } catch (const std::exception& e) {
        fail(std::string("combine failed: ") + e.what());
      }
      arrived_ = 0;
      ++generation_;
      cv_.notify_all();
      return std::any_cast<Out>(result_);
    }
    const bool done = cv_.wait_for(lock, timeout_, [&] {
      return generation_ != my_generation || failed_;
    });
    if (failed_) throw ProtocolError(failure_);
    if (!done) {
      fail("timed out waiting for " + op + " (worker " + std::to_string(rank) + ")");
    }
    return std::any_cast<Out>(result_);
  }

 private:
  [[noreturn]] void fail(const std::string& why) {
    failed_ = true;
    failure_ = why;
    cv_.notify_all();
    throw ProtocolError(why);
  }

  WorkerGroup& group_;
  std::chrono::milliseconds timeout_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::any> slots_;
  std::size_t arrived_ = 0;
  std::uint64_t generation_ = 0;
  std::string op_;
  std::any result_;
  bool failed_ = false;
  std::string failure_;
};

// One worker's handle on a Rendezvous.
class Communicator {
 public:
  Communicator(Rendezvous& rv, std::size_t rank) : rv_(rv), rank_(rank) {}

  std::size_t rank() const { return rank_; }
  std::size_t size() const { return rv_.group().size(); }

  template <class T>
  auto allreduce_sum(std::vector<T> local, int bits_per_element) {
    using Out = decltype(rv_.group().allreduce_sum(
        std::span<const std::vector<T>>(), bits_per_element));
    std::function<Out(std::span<const std::vector<T>>)> f =
        [&](std::span<const std::vector<T>> all) {
          return rv_.group().allreduce_sum(all, bits_per_element);
        };
    return rv_.exchange<std::vector<T>, Out>(rank_, "allreduce_sum", std::move(local), f);
  }

  double allreduce_max(double local) {
    std::function<double(std::span<const double>)> f = [&](std::span<const double> all) {
      return rv_.group().allreduce_max(all);
    };
    return rv_.exchange<double, double>(rank_, "allreduce_max", local, f);
  }

  ScaleIndexVector allreduce_min_vec(ScaleIndexVector local, int bits_per_element) {
    std::function<ScaleIndexVector(std::span<const ScaleIndexVector>)> f =
        [&](std::span<const ScaleIndexVector> all) {
          return rv_.group().allreduce_min_vec(all, bits_per_element);
        };
    return rv_.exchange<ScaleIndexVector, ScaleIndexVector>(rank_, "allreduce_min",
                                                            std::move(local), f);
  }

  std::vector<PackedBuffer> allgather(PackedBuffer local) {
    std::function<std::vector<PackedBuffer>(std::span<const PackedBuffer>)> f =
        [&](std::span<const PackedBuffer> all) { return rv_.group().allgather(all); };
    return rv_.exchange<PackedBuffer, std::vector<PackedBuffer>>(rank_, "allgather",
                                                                 std::move(local), f);
  }

 private:
  Rendezvous& rv_;
  std::size_t rank_;
};

}  // namespace gcomp

#endif  // GCOMP_COLLECTIVES_HPP_
