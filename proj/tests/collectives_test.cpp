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

#include "gcomp/collectives.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>
#include <thread>
#include <vector>

namespace gcomp {
namespace {

using namespace std::chrono_literals;

TEST(CollectiveCost, RingExample) {
  const LinkProfile link{125e6, 1e-4};
  const auto c = collective_cost(CollectiveKind::kAllReduce, 4, 1e6, link);
  EXPECT_EQ(c.steps, 6);
  EXPECT_DOUBLE_EQ(c.bytes_per_worker, 1.5e6);
  EXPECT_NEAR(c.seconds, 0.0126, 1e-12);
}

TEST(CollectiveCost, SingleWorkerIsFree) {
  const auto c = collective_cost(CollectiveKind::kAllReduce, 1, 1e6, LinkProfile{});
  EXPECT_EQ(c.steps, 0);
  EXPECT_EQ(c.bytes_per_worker, 0.0);
  EXPECT_EQ(c.seconds, 0.0);
  EXPECT_EQ(collective_cost(CollectiveKind::kAllGather, 1, 1e6, LinkProfile{}).seconds, 0.0);
}

TEST(CollectiveCost, AllGatherLinearAllReduceBounded) {
  const double payload = 4096.0;
  for (std::size_t m : {2u, 4u, 8u, 16u, 32u}) {
    const auto g = collective_cost(CollectiveKind::kAllGather, m, payload, LinkProfile{});
    const auto r = collective_cost(CollectiveKind::kAllReduce, m, payload, LinkProfile{});
    EXPECT_EQ(g.bytes_per_worker, static_cast<double>(m - 1) * payload);
    EXPECT_EQ(r.bytes_per_worker, 2.0 * static_cast<double>(m - 1) / static_cast<double>(m) * payload);
    EXPECT_LT(r.bytes_per_worker, 2.0 * payload);
  }
}

TEST(CollectiveCost, TreeModel) {
  const LinkProfile link{1e9, 1e-5};
  const auto c = collective_cost(CollectiveKind::kAllReduce, 5, 100.0, link, CostModel::kTree);
  EXPECT_EQ(c.steps, 6);
  EXPECT_DOUBLE_EQ(c.bytes_per_worker, 600.0);
  const auto g = collective_cost(CollectiveKind::kAllGather, 8, 100.0, link, CostModel::kTree);
  EXPECT_EQ(g.steps, 3);
  EXPECT_DOUBLE_EQ(g.bytes_per_worker, 700.0);
}

TEST(LinkProfile, Validation) {
  EXPECT_THROW(WorkerGroup(2, LinkProfile{0.0, 1e-4}), InvalidConfig);
  EXPECT_THROW(WorkerGroup(2, LinkProfile{1e9, -1.0}), InvalidConfig);
  EXPECT_THROW(WorkerGroup(0), InvalidConfig);
}

TEST(WorkerGroup, SingleWorkerIdentity) {
  WorkerGroup g(1);
  const std::vector<std::vector<double>> in{{1.5, -2.0}};
  EXPECT_EQ(g.allreduce_sum(std::span<const std::vector<double>>(in), 32),
            (std::vector<double>{1.5, -2.0}));
  EXPECT_EQ(g.ledger().entries().back().bytes, 0.0);
}

TEST(WorkerGroup, TwoWorkerSum) {
  WorkerGroup g(2);
  const std::vector<std::vector<double>> in{{1, 2}, {3, 4}};
  EXPECT_EQ(g.allreduce_sum(std::span<const std::vector<double>>(in), 32),
            (std::vector<double>{4, 6}));
}

TEST(WorkerGroup, IntegerLevelSumsAreExactAndOrderFree) {
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<Level> dist(-(1 << 20), 1 << 20);
  std::vector<LevelVector> in(7, LevelVector(500));
  for (auto& v : in)
    for (auto& x : v) x = dist(gen);
  WorkerGroup g(7);
  const auto sum = g.allreduce_sum(std::span<const LevelVector>(in), 5);
  auto reversed = in;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_EQ(sum, g.allreduce_sum(std::span<const LevelVector>(reversed), 5));
  for (std::size_t i = 0; i < 500; ++i) {
    std::int64_t expect = 0;
    for (const auto& v : in) expect += v[i];
    ASSERT_EQ(sum[i], expect);
  }
}

TEST(WorkerGroup, ChargesPayloadAtGivenWidth) {
  WorkerGroup g(4, LinkProfile{125e6, 1e-4});
  g.set_iteration(3);
  const std::vector<LevelVector> in(4, LevelVector(1000, 1));
  g.allreduce_sum(std::span<const LevelVector>(in), 5);
  const auto& e = g.ledger().entries().back();
  EXPECT_EQ(e.iteration, 3);
  EXPECT_EQ(e.payload_bits, 5000);
  EXPECT_DOUBLE_EQ(e.bytes, 1.5 * 625.0);
  EXPECT_EQ(e.steps, 6);
  EXPECT_EQ(g.ledger().payload_bits(3), 5000);
}

TEST(WorkerGroup, MaxAndMin) {
  WorkerGroup g(3);
  const std::vector<double> norms{0.5, 2.5, 1.0};
  EXPECT_EQ(g.allreduce_max(norms), 2.5);
  EXPECT_EQ(g.ledger().entries().back().payload_bits, 32);
  const std::vector<ScaleIndexVector> idx{{1, 0, 2}, {2, 1, 0}, {1, 1, 1}};
  EXPECT_EQ(g.allreduce_min_vec(std::span<const ScaleIndexVector>(idx), 2),
            (ScaleIndexVector{1, 0, 0}));
  EXPECT_EQ(g.ledger().entries().back().payload_bits, 6);
}

TEST(WorkerGroup, Errors) {
  WorkerGroup g(2);
  const std::vector<std::vector<double>> ragged{{1, 2}, {3}};
  EXPECT_THROW(g.allreduce_sum(std::span<const std::vector<double>>(ragged), 32),
               ContractViolation);
  const std::vector<std::vector<double>> one{{1}};
  EXPECT_THROW(g.allreduce_sum(std::span<const std::vector<double>>(one), 32),
               ContractViolation);
  const std::vector<std::vector<double>> nan{{1}, {std::nan("")}};
  EXPECT_THROW(g.allreduce_sum(std::span<const std::vector<double>>(nan), 32), InvalidInput);
  EXPECT_THROW(g.allreduce_max(std::vector<double>{1.0}), ContractViolation);
}

TEST(WorkerGroup, AllGatherReturnsBuffersInRankOrder) {
  WorkerGroup g(3, LinkProfile{1e6, 0.0});
  std::vector<PackedBuffer> bufs;
  for (Level k = 0; k < 3; ++k) bufs.push_back(pack(LevelVector{k, -k}, 3));
  const auto out = g.allgather(bufs);
  EXPECT_EQ(out, bufs);
  const auto& e = g.ledger().entries().back();
  EXPECT_EQ(e.payload_bits, static_cast<std::int64_t>(serialize(bufs[0]).size() * 8));
  EXPECT_DOUBLE_EQ(e.bytes, 2.0 * static_cast<double>(serialize(bufs[0]).size()));
}

TEST(WorkerGroup, ComputeEntriesCarryNoPayload) {
  WorkerGroup g(2);
  g.record_compute(Phase::kEncode, "encode", 1000, ComputeProfile{2e-9, 1e-9});
  g.record_compute(Phase::kDecode, "decode", 1000, ComputeProfile{2e-9, 1e-9});
  EXPECT_DOUBLE_EQ(g.ledger().sim_seconds(0), 3e-6);
  EXPECT_EQ(g.ledger().payload_bits(0), 0);
}

TEST(CostLedger, CsvLayout) {
  WorkerGroup g(2, LinkProfile{1e6, 0.0});
  g.allreduce_max(std::vector<double>{1.0, 2.0});
  std::ostringstream os;
  g.ledger().write_csv(os);
  EXPECT_EQ(os.str(),
            "iteration,phase,collective,bytes,steps,sim_seconds\n"
            "0,communicate,allreduce_max,4,2,3.9999999999999998e-06\n");
}

TEST(Rendezvous, ThreadedMatchesLockstep) {
  const std::size_t m = 4;
  std::vector<std::vector<double>> data(m);
  std::mt19937_64 gen(3);
  std::normal_distribution<double> normal;
  for (auto& v : data) {
    v.resize(257);
    for (auto& x : v) x = normal(gen);
  }
  WorkerGroup lockstep(m);
  const auto expected = lockstep.allreduce_sum(std::span<const std::vector<double>>(data), 32);

  WorkerGroup group(m);
  Rendezvous rv(group, 5000ms);
  std::vector<std::vector<double>> results(m);
  std::vector<double> maxes(m);
  std::vector<std::thread> threads;
  for (std::size_t r = 0; r < m; ++r) {
    threads.emplace_back([&, r] {
      Communicator comm(rv, r);
      results[r] = comm.allreduce_sum(data[r], 32);
      maxes[r] = comm.allreduce_max(static_cast<double>(r));
    });
  }
  for (auto& t : threads) t.join();
  for (std::size_t r = 0; r < m; ++r) {
    EXPECT_EQ(results[r], expected);
    EXPECT_EQ(maxes[r], 3.0);
  }
  EXPECT_EQ(group.ledger().size(), 2u);
}

TEST(Rendezvous, MismatchedCollectiveIsProtocolError) {
  WorkerGroup group(2);
  Rendezvous rv(group, 2000ms);
  std::vector<int> errors(2, 0);
  std::thread a([&] {
    try {
      Communicator(rv, 0).allreduce_max(1.0);
    } catch (const ProtocolError&) {
      errors[0] = 1;
    }
  });
  std::this_thread::sleep_for(50ms);
  std::thread b([&] {
    try {
      Communicator(rv, 1).allreduce_sum(std::vector<double>{1.0}, 32);
    } catch (const ProtocolError&) {
      errors[1] = 1;
    }
  });
  a.join();
  b.join();
  EXPECT_EQ(errors, (std::vector<int>{1, 1}));
}

TEST(Rendezvous, MissingWorkerTimesOut) {
  WorkerGroup group(2);
  Rendezvous rv(group, 100ms);
  EXPECT_THROW(Communicator(rv, 0).allreduce_max(1.0), ProtocolError);
  EXPECT_THROW(Communicator(rv, 1).allreduce_max(1.0), ProtocolError);
}

}  // namespace
}  // namespace gcomp
