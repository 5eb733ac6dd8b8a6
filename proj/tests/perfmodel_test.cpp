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

#include "gcomp/perfmodel.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace gcomp {
namespace {

ModelProfile small_profile() { return {"small", 1000, 0.01, 1e-9, 2e-9, 32}; }

TEST(PredictIterationTime, HandComputedExample) {
  // 1000 coords at s = 16: 32 + 1000 * 5 bits = 629 bytes.
  ClusterSpec cluster{.nodes = 2, .gpus_per_node = 4, .intra = {1e9, 1e-6}, .inter = {1e8, 1e-5}};
  const auto t = predict_iteration_time(small_profile(), cluster, QsgdMaxNorm{16});
  const double intra = 6 * 1e-6 + 1.5 * 629.0 / 1e9;
  const double inter = 2 * 1e-5 + 1.0 * 629.0 / 1e8;
  EXPECT_DOUBLE_EQ(t.compute, 0.01);
  EXPECT_DOUBLE_EQ(t.encode, 1e-6);
  EXPECT_DOUBLE_EQ(t.decode, 2e-6);
  EXPECT_NEAR(t.communicate, intra + inter, 1e-18);
  EXPECT_NEAR(predict_throughput(small_profile(), cluster, QsgdMaxNorm{16}),
              8.0 * 32.0 / (0.01 + 3e-6 + intra + inter), 1e-9);
}

TEST(PredictIterationTime, UncompressedSkipsEncodeAndDecode) {
  const auto t = predict_iteration_time(small_profile(), ClusterSpec{}, Uncompressed{});
  EXPECT_EQ(t.encode, 0.0);
  EXPECT_EQ(t.decode, 0.0);
}

TEST(PredictIterationTime, SparsifiedEncodesOnlyKCoordinates) {
  const auto t = predict_iteration_time(small_profile(), ClusterSpec{},
                                        GlobalRandK{100, QsgdMaxNorm{16}});
  EXPECT_DOUBLE_EQ(t.encode, 100e-9);
}

TEST(PredictThroughput, ComputeBoundCeiling) {
  ClusterSpec cluster{.nodes = 4, .gpus_per_node = 4, .intra = {1e300, 0.0}, .inter = {1e300, 0.0}};
  const auto p = resnet50_like_profile();
  EXPECT_NEAR(predict_throughput(p, cluster, Uncompressed{}), 16.0 * 128.0 / 0.40, 1e-6);
}

TEST(PredictThroughput, MonotoneInBitsAndBandwidth) {
  for (const auto& profile : {resnet50_like_profile(), vgg16_like_profile(), small_profile()}) {
    for (std::int64_t nodes : {1, 2, 8, 32}) {
      ClusterSpec cluster{.nodes = nodes};
      const double t2 = predict_throughput(profile, cluster, QsgdMaxNorm{2});
      const double t4 = predict_throughput(profile, cluster, QsgdMaxNorm{4});
      const double t8 = predict_throughput(profile, cluster, QsgdMaxNorm{8});
      EXPECT_GE(t2, t4);
      EXPECT_GE(t4, t8);
      ClusterSpec faster = cluster;
      faster.inter.bandwidth_bytes_per_sec *= 10;
      EXPECT_GE(predict_throughput(profile, faster, QsgdMaxNorm{8}), t8);
    }
  }
}

TEST(PredictThroughput, SparsifiedBeatsDenseOnGigabitEthernet) {
  ClusterSpec cluster{.nodes = 4, .inter = ethernet_link(1.0)};
  for (const auto& profile : {resnet50_like_profile(), vgg16_like_profile()}) {
    EXPECT_GT(predict_throughput(profile, cluster, GlobalRandK{10000, QsgdMaxNorm{8}}),
              predict_throughput(profile, cluster, QsgdMaxNorm{8}))
        << profile.name;
  }
}

TEST(PredictThroughput, ZeroBandwidthIsInvalid) {
  ClusterSpec cluster;
  cluster.inter.bandwidth_bytes_per_sec = 0.0;
  EXPECT_THROW(predict_throughput(small_profile(), cluster, Uncompressed{}), InvalidConfig);
  ModelProfile bad = small_profile();
  bad.t_compute_per_batch = 0.0;
  EXPECT_THROW(predict_throughput(bad, ClusterSpec{}, Uncompressed{}), InvalidConfig);
}

TEST(EthernetLink, Conversion) { EXPECT_DOUBLE_EQ(ethernet_link(1.0).bandwidth_bytes_per_sec, 125e6); }

TEST(SweepThroughput, RoundsUpToWholeNodes) {
  const auto pts = sweep_throughput(small_profile(), ClusterSpec{}, {4, 6, 8},
                                    {Uncompressed{}, QsgdMaxNorm{4}});
  ASSERT_EQ(pts.size(), 6u);
  EXPECT_EQ(pts[0].workers, 4);
  EXPECT_EQ(pts[2].workers, 8);
  EXPECT_EQ(pts[4].workers, 8);
  EXPECT_EQ(pts[1].scheme, "qsgd-mn-s4");
  EXPECT_THROW(sweep_throughput(small_profile(), ClusterSpec{}, {0}, {Uncompressed{}}),
               InvalidConfig);
}

TEST(SweepThroughput, CsvHeader) {
  const auto pts = sweep_throughput(small_profile(), ClusterSpec{}, {4}, {Uncompressed{}});
  std::ostringstream os;
  write_throughput_csv(os, pts);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "workers,scheme,throughput");
  std::ostringstream with;
  write_throughput_csv(with, pts, true);
  EXPECT_EQ(with.str().rfind("profile,workers,scheme,throughput\nsmall,4,allreduce-sgd,", 0), 0u);
}

}  // namespace
}  // namespace gcomp
