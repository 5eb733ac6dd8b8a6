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
// gcomp command-line driver.
//
//   gcomp train --config exp.json [--out DIR] [--repeats N]
//               [--scheme qsgd-mn --bits 4 [--k K]]
//   gcomp verify [--suite NAME|all] [--samples N] [--norm-scope subvector|full]
//   gcomp bench-compress [--n N] [--bits B] [--draws D]
//   gcomp perf-model [--config perf.json] [--gbps G] [--out DIR]
//   gcomp --explain-schemes
//
// Output files go to --out, else $GCOMP_OUTPUT_DIR, else ./gcomp_out.
// Exit codes: 0 success, 1 failure (divergence, failed checks), 2 usage.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gcomp/bitpack.hpp"
#include "gcomp/config.hpp"
#include "gcomp/core.hpp"
#include "gcomp/perfmodel.hpp"
#include "gcomp/quantize.hpp"
#include "gcomp/trainer.hpp"
#include "gcomp/verify.hpp"

namespace fs = std::filesystem;
using namespace gcomp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

std::string output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("GCOMP_OUTPUT_DIR"); env && *env) return env;
  return "gcomp_out";
}

void explain_schemes(std::ostream& os) {
  os << "bits  s (levels)  nominal r = ceil(log2 s)+1  lossless width ceil(log2(2s+1))\n";
  for (int b = 1; b <= 16; ++b) {
    const auto s = scale_for_bits(b);
    os << std::setw(4) << b << "  " << std::setw(10) << s << "  " << std::setw(25)
       << nominal_level_bits(s) << "  " << std::setw(10) << lossless_level_bits(s) << '\n';
  }
  os << "\nschemes:\n"
        "  allreduce-sgd   uncompressed, 32 bits per coordinate\n"
        "  qsgd-mn         --bits b            s = 2^(b-1), 32 + n*b bits\n"
        "  qsgd-mn-ts      --bits b1,b2,...    scales 2^(bi-1), r from the smallest\n"
        "                                      scale plus ceil(log2 N) index bits\n"
        "  grandk-mn       --bits b --k K      qsgd-mn on K shared random coordinates\n"
        "  grandk-mn-ts    --bits b1,.. --k K  qsgd-mn-ts on K shared random coordinates\n";
}

SchemeDescriptor scheme_from_flags(const std::string& name, const std::vector<int>& bits,
                                   std::size_t k) {
  Json j;
  j["name"] = name;
  if (name == "qsgd-mn" || name == "grandk-mn") {
    if (bits.size() != 1) throw ConfigError("--scheme " + name + " needs exactly one --bits");
    j["bits"] = bits[0];
  } else if (name == "qsgd-mn-ts" || name == "grandk-mn-ts") {
    if (bits.empty()) throw ConfigError("--scheme " + name + " needs --bits b1,b2,...");
    j["bits"] = bits;
  } else if (!bits.empty()) {
    throw ConfigError("--bits does not apply to scheme " + name);
  }
  if (name.rfind("grandk", 0) == 0) {
    if (k == 0) throw ConfigError("--scheme " + name + " needs --k");
    j["k"] = k;
  }
  return parse_scheme(j);
}

struct Summary {
  std::vector<double> values;
  double mean() const {
    return std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
  }
  double stddev() const {
    if (values.size() < 2) return 0.0;
    const double m = mean();
    double acc = 0.0;
    for (double v : values) acc += (v - m) * (v - m);
    return std::sqrt(acc / static_cast<double>(values.size() - 1));
  }
};

int cmd_train(const std::string& config_path, const std::string& out_flag, int repeats_flag,
              const std::string& scheme_flag, const std::vector<int>& bits_flag,
              std::size_t k_flag) {
  ExperimentConfig exp;
  try {
    exp = load_experiment(config_path);
    if (!scheme_flag.empty()) {
      exp.train.scheme = scheme_from_flags(scheme_flag, bits_flag, k_flag);
    } else if (!bits_flag.empty() || k_flag != 0) {
      throw ConfigError("--bits and --k need --scheme");
    }
  } catch (const ConfigError& e) {
    std::cerr << "gcomp train: " << e.what() << '\n';
    return kExitUsage;
  }
  const int repeats = repeats_flag > 0 ? repeats_flag : exp.repeats;
  const fs::path dir = output_dir(out_flag);
  fs::create_directories(dir);
  const std::string scheme = scheme_name(exp.train.scheme);

  std::map<std::string, Summary> summary;
  for (int r = 0; r < repeats; ++r) {
    TrainConfig cfg = exp.train;
    cfg.seed = exp.train.seed + static_cast<std::uint64_t>(r);
    MetricsLog log;
    CostLedger ledger;
    try {
      const auto task = make_task(exp.task, cfg.seed);
      log = train(*task, cfg, &ledger);
    } catch (const DivergenceError& e) {
      std::cerr << "gcomp train: diverged (seed " << cfg.seed << "): " << e.what() << '\n';
      return kExitFailure;
    } catch (const InvalidConfig& e) {
      std::cerr << "gcomp train: " << config_path << ": " << e.what() << '\n';
      return kExitUsage;
    }
    const std::string stem = scheme + "_seed" + std::to_string(cfg.seed);
    std::ofstream(dir / (stem + ".csv")) << [&] {
      std::ostringstream ss;
      log.write_csv(ss);
      return ss.str();
    }();
    std::ofstream ledger_out(dir / (stem + "_ledger.csv"));
    ledger.write_csv(ledger_out);

    std::int64_t bits = 0;
    for (const auto& row : log.rows) bits += row.bits;
    summary["final_loss"].values.push_back(log.final_loss);
    summary["averaged_loss"].values.push_back(log.averaged_loss);
    if (log.final_suboptimality) {
      summary["final_suboptimality"].values.push_back(*log.final_suboptimality);
      summary["averaged_suboptimality"].values.push_back(*log.averaged_suboptimality);
    }
    if (log.final_accuracy) summary["final_accuracy"].values.push_back(*log.final_accuracy);
    summary["total_bits"].values.push_back(static_cast<double>(bits));
    summary["sim_seconds"].values.push_back(log.rows.back().sim_seconds);
    std::cout << stem << ": final_loss=" << log.final_loss << " step=" << log.step_size
              << '\n';
  }
  std::ofstream sum(dir / (scheme + "_summary.csv"));
  sum << "scheme,metric,repeats,mean,std\n" << std::setprecision(12);
  for (const auto& [metric, s] : summary) {
    sum << scheme << ',' << metric << ',' << s.values.size() << ',' << s.mean() << ','
        << s.stddev() << '\n';
  }
  std::cout << "wrote " << repeats << " runs and " << (dir / (scheme + "_summary.csv")).string()
            << '\n';
  return kExitOk;
}

int cmd_verify(const std::string& suite, std::int64_t samples, const std::string& scope,
               std::uint64_t seed, std::size_t workers) {
  VerifyOptions opt;
  opt.samples = samples;
  opt.seed = seed;
  opt.workers = workers;
  opt.norm_scope = scope == "full" ? NormScope::kFull : NormScope::kSubvector;
  std::vector<std::string> suites;
  if (suite == "all") {
    suites = verify_suite_names();
  } else {
    suites = {suite};
  }
  bool all_ok = true;
  for (const auto& name : suites) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto results = run_verify_suite(name, opt);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& r : results) {
      std::cout << (r.passed ? "PASS " : "FAIL ") << r.suite << ": " << r.name << "  "
                << r.detail << '\n';
      all_ok = all_ok && r.passed;
    }
    std::cout << "  (" << name << " took " << std::fixed << std::setprecision(1) << secs
              << " s)\n"
              << std::defaultfloat;
  }
  return all_ok ? kExitOk : kExitFailure;
}

int cmd_bench(std::size_t n, const std::vector<int>& bits_list, int draws) {
  const GradientVector v = random_gradient(n, 42);
  const double w = l2_norm(v);
  const QuantRng rng(7);
  std::cout << "scheme,n,encode_ns_per_coord,decode_ns_per_coord,pack_ns_per_coord,"
               "packed_bytes,budget_bits\n";
  auto ns_per = [&](auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int d = 0; d < draws; ++d) fn(d);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return secs * 1e9 / (static_cast<double>(draws) * static_cast<double>(n));
  };
  for (int b : bits_list) {
    const std::int64_t s = scale_for_bits(b);
    LevelVector levels(n);
    const double enc = ns_per([&](int d) {
      qsgd_encode_into(v, w, s, rng.stream(0, static_cast<std::uint64_t>(d)), levels);
    });
    GradientVector out;
    const double dec =
        ns_per([&](int) { out = qsgd_decode(std::span<const Level>(levels), w, s); });
    PackedBuffer buf;
    const int width = lossless_level_bits(s);
    const double pk = ns_per([&](int) { buf = pack(levels, static_cast<unsigned>(width)); });
    std::cout << "qsgd-mn-s" << s << ',' << n << ',' << enc << ',' << dec << ',' << pk << ','
              << serialize(buf).size() << ','
              << bit_cost(QsgdMaxNorm{s}, static_cast<std::int64_t>(n)).total_bits << '\n';
  }
  return kExitOk;
}

int cmd_perf(const std::string& config_path, double gbps, const std::string& out_flag) {
  PerfConfig pc;
  try {
    if (!config_path.empty()) {
      pc = parse_perf(parse_json_text(read_text_file(config_path), config_path));
    } else {
      pc = parse_perf(Json::object());
    }
  } catch (const ConfigError& e) {
    std::cerr << "gcomp perf-model: " << e.what() << '\n';
    return kExitUsage;
  }
  if (gbps > 0.0) pc.cluster.inter = ethernet_link(gbps);
  if (pc.schemes.empty()) {
    pc.schemes = {Uncompressed{},
                  QsgdMaxNorm{scale_for_bits(2)},
                  QsgdMaxNorm{scale_for_bits(4)},
                  QsgdMaxNorm{scale_for_bits(8)},
                  QsgdMaxNormMultiScale{ScaleSet({scale_for_bits(2), scale_for_bits(4)})},
                  GlobalRandK{10000, QsgdMaxNorm{scale_for_bits(4)}},
                  GlobalRandK{10000, QsgdMaxNormMultiScale{
                                         ScaleSet({scale_for_bits(2), scale_for_bits(4)})}}};
  }
  const fs::path dir = output_dir(out_flag);
  fs::create_directories(dir);
  for (const auto& profile : pc.profiles) {
    const auto points = sweep_throughput(profile, pc.cluster, pc.workers, pc.schemes);
    const fs::path file = dir / ("perf_" + profile.name + ".csv");
    std::ofstream out(file);
    write_throughput_csv(out, points);
    std::cout << "# " << profile.name << " -> " << file.string() << '\n';
    write_throughput_csv(std::cout, points);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gcomp: all-reduce compatible gradient compression toolkit"};
  app.require_subcommand(0, 1);
  bool explain = false;
  app.add_flag("--explain-schemes", explain, "Print the bits -> levels table and exit");

  auto* train_cmd = app.add_subcommand("train", "Run training experiments from a config");
  std::string config_path, out_dir, scheme_flag;
  int repeats = 0;
  std::vector<int> bits;
  std::size_t k = 0;
  train_cmd->add_option("--config", config_path, "Experiment JSON")->required();
  train_cmd->add_option("--out", out_dir, "Output directory");
  train_cmd->add_option("--repeats", repeats, "Repeats with seeds seed, seed+1, ... (default: config, else 5)");
  train_cmd->add_option("--scheme", scheme_flag, "Override the config scheme");
  train_cmd->add_option("--bits", bits, "Bit width(s) for --scheme")->delimiter(',');
  train_cmd->add_option("--k", k, "K for grandk schemes");

  auto* verify_cmd = app.add_subcommand("verify", "Run statistical property suites");
  std::string suite = "all", scope = "subvector";
  std::int64_t samples = 100000;
  std::uint64_t seed = 1;
  std::size_t workers = 8;
  verify_cmd->add_option("--suite", suite, "Suite name or 'all'")
      ->check(CLI::IsMember({"all", "unbiasedness", "variance", "commutativity", "uniformity",
                             "packing"}));
  verify_cmd->add_option("--samples", samples, "Monte Carlo draws per operating point")
      ->check(CLI::PositiveNumber);
  verify_cmd->add_option("--norm-scope", scope, "Max-norm scope for GlobalRandK")
      ->check(CLI::IsMember({"subvector", "full"}));
  verify_cmd->add_option("--seed", seed, "Seed");
  verify_cmd->add_option("--workers", workers, "Workers in the commutativity suite")
      ->check(CLI::Range(1, 16));

  auto* bench_cmd = app.add_subcommand("bench-compress", "Time encode, decode and pack");
  std::size_t bench_n = 1 << 20;
  std::vector<int> bench_bits{2, 4, 8};
  int draws = 20;
  bench_cmd->add_option("--n", bench_n, "Gradient length")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--bits", bench_bits, "Bit widths")->delimiter(',');
  bench_cmd->add_option("--draws", draws, "Repetitions")->check(CLI::PositiveNumber);

  auto* perf_cmd = app.add_subcommand("perf-model", "Project throughput versus workers");
  std::string perf_config, perf_out;
  double gbps = 0.0;
  perf_cmd->add_option("--config", perf_config, "Perf-model JSON (profiles, cluster, schemes)");
  perf_cmd->add_option("--gbps", gbps, "Inter-node Ethernet bandwidth in Gbit/s");
  perf_cmd->add_option("--out", perf_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (explain) {
      explain_schemes(std::cout);
      return kExitOk;
    }
    if (*train_cmd) return cmd_train(config_path, out_dir, repeats, scheme_flag, bits, k);
    if (*verify_cmd) return cmd_verify(suite, samples, scope, seed, workers);
    if (*bench_cmd) return cmd_bench(bench_n, bench_bits, draws);
    if (*perf_cmd) return cmd_perf(perf_config, gbps, perf_out);
  } catch (const InvalidConfig& e) {
    std::cerr << "gcomp: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "gcomp: " << e.what() << '\n';
    return kExitFailure;
  }
  std::cerr << app.help();
  return kExitUsage;
}
