#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "specmmd/bench.hpp"
#include "specmmd/error.hpp"
#include "specmmd/threads.hpp"

using namespace specmmd;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.generator = GeneratorFamily::GaussianMean;
  cfg.params = {0.0, 1.0};
  cfg.dims = {1};
  cfg.n = 24;
  cfg.m = 24;
  cfg.s = 4;
  cfg.alpha = 0.05;
  cfg.b_rff = 40;
  cfg.b_exact = 40;
  cfg.l_grid = {0, 3};
  cfg.kernel_grid = parse_kernel_grid("gaussian:h=logspace(-1,1,3)");
  cfg.lambda_grid = logspace(-2, 0, 3);
  cfg.reg = RegularizerFamily::Showalter;
  cfg.n_sims = 2;
  cfg.n_rff_redraws = 2;
  cfg.master_seed = 99;
  return cfg;
}

}  // namespace

TEST_CASE("config json parsing") {
  const std::string text = R"JSON({
    "generator": {"family": "gaussian_mean", "params": [0, 0.5]},
    "dims": [1, 2],
    "n": 50, "m": 50, "s": 5,
    "alpha": 0.05,
    "b_rff": 100, "b_exact": 50,
    "l_grid": [0, 5],
    "kernel_grid": "gaussian:h=logspace(-2,2,9)",
    "lambda_grid": "logspace(-6,0.75,10)",
    "reg": "showalter",
    "n_sims": 3,
    "n_rff_redraws": 2,
    "master_seed": 7
  })JSON";
  const ExperimentConfig cfg = parse_experiment_config(text);
  CHECK(cfg.params.size() == 2);
  CHECK(cfg.dims.size() == 2);
  CHECK(cfg.kernel_grid.size() == 9);
  CHECK(cfg.lambda_grid.size() == 10);
  CHECK(cfg.master_seed == 7);

  CHECK_THROWS_AS(parse_experiment_config("{not json"), Error);
  CHECK_THROWS_AS(parse_experiment_config("{}"), Error);
  ExperimentConfig negative_l = cfg;
  negative_l.l_grid = {-1};
  CHECK_THROWS_AS(negative_l.validate(), Error);
  ExperimentConfig zero_b = cfg;
  zero_b.b_rff = 0;
  CHECK_THROWS_AS(zero_b.validate(), Error);
  // s too large
  const std::string bad = R"JSON({
    "generator": {"family": "gaussian_mean", "params": [0]},
    "dims": [1], "n": 10, "m": 10, "s": 9, "l_grid": [1]
  })JSON";
  CHECK_THROWS_AS(parse_experiment_config(bad), Error);
}

TEST_CASE("run_power produces one row per lattice cell") {
  const ExperimentConfig cfg = tiny_config();
  const auto rows = run_power(cfg);
  REQUIRE(rows.size() == cfg.params.size() * cfg.dims.size() * cfg.l_grid.size());
  for (const auto& row : rows) {
    CHECK(row.error.empty());
    const Index expected_trials =
        cfg.n_sims * (row.l > 0 ? cfg.n_rff_redraws : 1);
    CHECK(row.n_trials == expected_trials);
    CHECK(row.rejection_rate >= 0.0);
    CHECK(row.rejection_rate <= 1.0);
    // rate is an exact multiple of 1/n_trials
    const double scaled = row.rejection_rate * static_cast<double>(row.n_trials);
    CHECK(std::abs(scaled - std::round(scaled)) < 1e-12);
  }
}

TEST_CASE("run_power is reproducible under the master seed") {
  const ExperimentConfig cfg = tiny_config();
  const auto a = run_power(cfg);
  const auto b = run_power(cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].rejection_rate == b[i].rejection_rate);
    CHECK(a[i].seed_digest == b[i].seed_digest);
  }
}

TEST_CASE("H0 rows stay inside the binomial band and shifted rows reject more") {
  ExperimentConfig cfg = tiny_config();
  cfg.n = 40;
  cfg.m = 40;
  cfg.s = 5;
  cfg.n_sims = 30;
  cfg.n_rff_redraws = 1;
  cfg.l_grid = {3};
  const auto rows = run_power(cfg);
  REQUIRE(rows.size() == 2);
  const double band =
      cfg.alpha + 3.0 * std::sqrt(cfg.alpha * (1 - cfg.alpha) / 30.0);
  CHECK(rows[0].rejection_rate <= band);              // mu = 0
  CHECK(rows[1].rejection_rate >= rows[0].rejection_rate);  // mu = 1
}

TEST_CASE("single-trial config runs exactly one trial per row") {
  ExperimentConfig cfg = tiny_config();
  cfg.n_sims = 1;
  cfg.n_rff_redraws = 1;
  const auto rows = run_power(cfg);
  for (const auto& row : rows) CHECK(row.n_trials == 1);
}

TEST_CASE("split bounds are enforced at config validation") {
  ExperimentConfig cfg = tiny_config();
  cfg.dims = {1};
  cfg.params = {0.0};
  cfg.l_grid = {2};
  cfg.n = 24;
  cfg.m = 24;
  cfg.s = 22;  // minimal legal margin: n = m = 2
  const auto rows = run_power(cfg);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].error.empty());

  cfg.s = 23;  // violates s < min(N,M) - 1
  CHECK_THROWS_AS(run_power(cfg), Error);
}

TEST_CASE("power csv layout") {
  const ExperimentConfig cfg = tiny_config();
  const auto rows = run_power(cfg);
  const std::string path = "/tmp/specmmd_test_power.csv";
  write_power_csv(path, rows);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "generator,param,d,l,rejection_rate,n_trials,mean_time_ms,seed_digest");
  std::size_t count = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++count;
  }
  CHECK(count == rows.size());
  std::remove(path.c_str());
}

TEST_CASE("timing self-ratio is close to one and rff beats exact") {
  // sized so one exact run is tens of milliseconds, and timed on one
  // thread: with worker threads the join inherits every scheduler stall,
  // which swamps the self-ratio band on a busy machine
  ExperimentConfig cfg = tiny_config();
  cfg.n = 100;
  cfg.m = 100;
  cfg.s = 8;
  cfg.b_rff = 250;
  cfg.b_exact = 250;
  cfg.l_grid = {0, 3};
  cfg.kernel_grid = parse_kernel_grid("gaussian:h=logspace(-1,1,4)");
  cfg.lambda_grid = logspace(-3, 0, 5);
  threads::set_num_threads(1);
  const auto rows = run_timing(cfg, 9);
  threads::set_num_threads(0);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].l == 0);
  CHECK(rows[0].time_ratio > 0.8);
  CHECK(rows[0].time_ratio < 1.25);
  CHECK(rows[1].l == 3);
  CHECK(rows[1].time_ratio < 1.0);

  const std::string path = "/tmp/specmmd_test_timing.csv";
  write_timing_csv(path, rows);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "l,time_ratio");
  std::remove(path.c_str());

  ExperimentConfig no_exact = cfg;
  no_exact.l_grid = {3};
  CHECK_THROWS_AS(run_timing(no_exact, 3), Error);
}

TEST_CASE("rff statistic time scales near-linearly in the pooled size") {
  // fixed l and s; doubling n+m should scale wall time roughly linearly
  // (complexity l^3 + (s+m+n) l^2 + (s+m+n) l d with the linear term dominant)
  const Kerneld kernel(KernelFamily::GaussianRBF, 1.0);
  const Regularizerd reg(RegularizerFamily::Showalter, 0.1);
  const auto freqs = sample_frequencies(kernel, 9, 1, 3000);

  const auto time_for = [&](Index half) {
    const TwoSample data = gen_gaussian_mean_shift(1, 0.0, half, half, 3001);
    const SplitDatad sd = split(data.x, data.y, 20, 3002);
    double best = 1e300;
    for (int rep = 0; rep < 7; ++rep) {
      const auto start = std::chrono::steady_clock::now();
      for (int inner = 0; inner < 40; ++inner) {
        (void)rff_statistic(freqs, reg, sd);
      }
      best = std::min(best, std::chrono::duration<double, std::milli>(
                                std::chrono::steady_clock::now() - start)
                                .count());
    }
    return best;
  };
  const double t_small = time_for(120);   // n+m = 200
  const double t_large = time_for(220);   // n+m = 400
  const double ratio = t_large / t_small;
  CHECK(ratio > 1.3);
  CHECK(ratio < 3.5);
}
