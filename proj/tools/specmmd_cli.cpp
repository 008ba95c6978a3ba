// Command-line front end: test execution on CSV data, synthetic data
// generation, power sweeps, and timing benchmarks.
//
// Exit codes for `test`: 0 = completed without rejecting H0, 3 = completed
// and rejected H0, 1 = usage error, 2 = data or numerical error. The
// nonzero "reject" code lets shell pipelines branch on the decision.

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "specmmd/bench.hpp"
#include "specmmd/data.hpp"
#include "specmmd/error.hpp"
#include "specmmd/estimators.hpp"
#include "specmmd/kernels.hpp"
#include "specmmd/regularizers.hpp"
#include "specmmd/report_json.hpp"
#include "specmmd/testing.hpp"
#include "specmmd/threads.hpp"

namespace {

using namespace specmmd;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitReject = 3;

std::uint64_t resolve_seed(std::uint64_t flag_seed) {
  if (const char* env = std::getenv("SPECTRAL_MMD_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      fail(ErrorKind::InvalidArgument,
           std::string("SPECTRAL_MMD_SEED is not an integer: ") + env);
    }
  }
  return flag_seed;
}

struct RffSpec {
  Index l = 0;  // 0 = exact pipeline
  std::optional<std::uint64_t> seed;
};

RffSpec parse_rff(const std::vector<std::string>& tokens) {
  RffSpec spec;
  for (const auto& token : tokens) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::InvalidArgument,
           "--rff expects l=<int> [seed=<int>], got '" + token + "'");
    }
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    try {
      if (key == "l") {
        spec.l = static_cast<Index>(std::stoll(value));
      } else if (key == "seed") {
        spec.seed = std::stoull(value);
      } else {
        fail(ErrorKind::InvalidArgument, "--rff: unknown key '" + key + "'");
      }
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      fail(ErrorKind::InvalidArgument,
           "--rff: cannot parse integer from '" + value + "'");
    }
  }
  if (spec.l < 0) {
    fail(ErrorKind::InvalidArgument, "--rff: l must be >= 0");
  }
  return spec;
}

/// Usage-vs-data classification differs per subcommand; `parse_is_usage`
/// marks commands whose parse failures are config mistakes (exit 1) rather
/// than bad data files (exit 2).
int exit_code_for(const Error& e, bool parse_is_usage) {
  switch (e.kind()) {
    case ErrorKind::Io:
    case ErrorKind::InvalidArgument:
      return kExitUsage;
    case ErrorKind::Parse:
      return parse_is_usage ? kExitUsage : kExitData;
    case ErrorKind::Dimension:
    case ErrorKind::Numerical:
      return kExitData;
  }
  return kExitData;
}

struct TestArgs {
  std::string x_path;
  std::string y_path;
  std::string kernel = "gaussian:h=logspace(-2,2,9)";
  std::string lambda = "logspace(-6,0.75,10)";
  std::string reg = "showalter";
  std::vector<std::string> rff = {"l=0"};
  Index split_s = 0;  // 0 = min(N,M)/10, at least 2
  Index permutations = 600;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out = "report.json";
  bool has_header = false;
  double deflation_w = 1.0;
  bool p_value_rule = false;
};

int cmd_test(const TestArgs& args) {
  try {
    threads::set_num_threads(args.threads);
    const std::uint64_t master = resolve_seed(args.seed);
    std::cout << "master seed: " << master << "\n";

    const RffSpec rff = parse_rff(args.rff);
    const auto kernels = parse_kernel_grid(args.kernel);
    const auto lambdas = parse_lambda_grid(args.lambda);
    const auto reg_family = parse_regularizer_family(args.reg);

    const TwoSample data = load_csv(args.x_path, args.y_path, args.has_header);
    Index s = args.split_s;
    if (s == 0) {
      s = std::max<Index>(2, std::min(data.x.rows(), data.y.rows()) / 10);
    }
    const SplitDatad sd =
        split(data.x, data.y, s, rng::derive_seed(master, 0x51ull));
    const PermutationPlan plan(args.permutations,
                               rng::derive_seed(master, 0x9Eull), sd.n(),
                               sd.m());
    const std::uint64_t freq_master =
        rff.seed ? *rff.seed : rng::derive_seed(master, 0xF0ull);

    TestOptions opts;
    opts.deflation_w = args.deflation_w;
    opts.p_value_rule = args.p_value_rule;

    TestReport report =
        rff.l > 0 ? adaptive_test(lambdas, kernels, rff.l, sd, plan,
                                  args.alpha, reg_family, freq_master, opts)
                  : exact_adaptive_test(lambdas, kernels, sd, plan, args.alpha,
                                        reg_family, freq_master, opts);
    report.seeds.master = master;
    write_report_json(args.out, report);
    std::cout << (report.reject ? "reject" : "no-reject") << " (report: "
              << args.out << ")\n";
    return report.reject ? kExitReject : kExitOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e, /*parse_is_usage=*/false);
  }
}

struct SimulateArgs {
  std::string family;
  double param = 0;
  Index d = 1;
  Index n = 0;
  Index m = 0;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out_x;
  std::string out_y;
};

int cmd_simulate(const SimulateArgs& args) {
  try {
    threads::set_num_threads(args.threads);
    const std::uint64_t master = resolve_seed(args.seed);
    std::cout << "master seed: " << master << "\n";
    const GeneratorFamily family = parse_generator_family(args.family);
    const TwoSample data =
        generate(family, args.d, args.param, args.n, args.m, master);
    write_matrix_csv(args.out_x, data.x);
    write_matrix_csv(args.out_y, data.y);
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e, /*parse_is_usage=*/true);
  }
}

struct SweepArgs {
  std::string config;
  std::string out;
  int threads = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

int cmd_power(const SweepArgs& args) {
  try {
    threads::set_num_threads(args.threads);
    ExperimentConfig cfg = load_experiment_config(args.config);
    if (std::getenv("SPECTRAL_MMD_SEED") != nullptr || args.seed_given) {
      cfg.master_seed =
          resolve_seed(args.seed_given ? args.seed : cfg.master_seed);
    }
    std::cout << "master seed: " << cfg.master_seed << "\n";
    const auto rows = run_power(cfg);
    for (const auto& row : rows) {
      if (!row.error.empty()) {
        std::cerr << "row (param=" << row.param << ", d=" << row.d
                  << ", l=" << row.l << ") failed: " << row.error << "\n";
      }
    }
    write_power_csv(args.out, rows);
    std::cout << rows.size() << " rows -> " << args.out << "\n";
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e, /*parse_is_usage=*/true);
  }
}

int cmd_bench(const SweepArgs& args) {
  try {
    threads::set_num_threads(args.threads);
    ExperimentConfig cfg = load_experiment_config(args.config);
    if (std::getenv("SPECTRAL_MMD_SEED") != nullptr || args.seed_given) {
      cfg.master_seed =
          resolve_seed(args.seed_given ? args.seed : cfg.master_seed);
    }
    std::cout << "master seed: " << cfg.master_seed << "\n";
    const auto rows = run_timing(cfg);
    write_timing_csv(args.out, rows);
    std::cout << rows.size() << " rows -> " << args.out << "\n";
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e, /*parse_is_usage=*/true);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "spectral-regularized MMD two-sample tests with random Fourier "
      "features"};
  app.require_subcommand(1);

  TestArgs test_args;
  auto* test = app.add_subcommand(
      "test", "run the kernel adaptive two-sample test on two CSV samples");
  test->add_option("--x", test_args.x_path, "CSV file with sample X")
      ->required();
  test->add_option("--y", test_args.y_path, "CSV file with sample Y")
      ->required();
  test->add_option("--kernel", test_args.kernel,
                   "kernel grid, e.g. gaussian:h=0.5 or "
                   "gaussian:h=logspace(-2,2,9)");
  test->add_option("--lambda-grid", test_args.lambda,
                   "regularization grid, e.g. logspace(-6,0.75,10)");
  test->add_option("--reg", test_args.reg,
                   "regularizer: tikhonov | showalter | identity");
  test->add_option("--rff", test_args.rff,
                   "random features: l=<int> [seed=<int>]; l=0 selects the "
                   "exact pipeline")
      ->expected(1, 2);
  test->add_option("--split-s", test_args.split_s,
                   "rows held out per sample for covariance estimation "
                   "(0 = min(N,M)/10)");
  test->add_option("--permutations", test_args.permutations,
                   "number of permutation replicas B");
  test->add_option("--alpha", test_args.alpha, "test level");
  test->add_option("--seed", test_args.seed, "master seed");
  test->add_option("--threads", test_args.threads, "worker threads (0 = auto)");
  test->add_option("--out", test_args.out, "output JSON report path");
  test->add_flag("--has-header", test_args.has_header,
                 "skip one header row in the CSV inputs");
  test->add_option("--deflation-w", test_args.deflation_w,
                   "theoretical quantile deflation factor w (default 1 = "
                   "experimental protocol)");
  test->add_flag("--p-value-rule", test_args.p_value_rule,
                 "reject via p = (1+#{replica>=stat})/(B+1) <= alpha instead "
                 "of the quantile rule");

  SimulateArgs sim_args;
  auto* simulate =
      app.add_subcommand("simulate", "generate a synthetic two-sample dataset");
  simulate
      ->add_option("--family", sim_args.family,
                   "gaussian_mean | gaussian_scale | cauchy_median")
      ->required();
  simulate->add_option("--param", sim_args.param,
                       "shift parameter (mu or sigma^2)");
  simulate->add_option("--d", sim_args.d, "dimension");
  simulate->add_option("--n", sim_args.n, "rows in X")->required();
  simulate->add_option("--m", sim_args.m, "rows in Y")->required();
  simulate->add_option("--seed", sim_args.seed, "master seed");
  simulate->add_option("--threads", sim_args.threads,
                       "worker threads (0 = auto)");
  simulate->add_option("--out-x", sim_args.out_x, "output CSV for X")
      ->required();
  simulate->add_option("--out-y", sim_args.out_y, "output CSV for Y")
      ->required();

  SweepArgs power_args;
  auto* power = app.add_subcommand(
      "power", "run the power sweep described by a JSON config");
  power->add_option("--config", power_args.config, "experiment config JSON")
      ->required();
  power->add_option("--out", power_args.out, "output CSV path")->required();
  power->add_option("--threads", power_args.threads,
                    "worker threads (0 = auto)");
  auto* power_seed =
      power->add_option("--seed", power_args.seed,
                        "override the config's master seed");

  SweepArgs bench_args;
  auto* bench = app.add_subcommand(
      "bench", "measure RFF-vs-exact adaptive test timing ratios");
  bench->add_option("--config", bench_args.config, "experiment config JSON")
      ->required();
  bench->add_option("--out", bench_args.out, "output CSV path")->required();
  bench->add_option("--threads", bench_args.threads,
                    "worker threads (0 = auto)");
  auto* bench_seed = bench->add_option("--seed", bench_args.seed,
                                       "override the config's master seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (test->parsed()) return cmd_test(test_args);
  if (simulate->parsed()) return cmd_simulate(sim_args);
  if (power->parsed()) {
    power_args.seed_given = power_seed->count() > 0;
    return cmd_power(power_args);
  }
  if (bench->parsed()) {
    bench_args.seed_given = bench_seed->count() > 0;
    return cmd_bench(bench_args);
  }
  return kExitUsage;
}
