#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <json.hpp>

#include "specmmd/data.hpp"
#include "specmmd/error.hpp"
#include "specmmd/estimators.hpp"
#include "specmmd/kernels.hpp"
#include "specmmd/regularizers.hpp"
#include "specmmd/testing.hpp"
#include "specmmd/threads.hpp"

namespace specmmd {

enum class GeneratorFamily { GaussianMean, GaussianScale, CauchyMedian };

inline GeneratorFamily parse_generator_family(const std::string& name) {
  if (name == "gaussian_mean") return GeneratorFamily::GaussianMean;
  if (name == "gaussian_scale") return GeneratorFamily::GaussianScale;
  if (name == "cauchy_median") return GeneratorFamily::CauchyMedian;
  fail(ErrorKind::Parse,
       "unknown generator family '" + name +
           "' (valid: gaussian_mean, gaussian_scale, cauchy_median)");
}

inline std::string generator_family_name(GeneratorFamily family) {
  switch (family) {
    case GeneratorFamily::GaussianMean: return "gaussian_mean";
    case GeneratorFamily::GaussianScale: return "gaussian_scale";
    case GeneratorFamily::CauchyMedian: return "cauchy_median";
  }
  return "?";
}

inline TwoSample generate(GeneratorFamily family, Index d, double param,
                          Index big_n, Index big_m, std::uint64_t seed) {
  switch (family) {
    case GeneratorFamily::GaussianMean:
      return gen_gaussian_mean_shift(d, param, big_n, big_m, seed);
    case GeneratorFamily::GaussianScale:
      return gen_gaussian_scale_shift(d, param, big_n, big_m, seed);
    case GeneratorFamily::CauchyMedian:
      return gen_cauchy_median_shift(d, param, big_n, big_m, seed);
  }
  fail(ErrorKind::InvalidArgument, "unknown generator family");
}

/// Power/timing experiment description; the JSON config file mirrors these
/// field names in snake_case.
struct ExperimentConfig {
  GeneratorFamily generator = GeneratorFamily::GaussianMean;
  std::vector<double> params;
  std::vector<Index> dims;
  Index n = 0;  // N
  Index m = 0;  // M
  Index s = 0;
  double alpha = 0.05;
  Index b_rff = 600;
  Index b_exact = 250;
  std::vector<Index> l_grid;  // 0 selects the exact path
  std::vector<Kerneld> kernel_grid;
  std::vector<double> lambda_grid;
  RegularizerFamily reg = RegularizerFamily::Showalter;
  Index n_sims = 1;
  Index n_rff_redraws = 1;
  std::uint64_t master_seed = 0;

  void validate() const {
    if (params.empty() || dims.empty() || l_grid.empty() ||
        kernel_grid.empty() || lambda_grid.empty()) {
      fail(ErrorKind::InvalidArgument, "config: all grid lists must be nonempty");
    }
    if (s >= std::min(n, m) - 1) {
      fail(ErrorKind::InvalidArgument,
           "config: s must satisfy s < min(N,M) - 1 (s=" + std::to_string(s) +
               ", N=" + std::to_string(n) + ", M=" + std::to_string(m) + ")");
    }
    for (Index l : l_grid) {
      if (l < 0) fail(ErrorKind::InvalidArgument, "config: l values must be >= 0");
    }
    if (b_rff < 1 || b_exact < 1) {
      fail(ErrorKind::InvalidArgument, "config: b_rff and b_exact must be >= 1");
    }
    if (n_sims < 1) fail(ErrorKind::InvalidArgument, "config: n_sims must be >= 1");
    if (n_rff_redraws < 1) {
      fail(ErrorKind::InvalidArgument, "config: n_rff_redraws must be >= 1");
    }
    if (!(alpha > 0.0) || !(alpha < 1.0)) {
      fail(ErrorKind::InvalidArgument, "config: alpha must be in (0,1)");
    }
  }
};

inline ExperimentConfig parse_experiment_config(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Parse, std::string("config JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    const auto& gen = doc.at("generator");
    cfg.generator = parse_generator_family(gen.at("family").get<std::string>());
    cfg.params = gen.at("params").get<std::vector<double>>();
    cfg.dims = doc.at("dims").get<std::vector<Index>>();
    cfg.n = doc.at("n").get<Index>();
    cfg.m = doc.at("m").get<Index>();
    cfg.s = doc.at("s").get<Index>();
    cfg.alpha = doc.value("alpha", 0.05);
    cfg.b_rff = doc.value("b_rff", Index(600));
    cfg.b_exact = doc.value("b_exact", Index(250));
    cfg.l_grid = doc.at("l_grid").get<std::vector<Index>>();
    cfg.kernel_grid =
        parse_kernel_grid(doc.value("kernel_grid",
                                    std::string("gaussian:h=logspace(-2,2,9)")));
    cfg.lambda_grid = parse_lambda_grid(
        doc.value("lambda_grid", std::string("logspace(-6,0.75,10)")));
    cfg.reg = parse_regularizer_family(
        doc.value("reg", std::string("showalter")));
    cfg.n_sims = doc.value("n_sims", Index(1));
    cfg.n_rff_redraws = doc.value("n_rff_redraws", Index(1));
    cfg.master_seed = doc.value("master_seed", std::uint64_t(0));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("config JSON: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

// ---------------------------------------------------------------------------
// Power sweep
// ---------------------------------------------------------------------------

struct PowerRow {
  std::string generator;
  double param = 0;
  Index d = 0;
  Index l = 0;
  double rejection_rate = 0;
  Index n_trials = 0;
  double mean_time_ms = 0;
  std::string seed_digest;
  std::string error;  // nonempty when the whole row failed
};

namespace detail {

/// Heap churn from per-trial matrix temporaries makes glibc trim and regrow
/// the heap top every call, which dominates sub-millisecond timings on
/// kernels with slow page faults. Raising the trim threshold once keeps the
/// measurements about the algorithm.
inline void stabilize_allocator() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
    return true;
  }();
  (void)done;
#endif
}

inline std::uint64_t trial_seed(const ExperimentConfig& cfg, std::size_t row,
                                Index trial) {
  std::uint64_t h = rng::splitmix64(cfg.master_seed ^ 0xBE7Cull);
  h = rng::splitmix64(h ^ static_cast<std::uint64_t>(row));
  h = rng::splitmix64(h ^ static_cast<std::uint64_t>(trial));
  return h;
}

inline std::string hex_digest(std::uint64_t value) {
  std::ostringstream ss;
  ss << std::hex << value;
  return ss.str();
}

/// One adaptive test; returns reject and fills elapsed test time (data
/// generation and splitting excluded).
inline bool run_trial(const ExperimentConfig& cfg, GeneratorFamily family,
                      double param, Index d, Index l, std::uint64_t seed,
                      double& elapsed_ms) {
  const TwoSample data = generate(family, d, param, cfg.n, cfg.m, seed);
  const SplitDatad sd =
      split(data.x, data.y, cfg.s, rng::derive_seed(seed, 0x51ull));
  const Index b = l > 0 ? cfg.b_rff : cfg.b_exact;
  const PermutationPlan plan(b, rng::derive_seed(seed, 0x9Eull), sd.n(), sd.m());
  const std::uint64_t freq_master = rng::derive_seed(seed, 0xF0ull);
  const auto start = std::chrono::steady_clock::now();
  const TestReport report =
      l > 0 ? adaptive_test(cfg.lambda_grid, cfg.kernel_grid, l, sd, plan,
                            cfg.alpha, cfg.reg, freq_master)
            : exact_adaptive_test(cfg.lambda_grid, cfg.kernel_grid, sd, plan,
                                  cfg.alpha, cfg.reg, freq_master);
  elapsed_ms = std::chrono::duration<double, std::milli>(
                   std::chrono::steady_clock::now() - start)
                   .count();
  return report.reject;
}

}  // namespace detail

/// Rejection rates over the full (param, d, l) lattice; one row per cell,
/// n_sims trials each (times n_rff_redraws feature redraws when l > 0).
/// A failing cell produces an error row and the sweep continues.
inline std::vector<PowerRow> run_power(const ExperimentConfig& cfg) {
  cfg.validate();
  detail::stabilize_allocator();
  std::vector<PowerRow> rows;
  rows.reserve(cfg.params.size() * cfg.dims.size() * cfg.l_grid.size());
  std::size_t row_index = 0;
  for (double param : cfg.params) {
    for (Index d : cfg.dims) {
      for (Index l : cfg.l_grid) {
        PowerRow row;
        row.generator = generator_family_name(cfg.generator);
        row.param = param;
        row.d = d;
        row.l = l;
        const Index trials = cfg.n_sims * (l > 0 ? cfg.n_rff_redraws : 1);
        row.n_trials = trials;
        std::vector<std::uint8_t> rejects(static_cast<std::size_t>(trials), 0);
        std::vector<double> times(static_cast<std::size_t>(trials), 0.0);
        std::string first_error;
        try {
          threads::parallel_for(0, static_cast<std::size_t>(trials),
                                [&](std::size_t t) {
            const std::uint64_t seed =
                detail::trial_seed(cfg, row_index, static_cast<Index>(t));
            double elapsed = 0;
            rejects[t] = detail::run_trial(cfg, cfg.generator, param, d, l,
                                           seed, elapsed)
                             ? 1
                             : 0;
            times[t] = elapsed;
          });
          Index hits = 0;
          double time_sum = 0;
          std::uint64_t digest = 0xD16E57ull;
          for (Index t = 0; t < trials; ++t) {
            hits += rejects[static_cast<std::size_t>(t)];
            time_sum += times[static_cast<std::size_t>(t)];
            digest = rng::splitmix64(digest ^
                                     detail::trial_seed(cfg, row_index, t));
          }
          row.rejection_rate =
              static_cast<double>(hits) / static_cast<double>(trials);
          row.mean_time_ms = time_sum / static_cast<double>(trials);
          row.seed_digest = detail::hex_digest(digest);
        } catch (const Error& e) {
          row.error = e.what();
          row.rejection_rate = std::nan("");
          row.n_trials = 0;
        }
        rows.push_back(std::move(row));
        ++row_index;
      }
    }
  }
  return rows;
}

inline void write_power_csv(const std::string& path,
                            const std::vector<PowerRow>& rows) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out.precision(17);
  out << "generator,param,d,l,rejection_rate,n_trials,mean_time_ms,seed_digest\n";
  for (const auto& row : rows) {
    out << row.generator << ',' << row.param << ',' << row.d << ',' << row.l
        << ',' << row.rejection_rate << ',' << row.n_trials << ','
        << row.mean_time_ms << ',' << row.seed_digest << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Timing ratios
// ---------------------------------------------------------------------------

struct TimingRow {
  Index l = 0;
  double time_ratio = 0;
};

namespace detail {

inline double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return values[values.size() / 2];
}

/// Paired timing: candidate and baseline runs alternate so slow machine
/// windows (scheduler steals, frequency steps) hit both sides equally, and
/// the ratio of medians stays about the workloads. One warm-up pair is
/// discarded.
template <class Candidate, class Baseline>
double paired_time_ratio(Candidate&& candidate, Baseline&& baseline,
                         int reps) {
  if (reps < 1) reps = 1;
  candidate();
  baseline();
  std::vector<double> cand_ms, base_ms;
  cand_ms.reserve(static_cast<std::size_t>(reps));
  base_ms.reserve(static_cast<std::size_t>(reps));
  for (int i = 0; i < reps; ++i) {
    auto start = std::chrono::steady_clock::now();
    candidate();
    cand_ms.push_back(std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count());
    start = std::chrono::steady_clock::now();
    baseline();
    base_ms.push_back(std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count());
  }
  return median_of(std::move(cand_ms)) / median_of(std::move(base_ms));
}

}  // namespace detail

/// RFF-over-exact wall-time ratios on one fixed dataset (first parameter,
/// first dimension), medians of `repetitions` interleaved run pairs. An
/// l = 0 entry reports the exact path against an independent repetition of
/// itself, a timer-noise control.
inline std::vector<TimingRow> run_timing(const ExperimentConfig& cfg,
                                         int repetitions = 5) {
  cfg.validate();
  detail::stabilize_allocator();
  bool has_positive = false;
  for (Index l : cfg.l_grid) has_positive |= l > 0;
  bool has_exact = false;
  for (Index l : cfg.l_grid) has_exact |= l == 0;
  if (!has_exact || !has_positive) {
    fail(ErrorKind::InvalidArgument,
         "run_timing: l_grid must contain 0 (exact baseline) and some l > 0");
  }
  const double param = cfg.params.front();
  const Index d = cfg.dims.front();
  const std::uint64_t seed = detail::trial_seed(cfg, 0xA11, 0);
  const TwoSample data = generate(cfg.generator, d, param, cfg.n, cfg.m, seed);
  const SplitDatad sd =
      split(data.x, data.y, cfg.s, rng::derive_seed(seed, 0x51ull));
  const std::uint64_t freq_master = rng::derive_seed(seed, 0xF0ull);

  const PermutationPlan exact_plan(cfg.b_exact,
                                   rng::derive_seed(seed, 0x9Eull), sd.n(),
                                   sd.m());
  const auto run_exact = [&]() {
    exact_adaptive_test(cfg.lambda_grid, cfg.kernel_grid, sd, exact_plan,
                        cfg.alpha, cfg.reg, freq_master);
  };

  std::vector<TimingRow> rows;
  for (Index l : cfg.l_grid) {
    TimingRow row;
    row.l = l;
    if (l == 0) {
      row.time_ratio =
          detail::paired_time_ratio(run_exact, run_exact, repetitions);
    } else {
      const PermutationPlan plan(cfg.b_rff, rng::derive_seed(seed, 0x9Eull),
                                 sd.n(), sd.m());
      row.time_ratio = detail::paired_time_ratio(
          [&]() {
            adaptive_test(cfg.lambda_grid, cfg.kernel_grid, l, sd, plan,
                          cfg.alpha, cfg.reg, freq_master);
          },
          run_exact, repetitions);
    }
    rows.push_back(row);
  }
  return rows;
}

inline void write_timing_csv(const std::string& path,
                             const std::vector<TimingRow>& rows) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out.precision(17);
  out << "l,time_ratio\n";
  for (const auto& row : rows) {
    out << row.l << ',' << row.time_ratio << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write failed for '" + path + "'");
}

}  // namespace specmmd
