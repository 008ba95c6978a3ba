#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "specmmd/error.hpp"
#include "specmmd/estimators.hpp"
#include "specmmd/features.hpp"
#include "specmmd/kernels.hpp"
#include "specmmd/regularizers.hpp"
#include "specmmd/rng.hpp"
#include "specmmd/threads.hpp"
#include "specmmd/types.hpp"

namespace specmmd {

// ---------------------------------------------------------------------------
// Permutations
// ---------------------------------------------------------------------------

/// B uniform random permutations of the pooled indices; replica i's
/// permutation depends only on (seed, i).
struct PermutationPlan {
  Index b = 0;
  std::uint64_t seed = 0;
  Index n = 0;
  Index m = 0;

  PermutationPlan(Index b_, std::uint64_t seed_, Index n_, Index m_)
      : b(b_), seed(seed_), n(n_), m(m_) {
    if (b < 1) fail(ErrorKind::InvalidArgument, "permutation count B must be >= 1");
    if (n < 1 || m < 1) {
      fail(ErrorKind::InvalidArgument, "permutation plan needs n, m >= 1");
    }
  }
};

namespace detail {

/// Unbiased integer in [0, bound) by rejection.
inline std::uint64_t bounded_u64(rng::Stream& stream, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = stream.next_u64();
  } while (x >= limit);
  return x % bound;
}

}  // namespace detail

/// Fisher-Yates permutation of {0, ..., n+m-1} for one replica.
inline std::vector<Index> replica_permutation(const PermutationPlan& plan,
                                              Index replica) {
  rng::Stream stream(rng::derive_seed(plan.seed, static_cast<std::uint64_t>(replica)),
                     rng::stream::kPermutation);
  const Index total = plan.n + plan.m;
  std::vector<Index> perm(static_cast<std::size_t>(total));
  for (Index i = 0; i < total; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (Index i = total - 1; i > 0; --i) {
    const auto j = static_cast<Index>(
        detail::bounded_u64(stream, static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

/// 0/1 column per replica marking pooled indices assigned to the X block
/// (the first n positions of the permutation).
template <class Scalar>
struct ReplicaMasks {
  Matrix<Scalar> mask;  // (n+m) x B
  std::uint64_t digest = 0;
};

template <class Scalar>
ReplicaMasks<Scalar> make_replica_masks(const PermutationPlan& plan) {
  const Index total = plan.n + plan.m;
  ReplicaMasks<Scalar> out;
  out.mask = Matrix<Scalar>::Zero(total, plan.b);
  std::uint64_t digest = 0x5EEDull;
  for (Index r = 0; r < plan.b; ++r) {
    const std::vector<Index> perm = replica_permutation(plan, r);
    for (Index i = 0; i < plan.n; ++i) {
      out.mask(perm[static_cast<std::size_t>(i)], r) = Scalar(1);
      digest = rng::splitmix64(
          digest ^ static_cast<std::uint64_t>(perm[static_cast<std::size_t>(i)]));
    }
  }
  out.digest = digest;
  return out;
}

// ---------------------------------------------------------------------------
// Permutation engines: pooled machinery fixed in (z, operator), with each
// replica only reassigning pooled columns to the two blocks.
// ---------------------------------------------------------------------------

namespace detail {

template <class Scalar>
Scalar finish_statistic(Scalar a, Scalar b, Scalar c, Index n, Index m) {
  return a / static_cast<Scalar>(n) / static_cast<Scalar>(n - 1) +
         b / static_cast<Scalar>(m) / static_cast<Scalar>(m - 1) -
         Scalar(2) * c / static_cast<Scalar>(n) / static_cast<Scalar>(m);
}

}  // namespace detail

/// RFF path: Psi(U) = g^{1/2}(Sigma) Phi(U) is computed once per
/// regularizer; a replica evaluation is one matrix-vector product against
/// its 0/1 mask.
template <class Scalar>
class RffPermutationEngine {
 public:
  RffPermutationEngine(const FrequencySet<Scalar>& freqs,
                       const SplitData<Scalar>& split_data)
      : n_(split_data.n()), m_(split_data.m()) {
    Matrix<Scalar> phi_u(2 * freqs.count(), n_ + m_);
    phi_u.leftCols(n_) = feature_matrix(freqs, split_data.x_main);
    phi_u.rightCols(m_) = feature_matrix(freqs, split_data.y_main);
    phi_u_ = std::move(phi_u);
    cov_ = feature_covariance_eig(feature_matrix(freqs, split_data.z));
  }

  void set_regularizer(const Regularizer<Scalar>& reg) {
    psi_u_ = apply_sqrt_g(cov_, reg, phi_u_);
    colsq_ = psi_u_.colwise().squaredNorm().transpose();
    v_total_ = psi_u_.rowwise().sum();
    sq_total_ = colsq_.sum();
  }

  template <class Derived>
  Scalar eval_mask(const Eigen::MatrixBase<Derived>& mask) const {
    const Vector<Scalar> v_x = psi_u_ * mask;
    const Vector<Scalar> v_y = v_total_ - v_x;
    const Scalar sq_x = colsq_.dot(mask);
    const Scalar a = v_x.squaredNorm() - sq_x;
    const Scalar b = v_y.squaredNorm() - (sq_total_ - sq_x);
    const Scalar c = v_x.dot(v_y);
    return detail::finish_statistic(a, b, c, n_, m_);
  }

  Index n() const { return n_; }
  Index m() const { return m_; }

 private:
  Index n_;
  Index m_;
  Matrix<Scalar> phi_u_;
  FeatureCovariance<Scalar> cov_;
  Matrix<Scalar> psi_u_;
  Vector<Scalar> colsq_;
  Vector<Scalar> v_total_;
  Scalar sq_total_ = Scalar(0);
};

/// Exact path: the pooled matrix R with
///   R_ij = <g(Sigma) K(., U_i), K(., U_j)>
///        = g(0) K(U_i, U_j) + (1/s) (E diag(w) E^T)_ij,  E = K_Us Ht^{1/2} V
/// is fixed per regularizer; block sums under a mask give the statistic.
template <class Scalar>
class ExactPermutationEngine {
 public:
  template <class KernelLike>
  ExactPermutationEngine(const KernelLike& kernel,
                         const SplitData<Scalar>& split_data)
      : n_(split_data.n()), m_(split_data.m()), s_(split_data.s()) {
    Matrix<Scalar> pooled(n_ + m_, split_data.x_main.cols());
    pooled.topRows(n_) = split_data.x_main;
    pooled.bottomRows(m_) = split_data.y_main;
    k_uu_ = gram(kernel, pooled, pooled);
    spectral_ = gram_spectral(gram(kernel, split_data.z, split_data.z));
    e_u_ = gram(kernel, pooled, split_data.z) * spectral_.proj;
  }

  void set_regularizer(const Regularizer<Scalar>& reg) {
    const Vector<Scalar> weights =
        gram_g_weights(spectral_, reg) / static_cast<Scalar>(s_);
    r_ = g_zero(reg) * k_uu_;
    r_.noalias() += e_u_ * weights.asDiagonal() * e_u_.transpose();
    r_diag_ = r_.diagonal();
    r_rowsum_ = r_.rowwise().sum();
    r_total_ = r_rowsum_.sum();
    diag_total_ = r_diag_.sum();
  }

  template <class Derived>
  Scalar eval_mask(const Eigen::MatrixBase<Derived>& mask) const {
    const Vector<Scalar> r_mask = r_ * mask;
    const Scalar xx = mask.dot(r_mask);
    const Scalar x_all = r_rowsum_.dot(mask);
    const Scalar diag_x = r_diag_.dot(mask);
    const Scalar yy = r_total_ - Scalar(2) * x_all + xx;
    const Scalar a = xx - diag_x;
    const Scalar b = yy - (diag_total_ - diag_x);
    const Scalar c = x_all - xx;
    return detail::finish_statistic(a, b, c, n_, m_);
  }

  Index n() const { return n_; }
  Index m() const { return m_; }

 private:
  Index n_;
  Index m_;
  Index s_;
  Matrix<Scalar> k_uu_;
  GramSpectral<Scalar> spectral_;
  Matrix<Scalar> e_u_;
  Matrix<Scalar> r_;
  Vector<Scalar> r_diag_;
  Vector<Scalar> r_rowsum_;
  Scalar r_total_ = Scalar(0);
  Scalar diag_total_ = Scalar(0);
};

namespace detail {

template <class Scalar>
Vector<Scalar> identity_mask(Index n, Index m) {
  Vector<Scalar> mask = Vector<Scalar>::Zero(n + m);
  mask.head(n).setOnes();
  return mask;
}

template <class Engine, class Scalar>
Vector<Scalar> replicas_for(const Engine& engine,
                            const ReplicaMasks<Scalar>& masks) {
  Vector<Scalar> out(masks.mask.cols());
  for (Index r = 0; r < masks.mask.cols(); ++r) {
    out(r) = engine.eval_mask(masks.mask.col(r));
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Quantiles and single tests
// ---------------------------------------------------------------------------

/// inf{q : F_hat(q) >= level} realized as the ceil(B*level)-th order
/// statistic of the replica values.
template <class Scalar>
Scalar empirical_quantile(const Vector<Scalar>& values, double level) {
  if (values.size() == 0) {
    fail(ErrorKind::InvalidArgument, "empirical_quantile: empty vector");
  }
  if (!(level > 0.0) || !(level < 1.0)) {
    fail(ErrorKind::InvalidArgument, "empirical_quantile: level must be in (0,1)");
  }
  std::vector<Scalar> sorted(values.data(), values.data() + values.size());
  std::sort(sorted.begin(), sorted.end());
  const auto b = static_cast<double>(values.size());
  auto k = static_cast<std::size_t>(std::ceil(b * level));
  if (k < 1) k = 1;
  if (k > sorted.size()) k = sorted.size();
  return sorted[k - 1];
}

struct TestOptions {
  /// Deflation factor w from the theory (reject at level w*alpha). The
  /// experimental protocol uses no deflation, i.e. w = 1.
  double deflation_w = 1.0;
  /// Alternative decision rule p = (1 + #{replica >= observed}) / (B + 1),
  /// reject iff p <= alpha; guarantees finite-B validity.
  bool p_value_rule = false;
};

struct SingleTestResult {
  double stat = 0;
  double quantile = 0;
  bool reject = false;
  double p_value = 1;
  bool degenerate = false;  // replica vector has zero variance
};

namespace detail {

template <class Engine>
SingleTestResult run_single(Engine& engine, const Regularizerd& reg,
                            const PermutationPlan& plan, double alpha,
                            const TestOptions& opts) {
  if (plan.n != engine.n() || plan.m != engine.m()) {
    fail(ErrorKind::InvalidArgument,
         "permutation plan (n=" + std::to_string(plan.n) +
             ", m=" + std::to_string(plan.m) + ") does not match the split");
  }
  if (!(alpha > 0.0) || !(alpha < 1.0)) {
    fail(ErrorKind::InvalidArgument, "alpha must be in (0,1)");
  }
  engine.set_regularizer(reg);
  const ReplicaMasks<double> masks = make_replica_masks<double>(plan);
  const Vectord reps = replicas_for(engine, masks);
  SingleTestResult out;
  out.stat = engine.eval_mask(identity_mask<double>(plan.n, plan.m));
  out.quantile =
      empirical_quantile(reps, 1.0 - opts.deflation_w * alpha);
  Index count_ge = 0;
  for (Index i = 0; i < reps.size(); ++i) {
    if (reps(i) >= out.stat) ++count_ge;
  }
  out.p_value = static_cast<double>(1 + count_ge) /
                static_cast<double>(plan.b + 1);
  out.degenerate = reps.maxCoeff() == reps.minCoeff();
  out.reject = opts.p_value_rule ? out.p_value <= alpha
                                 : out.stat >= out.quantile;
  return out;
}

}  // namespace detail

/// Replica statistics for the RFF path; the regularized operator and z stay
/// fixed while each replica reassigns pooled columns.
inline Vectord permuted_statistics(const FrequencySetd& freqs,
                                   const Regularizerd& reg,
                                   const SplitDatad& split_data,
                                   const PermutationPlan& plan) {
  if (plan.n != split_data.n() || plan.m != split_data.m()) {
    fail(ErrorKind::InvalidArgument, "permutation plan does not match the split");
  }
  RffPermutationEngine<double> engine(freqs, split_data);
  engine.set_regularizer(reg);
  return detail::replicas_for(engine, make_replica_masks<double>(plan));
}

/// Same for the exact Gram path.
inline Vectord permuted_statistics(const Kerneld& kernel,
                                   const Regularizerd& reg,
                                   const SplitDatad& split_data,
                                   const PermutationPlan& plan) {
  if (plan.n != split_data.n() || plan.m != split_data.m()) {
    fail(ErrorKind::InvalidArgument, "permutation plan does not match the split");
  }
  ExactPermutationEngine<double> engine(kernel, split_data);
  engine.set_regularizer(reg);
  return detail::replicas_for(engine, make_replica_masks<double>(plan));
}

inline SingleTestResult single_test(const FrequencySetd& freqs,
                                    const Regularizerd& reg,
                                    const SplitDatad& split_data,
                                    const PermutationPlan& plan, double alpha,
                                    const TestOptions& opts = {}) {
  RffPermutationEngine<double> engine(freqs, split_data);
  return detail::run_single(engine, reg, plan, alpha, opts);
}

inline SingleTestResult single_test(const Kerneld& kernel,
                                    const Regularizerd& reg,
                                    const SplitDatad& split_data,
                                    const PermutationPlan& plan, double alpha,
                                    const TestOptions& opts = {}) {
  ExactPermutationEngine<double> engine(kernel, split_data);
  return detail::run_single(engine, reg, plan, alpha, opts);
}

// ---------------------------------------------------------------------------
// Adaptive (union) tests over Lambda x W
// ---------------------------------------------------------------------------

struct CellResult {
  double lambda = 0;
  std::string kernel;
  double stat = 0;
  double quantile = 0;
  bool reject = false;
  double p_value = 1;
};

struct TestReport {
  std::vector<CellResult> cells;
  bool reject = false;
  double alpha = 0;
  double corrected_alpha = 0;
  Index b = 0;
  Index l = 0;  // 0 = exact path
  struct Seeds {
    std::uint64_t master = 0;
    std::uint64_t permutation = 0;
    std::uint64_t bernoulli = 0;
    std::vector<std::uint64_t> frequency;  // one per bandwidth
  } seeds;
  std::map<std::string, double> timing_ms;
  bool degenerate_statistics = false;
  std::uint64_t permutation_digest = 0;
  std::vector<std::string> warnings;
};

namespace detail {

struct CellTimer {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - start)
        .count();
  }
};

/// Shared driver: one engine per bandwidth, replicas reused across the
/// lambda grid within that bandwidth (identical permutation sequences, as
/// recorded by the mask digest).
template <class MakeEngine>
TestReport run_adaptive(const std::vector<double>& lambda_grid,
                        const std::vector<Kerneld>& kernel_grid,
                        RegularizerFamily reg_family,
                        const SplitDatad& split_data,
                        const PermutationPlan& plan, double alpha,
                        std::uint64_t master_seed, Index l,
                        const TestOptions& opts, MakeEngine&& make_engine) {
  if (lambda_grid.empty() || kernel_grid.empty()) {
    fail(ErrorKind::InvalidArgument, "adaptive test needs nonempty grids");
  }
  if (plan.n != split_data.n() || plan.m != split_data.m()) {
    fail(ErrorKind::InvalidArgument, "permutation plan does not match the split");
  }
  if (!(alpha > 0.0) || !(alpha < 1.0)) {
    fail(ErrorKind::InvalidArgument, "alpha must be in (0,1)");
  }
  const CellTimer total_timer;
  TestReport report;
  report.alpha = alpha;
  const auto cell_count =
      static_cast<double>(lambda_grid.size() * kernel_grid.size());
  report.corrected_alpha = opts.deflation_w * alpha / cell_count;
  report.b = plan.b;
  report.l = l;
  report.seeds.master = master_seed;
  report.seeds.permutation = plan.seed;
  report.seeds.bernoulli = split_data.bern_seed;
  if (report.corrected_alpha * static_cast<double>(plan.b) < 1.0) {
    report.warnings.push_back(
        "B=" + std::to_string(plan.b) +
        " is too small for the corrected level " +
        std::to_string(report.corrected_alpha) +
        "; the per-cell quantile saturates at the maximum replica");
  }

  const CellTimer mask_timer;
  const ReplicaMasks<double> masks = make_replica_masks<double>(plan);
  report.timing_ms["permutations"] = mask_timer.elapsed_ms();
  report.permutation_digest = masks.digest;
  const Vectord id_mask = identity_mask<double>(plan.n, plan.m);
  const double level = 1.0 - report.corrected_alpha;

  const std::size_t n_kernels = kernel_grid.size();
  const std::size_t n_lambdas = lambda_grid.size();
  report.cells.resize(n_kernels * n_lambdas);
  report.seeds.frequency.assign(n_kernels, 0);
  std::vector<std::uint8_t> degenerate(n_kernels, 0);
  std::vector<double> setup_ms(n_kernels, 0.0);
  std::vector<double> replica_ms(n_kernels, 0.0);

  threads::parallel_for(0, n_kernels, [&](std::size_t h) {
    const Kerneld& kernel = kernel_grid[h];
    const std::uint64_t freq_seed =
        master_seed ^ rng::splitmix64(static_cast<std::uint64_t>(h));
    report.seeds.frequency[h] = freq_seed;
    const CellTimer setup_timer;
    auto engine = make_engine(kernel, freq_seed);
    setup_ms[h] = setup_timer.elapsed_ms();
    const CellTimer replica_timer;
    for (std::size_t i = 0; i < n_lambdas; ++i) {
      const Regularizerd reg(reg_family, lambda_grid[i]);
      engine.set_regularizer(reg);
      const Vectord reps = replicas_for(engine, masks);
      CellResult cell;
      cell.lambda = lambda_grid[i];
      cell.kernel = kernel_spec_string(kernel);
      cell.stat = engine.eval_mask(id_mask);
      cell.quantile = empirical_quantile(reps, level);
      Index count_ge = 0;
      for (Index r = 0; r < reps.size(); ++r) {
        if (reps(r) >= cell.stat) ++count_ge;
      }
      cell.p_value = static_cast<double>(1 + count_ge) /
                     static_cast<double>(plan.b + 1);
      cell.reject = opts.p_value_rule
                        ? cell.p_value <= report.corrected_alpha
                        : cell.stat >= cell.quantile;
      if (reps.maxCoeff() == reps.minCoeff()) degenerate[h] = 1;
      report.cells[h * n_lambdas + i] = std::move(cell);
    }
    replica_ms[h] = replica_timer.elapsed_ms();
  });

  for (const auto& cell : report.cells) report.reject |= cell.reject;
  for (std::uint8_t flag : degenerate) {
    if (flag) report.degenerate_statistics = true;
  }
  double setup_total = 0, replica_total = 0;
  for (std::size_t h = 0; h < n_kernels; ++h) {
    setup_total += setup_ms[h];
    replica_total += replica_ms[h];
  }
  report.timing_ms["engine_setup"] = setup_total;
  report.timing_ms["cells"] = replica_total;
  report.timing_ms["total"] = total_timer.elapsed_ms();
  return report;
}

}  // namespace detail

/// RFF-based kernel adaptive test: per bandwidth one fresh FrequencySet
/// (seed derived from the master seed and the bandwidth index), per cell a
/// quantile at level 1 - alpha/(|Lambda||W|), rejecting if any cell rejects.
inline TestReport adaptive_test(const std::vector<double>& lambda_grid,
                                const std::vector<Kerneld>& kernel_grid,
                                Index l, const SplitDatad& split_data,
                                const PermutationPlan& plan, double alpha,
                                RegularizerFamily reg_family,
                                std::uint64_t master_seed,
                                const TestOptions& opts = {}) {
  if (l < 1) {
    fail(ErrorKind::InvalidArgument,
         "adaptive_test needs l >= 1; use exact_adaptive_test for the exact path");
  }
  const Index d = split_data.x_main.cols();
  return detail::run_adaptive(
      lambda_grid, kernel_grid, reg_family, split_data, plan, alpha,
      master_seed, l, opts, [&](const Kerneld& kernel, std::uint64_t seed) {
        return RffPermutationEngine<double>(
            sample_frequencies(kernel, l, d, seed), split_data);
      });
}

/// Same union test along the exact Gram path.
inline TestReport exact_adaptive_test(const std::vector<double>& lambda_grid,
                                      const std::vector<Kerneld>& kernel_grid,
                                      const SplitDatad& split_data,
                                      const PermutationPlan& plan, double alpha,
                                      RegularizerFamily reg_family,
                                      std::uint64_t master_seed,
                                      const TestOptions& opts = {}) {
  return detail::run_adaptive(
      lambda_grid, kernel_grid, reg_family, split_data, plan, alpha,
      master_seed, 0, opts, [&](const Kerneld& kernel, std::uint64_t) {
        return ExactPermutationEngine<double>(kernel, split_data);
      });
}

}  // namespace specmmd
