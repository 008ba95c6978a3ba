#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

#include "specmmd/error.hpp"
#include "specmmd/features.hpp"
#include "specmmd/kernels.hpp"
#include "specmmd/regularizers.hpp"
#include "specmmd/rng.hpp"
#include "specmmd/types.hpp"

namespace specmmd {

// ---------------------------------------------------------------------------
// Sample splitting
// ---------------------------------------------------------------------------

/// Three-way split: the last s rows of each sample are held out and mixed
/// into z by Bernoulli(1/2) row selection, so z ~ (P+Q)/2. Each z row is one
/// of the held-out rows verbatim, never a blend.
template <class Scalar>
struct SplitData {
  Matrix<Scalar> x_main;  // n x d
  Matrix<Scalar> y_main;  // m x d
  Matrix<Scalar> z;       // s x d
  std::uint64_t bern_seed = 0;

  Index n() const { return x_main.rows(); }
  Index m() const { return y_main.rows(); }
  Index s() const { return z.rows(); }
};

using SplitDatad = SplitData<double>;

template <class Scalar>
SplitData<Scalar> split(const Matrix<Scalar>& x, const Matrix<Scalar>& y,
                        Index s, std::uint64_t seed) {
  const Index big_n = x.rows();
  const Index big_m = y.rows();
  if (x.cols() != y.cols()) {
    fail(ErrorKind::Dimension,
         "split: x and y disagree on dimension (" + std::to_string(x.cols()) +
             " vs " + std::to_string(y.cols()) + ")");
  }
  if (s < 2) {
    fail(ErrorKind::InvalidArgument,
         "split: s must be >= 2, got s=" + std::to_string(s));
  }
  if (big_n - s < 2) {
    fail(ErrorKind::InvalidArgument,
         "split: n = N - s = " + std::to_string(big_n - s) +
             " violates n >= 2 (N=" + std::to_string(big_n) +
             ", s=" + std::to_string(s) + ")");
  }
  if (big_m - s < 2) {
    fail(ErrorKind::InvalidArgument,
         "split: m = M - s = " + std::to_string(big_m - s) +
             " violates m >= 2 (M=" + std::to_string(big_m) +
             ", s=" + std::to_string(s) + ")");
  }
  SplitData<Scalar> out;
  out.x_main = x.topRows(big_n - s);
  out.y_main = y.topRows(big_m - s);
  out.z.resize(s, x.cols());
  out.bern_seed = seed;
  rng::Stream stream(seed, rng::stream::kBernoulli);
  for (Index i = 0; i < s; ++i) {
    const bool take_x = stream.bernoulli_half();
    out.z.row(i) = take_x ? x.row(big_n - s + i) : y.row(big_m - s + i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plain MMD estimators
// ---------------------------------------------------------------------------

/// U-statistic estimator of squared MMD; may be negative. Works for any
/// kernel-like object with a gram() overload.
template <class KernelLike, class Scalar>
Scalar mmd_u(const KernelLike& kernel, const Matrix<Scalar>& x,
             const Matrix<Scalar>& y) {
  const Index n = x.rows();
  const Index m = y.rows();
  if (n < 2 || m < 2) {
    fail(ErrorKind::InvalidArgument,
         "mmd_u: needs n, m >= 2 (got n=" + std::to_string(n) +
             ", m=" + std::to_string(m) + ")");
  }
  const Matrix<Scalar> kxx = gram(kernel, x, x);
  const Matrix<Scalar> kyy = gram(kernel, y, y);
  const Matrix<Scalar> kxy = gram(kernel, x, y);
  const Scalar sx = (kxx.sum() - kxx.trace()) /
                    static_cast<Scalar>(n) / static_cast<Scalar>(n - 1);
  const Scalar sy = (kyy.sum() - kyy.trace()) /
                    static_cast<Scalar>(m) / static_cast<Scalar>(m - 1);
  const Scalar cross =
      Scalar(2) * kxy.sum() / static_cast<Scalar>(n) / static_cast<Scalar>(m);
  return sx + sy - cross;
}

enum class MmdFlavor { U, V };

/// RFF approximations of squared MMD: the V flavor is the squared distance
/// between mean feature vectors (always >= 0); the U flavor removes the
/// diagonal terms and matches mmd_u under the approximate kernel.
template <class Scalar>
Scalar mmd_rff(const FrequencySet<Scalar>& freqs, const Matrix<Scalar>& x,
               const Matrix<Scalar>& y, MmdFlavor flavor) {
  const Index n = x.rows();
  const Index m = y.rows();
  const Index min_size = flavor == MmdFlavor::U ? 2 : 1;
  if (n < min_size || m < min_size) {
    fail(ErrorKind::InvalidArgument,
         "mmd_rff: needs n, m >= " + std::to_string(min_size));
  }
  const Matrix<Scalar> phi_x = feature_matrix(freqs, x);
  const Matrix<Scalar> phi_y = feature_matrix(freqs, y);
  const Vector<Scalar> sum_x = phi_x.rowwise().sum();
  const Vector<Scalar> sum_y = phi_y.rowwise().sum();
  if (flavor == MmdFlavor::V) {
    return (sum_x / static_cast<Scalar>(n) - sum_y / static_cast<Scalar>(m))
        .squaredNorm();
  }
  const Scalar sx = (sum_x.squaredNorm() - phi_x.colwise().squaredNorm().sum()) /
                    static_cast<Scalar>(n) / static_cast<Scalar>(n - 1);
  const Scalar sy = (sum_y.squaredNorm() - phi_y.colwise().squaredNorm().sum()) /
                    static_cast<Scalar>(m) / static_cast<Scalar>(m - 1);
  const Scalar cross = Scalar(2) * sum_x.dot(sum_y) / static_cast<Scalar>(n) /
                       static_cast<Scalar>(m);
  return sx + sy - cross;
}

// ---------------------------------------------------------------------------
// Spectral machinery shared by both statistic paths
// ---------------------------------------------------------------------------

namespace detail {

/// Guards the PSD assumption: roundoff may push eigenvalues slightly
/// negative, anything worse indicates a numerical failure. The band is
/// 1e-10 relative in double and widens with the scalar's epsilon.
template <class Scalar>
void check_clamp(Vector<Scalar>& evals, const char* where) {
  if (evals.size() == 0) return;
  const Scalar band =
      std::max(Scalar(1e-10), std::numeric_limits<Scalar>::epsilon() *
                                  Scalar(1e4));
  const Scalar max_ev = std::max(evals.maxCoeff(), Scalar(0));
  const Scalar min_ev = evals.minCoeff();
  if (min_ev < -band * std::max(max_ev, Scalar(1))) {
    fail(ErrorKind::Numerical,
         std::string(where) + ": eigenvalue " +
             std::to_string(static_cast<double>(min_ev)) +
             " below the PSD roundoff band (max eigenvalue " +
             std::to_string(static_cast<double>(max_ev)) + ")");
  }
  evals = evals.cwiseMax(Scalar(0));
}

constexpr double kEigenvalueRetention = 1e-12;  // relative to the largest

}  // namespace detail

/// Eigensystem of the empirical feature-space covariance
///   Sigma = (s K - v v^T) / (s(s-1)),  K = Phi(Z) Phi(Z)^T,  v = Phi(Z) 1.
/// Held as the retained nonzero part (evals, basis); directions outside the
/// basis have eigenvalue zero. When 2l > s the eigensystem is recovered from
/// the s x s matrix of centered feature inner products, which has the same
/// nonzero spectrum.
template <class Scalar>
struct FeatureCovariance {
  Vector<Scalar> evals;   // retained, nonincreasing, >= 0
  Matrix<Scalar> basis;   // 2l x r, orthonormal columns
  Index feature_dim = 0;  // 2l
};

template <class Scalar>
FeatureCovariance<Scalar> feature_covariance_eig(const Matrix<Scalar>& phi_z) {
  const Index two_l = phi_z.rows();
  const Index s = phi_z.cols();
  FeatureCovariance<Scalar> out;
  out.feature_dim = two_l;

  const Vector<Scalar> v_z = phi_z.rowwise().sum();
  if (two_l <= s) {
    Matrix<Scalar> sigma =
        (Scalar(s) * (phi_z * phi_z.transpose()) - v_z * v_z.transpose()) /
        (static_cast<Scalar>(s) * static_cast<Scalar>(s - 1));
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(sigma);
    if (eig.info() != Eigen::Success) {
      fail(ErrorKind::Numerical,
           "feature covariance eigendecomposition failed (size " +
               std::to_string(two_l) + ", |Sigma|_max " +
               std::to_string(
                   static_cast<double>(sigma.cwiseAbs().maxCoeff())) +
               ")");
    }
    out.evals = eig.eigenvalues().reverse();
    out.basis = eig.eigenvectors().rowwise().reverse();
    detail::check_clamp(out.evals, "feature covariance");
    return out;
  }

  // Dual route: centered features Fc = Phi(Z) - (v/s) 1^T; the s x s matrix
  // Fc^T Fc / (s-1) shares the nonzero spectrum of Sigma = Fc Fc^T / (s-1).
  const Matrix<Scalar> centered =
      phi_z - (v_z / static_cast<Scalar>(s)) *
                  Matrix<Scalar>::Ones(1, s);
  Matrix<Scalar> dual =
      centered.transpose() * centered / static_cast<Scalar>(s - 1);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(dual);
  if (eig.info() != Eigen::Success) {
    fail(ErrorKind::Numerical, "dual covariance eigendecomposition failed");
  }
  Vector<Scalar> evals = eig.eigenvalues().reverse();
  detail::check_clamp(evals, "dual feature covariance");
  const Scalar cutoff =
      evals.size() > 0
          ? evals(0) * static_cast<Scalar>(detail::kEigenvalueRetention)
          : Scalar(0);
  Index rank = 0;
  while (rank < evals.size() && evals(rank) > cutoff) ++rank;
  out.evals = evals.head(rank);
  out.basis.resize(two_l, rank);
  for (Index i = 0; i < rank; ++i) {
    const Vector<Scalar> dir =
        centered * eig.eigenvectors().col(s - 1 - i);
    out.basis.col(i) =
        dir / std::sqrt(static_cast<Scalar>(s - 1) * out.evals(i));
  }
  return out;
}

/// Applies g_lambda^{1/2}(Sigma) to feature columns through functional
/// calculus: sqrt(g(0)) off the retained basis, sqrt(g(eval_i)) along it.
template <class Scalar>
Matrix<Scalar> apply_sqrt_g(const FeatureCovariance<Scalar>& cov,
                            const Regularizer<Scalar>& reg,
                            const Matrix<Scalar>& phi) {
  const Scalar root_g0 = std::sqrt(g_zero(reg));
  Matrix<Scalar> out = root_g0 * phi;
  if (cov.basis.cols() == 0) return out;
  Vector<Scalar> shift(cov.evals.size());
  for (Index i = 0; i < cov.evals.size(); ++i) {
    shift(i) = std::sqrt(eval_g(reg, cov.evals(i))) - root_g0;
  }
  Matrix<Scalar> coords = cov.basis.transpose() * phi;  // r x k
  coords.array().colwise() *= shift.array();
  out.noalias() += cov.basis * coords;
  return out;
}

// ---------------------------------------------------------------------------
// Exact spectral statistic (Gram path)
// ---------------------------------------------------------------------------

/// Gram-side eigensystem of (1/s) Ht^{1/2} K_s Ht^{1/2} with
/// H = I - 11^T/s and Ht = s/(s-1) H. H is an orthogonal projector, so
/// Ht^{1/2} = sqrt(s/(s-1)) H in closed form and the matrix reduces to
/// H K_s H / (s-1). The struct keeps the retained directions premultiplied
/// for downstream cross-gram products:
///   proj = Ht^{1/2} V_r  (s x r), so that K_as * proj applies the operator.
template <class Scalar>
struct GramSpectral {
  Vector<Scalar> evals;  // retained, nonincreasing, > cutoff
  Matrix<Scalar> proj;   // s x r
};

template <class Scalar>
GramSpectral<Scalar> gram_spectral(const Matrix<Scalar>& k_z) {
  const Index s = k_z.rows();
  const Scalar sf = static_cast<Scalar>(s);
  const Vector<Scalar> row_mean = k_z.rowwise().mean();
  Matrix<Scalar> centered = k_z;
  centered.colwise() -= row_mean;
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> col_mean =
      centered.colwise().mean();
  centered.rowwise() -= col_mean;
  centered /= (sf - Scalar(1));

  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(centered);
  if (eig.info() != Eigen::Success) {
    fail(ErrorKind::Numerical,
         "gram eigendecomposition failed (s=" + std::to_string(s) +
             ", |K|_max " +
             std::to_string(static_cast<double>(k_z.cwiseAbs().maxCoeff())) +
             ")");
  }
  Vector<Scalar> evals = eig.eigenvalues().reverse();
  detail::check_clamp(evals, "gram spectral operator");

  const Scalar cutoff =
      evals.size() > 0
          ? evals(0) * static_cast<Scalar>(detail::kEigenvalueRetention)
          : Scalar(0);
  Index rank = 0;
  while (rank < evals.size() && evals(rank) > cutoff) ++rank;

  GramSpectral<Scalar> out;
  out.evals = evals.head(rank);
  // Ht^{1/2} V = sqrt(s/(s-1)) * (V - colmean(V) broadcast)
  Matrix<Scalar> v(s, rank);
  for (Index i = 0; i < rank; ++i) {
    v.col(i) = eig.eigenvectors().col(evals.size() - 1 - i);
  }
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> v_col_mean =
      v.colwise().mean();
  v.rowwise() -= v_col_mean;
  out.proj = std::sqrt(sf / (sf - Scalar(1))) * v;
  return out;
}

/// (g(eval_i) - g(0)) / eval_i per retained direction; the weights of the
/// G-sum in the exact statistic.
template <class Scalar>
Vector<Scalar> gram_g_weights(const GramSpectral<Scalar>& spectral,
                              const Regularizer<Scalar>& reg) {
  Vector<Scalar> weights(spectral.evals.size());
  for (Index i = 0; i < spectral.evals.size(); ++i) {
    weights(i) = eval_g_ratio(reg, spectral.evals(i));
  }
  return weights;
}

/// Exact spectral regularized statistic. With E_a := K_as Ht^{1/2} V_r the
/// five bracketed terms reduce to weighted sums over E-columns:
///   sum(A_1)  = g0 sum(K_n) + (1/s) sum_k w_k (1^T E_x col k)^2
///   tr(A_1)   = g0 tr(K_n)  + (1/s) sum_k w_k ||E_x col k||^2
/// and the cross term pairs the two column sums.
template <class KernelLike, class Scalar>
Scalar exact_statistic(const KernelLike& kernel, const Regularizer<Scalar>& reg,
                       const SplitData<Scalar>& split_data) {
  const Index n = split_data.n();
  const Index m = split_data.m();
  const Index s = split_data.s();
  const Scalar g0 = g_zero(reg);

  const Matrix<Scalar> k_z = gram(kernel, split_data.z, split_data.z);
  const GramSpectral<Scalar> op = gram_spectral(k_z);
  const Vector<Scalar> weights = gram_g_weights(op, reg);

  const Matrix<Scalar> k_n =
      gram(kernel, split_data.x_main, split_data.x_main);
  const Matrix<Scalar> k_m =
      gram(kernel, split_data.y_main, split_data.y_main);
  const Matrix<Scalar> k_mn =
      gram(kernel, split_data.y_main, split_data.x_main);
  const Matrix<Scalar> e_x =
      gram(kernel, split_data.x_main, split_data.z) * op.proj;  // n x r
  const Matrix<Scalar> e_y =
      gram(kernel, split_data.y_main, split_data.z) * op.proj;  // m x r

  const Vector<Scalar> colsum_x = e_x.colwise().sum().transpose();
  const Vector<Scalar> colsum_y = e_y.colwise().sum().transpose();
  const Vector<Scalar> colsq_x = e_x.colwise().squaredNorm().transpose();
  const Vector<Scalar> colsq_y = e_y.colwise().squaredNorm().transpose();

  const Scalar inv_s = Scalar(1) / static_cast<Scalar>(s);
  const Scalar term_x =
      g0 * (k_n.sum() - k_n.trace()) +
      inv_s * (weights.dot(colsum_x.cwiseProduct(colsum_x)) -
               weights.dot(colsq_x));
  const Scalar term_y =
      g0 * (k_m.sum() - k_m.trace()) +
      inv_s * (weights.dot(colsum_y.cwiseProduct(colsum_y)) -
               weights.dot(colsq_y));
  const Scalar term_cross =
      g0 * k_mn.sum() + inv_s * weights.dot(colsum_y.cwiseProduct(colsum_x));

  return term_x / static_cast<Scalar>(n) / static_cast<Scalar>(n - 1) +
         term_y / static_cast<Scalar>(m) / static_cast<Scalar>(m - 1) -
         Scalar(2) * term_cross / static_cast<Scalar>(n) /
             static_cast<Scalar>(m);
}

// ---------------------------------------------------------------------------
// RFF spectral statistic (feature path)
// ---------------------------------------------------------------------------

template <class Scalar>
Scalar rff_statistic(const FrequencySet<Scalar>& freqs,
                     const Regularizer<Scalar>& reg,
                     const SplitData<Scalar>& split_data) {
  const Index n = split_data.n();
  const Index m = split_data.m();
  const Matrix<Scalar> phi_z = feature_matrix(freqs, split_data.z);
  const FeatureCovariance<Scalar> cov = feature_covariance_eig(phi_z);

  const Matrix<Scalar> psi_x =
      apply_sqrt_g(cov, reg, feature_matrix(freqs, split_data.x_main));
  const Matrix<Scalar> psi_y =
      apply_sqrt_g(cov, reg, feature_matrix(freqs, split_data.y_main));

  const Vector<Scalar> v_x = psi_x.rowwise().sum();
  const Vector<Scalar> v_y = psi_y.rowwise().sum();
  const Scalar a = v_x.squaredNorm() - psi_x.colwise().squaredNorm().sum();
  const Scalar b = v_y.squaredNorm() - psi_y.colwise().squaredNorm().sum();
  const Scalar c = v_x.dot(v_y);
  return a / static_cast<Scalar>(n) / static_cast<Scalar>(n - 1) +
         b / static_cast<Scalar>(m) / static_cast<Scalar>(m - 1) -
         Scalar(2) * c / static_cast<Scalar>(n) / static_cast<Scalar>(m);
}

// ---------------------------------------------------------------------------
// Effective-dimension diagnostics
// ---------------------------------------------------------------------------

struct EffectiveDims {
  double n1 = 0;  // trace of the whitened covariance
  double n2 = 0;  // its Hilbert-Schmidt norm; n2 <= sqrt(n1)
};

inline EffectiveDims effective_dims(const Vectord& eigvals, double lambda) {
  if (!(lambda > 0)) {
    fail(ErrorKind::InvalidArgument, "effective_dims: lambda must be > 0");
  }
  EffectiveDims out;
  double sq = 0;
  for (Index i = 0; i < eigvals.size(); ++i) {
    const double r = eigvals(i) / (eigvals(i) + lambda);
    out.n1 += r;
    sq += r * r;
  }
  out.n2 = std::sqrt(sq);
  return out;
}

}  // namespace specmmd
