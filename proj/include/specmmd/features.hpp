#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "specmmd/error.hpp"
#include "specmmd/kernels.hpp"
#include "specmmd/rng.hpp"
#include "specmmd/types.hpp"

namespace specmmd {

/// l spectral frequencies drawn i.i.d. from the kernel's spectral
/// distribution; rows of theta are the theta_i. v0 is the kernel's zero-lag
/// value K(x,x).
template <class Scalar>
struct FrequencySet {
  Matrix<Scalar> theta;  // l x d
  Scalar v0 = Scalar(1);
  std::uint64_t seed = 0;

  Index count() const { return theta.rows(); }
  Index dim() const { return theta.cols(); }
};

using FrequencySetd = FrequencySet<double>;

template <class Scalar>
FrequencySet<Scalar> sample_frequencies(const Kernel<Scalar>& kernel, Index l,
                                        Index d, std::uint64_t seed) {
  if (l < 1 || d < 1) {
    fail(ErrorKind::InvalidArgument,
         "sample_frequencies: l and d must be >= 1 (got l=" +
             std::to_string(l) + ", d=" + std::to_string(d) + ")");
  }
  const SpectralSampler<Scalar> sampler = spectral_sampler(kernel);
  rng::Stream stream(seed, rng::stream::kFrequencies);
  FrequencySet<Scalar> out;
  out.theta.resize(l, d);
  for (Index i = 0; i < l; ++i) {
    for (Index j = 0; j < d; ++j) {
      out.theta(i, j) = sampler.draw(stream);
    }
  }
  out.v0 = kernel.zero_lag();
  out.seed = seed;
  if (!out.theta.allFinite()) {
    fail(ErrorKind::Numerical, "sampled frequencies contain non-finite values");
  }
  return out;
}

/// 2l x n feature matrix with rows interleaved as
/// (cos th_1^T x, sin th_1^T x, cos th_2^T x, ...) scaled by sqrt(v0/l);
/// every column then has squared norm v0 and column inner products realize
/// the Monte Carlo kernel K_l.
template <class Scalar>
Matrix<Scalar> feature_matrix(const FrequencySet<Scalar>& freqs,
                              const Matrix<Scalar>& data) {
  if (data.cols() != freqs.dim()) {
    fail(ErrorKind::Dimension,
         "feature_matrix: data has " + std::to_string(data.cols()) +
             " columns but frequencies have dimension " +
             std::to_string(freqs.dim()));
  }
  const Index l = freqs.count();
  const Index n = data.rows();
  const Matrix<Scalar> proj = data * freqs.theta.transpose();  // n x l
  const Scalar scale = std::sqrt(freqs.v0 / static_cast<Scalar>(l));
  Matrix<Scalar> phi(2 * l, n);
  for (Index i = 0; i < l; ++i) {
    phi.row(2 * i) = scale * proj.col(i).array().cos().matrix().transpose();
    phi.row(2 * i + 1) = scale * proj.col(i).array().sin().matrix().transpose();
  }
  return phi;
}

/// K_l(x, y) = <Phi_l(x), Phi_l(y)> evaluated through the trig identity
/// cos a cos b + sin a sin b = cos(a - b); agrees with the feature-matrix
/// column inner product to roundoff.
template <class Scalar, class DerivedX, class DerivedY>
Scalar approx_kernel(const FrequencySet<Scalar>& freqs,
                     const Eigen::MatrixBase<DerivedX>& x,
                     const Eigen::MatrixBase<DerivedY>& y) {
  if (x.size() != y.size() || x.size() != freqs.dim()) {
    fail(ErrorKind::Dimension, "approx_kernel: dimension mismatch");
  }
  Vector<Scalar> delta = (x - y).reshaped();
  return freqs.v0 * (freqs.theta * delta).array().cos().mean();
}

/// Adapter letting the frozen approximate kernel stand in wherever a Kernel
/// is used through its eval/gram surface.
template <class Scalar>
struct FeatureKernel {
  const FrequencySet<Scalar>& freqs;
};

template <class Scalar, class DerivedX, class DerivedY>
Scalar eval(const FeatureKernel<Scalar>& kernel,
            const Eigen::MatrixBase<DerivedX>& x,
            const Eigen::MatrixBase<DerivedY>& y) {
  return approx_kernel(kernel.freqs, x, y);
}

template <class Scalar>
Matrix<Scalar> gram(const FeatureKernel<Scalar>& kernel,
                    const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  if (a.cols() != b.cols() || a.cols() != kernel.freqs.dim()) {
    fail(ErrorKind::Dimension, "feature-kernel gram: dimension mismatch");
  }
  return feature_matrix(kernel.freqs, a).transpose() *
         feature_matrix(kernel.freqs, b);
}

}  // namespace specmmd
