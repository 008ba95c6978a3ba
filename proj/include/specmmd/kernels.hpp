#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "specmmd/error.hpp"
#include "specmmd/rng.hpp"
#include "specmmd/threads.hpp"
#include "specmmd/types.hpp"

namespace specmmd {

// Translation-invariant kernels on R^d:
//   GaussianRBF: K(x,y) = exp(-||x-y||_2^2 / (2h))
//   Laplace:     K(x,y) = exp(-||x-y||_1 / h)
// Both have K(x,x) = 1, so the zero-lag value v(0) = 1 and kappa = 1.
//
// The family enum is closed: these are the two kernels with verified
// spectral samplers. The statistic paths themselves are generic over any
// type with eval()/gram() overloads found by ADL (see FeatureKernel in
// features.hpp), which is the seam for additional kernels.

enum class KernelFamily { GaussianRBF, Laplace };

template <class Scalar>
struct Kernel {
  KernelFamily family;
  Scalar bandwidth;

  Kernel(KernelFamily f, Scalar h) : family(f), bandwidth(h) {
    if (!(h > Scalar(0)) || !std::isfinite(static_cast<double>(h))) {
      fail(ErrorKind::InvalidArgument,
           "kernel bandwidth must be positive and finite, got " +
               std::to_string(static_cast<double>(h)));
    }
  }

  Scalar zero_lag() const { return Scalar(1); }
};

using Kerneld = Kernel<double>;

template <class Scalar, class DerivedX, class DerivedY>
Scalar eval(const Kernel<Scalar>& kernel, const Eigen::MatrixBase<DerivedX>& x,
            const Eigen::MatrixBase<DerivedY>& y) {
  if (x.size() != y.size()) {
    fail(ErrorKind::Dimension,
         "kernel eval: dimension mismatch (" + std::to_string(x.size()) +
             " vs " + std::to_string(y.size()) + ")");
  }
  switch (kernel.family) {
    case KernelFamily::GaussianRBF:
      return std::exp(-(x - y).squaredNorm() / (Scalar(2) * kernel.bandwidth));
    case KernelFamily::Laplace:
      return std::exp(-(x - y).cwiseAbs().sum() / kernel.bandwidth);
  }
  fail(ErrorKind::InvalidArgument, "unknown kernel family");
}

/// Dense Gram matrix [K(A_i, B_j)]; rows of A and B are observations.
template <class Scalar>
Matrix<Scalar> gram(const Kernel<Scalar>& kernel, const Matrix<Scalar>& a,
                    const Matrix<Scalar>& b) {
  if (a.cols() != b.cols()) {
    fail(ErrorKind::Dimension,
         "gram: column count mismatch (" + std::to_string(a.cols()) + " vs " +
             std::to_string(b.cols()) + ")");
  }
  Matrix<Scalar> out(a.rows(), b.rows());
  const auto fill_row = [&](std::size_t i) {
    const auto xi = a.row(static_cast<Index>(i));
    for (Index j = 0; j < b.rows(); ++j) {
      out(static_cast<Index>(i), j) = eval(kernel, xi, b.row(j));
    }
  };
  if (a.rows() >= 256) {
    threads::parallel_for(0, static_cast<std::size_t>(a.rows()), fill_row);
  } else {
    for (Index i = 0; i < a.rows(); ++i) fill_row(static_cast<std::size_t>(i));
  }
  return out;
}

/// Per-coordinate law of the spectral distribution Xi (the inverse Fourier
/// transform of the kernel shape): coordinates are i.i.d. under both
/// built-in families.
enum class SpectralLaw { Normal, Cauchy };

template <class Scalar>
struct SpectralSampler {
  SpectralLaw law;
  Scalar scale;  // std deviation (Normal) or Cauchy scale

  Scalar draw(rng::Stream& stream) const {
    if (law == SpectralLaw::Normal) {
      return scale * static_cast<Scalar>(stream.normal());
    }
    return scale * static_cast<Scalar>(stream.cauchy());
  }
};

/// GaussianRBF(h) -> N(0, 1/h) per coordinate; Laplace(h) -> Cauchy(0, 1/h).
/// Either way E[cos(theta^T d)] reproduces K(0, d).
template <class Scalar>
SpectralSampler<Scalar> spectral_sampler(const Kernel<Scalar>& kernel) {
  switch (kernel.family) {
    case KernelFamily::GaussianRBF:
      return {SpectralLaw::Normal, std::sqrt(Scalar(1) / kernel.bandwidth)};
    case KernelFamily::Laplace:
      return {SpectralLaw::Cauchy, Scalar(1) / kernel.bandwidth};
  }
  fail(ErrorKind::InvalidArgument, "unknown kernel family");
}

// ---------------------------------------------------------------------------
// Spec strings: "gaussian:h=<float>", "laplace:h=<float>", and grid form
// "gaussian:h=logspace(a,b,n)" meaning {10^(a + i*(b-a)/(n-1)) : i=0..n-1}.
// ---------------------------------------------------------------------------

inline std::vector<double> logspace(double lo, double hi, int count) {
  if (count < 1) fail(ErrorKind::Parse, "logspace: count must be >= 1");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(count));
  if (count == 1) {
    out.push_back(std::pow(10.0, lo));
    return out;
  }
  const double step = (hi - lo) / static_cast<double>(count - 1);
  for (int i = 0; i < count; ++i) {
    out.push_back(std::pow(10.0, lo + step * i));
  }
  return out;
}

namespace detail {

inline double parse_double(const std::string& text, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::Parse, "cannot parse " + what + " from '" + text + "'");
  }
}

/// Parses "logspace(a,b,n)"; returns false if text is not of that shape.
inline bool parse_logspace(const std::string& text, std::vector<double>& out) {
  if (text.rfind("logspace(", 0) != 0 || text.back() != ')') return false;
  const std::string inner = text.substr(9, text.size() - 10);
  std::istringstream ss(inner);
  std::string a, b, n;
  if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') ||
      !std::getline(ss, n, ',')) {
    fail(ErrorKind::Parse, "malformed logspace spec '" + text + "'");
  }
  const double lo = parse_double(a, "logspace start");
  const double hi = parse_double(b, "logspace end");
  const double cnt = parse_double(n, "logspace count");
  if (cnt < 1 || cnt != std::floor(cnt)) {
    fail(ErrorKind::Parse, "logspace count must be a positive integer");
  }
  out = logspace(lo, hi, static_cast<int>(cnt));
  return true;
}

}  // namespace detail

inline KernelFamily parse_kernel_family(const std::string& name) {
  if (name == "gaussian") return KernelFamily::GaussianRBF;
  if (name == "laplace") return KernelFamily::Laplace;
  fail(ErrorKind::Parse,
       "unknown kernel family '" + name + "' (valid: gaussian, laplace)");
}

/// "gaussian:h=0.5" -> one kernel; "gaussian:h=logspace(-2,2,9)" -> grid.
inline std::vector<Kerneld> parse_kernel_grid(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) {
    fail(ErrorKind::Parse, "kernel spec '" + spec +
                               "' must look like gaussian:h=<float> or "
                               "gaussian:h=logspace(a,b,n)");
  }
  const KernelFamily family = parse_kernel_family(spec.substr(0, colon));
  std::string rhs = spec.substr(colon + 1);
  if (rhs.rfind("h=", 0) != 0) {
    fail(ErrorKind::Parse, "kernel spec '" + spec + "' must set h=");
  }
  rhs = rhs.substr(2);
  std::vector<double> bandwidths;
  if (!detail::parse_logspace(rhs, bandwidths)) {
    bandwidths = {detail::parse_double(rhs, "bandwidth")};
  }
  std::vector<Kerneld> grid;
  grid.reserve(bandwidths.size());
  for (double h : bandwidths) grid.emplace_back(family, h);
  return grid;
}

inline Kerneld parse_kernel(const std::string& spec) {
  const auto grid = parse_kernel_grid(spec);
  if (grid.size() != 1) {
    fail(ErrorKind::Parse, "expected a single kernel, got a grid: " + spec);
  }
  return grid.front();
}

inline std::string kernel_spec_string(const Kerneld& kernel) {
  std::ostringstream ss;
  ss.precision(12);
  ss << (kernel.family == KernelFamily::GaussianRBF ? "gaussian" : "laplace")
     << ":h=" << kernel.bandwidth;
  return ss.str();
}

}  // namespace specmmd
