#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "specmmd/error.hpp"
#include "specmmd/kernels.hpp"
#include "specmmd/types.hpp"

namespace specmmd {

// Spectral functions g_lambda applied to covariance eigenvalues:
//   Tikhonov:  g(x) = 1/(x + lambda)
//   Showalter: g(x) = (1 - exp(-x/lambda))/x for x > 0, 1/lambda at x = 0
//   Identity:  g(x) = 1 (test fixture; reduces the statistic to plain MMD)

enum class RegularizerFamily { Tikhonov, Showalter, Identity };

template <class Scalar>
struct Regularizer {
  RegularizerFamily family;
  Scalar lambda;

  Regularizer(RegularizerFamily f, Scalar lam) : family(f), lambda(lam) {
    if (f != RegularizerFamily::Identity &&
        (!(lam > Scalar(0)) || !std::isfinite(static_cast<double>(lam)))) {
      fail(ErrorKind::InvalidArgument,
           "regularizer lambda must be positive and finite, got " +
               std::to_string(static_cast<double>(lam)));
    }
  }
};

using Regularizerd = Regularizer<double>;

template <class Scalar>
Scalar g_zero(const Regularizer<Scalar>& reg) {
  switch (reg.family) {
    case RegularizerFamily::Tikhonov:
    case RegularizerFamily::Showalter:
      return Scalar(1) / reg.lambda;
    case RegularizerFamily::Identity:
      return Scalar(1);
  }
  fail(ErrorKind::InvalidArgument, "unknown regularizer family");
}

template <class Scalar>
Scalar eval_g(const Regularizer<Scalar>& reg, Scalar x) {
  if (x < Scalar(0)) {
    fail(ErrorKind::InvalidArgument,
         "eval_g: x must be nonnegative, got " +
             std::to_string(static_cast<double>(x)));
  }
  switch (reg.family) {
    case RegularizerFamily::Tikhonov:
      return Scalar(1) / (x + reg.lambda);
    case RegularizerFamily::Showalter: {
      const Scalar lam = reg.lambda;
      if (x < Scalar(1e-8) * lam) {
        // (1 - e^{-x/l})/x cancels catastrophically at tiny x; the 3-term
        // expansion (1/l)(1 - x/(2l) + x^2/(6l^2)) is exact to ~1e-24 there.
        const Scalar t = x / lam;
        return (Scalar(1) - t / Scalar(2) + t * t / Scalar(6)) / lam;
      }
      return (Scalar(1) - std::exp(-x / lam)) / x;
    }
    case RegularizerFamily::Identity:
      return Scalar(1);
  }
  fail(ErrorKind::InvalidArgument, "unknown regularizer family");
}

/// (g(x) - g(0)) / x evaluated without differencing; the naive form loses
/// all precision when x << lambda. Requires x > 0.
template <class Scalar>
Scalar eval_g_ratio(const Regularizer<Scalar>& reg, Scalar x) {
  if (!(x > Scalar(0))) {
    fail(ErrorKind::InvalidArgument, "eval_g_ratio: x must be positive");
  }
  switch (reg.family) {
    case RegularizerFamily::Tikhonov:
      // (1/(x+l) - 1/l)/x = -1/(l(x+l))
      return Scalar(-1) / (reg.lambda * (x + reg.lambda));
    case RegularizerFamily::Showalter: {
      // (g(x)-g(0))/x = psi(t)/l^2 with t = x/l and
      // psi(t) = (1 - e^{-t} - t)/t^2 = -1/2 + t/6 - t^2/24 + ...
      const Scalar lam = reg.lambda;
      const Scalar t = x / lam;
      Scalar psi;
      if (t <= Scalar(0.05)) {
        psi = Scalar(-0.5) +
              t * (Scalar(1) / Scalar(6) +
                   t * (Scalar(-1) / Scalar(24) +
                        t * (Scalar(1) / Scalar(120) +
                             t * (Scalar(-1) / Scalar(720) +
                                  t * (Scalar(1) / Scalar(5040))))));
      } else {
        psi = (Scalar(1) - std::exp(-t) - t) / (t * t);
      }
      return psi / (lam * lam);
    }
    case RegularizerFamily::Identity:
      return Scalar(0);
  }
  fail(ErrorKind::InvalidArgument, "unknown regularizer family");
}

struct ContractReport {
  double c1 = 0;    // sup |x g(x)|
  double c2 = 0;    // sup |lambda g(x)|
  double c4 = 0;    // inf g(x)(x + lambda)
  bool pass = false;
};

/// Empirical check of the regularizer contract on [0, kappa]: the bounds
/// C1 <= 1, C2 <= 1 and C4 >= 1 - 1/e hold analytically for Tikhonov and
/// Showalter; evaluating them on a grid guards the implementation.
template <class Scalar>
ContractReport check_contract(const Regularizer<Scalar>& reg, Scalar kappa,
                              int grid_size) {
  if (!(kappa > Scalar(0))) {
    fail(ErrorKind::InvalidArgument, "check_contract: kappa must be positive");
  }
  if (grid_size < 10) {
    fail(ErrorKind::InvalidArgument, "check_contract: grid_size must be >= 10");
  }
  const double k = static_cast<double>(kappa);
  std::vector<double> grid = logspace(std::log10(k) - 12.0, std::log10(k),
                                      grid_size - 1);
  grid.insert(grid.begin(), 0.0);

  ContractReport report;
  report.c4 = std::numeric_limits<double>::infinity();
  const double lam = static_cast<double>(
      reg.family == RegularizerFamily::Identity ? Scalar(1) : reg.lambda);
  for (double x : grid) {
    const double g = static_cast<double>(eval_g(reg, static_cast<Scalar>(x)));
    report.c1 = std::max(report.c1, std::abs(x * g));
    report.c2 = std::max(report.c2, std::abs(lam * g));
    report.c4 = std::min(report.c4, g * (x + lam));
  }
  report.pass = report.c1 <= 1.0 + 1e-12 && report.c2 <= 1.0 + 1e-12 &&
                report.c4 >= 1.0 - std::exp(-1.0) - 1e-12;
  return report;
}

inline RegularizerFamily parse_regularizer_family(const std::string& name) {
  if (name == "tikhonov") return RegularizerFamily::Tikhonov;
  if (name == "showalter") return RegularizerFamily::Showalter;
  if (name == "identity") return RegularizerFamily::Identity;
  fail(ErrorKind::Parse, "unknown regularizer '" + name +
                             "' (valid: tikhonov, showalter, identity)");
}

inline std::string regularizer_family_name(RegularizerFamily family) {
  switch (family) {
    case RegularizerFamily::Tikhonov: return "tikhonov";
    case RegularizerFamily::Showalter: return "showalter";
    case RegularizerFamily::Identity: return "identity";
  }
  return "?";
}

/// The default grid {10^(-6 + 0.75 i) : i = 0..9}.
inline std::vector<double> default_lambda_grid() {
  return logspace(-6.0, 0.75, 10);
}

/// Accepts "logspace(a,b,n)" with an optional "lambda=" prefix, or a single
/// positive value.
inline std::vector<double> parse_lambda_grid(const std::string& spec) {
  std::string body = spec;
  if (body.rfind("lambda=", 0) == 0) body = body.substr(7);
  std::vector<double> grid;
  if (!detail::parse_logspace(body, grid)) {
    grid = {detail::parse_double(body, "lambda")};
  }
  for (double lam : grid) {
    if (!(lam > 0)) fail(ErrorKind::Parse, "lambda grid values must be > 0");
  }
  return grid;
}

}  // namespace specmmd
