#include <doctest.h>

#include <cmath>

#include "specmmd/error.hpp"
#include "specmmd/estimators.hpp"
#include "test_support.hpp"

using namespace specmmd;
using testsupport::random_matrix;
using testsupport::random_split;
using testsupport::relative_gap;

TEST_CASE("split holds out the trailing rows and mixes them by coin flips") {
  Matrixd x(4, 1), y(4, 1);
  x << 1, 2, 3, 4;
  y << 10, 20, 30, 40;

  // find a seed whose first two coin flips are (X, Y); the split contract
  // then forces z = [x_3; y_4] in 1-based row numbering
  std::uint64_t seed = 0;
  for (;; ++seed) {
    rng::Stream stream(seed, rng::stream::kBernoulli);
    const bool a1 = stream.bernoulli_half();
    const bool a2 = stream.bernoulli_half();
    if (a1 && !a2) break;
  }
  const SplitDatad sd = split(x, y, 2, seed);
  CHECK(sd.n() == 2);
  CHECK(sd.m() == 2);
  CHECK(sd.z(0, 0) == 3.0);
  CHECK(sd.z(1, 0) == 40.0);
  CHECK(sd.x_main(0, 0) == 1.0);
  CHECK(sd.y_main(1, 0) == 20.0);

  // every z row is one of the held-out rows verbatim
  for (std::uint64_t probe = 0; probe < 16; ++probe) {
    const SplitDatad any = split(x, y, 2, probe);
    for (Index i = 0; i < 2; ++i) {
      const double v = any.z(i, 0);
      const bool from_x = v == x(2 + i, 0);
      const bool from_y = v == y(2 + i, 0);
      CHECK((from_x || from_y));
    }
  }
}

TEST_CASE("split rejects infeasible sizes with the violated bound named") {
  Matrixd x = random_matrix(4, 1, 1);
  Matrixd y = random_matrix(4, 1, 2);
  CHECK_THROWS_WITH_AS(split(x, y, 3, 0),
                       doctest::Contains("n = N - s = 1"), Error);
  CHECK_THROWS_AS(split(x, y, 1, 0), Error);
  const Matrixd big_x = random_matrix(200, 2, 3);
  const Matrixd big_y = random_matrix(200, 2, 4);
  const SplitDatad sd = split(big_x, big_y, 20, 5);
  CHECK(sd.n() == 180);
  CHECK(sd.m() == 180);
  CHECK(sd.s() == 20);
}

TEST_CASE("split is deterministic in the seed") {
  const Matrixd x = random_matrix(12, 2, 6);
  const Matrixd y = random_matrix(12, 2, 7);
  const SplitDatad a = split(x, y, 4, 99);
  const SplitDatad b = split(x, y, 4, 99);
  CHECK((a.z - b.z).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mmd_u closed-form examples") {
  const Kerneld gauss(KernelFamily::GaussianRBF, 1.0);
  Matrixd x(2, 1), y(2, 1);
  x << 0, 0;
  y << 0, 0;
  CHECK(mmd_u(gauss, x, y) == doctest::Approx(0.0).epsilon(1e-15));

  const double a = std::sqrt(2.0 * std::log(2.0));
  y << a, a;
  CHECK(mmd_u(gauss, x, y) == doctest::Approx(1.0).epsilon(1e-12));

  const Matrixd x_single = x.topRows(1);
  CHECK_THROWS_AS(mmd_u(gauss, x_single, y), Error);
}

TEST_CASE("mmd_u matches the triple-loop oracle") {
  const Kerneld kernel(KernelFamily::Laplace, 0.9);
  const Matrixd x = random_matrix(6, 2, 8);
  const Matrixd y = random_matrix(6, 2, 9, 0.5);
  CHECK(std::abs(mmd_u(kernel, x, y) -
                 testsupport::mmd_u_bruteforce(kernel, x, y)) < 1e-12);
}

TEST_CASE("mmd_rff examples and the U-flavor oracle") {
  const Kerneld kernel(KernelFamily::GaussianRBF, 1.0);
  const auto freqs = sample_frequencies(kernel, 4, 2, 10);
  const Matrixd x = random_matrix(5, 2, 11);

  CHECK(mmd_rff(freqs, x, x, MmdFlavor::V) ==
        doctest::Approx(0.0).epsilon(1e-15));
  CHECK(mmd_rff(freqs, x, x, MmdFlavor::V) >= 0.0);

  // U flavor equals mmd_u under the frozen approximate kernel
  const Matrixd y = random_matrix(5, 2, 12, 0.4);
  const FeatureKernel<double> approx{freqs};
  CHECK(std::abs(mmd_rff(freqs, x, y, MmdFlavor::U) -
                 testsupport::mmd_u_bruteforce(approx, x, y)) < 1e-12);

  // one zero frequency makes every feature column identical
  FrequencySetd zero;
  zero.theta = Matrixd::Zero(1, 2);
  CHECK(mmd_rff(zero, x, y, MmdFlavor::V) ==
        doctest::Approx(0.0).epsilon(1e-15));

  // V is always nonnegative
  for (int trial = 0; trial < 20; ++trial) {
    const Matrixd xx = random_matrix(4, 2, 100 + trial);
    const Matrixd yy = random_matrix(6, 2, 200 + trial, 1.0);
    CHECK(mmd_rff(freqs, xx, yy, MmdFlavor::V) >= 0.0);
  }
}

TEST_CASE("identity regularizer reduces both paths to plain MMD") {
  const Regularizerd id(RegularizerFamily::Identity, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto seed = static_cast<std::uint64_t>(300 + 7 * trial);
    const SplitDatad sd = random_split(8, 7, 5, 2, seed);
    const Kerneld kernel(KernelFamily::GaussianRBF, 0.8);
    CHECK(std::abs(exact_statistic(kernel, id, sd) -
                   mmd_u(kernel, sd.x_main, sd.y_main)) < 1e-10);

    const auto freqs = sample_frequencies(kernel, 3, 2, seed + 5);
    CHECK(std::abs(rff_statistic(freqs, id, sd) -
                   mmd_rff(freqs, sd.x_main, sd.y_main, MmdFlavor::U)) <
          1e-10);
  }
}

TEST_CASE("large-lambda tikhonov limit recovers MMD") {
  const Regularizerd tik(RegularizerFamily::Tikhonov, 1e6);
  const Kerneld kernel(KernelFamily::GaussianRBF, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto seed = static_cast<std::uint64_t>(400 + trial);
    SplitDatad sd = random_split(8, 8, 5, 2, seed, /*y_shift=*/2.0);
    const double mmd = mmd_u(kernel, sd.x_main, sd.y_main);
    REQUIRE(std::abs(mmd) > 1e-3);
    const double limit = 1e6 * exact_statistic(kernel, tik, sd);
    CHECK(relative_gap(limit, mmd) < 1e-4);
  }
}

TEST_CASE("constant data drives both statistics to zero") {
  SplitDatad sd;
  sd.x_main = Matrixd::Ones(5, 2);
  sd.y_main = Matrixd::Ones(6, 2);
  sd.z = Matrixd::Ones(4, 2);
  const Kerneld kernel(KernelFamily::GaussianRBF, 1.0);
  const Regularizerd show(RegularizerFamily::Showalter, 0.3);
  CHECK(std::abs(exact_statistic(kernel, show, sd)) < 1e-10);
  const auto freqs = sample_frequencies(kernel, 3, 2, 77);
  CHECK(std::abs(rff_statistic(freqs, show, sd)) < 1e-10);
}

TEST_CASE("rff statistic matches the quartic-loop oracle") {
  for (int trial = 0; trial < 20; ++trial) {
    const auto seed = static_cast<std::uint64_t>(500 + 11 * trial);
    const SplitDatad sd = random_split(8, 8, 4, 2, seed);
    const Kerneld kernel(KernelFamily::GaussianRBF, 1.0);
    const auto freqs = sample_frequencies(kernel, 3, 2, seed + 3);
    const auto family = trial % 2 == 0 ? RegularizerFamily::Tikhonov
                                       : RegularizerFamily::Showalter;
    const Regularizerd reg(family, 0.05 + 0.2 * (trial % 5));
    const double impl = rff_statistic(freqs, reg, sd);
    const double oracle = testsupport::quartic_statistic_oracle(freqs, reg, sd);
    CHECK(std::abs(impl - oracle) < 1e-9);
  }
}

TEST_CASE("dual-path equivalence on frozen frequencies") {
  rng::Stream pick(600, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto seed = static_cast<std::uint64_t>(700 + 13 * trial);
    const Index n = 4 + static_cast<Index>(pick.next_u64() % 17);
    const Index m = 4 + static_cast<Index>(pick.next_u64() % 17);
    const Index s = 3 + static_cast<Index>(pick.next_u64() % 8);
    const Index d = 1 + static_cast<Index>(pick.next_u64() % 3);
    const Index l = 1 + static_cast<Index>(pick.next_u64() % 5);
    const SplitDatad sd = random_split(n, m, s, d, seed);
    const Kerneld kernel(KernelFamily::GaussianRBF, 1.0);
    const auto freqs = sample_frequencies(kernel, l, d, seed + 1);
    const auto family = trial % 2 == 0 ? RegularizerFamily::Tikhonov
                                       : RegularizerFamily::Showalter;
    const Regularizerd reg(family,
                           std::pow(10.0, -3.0 + 3.0 * pick.next_unit()));
    const double via_gram =
        exact_statistic(FeatureKernel<double>{freqs}, reg, sd);
    const double via_features = rff_statistic(freqs, reg, sd);
    CHECK(relative_gap(via_gram, via_features) < 1e-8);
  }
}

TEST_CASE("dual route for the covariance eigensystem (2l > s)") {
  // high feature count exercises the thin decomposition branch
  const Kerneld kernel(KernelFamily::GaussianRBF, 1.0);
  const auto freqs = sample_frequencies(kernel, 32, 2, 800);  // 2l = 64 > s
  const SplitDatad sd = random_split(6, 6, 5, 2, 801);
  const Regularizerd reg(RegularizerFamily::Showalter, 0.2);
  const double impl = rff_statistic(freqs, reg, sd);
  const double oracle = testsupport::quartic_statistic_oracle(freqs, reg, sd);
  CHECK(std::abs(impl - oracle) < 1e-9);
}

TEST_CASE("statistics are invariant to within-group permutations") {
  const SplitDatad sd = random_split(7, 6, 5, 2, 900);
  const Kerneld kernel(KernelFamily::GaussianRBF, 0.6);
  const Regularizerd reg(RegularizerFamily::Tikhonov, 0.1);
  const auto freqs = sample_frequencies(kernel, 4, 2, 901);

  const double base_exact = exact_statistic(kernel, reg, sd);
  const double base_rff = rff_statistic(freqs, reg, sd);

  SplitDatad perm = sd;
  const Index order_x[7] = {3, 0, 6, 2, 5, 1, 4};
  for (Index i = 0; i < 7; ++i) perm.x_main.row(i) = sd.x_main.row(order_x[i]);
  const Index order_z[5] = {4, 1, 0, 3, 2};
  for (Index i = 0; i < 5; ++i) perm.z.row(i) = sd.z.row(order_z[i]);
  CHECK(std::abs(exact_statistic(kernel, reg, perm) - base_exact) < 1e-12);
  CHECK(std::abs(rff_statistic(freqs, reg, perm) - base_rff) < 1e-12);
}

TEST_CASE("statistics are symmetric in the two samples when n = m") {
  const SplitDatad sd = random_split(6, 6, 4, 2, 910);
  SplitDatad swapped = sd;
  std::swap(swapped.x_main, swapped.y_main);
  const Kerneld kernel(KernelFamily::Laplace, 1.1);
  const Regularizerd reg(RegularizerFamily::Showalter, 0.4);
  const auto freqs = sample_frequencies(kernel, 3, 2, 911);
  CHECK(exact_statistic(kernel, reg, sd) ==
        doctest::Approx(exact_statistic(kernel, reg, swapped)).epsilon(1e-12));
  CHECK(rff_statistic(freqs, reg, sd) ==
        doctest::Approx(rff_statistic(freqs, reg, swapped)).epsilon(1e-12));
}

TEST_CASE("rff statistic dips below zero at most by the removed diagonal mass") {
  // eta = ||vX/n - vY/m||^2 + ||vX||^2/(n^2(n-1)) + ||vY||^2/(m^2(m-1))
  //       - DX/(n(n-1)) - DY/(m(m-1)) with DX, DY >= 0, so the U-statistic
  // can only dip negative by the two diagonal-mass terms.
  for (int trial = 0; trial < 30; ++trial) {
    const auto seed = static_cast<std::uint64_t>(2200 + trial);
    const Index n = 4 + trial % 5;
    const Index m = 4 + trial % 7;
    const SplitDatad sd = random_split(n, m, 4, 2, seed, 0.0);
    const Kerneld kernel(KernelFamily::GaussianRBF, 1.0);
    const auto freqs = sample_frequencies(kernel, 3, 2, seed + 1);
    const Regularizerd reg(RegularizerFamily::Showalter, 0.1);

    const auto cov = feature_covariance_eig(feature_matrix(freqs, sd.z));
    const Matrixd psi_x =
        apply_sqrt_g(cov, reg, feature_matrix(freqs, sd.x_main));
    const Matrixd psi_y =
        apply_sqrt_g(cov, reg, feature_matrix(freqs, sd.y_main));
    const double vx_sq = psi_x.rowwise().sum().squaredNorm();
    const double vy_sq = psi_y.rowwise().sum().squaredNorm();
    CHECK(vx_sq >= 0.0);
    CHECK(vy_sq >= 0.0);
    const double diag_x = psi_x.colwise().squaredNorm().sum();
    const double diag_y = psi_y.colwise().squaredNorm().sum();
    const double floor = -(diag_x / static_cast<double>(n) / (n - 1) +
                           diag_y / static_cast<double>(m) / (m - 1));
    CHECK(rff_statistic(freqs, reg, sd) >= floor - 1e-12);
  }
}

TEST_CASE("effective dimensions") {
  Vectord two = Vectord::Ones(2);
  const auto dims = effective_dims(two, 1.0);
  CHECK(dims.n1 == doctest::Approx(1.0));
  CHECK(dims.n2 == doctest::Approx(std::sqrt(0.5)));

  Vectord one = Vectord::Ones(1);
  const auto tiny = effective_dims(one, 1e9);
  CHECK(tiny.n1 == doctest::Approx(1e-9).epsilon(1e-6));
  CHECK(tiny.n2 == doctest::Approx(1e-9).epsilon(1e-6));

  CHECK_THROWS_AS(effective_dims(one, 0.0), Error);

  // n2 <= sqrt(n1) on random spectra
  rng::Stream stream(12, 0);
  Vectord spectrum(30);
  for (Index i = 0; i < 30; ++i) spectrum(i) = std::abs(stream.normal());
  for (double lambda : {1e-3, 0.1, 1.0}) {
    const auto ed = effective_dims(spectrum, lambda);
    CHECK(ed.n2 <= std::sqrt(ed.n1) + 1e-12);
  }
}

TEST_CASE("effective dimension asymptotics under polynomial decay") {
  const Index count = 10000;
  Vectord evals(count);
  for (Index i = 0; i < count; ++i) {
    const double idx = static_cast<double>(i + 1);
    evals(i) = 1.0 / (idx * idx);
  }
  const auto lambdas = logspace(-4, -2, 9);
  double sxx = 0, sxy = 0, sx = 0, sy = 0;
  for (double lam : lambdas) {
    const double lx = std::log(lam);
    const double ly = std::log(effective_dims(evals, lam).n2);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const auto k = static_cast<double>(lambdas.size());
  const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  CHECK(slope > -0.30);
  CHECK(slope < -0.20);
}
