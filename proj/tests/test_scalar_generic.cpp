#include <doctest.h>

#include <cmath>

#include "specmmd/estimators.hpp"
#include "specmmd/features.hpp"
#include "specmmd/kernels.hpp"
#include "specmmd/regularizers.hpp"

using namespace specmmd;

// The core is templated on the scalar; exercise a float instantiation end
// to end so the genericity is more than a compile-time claim.
TEST_CASE("float instantiation of the statistic pipeline") {
  using Mat = Matrix<float>;
  const Kernel<float> kernel(KernelFamily::GaussianRBF, 1.0f);
  const Regularizer<float> reg(RegularizerFamily::Showalter, 0.2f);

  rng::Stream stream(4, 0);
  const auto fill = [&](Index r, Index c) {
    Mat m(r, c);
    for (Index i = 0; i < r; ++i) {
      for (Index j = 0; j < c; ++j) m(i, j) = static_cast<float>(stream.normal());
    }
    return m;
  };
  SplitData<float> sd;
  sd.x_main = fill(6, 2);
  sd.y_main = fill(5, 2);
  sd.z = fill(4, 2);

  const Mat g = gram(kernel, sd.x_main, sd.x_main);
  CHECK((g - g.transpose()).cwiseAbs().maxCoeff() == 0.0f);
  for (Index i = 0; i < g.rows(); ++i) {
    CHECK(g(i, i) == doctest::Approx(1.0f));
  }

  const auto freqs = sample_frequencies(kernel, 3, 2, 9);
  const Mat phi = feature_matrix(freqs, sd.x_main);
  for (Index j = 0; j < phi.cols(); ++j) {
    CHECK(phi.col(j).squaredNorm() == doctest::Approx(1.0f).epsilon(1e-5));
  }

  // identity reduction still holds at float precision
  const Regularizer<float> id(RegularizerFamily::Identity, 1.0f);
  const float via_spectral = exact_statistic(kernel, id, sd);
  const float via_mmd = mmd_u(kernel, sd.x_main, sd.y_main);
  CHECK(via_spectral == doctest::Approx(via_mmd).epsilon(1e-4));
  const float rff = rff_statistic(freqs, id, sd);
  const float rff_mmd = mmd_rff(freqs, sd.x_main, sd.y_main, MmdFlavor::U);
  CHECK(rff == doctest::Approx(rff_mmd).epsilon(1e-4));
}
