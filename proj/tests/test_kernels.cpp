#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "steinflow/eval.hpp"
#include "steinflow/kernels.hpp"

#include <cmath>

using namespace steinflow;
using kernels::BandwidthMode;
using kernels::RbfKernel;

TEST_CASE("median bandwidth by direct enumeration") {
  Mat pts(3, 2);
  pts << 0.0, 0.0, 1.0, 0.0, 0.0, 1.0;
  // squared distances {1, 1, 2} -> median 1
  CHECK(kernels::median_bandwidth(pts) == doctest::Approx(1.0));
}

TEST_CASE("median bandwidth degenerate fallbacks") {
  Mat one(1, 2);
  one << 3.0, 4.0;
  CHECK(kernels::median_bandwidth(one) == 1.0);

  Mat same(2, 2);
  same << 1.0, 1.0, 1.0, 1.0;
  CHECK(kernels::median_bandwidth(same) == 1.0);

  CHECK_THROWS_AS(kernels::median_bandwidth(Mat(0, 2)), std::invalid_argument);
}

TEST_CASE("median bandwidth unsquared mode") {
  Mat pts(2, 1);
  pts << 0.0, 3.0;
  CHECK(kernels::median_bandwidth(pts, BandwidthMode::Squared) == doctest::Approx(9.0));
  CHECK(kernels::median_bandwidth(pts, BandwidthMode::Unsquared) == doctest::Approx(3.0));
}

TEST_CASE("eval examples") {
  RbfKernel k1{1.0};
  const Vec a = (Vec(2) << 0.0, 0.0).finished();
  const Vec b = (Vec(2) << 1.0, 0.0).finished();
  CHECK(kernels::eval(k1, a, a) == 1.0);
  CHECK(kernels::eval(k1, a, b) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  RbfKernel k2{2.0};
  CHECK(kernels::eval(k2, a, b) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK_THROWS_AS(kernels::eval(k1, a, Vec::Zero(3)), std::invalid_argument);
}

TEST_CASE("grad_first examples") {
  RbfKernel k{1.0};
  const Vec x = (Vec(2) << 1.0, 0.0).finished();
  const Vec y = Vec::Zero(2);
  CHECK(kernels::grad_first(k, y, y).norm() == 0.0);
  const Vec g = kernels::grad_first(k, x, y);
  CHECK(g[0] == doctest::Approx(-2.0 * std::exp(-1.0)).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(0.0));
}

TEST_CASE("grad_first matches finite differences") {
  RngStream rng(21, 0);
  for (int t = 0; t < 20; ++t) {
    RbfKernel k{0.3 + 2.0 * rng.uniform()};
    const Vec y = sample_gaussian(rng, 3);
    const Vec x0 = sample_gaussian(rng, 3);
    const double err = eval::grad_check(
        [&](const Vec& x) { return kernels::eval(k, x, y); },
        [&](const Vec& x) { return kernels::grad_first(k, x, y); }, x0, 1e-6);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("symmetry and antisymmetry properties") {
  RngStream rng(22, 0);
  for (int t = 0; t < 30; ++t) {
    RbfKernel k{0.5 + rng.uniform()};
    const Vec x = sample_gaussian(rng, 4);
    const Vec y = sample_gaussian(rng, 4);
    CHECK(kernels::eval(k, x, y) == kernels::eval(k, y, x));
    CHECK((kernels::grad_first(k, x, y) + kernels::grad_first(k, y, x)).norm() == 0.0);
  }
}

TEST_CASE("bandwidth scaling property") {
  RngStream rng(23, 0);
  for (int t = 0; t < 20; ++t) {
    const int m = 3 + static_cast<int>(rng.below(5));
    Mat pts(m, 2);
    for (int i = 0; i < m; ++i) pts.row(i) = sample_gaussian(rng, 2).transpose();
    const double c = 0.5 + 2.0 * rng.uniform();
    const double h = kernels::median_bandwidth(pts);
    const double hc = kernels::median_bandwidth(Mat(c * pts));
    CHECK(hc == doctest::Approx(c * c * h).epsilon(1e-12));
  }
}

TEST_CASE("kernel policy resolution") {
  Mat pts(2, 1);
  pts << 0.0, 2.0;
  CHECK(kernels::KernelPolicy::median().resolve(pts).h == doctest::Approx(4.0));
  CHECK(kernels::KernelPolicy::fixed(7.5).resolve(pts).h == 7.5);
}
