#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "steinflow/numcore.hpp"

#include <cmath>
#include <vector>

using namespace steinflow;

namespace {

// Brute-force determinant by cofactor expansion; independent of the LU path.
double det_cofactor(const Mat& m) {
  const Eigen::Index n = m.rows();
  if (n == 1) return m(0, 0);
  double det = 0.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    Mat minor(n - 1, n - 1);
    for (Eigen::Index r = 1; r < n; ++r) {
      Eigen::Index at = 0;
      for (Eigen::Index cc = 0; cc < n; ++cc) {
        if (cc == c) continue;
        minor(r - 1, at++) = m(r, cc);
      }
    }
    det += (c % 2 == 0 ? 1.0 : -1.0) * m(0, c) * det_cofactor(minor);
  }
  return det;
}

}  // namespace

TEST_CASE("rng determinism and independence") {
  RngStream a(42, 7);
  RngStream b(42, 7);
  const Vec va = sample_gaussian(a, 5);
  const Vec vb = sample_gaussian(b, 5);
  CHECK(va == vb);

  RngStream c(42, 8);
  const Vec vc = sample_gaussian(c, 5);
  CHECK((va - vc).norm() > 1e-12);

  RngStream d = RngStream(42, 7).substream(3);
  RngStream d2 = RngStream(42, 7).substream(3);
  CHECK(d.next_u64() == d2.next_u64());
  CHECK(RngStream(42, 7).substream(3).next_u64() !=
        RngStream(42, 7).substream(4).next_u64());
}

TEST_CASE("gaussian sampling moments at 1e5 draws") {
  RngStream rng(1234, 0);
  const int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    sum += g;
    sum_sq += g * g;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("sample_gaussian shape and validation") {
  RngStream rng(5, 5);
  CHECK(sample_gaussian(rng, 3).size() == 3);
  CHECK_THROWS_AS(sample_gaussian(rng, 0), std::invalid_argument);
}

TEST_CASE("log_sum_exp examples") {
  const std::vector<double> two_zero = {0.0, 0.0};
  CHECK(log_sum_exp(two_zero) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const std::vector<double> big = {1000.0, 1000.0};
  CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));

  const std::vector<double> mixed = {-1.0, 2.0, 0.5};
  const double direct =
      std::log(std::exp(-1.0) + std::exp(2.0) + std::exp(0.5));
  CHECK(log_sum_exp(mixed) == doctest::Approx(direct).epsilon(1e-12));
  CHECK(log_sum_exp(mixed) == doctest::Approx(2.2818).epsilon(1e-4));

  CHECK_THROWS_WITH_AS(log_sum_exp(std::vector<double>{}),
                       "log_sum_exp: empty reduction", std::invalid_argument);
}

TEST_CASE("log_sum_exp shift invariance property") {
  RngStream rng(99, 1);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v(1 + rng.below(8));
    for (double& x : v) x = 10.0 * rng.gaussian();
    const double c = 5.0 * rng.gaussian();
    std::vector<double> shifted = v;
    for (double& x : shifted) x -= c;
    CHECK(log_sum_exp(v) ==
          doctest::Approx(log_sum_exp(shifted) + c).epsilon(1e-12));
  }
}

TEST_CASE("lu_log_abs_det examples") {
  CHECK(lu_log_abs_det(Mat::Identity(3, 3)).log_abs_det == doctest::Approx(0.0));
  CHECK(lu_log_abs_det(Mat::Identity(3, 3)).sign == 1);

  Mat twos = 2.0 * Mat::Identity(2, 2);
  const LogDet d = lu_log_abs_det(twos);
  CHECK(d.log_abs_det == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(d.sign == 1);

  Mat rect(2, 3);
  CHECK_THROWS_AS(lu_log_abs_det(rect), std::invalid_argument);
}

TEST_CASE("lu_log_abs_det vs cofactor oracle on random 4x4") {
  RngStream rng(2024, 3);
  for (int t = 0; t < 20; ++t) {
    Mat m(4, 4);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = rng.gaussian();
    const double det = det_cofactor(m);
    const LogDet ld = lu_log_abs_det(m);
    CHECK(ld.log_abs_det == doctest::Approx(std::log(std::abs(det))).epsilon(1e-10));
    CHECK(ld.sign == (det < 0.0 ? -1 : 1));
  }
}

TEST_CASE("lu_log_abs_det inverse property") {
  RngStream rng(77, 4);
  for (int t = 0; t < 20; ++t) {
    Mat m(3, 3);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m(r, c) = rng.gaussian();
    m += 3.0 * Mat::Identity(3, 3);  // keep well-conditioned
    const Mat inv = m.inverse();
    CHECK(std::abs(lu_log_abs_det(m).log_abs_det + lu_log_abs_det(inv).log_abs_det) <
          1e-8);
  }
}

TEST_CASE("lu_log_abs_det flags singular matrices") {
  Mat m(3, 3);
  m << 1.0, 2.0, 3.0,
       1.0, 2.0, 3.0,
       0.5, -1.0, 2.0;
  const LogDet ld = lu_log_abs_det(m);
  CHECK(ld.sign == 0);
  CHECK(std::isinf(ld.log_abs_det));
  CHECK(ld.log_abs_det < 0.0);
}

TEST_CASE("check_finite rejects NaN") {
  Mat bad = Mat::Zero(2, 2);
  bad(1, 1) = std::nan("");
  CHECK_THROWS_AS(check_finite(bad, "test"), std::runtime_error);
  CHECK_NOTHROW(check_finite(Mat::Zero(2, 2), "test"));
}
