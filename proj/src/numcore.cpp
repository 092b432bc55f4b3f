#include "steinflow/numcore.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace steinflow {

double RngStream::gaussian() {
  // Box-Muller; always consumes two counters.
  const double u1 =
      (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("RngStream::below: n must be positive");
  // Rejection to avoid modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

Vec sample_gaussian(RngStream& rng, int d) {
  if (d < 1) throw std::invalid_argument("sample_gaussian: d must be >= 1");
  Vec out(d);
  for (int i = 0; i < d; ++i) out[i] = rng.gaussian();
  return out;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("log_sum_exp: empty reduction");
  double m = -std::numeric_limits<double>::infinity();
  for (double v : values) m = std::max(m, v);
  if (!std::isfinite(m)) return m;  // all -inf, or a +inf/NaN dominates
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

double log_sum_exp(const Vec& values) {
  return log_sum_exp(std::span<const double>(values.data(),
                                             static_cast<size_t>(values.size())));
}

LogDet lu_log_abs_det(const Mat& m) {
  if (m.rows() != m.cols())
    throw std::invalid_argument("lu_log_abs_det: matrix must be square");
  if (m.rows() == 0) return {0.0, 1};
  Eigen::FullPivLU<Mat> lu(m);
  int sign = static_cast<int>(lu.permutationP().determinant()) *
             static_cast<int>(lu.permutationQ().determinant());
  double log_abs = 0.0;
  const auto& diag = lu.matrixLU().diagonal();
  for (Eigen::Index i = 0; i < diag.size(); ++i) {
    const double d = diag[i];
    if (d == 0.0)
      return {-std::numeric_limits<double>::infinity(), 0};
    if (d < 0.0) sign = -sign;
    log_abs += std::log(std::abs(d));
  }
  return {log_abs, sign};
}

void check_finite(const Eigen::Ref<const Mat>& values, const std::string& what) {
  if (!values.allFinite())
    throw std::runtime_error(what + ": non-finite value");
}

}  // namespace steinflow
