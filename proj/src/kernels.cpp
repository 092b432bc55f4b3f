#include "steinflow/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace steinflow::kernels {

double median_bandwidth(const Mat& points, BandwidthMode mode) {
  const Eigen::Index m = points.rows();
  if (m == 0) throw std::invalid_argument("median_bandwidth: empty point set");
  if (m < 2) return 1.0;
  std::vector<double> dists;
  dists.reserve(static_cast<size_t>(m) * (m - 1) / 2);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double sq = (points.row(i) - points.row(j)).squaredNorm();
      dists.push_back(mode == BandwidthMode::Squared ? sq : std::sqrt(sq));
    }
  const size_t mid = (dists.size() - 1) / 2;  // lower median
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  const double med = dists[mid];
  return med > 0.0 ? med : 1.0;
}

double eval(const RbfKernel& k, const Vec& x, const Vec& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("rbf eval: dimension mismatch");
  return std::exp(-(x - y).squaredNorm() / k.h);
}

Vec grad_first(const RbfKernel& k, const Vec& x, const Vec& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("rbf grad: dimension mismatch");
  const Vec diff = x - y;
  return (-2.0 / k.h) * std::exp(-diff.squaredNorm() / k.h) * diff;
}

}  // namespace steinflow::kernels
