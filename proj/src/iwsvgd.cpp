#include "steinflow/iwsvgd.hpp"

#include "steinflow/parallel.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace steinflow::iwsvgd {

WeightVector WeightVector::from_log(std::vector<double> lw) {
  if (lw.empty()) throw std::invalid_argument("WeightVector: empty");
  const double norm = log_sum_exp(std::span<const double>(lw.data(), lw.size()));
  if (!std::isfinite(norm))
    throw std::runtime_error("iwsvgd: degenerate importance weights");
  return WeightVector{std::move(lw), norm};
}

WeightVector WeightVector::uniform(int k) {
  return WeightVector{std::vector<double>(k, 0.0), std::log(static_cast<double>(k))};
}

IwWeights log_importance_weights(int k, int m, int num_data,
                                 const LogRatioFn& log_ratio) {
  if (k < 1 || m < 1 || num_data < 1)
    throw std::invalid_argument("log_importance_weights: empty inputs");
  const double log_m = std::log(static_cast<double>(m));
  // log omega_in, laid out [n][i]
  std::vector<std::vector<double>> per_datum_logs(
      num_data, std::vector<double>(k, 0.0));
  parallel_for(num_data, [&](std::int64_t n) {
    std::vector<double> terms(m);
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < m; ++j)
        terms[j] = log_ratio(i, j, static_cast<int>(n));
      per_datum_logs[n][i] =
          log_sum_exp(std::span<const double>(terms.data(), terms.size())) - log_m;
    }
  });

  IwWeights out;
  out.per_datum.reserve(num_data);
  std::vector<double> theta_logs(k);
  for (int i = 0; i < k; ++i) {
    std::vector<double> across(num_data);
    for (int n = 0; n < num_data; ++n) across[n] = per_datum_logs[n][i];
    theta_logs[i] =
        log_sum_exp(std::span<const double>(across.data(), across.size()));
  }
  for (int n = 0; n < num_data; ++n)
    out.per_datum.push_back(WeightVector::from_log(per_datum_logs[n]));
  out.theta = WeightVector::from_log(std::move(theta_logs));
  return out;
}

std::vector<Mat> evaluate_scores(const std::vector<Mat>& groups,
                                 const svgd::ScoreFn& score) {
  const int k = static_cast<int>(groups.size());
  if (k < 1) throw std::invalid_argument("evaluate_scores: no groups");
  const int m = static_cast<int>(groups[0].rows());
  const int d = static_cast<int>(groups[0].cols());
  std::vector<Mat> scores(k, Mat(m, d));
  parallel_for(static_cast<std::int64_t>(k) * m, [&](std::int64_t flat) {
    const int i = static_cast<int>(flat / m);
    const int j = static_cast<int>(flat % m);
    scores[i].row(j) = score(groups[i].row(j).transpose()).transpose();
  });
  return scores;
}

std::vector<Mat> iw_direction(const std::vector<Mat>& groups,
                              const WeightVector& weights,
                              const std::vector<Mat>& scores,
                              const kernels::KernelPolicy& policy) {
  const int k = static_cast<int>(groups.size());
  if (k < 1) throw std::invalid_argument("iw_direction: no groups");
  if (weights.k() != k)
    throw std::invalid_argument("iw_direction: weight count mismatch");
  if (static_cast<int>(scores.size()) != k)
    throw std::invalid_argument("iw_direction: score group count mismatch");
  const int m = static_cast<int>(groups[0].rows());
  const int d = static_cast<int>(groups[0].cols());
  for (const Mat& g : groups)
    if (g.rows() != m || g.cols() != d)
      throw std::invalid_argument("iw_direction: ragged groups");
  for (int i = 0; i < k; ++i) {
    if (scores[i].rows() != m || scores[i].cols() != d)
      throw std::invalid_argument("iw_direction: score shape mismatch");
    for (int j = 0; j < m; ++j)
      if (!scores[i].row(j).allFinite())
        throw std::runtime_error("iwsvgd: non-finite score at particle (" +
                                 std::to_string(i) + "," + std::to_string(j) + ")");
  }

  Mat pooled(static_cast<Eigen::Index>(k) * m, d);
  for (int i = 0; i < k; ++i)
    pooled.middleRows(static_cast<Eigen::Index>(i) * m, m) = groups[i];
  const kernels::RbfKernel kern = policy.resolve(pooled);

  std::vector<double> w(k);
  for (int i = 0; i < k; ++i) w[i] = weights.normalized(i);

  std::vector<Mat> deltas(k, Mat(m, d));
  parallel_for(static_cast<std::int64_t>(k) * m, [&](std::int64_t flat) {
    const int i = static_cast<int>(flat / m);
    const int j = static_cast<int>(flat % m);
    const Vec target = groups[i].row(j).transpose();
    Vec acc = Vec::Zero(d);
    for (int jp = 0; jp < m; ++jp) {
      for (int ip = 0; ip < k; ++ip) {
        const Vec source = groups[ip].row(jp).transpose();
        const double kv = kernels::eval(kern, source, target);
        const Vec term = kv * scores[ip].row(jp).transpose() +
                         kernels::grad_first(kern, source, target);
        acc += w[ip] * term;
      }
    }
    deltas[i].row(j) = acc.transpose() / static_cast<double>(m);
  });
  return deltas;
}

std::vector<Mat> iw_direction_theta(const IwParticleBank& bank,
                                    const WeightVector& weights,
                                    const std::vector<Mat>& scores,
                                    const kernels::KernelPolicy& policy) {
  std::vector<Mat> groups;
  groups.reserve(bank.groups.size());
  for (const auto& g : bank.groups) groups.push_back(g.particles);
  return iw_direction(groups, weights, scores, policy);
}

std::vector<Mat> iw_direction_z(const std::vector<Mat>& code_groups,
                                const WeightVector& datum_weights,
                                const std::vector<Mat>& scores,
                                const kernels::KernelPolicy& policy) {
  return iw_direction(code_groups, datum_weights, scores, policy);
}

KlkEstimate kl_k_estimate(const std::function<Vec(RngStream&)>& draw_q,
                          const std::function<double(const Vec&)>& log_p,
                          const std::function<double(const Vec&)>& log_q,
                          int k, std::int64_t groups, RngStream rng) {
  if (k < 1 || groups < 1)
    throw std::invalid_argument("kl_k_estimate: k and groups must be >= 1");
  const double log_k = std::log(static_cast<double>(k));
  double sum = 0.0;
  double sum_sq = 0.0;
  std::vector<double> ratios(k);
  for (std::int64_t g = 0; g < groups; ++g) {
    for (int i = 0; i < k; ++i) {
      const Vec x = draw_q(rng);
      ratios[i] = log_p(x) - log_q(x);
    }
    const double term =
        log_sum_exp(std::span<const double>(ratios.data(), ratios.size())) - log_k;
    sum += term;
    sum_sq += term * term;
  }
  const double n = static_cast<double>(groups);
  const double mean = sum / n;
  const double var = std::max(0.0, sum_sq / n - mean * mean);
  return {-mean, std::sqrt(var / n)};
}

double gaussian_kde_log_density(const Mat& particles, const Vec& point,
                                kernels::BandwidthMode mode) {
  const Eigen::Index m = particles.rows();
  if (m == 0) throw std::invalid_argument("kde: empty particle set");
  const double h = kernels::median_bandwidth(particles, mode);
  const double d = static_cast<double>(particles.cols());
  // exp(-r^2/h) kernel == Gaussian with variance h/2 per coordinate
  const double log_norm = -0.5 * d * std::log(std::numbers::pi * h);
  std::vector<double> logs(static_cast<size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) {
    const double sq = (particles.row(j).transpose() - point).squaredNorm();
    logs[static_cast<size_t>(j)] = -sq / h + log_norm;
  }
  return log_sum_exp(std::span<const double>(logs.data(), logs.size())) -
         std::log(static_cast<double>(m));
}

}  // namespace steinflow::iwsvgd
