#pragma once

#include "steinflow/kernels.hpp"
#include "steinflow/numcore.hpp"
#include "steinflow/svgd.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace steinflow::iwsvgd {

// Normalized importance weights kept in log space.
struct WeightVector {
  std::vector<double> log_w;
  double log_norm = 0.0;

  int k() const { return static_cast<int>(log_w.size()); }
  double normalized(int i) const { return std::exp(log_w[i] - log_norm); }

  // Throws "degenerate importance weights" when every log weight is -inf.
  static WeightVector from_log(std::vector<double> lw);
  static WeightVector unit() { return WeightVector{{0.0}, 0.0}; }
  static WeightVector uniform(int k);
};

// k independent particle groups on the theta side.
struct IwParticleBank {
  std::vector<svgd::ParticleSet> groups;

  int k() const { return static_cast<int>(groups.size()); }
  int particles_per_group() const {
    return groups.empty() ? 0 : groups.front().count();
  }
  int dim() const { return groups.empty() ? 0 : groups.front().dim(); }
};

// log [ p(theta^i_j, z^i_jn, x_n) / (q(theta^i_j) q(z^i_jn)) ]
using LogRatioFn = std::function<double(int group, int particle, int datum)>;

struct IwWeights {
  WeightVector theta;                  // omega_i, pooled over the minibatch
  std::vector<WeightVector> per_datum; // omega_in
};

// omega_in = (1/M) sum_j ratio(i, j, n); omega_i = sum_n omega_in.
// All sums run in log space.
IwWeights log_importance_weights(int k, int m, int num_data,
                                 const LogRatioFn& log_ratio);

// Weighted cross-group transport:
//   Delta p^i_j = (1/M) sum_j' sum_i' w(i') [ k(p^i'_j', p^i_j) score^i'_j'
//                                             + grad_1 k(p^i'_j', p^i_j) ]
// with w normalized weights and the bandwidth resolved on the pooled cloud.
// `scores` holds one M x d score matrix per group (scores may differ across
// groups because each group carries its own companion samples). For k = 1
// this is bitwise identical to svgd_direction_cloud on the same scores.
std::vector<Mat> iw_direction(const std::vector<Mat>& groups,
                              const WeightVector& weights,
                              const std::vector<Mat>& scores,
                              const kernels::KernelPolicy& policy);

std::vector<Mat> iw_direction_theta(const IwParticleBank& bank,
                                    const WeightVector& weights,
                                    const std::vector<Mat>& scores,
                                    const kernels::KernelPolicy& policy);

// Per-datum analog over the k code clouds of one datum.
std::vector<Mat> iw_direction_z(const std::vector<Mat>& code_groups,
                                const WeightVector& datum_weights,
                                const std::vector<Mat>& scores,
                                const kernels::KernelPolicy& policy);

// Evaluates `score` at every particle of every group, in group-major order.
std::vector<Mat> evaluate_scores(const std::vector<Mat>& groups,
                                 const svgd::ScoreFn& score);

struct KlkEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

// Monte Carlo estimate of the multi-sample importance-weighted KL divergence
//   KL^k(q || p) = -E [ log (1/k) sum_i p(X^i)/q(X^i) ]
// over `groups` independent groups of k draws from q.
KlkEstimate kl_k_estimate(const std::function<Vec(RngStream&)>& draw_q,
                          const std::function<double(const Vec&)>& log_p,
                          const std::function<double(const Vec&)>& log_q,
                          int k, std::int64_t groups, RngStream rng);

// Gaussian KDE over particle rows with the median-heuristic bandwidth,
// matching exp(-||x - p_j||^2 / h): each kernel is N(p_j, (h/2) I).
double gaussian_kde_log_density(const Mat& particles, const Vec& point,
                                kernels::BandwidthMode mode);

}  // namespace steinflow::iwsvgd
