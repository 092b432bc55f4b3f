#pragma once

#include "steinflow/models.hpp"
#include "steinflow/numcore.hpp"
#include "steinflow/recognition.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace steinflow::eval {

// How log p(x, z) with theta integrated out is estimated from particles:
// mean of logs (a Jensen lower bound) or log of the mean.
enum class JointReading { MeanOfLog, LogMeanExp };

struct ElboReport {
  double elbo = 0.0;
  double elbo_std_error = 0.0;
  double s_elbo = 0.0;
  double s_elbo_std_error = 0.0;
  std::vector<double> log_weights;  // per-sample log ratios from the last repeat
  double entropy_estimate = 0.0;
  int elbo_samples = 0;
  int s_elbo_k = 0;
  int s_elbo_repeats = 0;
};

// (1/S) sum_s [ joint(z_s) + log p(z_s) - log q(z_s) ], z_s = f(x, xi_s).
double elbo(const Vec& x, const Mat& theta_particles,
            const models::LikelihoodModel& model,
            const recognition::RecognitionNet& rec, int samples, RngStream rng,
            JointReading reading = JointReading::MeanOfLog,
            double* std_error = nullptr);

// Mean over repeats of log (1/k) sum_i p(x, z_i) / q(z_i).
double s_elbo(const Vec& x, const Mat& theta_particles,
              const models::LikelihoodModel& model,
              const recognition::RecognitionNet& rec, int k, int repeats,
              RngStream rng, JointReading reading = JointReading::MeanOfLog,
              double* std_error = nullptr);

ElboReport elbo_report(const Vec& x, const Mat& theta_particles,
                       const models::LikelihoodModel& model,
                       const recognition::RecognitionNet& rec, int samples,
                       int k, int repeats, RngStream rng,
                       JointReading reading = JointReading::MeanOfLog);

struct PosteriorDiag {
  double mode1_weight = 0.0;
  int count1 = 0;
  int count2 = 0;
  double mean_error1 = 0.0;  // zero when the mode holds no samples
  double mean_error2 = 0.0;
  double cov_error1 = 0.0;
  double cov_error2 = 0.0;
  int sample_count = 0;
};

// Assigns each sample (row) to the nearest posterior mode in Mahalanobis
// distance under the shared covariance, then compares empirical moments
// against the analytic ones.
PosteriorDiag posterior_diagnostics(const Mat& samples,
                                    const models::GmmPosterior& analytic);

// Max over coordinates of |grad_i - central_fd_i| / max(|grad_i|, |fd_i|, 1e-8).
double grad_check(const std::function<double(const Vec&)>& fn,
                  const std::function<Vec(const Vec&)>& grad_fn,
                  const Vec& point, double eps);

// ---- verification harness shared by `steinflow check` and the acceptance
// suite

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double reference = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

// Sampled KL directional derivative vs finite differences of the closed-form
// Gaussian KL, for affine perturbation fields.
std::vector<CheckResult> theorem1_suite(std::int64_t samples, std::uint64_t seed);

// Monotonicity of the multi-sample importance-weighted KL in k on analytic
// (q, p) pairs, plus the closed-form k = 1 value on the mean-shift pair.
std::vector<CheckResult> theorem2_suite(std::int64_t groups, std::uint64_t seed);

// Weighted-trace estimator vs finite differences of kl_k_estimate under an
// affine transport, common random numbers.
std::vector<CheckResult> theorem3_suite(std::int64_t groups, std::uint64_t seed);

// Central-difference verification of every decoder score, prior score,
// recognition fit gradient, and kernel gradient, 20 random points each.
std::vector<CheckResult> gradient_suite(std::uint64_t seed);

}  // namespace steinflow::eval
