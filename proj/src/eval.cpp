#include "steinflow/eval.hpp"

#include "steinflow/kernels.hpp"
#include "steinflow/parallel.hpp"
#include "steinflow/svgd.hpp"
#include "steinflow/iwsvgd.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace steinflow::eval {

namespace {

double joint_term(const Vec& x, const Vec& z, const Mat& theta_particles,
                  const models::LikelihoodModel& model, JointReading reading) {
  const int m = static_cast<int>(theta_particles.rows());
  std::vector<double> lls(m);
  for (int j = 0; j < m; ++j)
    lls[j] = model.log_lik(theta_particles.row(j).transpose(), x, z);
  if (reading == JointReading::MeanOfLog)
    return std::accumulate(lls.begin(), lls.end(), 0.0) / m;
  return log_sum_exp(std::span<const double>(lls.data(), lls.size())) -
         std::log(static_cast<double>(m));
}

struct MeanSe {
  double mean;
  double se;
};

MeanSe mean_and_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double t : v) ss += (t - mean) * (t - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace

double elbo(const Vec& x, const Mat& theta_particles,
            const models::LikelihoodModel& model,
            const recognition::RecognitionNet& rec, int samples, RngStream rng,
            JointReading reading, double* std_error) {
  if (samples < 1) throw std::invalid_argument("elbo: samples must be >= 1");
  std::vector<double> terms(samples);
  for (int s = 0; s < samples; ++s) {
    const Vec xi = sample_gaussian(rng, rec.noise_dim);
    const Vec z = recognition::draw_code(rec, x, xi);
    const double lq = recognition::code_log_density(rec, x, xi);
    terms[s] = joint_term(x, z, theta_particles, model, reading) +
               model.log_prior_z(z) - lq;
  }
  const MeanSe ms = mean_and_se(terms);
  if (std_error) *std_error = ms.se;
  return ms.mean;
}

double s_elbo(const Vec& x, const Mat& theta_particles,
              const models::LikelihoodModel& model,
              const recognition::RecognitionNet& rec, int k, int repeats,
              RngStream rng, JointReading reading, double* std_error) {
  if (k < 1 || repeats < 1)
    throw std::invalid_argument("s_elbo: k and repeats must be >= 1");
  std::vector<double> vals(repeats);
  std::vector<double> lw(k);
  for (int r = 0; r < repeats; ++r) {
    for (int i = 0; i < k; ++i) {
      const Vec xi = sample_gaussian(rng, rec.noise_dim);
      const Vec z = recognition::draw_code(rec, x, xi);
      const double lq = recognition::code_log_density(rec, x, xi);
      lw[i] = joint_term(x, z, theta_particles, model, reading) +
              model.log_prior_z(z) - lq;
    }
    vals[r] = log_sum_exp(std::span<const double>(lw.data(), lw.size())) -
              std::log(static_cast<double>(k));
  }
  const MeanSe ms = mean_and_se(vals);
  if (std_error) *std_error = ms.se;
  return ms.mean;
}

ElboReport elbo_report(const Vec& x, const Mat& theta_particles,
                       const models::LikelihoodModel& model,
                       const recognition::RecognitionNet& rec, int samples,
                       int k, int repeats, RngStream rng, JointReading reading) {
  ElboReport report;
  report.elbo_samples = samples;
  report.s_elbo_k = k;
  report.s_elbo_repeats = repeats;

  // ELBO pass, tracking the entropy term.
  RngStream elbo_rng = rng.substream(101);
  std::vector<double> terms(samples);
  std::vector<double> neg_lqs(samples);
  for (int s = 0; s < samples; ++s) {
    const Vec xi = sample_gaussian(elbo_rng, rec.noise_dim);
    const Vec z = recognition::draw_code(rec, x, xi);
    const double lq = recognition::code_log_density(rec, x, xi);
    neg_lqs[s] = -lq;
    terms[s] = joint_term(x, z, theta_particles, model, reading) +
               model.log_prior_z(z) - lq;
  }
  const MeanSe elbo_ms = mean_and_se(terms);
  report.elbo = elbo_ms.mean;
  report.elbo_std_error = elbo_ms.se;
  report.entropy_estimate =
      std::accumulate(neg_lqs.begin(), neg_lqs.end(), 0.0) / samples;

  // S-ELBO pass; keep the last repeat's per-sample log weights.
  RngStream s_rng = rng.substream(102);
  std::vector<double> vals(repeats);
  std::vector<double> lw(k);
  for (int r = 0; r < repeats; ++r) {
    for (int i = 0; i < k; ++i) {
      const Vec xi = sample_gaussian(s_rng, rec.noise_dim);
      const Vec z = recognition::draw_code(rec, x, xi);
      const double lq = recognition::code_log_density(rec, x, xi);
      lw[i] = joint_term(x, z, theta_particles, model, reading) +
              model.log_prior_z(z) - lq;
    }
    vals[r] = log_sum_exp(std::span<const double>(lw.data(), lw.size())) -
              std::log(static_cast<double>(k));
  }
  const MeanSe s_ms = mean_and_se(vals);
  report.s_elbo = s_ms.mean;
  report.s_elbo_std_error = s_ms.se;
  report.log_weights = lw;
  return report;
}

PosteriorDiag posterior_diagnostics(const Mat& samples,
                                    const models::GmmPosterior& analytic) {
  const Eigen::Index n = samples.rows();
  if (n < 2)
    throw std::invalid_argument("posterior_diagnostics: need at least 2 samples");
  Eigen::LDLT<Mat> cov(analytic.covariance);
  PosteriorDiag diag;
  diag.sample_count = static_cast<int>(n);
  std::vector<bool> to_mode1(static_cast<size_t>(n));
  for (Eigen::Index s = 0; s < n; ++s) {
    const Vec z = samples.row(s).transpose();
    const Vec d1 = z - analytic.mean1;
    const Vec d2 = z - analytic.mean2;
    const double m1 = d1.dot(cov.solve(d1));
    const double m2 = d2.dot(cov.solve(d2));
    to_mode1[static_cast<size_t>(s)] = m1 <= m2;
  }
  for (int mode = 0; mode < 2; ++mode) {
    const Vec& target = mode == 0 ? analytic.mean1 : analytic.mean2;
    Vec mean = Vec::Zero(samples.cols());
    int count = 0;
    for (Eigen::Index s = 0; s < n; ++s)
      if (to_mode1[static_cast<size_t>(s)] == (mode == 0)) {
        mean += samples.row(s).transpose();
        ++count;
      }
    double mean_err = 0.0;
    double cov_err = 0.0;
    if (count > 0) {
      mean /= count;
      mean_err = (mean - target).norm();
      Mat emp = Mat::Zero(samples.cols(), samples.cols());
      for (Eigen::Index s = 0; s < n; ++s)
        if (to_mode1[static_cast<size_t>(s)] == (mode == 0)) {
          const Vec d = samples.row(s).transpose() - mean;
          emp += d * d.transpose();
        }
      if (count > 1) emp /= count - 1;
      cov_err = (emp - analytic.covariance).norm();
    }
    if (mode == 0) {
      diag.count1 = count;
      diag.mean_error1 = mean_err;
      diag.cov_error1 = cov_err;
    } else {
      diag.count2 = count;
      diag.mean_error2 = mean_err;
      diag.cov_error2 = cov_err;
    }
  }
  diag.mode1_weight = static_cast<double>(diag.count1) / static_cast<double>(n);
  return diag;
}

double grad_check(const std::function<double(const Vec&)>& fn,
                  const std::function<Vec(const Vec&)>& grad_fn,
                  const Vec& point, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be positive");
  const Vec grad = grad_fn(point);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    Vec lo = point, hi = point;
    lo[i] -= eps;
    hi[i] += eps;
    const double fd = (fn(hi) - fn(lo)) / (2.0 * eps);
    const double denom = std::max({std::abs(grad[i]), std::abs(fd), 1e-8});
    worst = std::max(worst, std::abs(grad[i] - fd) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------- theorems

namespace {

double gaussian_kl(double m0, double s0, double m1, double s1) {
  return std::log(s1 / s0) +
         (s0 * s0 + (m0 - m1) * (m0 - m1)) / (2.0 * s1 * s1) - 0.5;
}

struct AffinePair {
  std::string name;
  double m0, s0;  // q
  double m1, s1;  // p
  double a, b;    // psi(t) = a t + b
};

}  // namespace

std::vector<CheckResult> theorem1_suite(std::int64_t samples, std::uint64_t seed) {
  const std::vector<AffinePair> pairs = {
      {"theorem1 mean shift, psi=1", 1.0, 1.0, 0.0, 1.0, 0.0, 1.0},
      {"theorem1 affine psi", 0.5, 0.8, 0.0, 1.0, 0.3, 0.7},
      {"theorem1 scale mismatch, psi=t", 0.0, 1.5, 0.0, 1.0, 1.0, 0.0},
  };
  std::vector<CheckResult> results;
  int idx = 0;
  for (const AffinePair& p : pairs) {
    RngStream rng(seed, 7100 + idx++);
    Mat draws(samples, 1);
    for (std::int64_t s = 0; s < samples; ++s)
      draws(s, 0) = p.m0 + p.s0 * rng.gaussian();
    const double est = svgd::kl_directional_derivative(
        draws, [&](const Vec& t) { return Vec(Vec::Constant(1, p.a * t[0] + p.b)); },
        [&](const Vec&) { return p.a; },
        [&](const Vec& t) {
          return Vec(Vec::Constant(1, -(t[0] - p.m1) / (p.s1 * p.s1)));
        });
    // T(t) = t + eps (a t + b) maps N(m0, s0^2) to an exactly Gaussian law.
    const double eps = 1e-4;
    const auto kl_at = [&](double e) {
      return gaussian_kl((1.0 + e * p.a) * p.m0 + e * p.b,
                         (1.0 + e * p.a) * p.s0, p.m1, p.s1);
    };
    const double fd = (kl_at(eps) - kl_at(0.0)) / eps;
    const double rel = std::abs(est - fd) / std::max(std::abs(fd), 1e-12);
    results.push_back({p.name, rel < 1e-2, est, fd, 1e-2,
                       "rel err " + std::to_string(rel)});
  }
  return results;
}

namespace {

struct KlPair {
  std::string name;
  std::function<Vec(RngStream&)> draw_q;
  std::function<double(const Vec&)> log_q;
  std::function<double(const Vec&)> log_p;
};

std::vector<KlPair> analytic_kl_pairs() {
  constexpr double kLog2Pi = 1.8378770664093454836;
  auto normal_logpdf = [](double x, double m, double s) {
    const double z = (x - m) / s;
    return -0.5 * z * z - std::log(s) - 0.5 * 1.8378770664093454836;
  };
  std::vector<KlPair> pairs;
  pairs.push_back(
      {"mean shift N(0,1) -> N(1,1)",
       [](RngStream& r) { return Vec(Vec::Constant(1, r.gaussian())); },
       [normal_logpdf](const Vec& x) { return normal_logpdf(x[0], 0.0, 1.0); },
       [normal_logpdf](const Vec& x) { return normal_logpdf(x[0], 1.0, 1.0); }});
  pairs.push_back(
      {"variance mismatch N(0,1.3^2) -> N(0,1)",
       [](RngStream& r) { return Vec(Vec::Constant(1, 1.3 * r.gaussian())); },
       [normal_logpdf](const Vec& x) { return normal_logpdf(x[0], 0.0, 1.3); },
       [normal_logpdf](const Vec& x) { return normal_logpdf(x[0], 0.0, 1.0); }});
  pairs.push_back(
      {"two-mode target N(0,2^2) -> mixture",
       [](RngStream& r) { return Vec(Vec::Constant(1, 2.0 * r.gaussian())); },
       [normal_logpdf](const Vec& x) { return normal_logpdf(x[0], 0.0, 2.0); },
       [normal_logpdf](const Vec& x) {
         const double l1 = std::log(0.5) + normal_logpdf(x[0], -2.0, 0.5);
         const double l2 = std::log(0.5) + normal_logpdf(x[0], 2.0, 0.5);
         const double two[] = {l1, l2};
         return log_sum_exp(std::span<const double>(two, 2));
       }});
  (void)kLog2Pi;
  return pairs;
}

}  // namespace

std::vector<CheckResult> theorem2_suite(std::int64_t groups, std::uint64_t seed) {
  const std::vector<int> ks = {1, 2, 5, 10};
  std::vector<CheckResult> results;
  int pair_idx = 0;
  for (const KlPair& pair : analytic_kl_pairs()) {
    std::vector<iwsvgd::KlkEstimate> ests;
    for (size_t t = 0; t < ks.size(); ++t) {
      ests.push_back(iwsvgd::kl_k_estimate(
          pair.draw_q, pair.log_p, pair.log_q, ks[t], groups,
          RngStream(seed, 7200 + 16 * pair_idx + static_cast<int>(t))));
    }
    bool monotone = true;
    std::string detail;
    for (size_t t = 0; t + 1 < ks.size(); ++t) {
      const double slack = 2.0 * std::sqrt(ests[t].std_error * ests[t].std_error +
                                           ests[t + 1].std_error * ests[t + 1].std_error);
      if (ests[t + 1].value > ests[t].value + slack) monotone = false;
      detail += "k=" + std::to_string(ks[t]) + ":" + std::to_string(ests[t].value) + " ";
    }
    detail += "k=10:" + std::to_string(ests.back().value);
    results.push_back({"theorem2 monotone: " + pair.name, monotone,
                       ests.front().value, ests.back().value, 0.0, detail});
    if (pair_idx == 0) {
      const double err = std::abs(ests[0].value - 0.5);
      results.push_back({"theorem2 k=1 closed form (KL = 0.5)", err <= 0.01,
                         ests[0].value, 0.5, 0.01,
                         "abs err " + std::to_string(err)});
    }
    ++pair_idx;
  }
  return results;
}

std::vector<CheckResult> theorem3_suite(std::int64_t groups, std::uint64_t seed) {
  // 1D: q = N(0,1), p = N(1,1), psi(t) = a t + b, k fixed.
  const double a = 0.3, b = 0.5;
  const int k = 3;
  const double eps = 1e-4;
  auto log_normal = [](double x, double m) {
    return -0.5 * (x - m) * (x - m) - 0.5 * 1.8378770664093454836;
  };
  RngStream rng(seed, 7300);
  double sum_weighted = 0.0;
  double sum_val0 = 0.0;
  double sum_vale = 0.0;
  std::vector<double> theta(k), r0(k), re(k);
  for (std::int64_t g = 0; g < groups; ++g) {
    for (int i = 0; i < k; ++i) theta[i] = rng.gaussian();
    double wsum = 0.0;
    double tsum = 0.0;
    for (int i = 0; i < k; ++i) {
      const double lq = log_normal(theta[i], 0.0);
      const double lp = log_normal(theta[i], 1.0);
      const double w = std::exp(lp - lq);
      const double score_p = -(theta[i] - 1.0);
      const double psi = a * theta[i] + b;
      wsum += w;
      tsum += w * (score_p * psi + a);
      r0[i] = lp - lq;
      const double t_eps = theta[i] + eps * psi;
      re[i] = log_normal(t_eps, 1.0) - (lq - std::log1p(eps * a));
    }
    sum_weighted += tsum / wsum;
    sum_val0 += log_sum_exp(std::span<const double>(r0.data(), r0.size()));
    sum_vale += log_sum_exp(std::span<const double>(re.data(), re.size()));
  }
  const double n = static_cast<double>(groups);
  const double weighted_estimator = -sum_weighted / n;
  const double fd = (-(sum_vale / n) - (-(sum_val0 / n))) / eps;
  const double rel =
      std::abs(weighted_estimator - fd) / std::max(std::abs(fd), 1e-12);
  return {{"theorem3 weighted estimator vs FD", rel < 5e-2, weighted_estimator,
           fd, 5e-2, "rel err " + std::to_string(rel)}};
}

// ------------------------------------------------------------- grad suite

namespace {

CheckResult fd_category(const std::string& name,
                        const std::function<double(RngStream&)>& one_point,
                        std::uint64_t seed, std::uint64_t salt, double tol) {
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    RngStream rng(seed, salt * 100 + t);
    worst = std::max(worst, one_point(rng));
  }
  return {name, worst < tol, worst, 0.0, tol, "max rel err over 20 points"};
}

}  // namespace

std::vector<CheckResult> gradient_suite(std::uint64_t seed) {
  constexpr double kEps = 1e-5;
  constexpr double kTol = 1e-4;
  std::vector<CheckResult> results;

  results.push_back(fd_category(
      "gaussian linear score_z",
      [&](RngStream& rng) {
        models::GaussianLinearDecoder dec;
        dec.theta = Mat(3, 2);
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 2; ++c) dec.theta(r, c) = rng.gaussian();
        dec.sigma = 0.5 + rng.uniform();
        const Vec x = sample_gaussian(rng, 3);
        const Vec z0 = sample_gaussian(rng, 2);
        return grad_check(
            [&](const Vec& z) { return models::gaussian_linear_log_lik(dec, x, z); },
            [&](const Vec& z) { return models::gaussian_linear_scores(dec, x, z).z; },
            z0, kEps);
      },
      seed, 1, kTol));

  results.push_back(fd_category(
      "gaussian linear score_theta",
      [&](RngStream& rng) {
        const double sigma = 0.5 + rng.uniform();
        const Vec x = sample_gaussian(rng, 3);
        const Vec z = sample_gaussian(rng, 2);
        const Vec t0 = sample_gaussian(rng, 6);
        auto with = [&](const Vec& t) {
          models::GaussianLinearDecoder dec;
          dec.theta = models::unflatten_row_major(t, 3, 2);
          dec.sigma = sigma;
          return dec;
        };
        return grad_check(
            [&](const Vec& t) { return models::gaussian_linear_log_lik(with(t), x, z); },
            [&](const Vec& t) {
              return models::flatten_row_major(
                  models::gaussian_linear_scores(with(t), x, z).theta);
            },
            t0, kEps);
      },
      seed, 2, kTol));

  results.push_back(fd_category(
      "gmm prior score",
      [&](RngStream& rng) {
        const Vec mu1 = sample_gaussian(rng, 2) * 2.0;
        const Vec mu2 = sample_gaussian(rng, 2) * 2.0;
        const Vec z0 = sample_gaussian(rng, 2) * 2.0;
        return grad_check(
            [&](const Vec& z) { return models::gmm_prior_log_density(z, mu1, mu2); },
            [&](const Vec& z) { return models::gmm_prior_score(z, mu1, mu2); }, z0,
            kEps);
      },
      seed, 3, kTol));

  results.push_back(fd_category(
      "bernoulli score_z",
      [&](RngStream& rng) {
        models::BernoulliMlpDecoder dec{nn::make_mlp(
            {2, 8, 6}, {nn::Activation::Tanh, nn::Activation::Identity}, rng)};
        Vec x(6);
        for (int p = 0; p < 6; ++p) x[p] = rng.uniform() < 0.5 ? 0.0 : 1.0;
        const Vec z0 = sample_gaussian(rng, 2);
        return grad_check(
            [&](const Vec& z) { return models::bernoulli_log_lik(dec, x, z); },
            [&](const Vec& z) { return models::bernoulli_scores(dec, x, z).z; }, z0,
            kEps);
      },
      seed, 4, kTol));

  results.push_back(fd_category(
      "bernoulli score_params",
      [&](RngStream& rng) {
        models::BernoulliMlpDecoder proto{nn::make_mlp(
            {2, 8, 6}, {nn::Activation::Tanh, nn::Activation::Identity}, rng)};
        Vec x(6);
        for (int p = 0; p < 6; ++p) x[p] = rng.uniform() < 0.5 ? 0.0 : 1.0;
        const Vec z = sample_gaussian(rng, 2);
        const Vec t0 = proto.generator.flatten_params();
        auto with = [&](const Vec& t) {
          models::BernoulliMlpDecoder dec = proto;
          dec.generator.set_params(t);
          return dec;
        };
        return grad_check(
            [&](const Vec& t) { return models::bernoulli_log_lik(with(t), x, z); },
            [&](const Vec& t) { return models::bernoulli_scores(with(t), x, z).params; },
            t0, kEps);
      },
      seed, 5, kTol));

  results.push_back(fd_category(
      "poisson score_z",
      [&](RngStream& rng) {
        models::PoissonFactorDecoder dec;
        dec.loadings_unconstrained = Mat(4, 2);
        for (int p = 0; p < 4; ++p)
          for (int v = 0; v < 2; ++v)
            dec.loadings_unconstrained(p, v) = 0.5 + rng.gaussian();
        Vec x(4);
        for (int p = 0; p < 4; ++p)
          x[p] = std::floor(4.0 * rng.uniform());
        const Vec z0 = sample_gaussian(rng, 2).array() + 0.5;
        return grad_check(
            [&](const Vec& z) {
              return models::poisson_log_lik(dec, x, z) +
                     models::poisson_log_prior_z(dec, z);
            },
            [&](const Vec& z) { return models::poisson_scores(dec, x, z).z; }, z0,
            kEps);
      },
      seed, 6, kTol));

  results.push_back(fd_category(
      "poisson score_theta",
      [&](RngStream& rng) {
        Vec x(4);
        for (int p = 0; p < 4; ++p) x[p] = std::floor(4.0 * rng.uniform());
        const Vec z = sample_gaussian(rng, 2).array() + 0.5;
        Vec t0 = sample_gaussian(rng, 8).array() + 0.5;
        auto with = [&](const Vec& t) {
          models::PoissonFactorDecoder dec;
          dec.loadings_unconstrained = models::unflatten_row_major(t, 4, 2);
          return dec;
        };
        return grad_check(
            [&](const Vec& t) {
              const auto dec = with(t);
              return models::poisson_log_lik(dec, x, z) +
                     models::poisson_log_prior_theta(dec);
            },
            [&](const Vec& t) {
              return models::flatten_row_major(
                  models::poisson_scores(with(t), x, z).theta);
            },
            t0, kEps);
      },
      seed, 7, kTol));

  results.push_back(fd_category(
      "softmax label score_z",
      [&](RngStream& rng) {
        models::SoftmaxLabelDecoder dec;
        dec.theta_tilde = Mat(3, 2);
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 2; ++c) dec.theta_tilde(r, c) = rng.gaussian();
        const int y = static_cast<int>(rng.below(3));
        const Vec z0 = sample_gaussian(rng, 2);
        return grad_check(
            [&](const Vec& z) { return models::softmax_label_log_lik(dec, y, z); },
            [&](const Vec& z) { return models::softmax_label_scores(dec, y, z).z; },
            z0, kEps);
      },
      seed, 8, kTol));

  results.push_back(fd_category(
      "softmax label score_theta",
      [&](RngStream& rng) {
        const int y = static_cast<int>(rng.below(3));
        const Vec z = sample_gaussian(rng, 2);
        const Vec t0 = sample_gaussian(rng, 6);
        auto with = [&](const Vec& t) {
          return models::SoftmaxLabelDecoder{models::unflatten_row_major(t, 3, 2)};
        };
        return grad_check(
            [&](const Vec& t) { return models::softmax_label_log_lik(with(t), y, z); },
            [&](const Vec& t) {
              return models::flatten_row_major(
                  models::softmax_label_scores(with(t), y, z).theta_tilde);
            },
            t0, kEps);
      },
      seed, 9, kTol));

  results.push_back(fd_category(
      "rbf kernel grad",
      [&](RngStream& rng) {
        kernels::RbfKernel kern{0.5 + 2.0 * rng.uniform()};
        const Vec y = sample_gaussian(rng, 3);
        const Vec x0 = sample_gaussian(rng, 3);
        return grad_check(
            [&](const Vec& x) { return kernels::eval(kern, x, y); },
            [&](const Vec& x) { return kernels::grad_first(kern, x, y); }, x0, kEps);
      },
      seed, 10, kTol));

  results.push_back(fd_category(
      "recognition fit gradient",
      [&](RngStream& rng) {
        recognition::RecognitionNet rec =
            recognition::make_recognition(3, 2, {5}, rng);
        std::vector<recognition::CodeFitExample> batch(4);
        for (auto& ex : batch) {
          ex.x = sample_gaussian(rng, 3);
          ex.noise = sample_gaussian(rng, 2);
          ex.target = sample_gaussian(rng, 2);
        }
        const Vec eta0 = rec.net.flatten_params();
        auto loss = [&](const Vec& eta) {
          recognition::RecognitionNet r2 = rec;
          r2.net.set_params(eta);
          double total = 0.0;
          for (const auto& ex : batch)
            total += (recognition::draw_code(r2, ex.x, ex.noise) - ex.target)
                         .squaredNorm();
          return total;
        };
        auto grad = [&](const Vec& eta) {
          recognition::RecognitionNet r2 = rec;
          r2.net.set_params(eta);
          Vec total = Vec::Zero(eta.size());
          for (const auto& ex : batch) {
            Vec joined(ex.x.size() + ex.noise.size());
            joined << ex.x, ex.noise;
            auto [out, tape] = nn::forward(r2.net, joined);
            auto [grads, input_grad] =
                nn::backward(r2.net, tape, Vec(2.0 * (out - ex.target)));
            total += grads.flatten();
          }
          return total;
        };
        return grad_check(loss, grad, eta0, kEps);
      },
      seed, 11, kTol));

  return results;
}

}  // namespace steinflow::eval
