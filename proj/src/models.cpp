#include "steinflow/models.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace steinflow::models {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

double standard_normal_log_density(const Vec& v) {
  return -0.5 * v.squaredNorm() - 0.5 * static_cast<double>(v.size()) * kLog2Pi;
}

double clamp_logit(double l) { return std::min(30.0, std::max(-30.0, l)); }

double log_gamma_pdf(double v, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) +
         (shape - 1.0) * std::log(v) - rate * v;
}

}  // namespace

double gmm_prior_log_density(const Vec& z, const Vec& mu1, const Vec& mu2) {
  if (z.size() != mu1.size() || z.size() != mu2.size())
    throw std::invalid_argument("gmm prior: dimension mismatch");
  const double l1 = std::log(0.5) + standard_normal_log_density(z - mu1);
  const double l2 = std::log(0.5) + standard_normal_log_density(z - mu2);
  const double two[] = {l1, l2};
  return log_sum_exp(std::span<const double>(two, 2));
}

Vec gmm_prior_score(const Vec& z, const Vec& mu1, const Vec& mu2) {
  if (z.size() != mu1.size() || z.size() != mu2.size())
    throw std::invalid_argument("gmm prior: dimension mismatch");
  const double l1 = -0.5 * (z - mu1).squaredNorm();
  const double l2 = -0.5 * (z - mu2).squaredNorm();
  const double two[] = {l1, l2};
  const double lse = log_sum_exp(std::span<const double>(two, 2));
  const double r1 = std::exp(l1 - lse);
  const double r2 = std::exp(l2 - lse);
  return r1 * (mu1 - z) + r2 * (mu2 - z);
}

GaussianLinearScores gaussian_linear_scores(const GaussianLinearDecoder& dec,
                                            const Vec& x, const Vec& z) {
  if (x.size() != dec.theta.rows() || z.size() != dec.theta.cols())
    throw std::invalid_argument("gaussian linear: dimension mismatch");
  const double inv_var = 1.0 / (dec.sigma * dec.sigma);
  const Vec residual = x - dec.theta * z;
  GaussianLinearScores out;
  out.z = inv_var * (dec.theta.transpose() * residual);
  out.theta = inv_var * (residual * z.transpose());
  return out;
}

double gaussian_linear_log_lik(const GaussianLinearDecoder& dec, const Vec& x,
                               const Vec& z) {
  if (x.size() != dec.theta.rows() || z.size() != dec.theta.cols())
    throw std::invalid_argument("gaussian linear: dimension mismatch");
  const double p = static_cast<double>(x.size());
  const Vec residual = x - dec.theta * z;
  return -0.5 * residual.squaredNorm() / (dec.sigma * dec.sigma) -
         p * std::log(dec.sigma) - 0.5 * p * kLog2Pi;
}

GmmPosterior gmm_analytic_posterior(const Vec& x, const Mat& theta, double sigma,
                                    const Vec& mu1, const Vec& mu2,
                                    MeanShiftReading reading) {
  if (x.size() != theta.rows() || mu1.size() != theta.cols() ||
      mu2.size() != theta.cols())
    throw std::invalid_argument("gmm posterior: dimension mismatch");
  const double inv_var = 1.0 / (sigma * sigma);
  const Eigen::Index k = theta.cols();
  const Mat precision = inv_var * (theta.transpose() * theta) + Mat::Identity(k, k);
  Eigen::LDLT<Mat> solver(precision);
  if (solver.info() != Eigen::Success || !solver.isPositive())
    throw std::runtime_error("gmm posterior: singular precision");
  const Vec b = inv_var * (theta.transpose() * x);
  const double shift = reading == MeanShiftReading::AddPriorMean ? 1.0 : -1.0;
  const Vec mean1 = solver.solve(b + shift * mu1);
  const Vec mean2 = solver.solve(b + shift * mu2);
  // Component log-weights from completing the square:
  //   log w_i = -1/2 (x'x/s^2 + mu_i'mu_i - mean_i' P mean_i)
  const double c0 = inv_var * x.squaredNorm();
  const double lw1 = -0.5 * (c0 + mu1.squaredNorm() - mean1.dot(precision * mean1));
  const double lw2 = -0.5 * (c0 + mu2.squaredNorm() - mean2.dot(precision * mean2));
  const double two[] = {lw1, lw2};
  const double lse = log_sum_exp(std::span<const double>(two, 2));
  GmmPosterior post;
  post.mode1_weight = std::exp(lw1 - lse);
  post.mean1 = mean1;
  post.mean2 = mean2;
  post.covariance = solver.solve(Mat::Identity(k, k));
  return post;
}

double bernoulli_log_lik(const BernoulliMlpDecoder& dec, const Vec& x,
                         const Vec& z) {
  const auto [logits, tape] = nn::forward(dec.generator, z);
  if (x.size() != logits.size())
    throw std::invalid_argument("bernoulli: data dimension mismatch");
  double ll = 0.0;
  for (Eigen::Index p = 0; p < x.size(); ++p) {
    if (x[p] != 0.0 && x[p] != 1.0)
      throw std::invalid_argument("bernoulli: x must be binary");
    const double l = clamp_logit(logits[p]);
    // log sigmoid(l) = -softplus(-l)
    ll += x[p] == 1.0 ? -nn::softplus(-l) : -nn::softplus(l);
  }
  return ll;
}

BernoulliScores bernoulli_scores(const BernoulliMlpDecoder& dec, const Vec& x,
                                 const Vec& z) {
  const auto [logits, tape] = nn::forward(dec.generator, z);
  if (x.size() != logits.size())
    throw std::invalid_argument("bernoulli: data dimension mismatch");
  Vec cot(logits.size());
  for (Eigen::Index p = 0; p < x.size(); ++p) {
    if (x[p] != 0.0 && x[p] != 1.0)
      throw std::invalid_argument("bernoulli: x must be binary");
    const bool saturated = logits[p] > 30.0 || logits[p] < -30.0;
    cot[p] = saturated ? 0.0 : x[p] - nn::sigmoid(logits[p]);
  }
  auto [grads, input_grad] = nn::backward(dec.generator, tape, cot);
  return {std::move(input_grad), grads.flatten()};
}

double softplus_floored(double u) { return std::max(nn::softplus(u), 1e-6); }

namespace {

double softplus_floored_deriv(double u) {
  return nn::softplus(u) > 1e-6 ? nn::sigmoid(u) : 0.0;
}

}  // namespace

double poisson_log_lik(const PoissonFactorDecoder& dec, const Vec& x,
                       const Vec& z_unconstrained) {
  const Eigen::Index p_dim = dec.loadings_unconstrained.rows();
  const Eigen::Index v_dim = dec.loadings_unconstrained.cols();
  if (x.size() != p_dim || z_unconstrained.size() != v_dim)
    throw std::invalid_argument("poisson: dimension mismatch");
  Vec z_pos(v_dim);
  for (Eigen::Index v = 0; v < v_dim; ++v) z_pos[v] = softplus_floored(z_unconstrained[v]);
  double ll = 0.0;
  for (Eigen::Index p = 0; p < p_dim; ++p) {
    if (x[p] < 0.0 || x[p] != std::floor(x[p]))
      throw std::invalid_argument("poisson: x must be nonnegative integers");
    double rate = 0.0;
    for (Eigen::Index v = 0; v < v_dim; ++v)
      rate += softplus_floored(dec.loadings_unconstrained(p, v)) * z_pos[v];
    rate = std::max(rate, 1e-12);
    ll += x[p] * std::log(rate) - rate - std::lgamma(x[p] + 1.0);
  }
  return ll;
}

double poisson_log_prior_z(const PoissonFactorDecoder& dec,
                           const Vec& z_unconstrained) {
  double lp = 0.0;
  for (Eigen::Index v = 0; v < z_unconstrained.size(); ++v) {
    const double z = softplus_floored(z_unconstrained[v]);
    lp += log_gamma_pdf(z, dec.score_gamma_shape, dec.score_gamma_rate);
    lp += std::log(nn::sigmoid(z_unconstrained[v]));  // softplus jacobian
  }
  return lp;
}

Vec poisson_prior_score_z(const PoissonFactorDecoder& dec,
                          const Vec& z_unconstrained) {
  Vec score(z_unconstrained.size());
  for (Eigen::Index v = 0; v < z_unconstrained.size(); ++v) {
    const double u = z_unconstrained[v];
    const double z = softplus_floored(u);
    const double dz = softplus_floored_deriv(u);
    const double dprior = (dec.score_gamma_shape - 1.0) / z - dec.score_gamma_rate;
    score[v] = dprior * dz + (1.0 - nn::sigmoid(u));  // d/du log sigmoid(u)
  }
  return score;
}

double poisson_log_prior_theta(const PoissonFactorDecoder& dec) {
  double lp = 0.0;
  const Mat& u = dec.loadings_unconstrained;
  for (Eigen::Index p = 0; p < u.rows(); ++p)
    for (Eigen::Index v = 0; v < u.cols(); ++v) {
      const double t = softplus_floored(u(p, v));
      lp += log_gamma_pdf(t, dec.loading_gamma_shape, 1.0);
      lp += std::log(nn::sigmoid(u(p, v)));
    }
  return lp;
}

PoissonScores poisson_scores(const PoissonFactorDecoder& dec, const Vec& x,
                             const Vec& z_unconstrained) {
  const Eigen::Index p_dim = dec.loadings_unconstrained.rows();
  const Eigen::Index v_dim = dec.loadings_unconstrained.cols();
  if (x.size() != p_dim || z_unconstrained.size() != v_dim)
    throw std::invalid_argument("poisson: dimension mismatch");

  Vec z_pos(v_dim), dz_pos(v_dim);
  for (Eigen::Index v = 0; v < v_dim; ++v) {
    z_pos[v] = softplus_floored(z_unconstrained[v]);
    dz_pos[v] = softplus_floored_deriv(z_unconstrained[v]);
  }
  Mat t_pos(p_dim, v_dim), dt_pos(p_dim, v_dim);
  for (Eigen::Index p = 0; p < p_dim; ++p)
    for (Eigen::Index v = 0; v < v_dim; ++v) {
      t_pos(p, v) = softplus_floored(dec.loadings_unconstrained(p, v));
      dt_pos(p, v) = softplus_floored_deriv(dec.loadings_unconstrained(p, v));
    }

  const Vec rate = (t_pos * z_pos).cwiseMax(1e-12);
  Vec dll_drate(p_dim);
  for (Eigen::Index p = 0; p < p_dim; ++p) {
    if (x[p] < 0.0 || x[p] != std::floor(x[p]))
      throw std::invalid_argument("poisson: x must be nonnegative integers");
    dll_drate[p] = x[p] / rate[p] - 1.0;
  }

  PoissonScores out;
  out.z = ((t_pos.transpose() * dll_drate).array() * dz_pos.array()).matrix() +
          poisson_prior_score_z(dec, z_unconstrained);

  out.theta = Mat(p_dim, v_dim);
  for (Eigen::Index p = 0; p < p_dim; ++p)
    for (Eigen::Index v = 0; v < v_dim; ++v) {
      const double lik = dll_drate[p] * z_pos[v] * dt_pos(p, v);
      const double u = dec.loadings_unconstrained(p, v);
      const double prior =
          ((dec.loading_gamma_shape - 1.0) / t_pos(p, v) - 1.0) * dt_pos(p, v) +
          (1.0 - nn::sigmoid(u));
      out.theta(p, v) = lik + prior;
    }
  return out;
}

Vec softmax_label_probs(const SoftmaxLabelDecoder& dec, const Vec& z) {
  if (z.size() != dec.theta_tilde.cols())
    throw std::invalid_argument("softmax label: dimension mismatch");
  const Vec logits = dec.theta_tilde * z;
  const double lse = log_sum_exp(logits);
  return (logits.array() - lse).exp();
}

double softmax_label_log_lik(const SoftmaxLabelDecoder& dec, int y, const Vec& z) {
  const int c = static_cast<int>(dec.theta_tilde.rows());
  if (y < 0 || y >= c)
    throw std::invalid_argument("softmax label: class index out of range");
  const Vec logits = dec.theta_tilde * z;
  return logits[y] - log_sum_exp(logits);
}

SoftmaxLabelScores softmax_label_scores(const SoftmaxLabelDecoder& dec, int y,
                                        const Vec& z) {
  const int c = static_cast<int>(dec.theta_tilde.rows());
  if (y < 0 || y >= c)
    throw std::invalid_argument("softmax label: class index out of range");
  Vec err = -softmax_label_probs(dec, z);
  err[y] += 1.0;  // e_y - softmax(theta_tilde z)
  SoftmaxLabelScores out;
  out.theta_tilde = err * z.transpose();
  out.z = dec.theta_tilde.transpose() * err;
  return out;
}

Vec flatten_row_major(const Mat& m) {
  Vec v(m.size());
  Eigen::Index at = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v[at++] = m(r, c);
  return v;
}

Mat unflatten_row_major(const Vec& v, int rows, int cols) {
  if (v.size() != static_cast<Eigen::Index>(rows) * cols)
    throw std::invalid_argument("unflatten: size mismatch");
  Mat m(rows, cols);
  Eigen::Index at = 0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = v[at++];
  return m;
}

namespace {

double gaussian_param_log_prior(const Vec& theta, double scale) {
  const double d = static_cast<double>(theta.size());
  return -0.5 * theta.squaredNorm() / (scale * scale) -
         0.5 * d * (kLog2Pi + 2.0 * std::log(scale));
}

}  // namespace

LikelihoodModel make_model(const GaussianLinearDecoder& proto,
                           double theta_prior_scale) {
  auto shared = std::make_shared<GaussianLinearDecoder>(proto);
  const int p = static_cast<int>(proto.theta.rows());
  const int k = static_cast<int>(proto.theta.cols());
  LikelihoodModel m;
  m.theta_dim = p * k;
  m.x_dim = p;
  m.z_dim = k;
  auto with_theta = [shared, p, k](const Vec& theta) {
    GaussianLinearDecoder dec = *shared;
    dec.theta = unflatten_row_major(theta, p, k);
    return dec;
  };
  m.log_lik = [with_theta](const Vec& theta, const Vec& x, const Vec& z) {
    return gaussian_linear_log_lik(with_theta(theta), x, z);
  };
  m.score_z = [with_theta](const Vec& theta, const Vec& x, const Vec& z) {
    return gaussian_linear_scores(with_theta(theta), x, z).z;
  };
  m.score_theta = [with_theta](const Vec& theta, const Vec& x, const Vec& z) {
    return flatten_row_major(gaussian_linear_scores(with_theta(theta), x, z).theta);
  };
  m.log_prior_z = [shared](const Vec& z) {
    return gmm_prior_log_density(z, shared->prior_mu1, shared->prior_mu2);
  };
  m.prior_score_z = [shared](const Vec& z) {
    return gmm_prior_score(z, shared->prior_mu1, shared->prior_mu2);
  };
  m.log_prior_theta = [theta_prior_scale](const Vec& theta) {
    return gaussian_param_log_prior(theta, theta_prior_scale);
  };
  m.prior_score_theta = [theta_prior_scale](const Vec& theta) {
    return Vec(-theta / (theta_prior_scale * theta_prior_scale));
  };
  m.bind = [with_theta](const Vec& theta) {
    auto dec = std::make_shared<GaussianLinearDecoder>(with_theta(theta));
    BoundDecoder b;
    b.log_lik = [dec](const Vec& x, const Vec& z) {
      return gaussian_linear_log_lik(*dec, x, z);
    };
    b.score_z = [dec](const Vec& x, const Vec& z) {
      return gaussian_linear_scores(*dec, x, z).z;
    };
    b.score_theta = [dec](const Vec& x, const Vec& z) {
      return flatten_row_major(gaussian_linear_scores(*dec, x, z).theta);
    };
    return b;
  };
  return m;
}

LikelihoodModel make_model(const BernoulliMlpDecoder& proto,
                           double theta_prior_scale) {
  auto shared = std::make_shared<BernoulliMlpDecoder>(proto);
  LikelihoodModel m;
  m.theta_dim = proto.generator.param_count();
  m.x_dim = proto.generator.output_dim();
  m.z_dim = proto.generator.input_dim();
  auto with_theta = [shared](const Vec& theta) {
    auto dec = std::make_shared<BernoulliMlpDecoder>(*shared);
    dec->generator.set_params(theta);
    return dec;
  };
  m.log_lik = [with_theta](const Vec& theta, const Vec& x, const Vec& z) {
    return bernoulli_log_lik(*with_theta(theta), x, z);
  };
  m.score_z = [with_theta](const Vec& theta, const Vec& x, const Vec& z) {
    return bernoulli_scores(*with_theta(theta), x, z).z;
  };
  m.score_theta = [with_theta](const Vec& theta, const Vec& x, const Vec& z) {
    return bernoulli_scores(*with_theta(theta), x, z).params;
  };
  m.log_prior_z = [](const Vec& z) { return standard_normal_log_density(z); };
  m.prior_score_z = [](const Vec& z) { return Vec(-z); };
  m.log_prior_theta = [theta_prior_scale](const Vec& theta) {
    return gaussian_param_log_prior(theta, theta_prior_scale);
  };
  m.prior_score_theta = [theta_prior_scale](const Vec& theta) {
    return Vec(-theta / (theta_prior_scale * theta_prior_scale));
  };
  m.bind = [with_theta](const Vec& theta) {
    auto dec = with_theta(theta);
    BoundDecoder b;
    b.log_lik = [dec](const Vec& x, const Vec& z) {
      return bernoulli_log_lik(*dec, x, z);
    };
    b.score_z = [dec](const Vec& x, const Vec& z) {
      return bernoulli_scores(*dec, x, z).z;
    };
    b.score_theta = [dec](const Vec& x, const Vec& z) {
      return bernoulli_scores(*dec, x, z).params;
    };
    return b;
  };
  return m;
}

LikelihoodModel make_model(const PoissonFactorDecoder& proto) {
  auto shared = std::make_shared<PoissonFactorDecoder>(proto);
  const int p = static_cast<int>(proto.loadings_unconstrained.rows());
  const int v = static_cast<int>(proto.loadings_unconstrained.cols());
  LikelihoodModel m;
  m.theta_dim = p * v;
  m.x_dim = p;
  m.z_dim = v;
  auto with_theta = [shared, p, v](const Vec& theta) {
    PoissonFactorDecoder dec = *shared;
    dec.loadings_unconstrained = unflatten_row_major(theta, p, v);
    return dec;
  };
  m.log_lik = [with_theta](const Vec& theta, const Vec& x, const Vec& z) {
    return poisson_log_lik(with_theta(theta), x, z);
  };
  // poisson_scores folds the z prior and jacobian in, so prior_score_z is 0.
  m.score_z = [with_theta](const Vec& theta, const Vec& x, const Vec& z) {
    return poisson_scores(with_theta(theta), x, z).z;
  };
  m.score_theta = [with_theta](const Vec& theta, const Vec& x, const Vec& z) {
    return flatten_row_major(poisson_scores(with_theta(theta), x, z).theta);
  };
  m.log_prior_z = [with_theta, shared](const Vec& z) {
    return poisson_log_prior_z(*shared, z);
  };
  m.prior_score_z = [](const Vec& z) { return Vec(Vec::Zero(z.size())); };
  m.log_prior_theta = [with_theta](const Vec& theta) {
    return poisson_log_prior_theta(with_theta(theta));
  };
  m.prior_score_theta = [](const Vec& theta) {
    return Vec(Vec::Zero(theta.size()));  // folded into score_theta
  };
  m.bind = [with_theta](const Vec& theta) {
    auto dec = std::make_shared<PoissonFactorDecoder>(with_theta(theta));
    BoundDecoder b;
    b.log_lik = [dec](const Vec& x, const Vec& z) {
      return poisson_log_lik(*dec, x, z);
    };
    b.score_z = [dec](const Vec& x, const Vec& z) {
      return poisson_scores(*dec, x, z).z;
    };
    b.score_theta = [dec](const Vec& x, const Vec& z) {
      return flatten_row_major(poisson_scores(*dec, x, z).theta);
    };
    return b;
  };
  return m;
}

LabelModel make_label_model(int num_classes, int z_dim, double prior_scale) {
  LabelModel m;
  m.theta_dim = num_classes * z_dim;
  m.z_dim = z_dim;
  m.num_classes = num_classes;
  auto with_theta = [num_classes, z_dim](const Vec& tt) {
    return SoftmaxLabelDecoder{unflatten_row_major(tt, num_classes, z_dim)};
  };
  m.log_lik = [with_theta](const Vec& tt, int y, const Vec& z) {
    return softmax_label_log_lik(with_theta(tt), y, z);
  };
  m.score_z = [with_theta](const Vec& tt, int y, const Vec& z) {
    return softmax_label_scores(with_theta(tt), y, z).z;
  };
  m.score_theta = [with_theta](const Vec& tt, int y, const Vec& z) {
    return flatten_row_major(softmax_label_scores(with_theta(tt), y, z).theta_tilde);
  };
  m.log_prior_theta = [prior_scale](const Vec& tt) {
    return gaussian_param_log_prior(tt, prior_scale);
  };
  m.prior_score_theta = [prior_scale](const Vec& tt) {
    return Vec(-tt / (prior_scale * prior_scale));
  };
  m.probs = [with_theta](const Vec& tt, const Vec& z) {
    return softmax_label_probs(with_theta(tt), z);
  };
  return m;
}

}  // namespace steinflow::models
