#pragma once

#include "steinflow/nn.hpp"
#include "steinflow/numcore.hpp"

#include <functional>
#include <memory>

namespace steinflow::models {

// ---- two-mode isotropic Gaussian prior  z ~ 1/2 N(mu1, I) + 1/2 N(mu2, I)

double gmm_prior_log_density(const Vec& z, const Vec& mu1, const Vec& mu2);
Vec gmm_prior_score(const Vec& z, const Vec& mu1, const Vec& mu2);

// ---- linear Gaussian decoder  x | z ~ N(theta z, sigma^2 I)

struct GaussianLinearDecoder {
  Mat theta;  // P x K
  double sigma = 1.0;
  Vec prior_mu1;  // prior modes for z, dim K
  Vec prior_mu2;
};

struct GaussianLinearScores {
  Vec z;      // theta^T (x - theta z) / sigma^2       (likelihood part only)
  Mat theta;  // (x - theta z) z^T / sigma^2
};

GaussianLinearScores gaussian_linear_scores(const GaussianLinearDecoder& dec,
                                            const Vec& x, const Vec& z);
double gaussian_linear_log_lik(const GaussianLinearDecoder& dec, const Vec& x,
                               const Vec& z);

// Exact posterior of z | x under the decoder above: a two-component Gaussian
// mixture with shared covariance.
struct GmmPosterior {
  double mode1_weight = 0.5;  // p-hat
  Vec mean1;
  Vec mean2;
  Mat covariance;
};

// The appendix that derives this posterior writes the posterior mode as
// Sigma^{-1}(theta^T x / sigma^2 - mu_i) in one place; completing the square
// gives + mu_i. Both readings are implemented and the quadrature oracle in
// the tests picks the shipped default (AddPriorMean).
enum class MeanShiftReading { AddPriorMean, SubtractPriorMean };

GmmPosterior gmm_analytic_posterior(
    const Vec& x, const Mat& theta, double sigma, const Vec& mu1,
    const Vec& mu2, MeanShiftReading reading = MeanShiftReading::AddPriorMean);

// ---- Bernoulli MLP decoder  x_p ~ Bernoulli(sigmoid(logit_p(z)))

struct BernoulliMlpDecoder {
  nn::Mlp generator;  // z -> logits, identity final activation
};

struct BernoulliScores {
  Vec z;
  Vec params;  // flattened generator gradient
};

// Logits are clamped to +-30 before exponentiation.
double bernoulli_log_lik(const BernoulliMlpDecoder& dec, const Vec& x, const Vec& z);
BernoulliScores bernoulli_scores(const BernoulliMlpDecoder& dec, const Vec& x,
                                 const Vec& z);

// ---- Poisson factor decoder  x ~ Pois(theta z), theta,z positive
//
// Particles live unconstrained; positivity comes from a softplus map with
// floor 1e-6, and the softplus log-Jacobian is part of the reparameterized
// log density. The simplex prior on loadings columns is relaxed to
// independent gamma(alpha, 1) factors.

struct PoissonFactorDecoder {
  Mat loadings_unconstrained;       // P x V
  double loading_gamma_shape = 1.1; // alpha of the relaxed Dirichlet
  double score_gamma_shape = 2.0;
  double score_gamma_rate = 1.0;
};

struct PoissonScores {
  Vec z;      // includes z prior + jacobian terms
  Mat theta;  // includes loading prior + jacobian terms
};

double softplus_floored(double u);           // max(softplus(u), 1e-6)
double poisson_log_lik(const PoissonFactorDecoder& dec, const Vec& x,
                       const Vec& z_unconstrained);
double poisson_log_prior_z(const PoissonFactorDecoder& dec, const Vec& z_unconstrained);
Vec poisson_prior_score_z(const PoissonFactorDecoder& dec, const Vec& z_unconstrained);
double poisson_log_prior_theta(const PoissonFactorDecoder& dec);
PoissonScores poisson_scores(const PoissonFactorDecoder& dec, const Vec& x,
                             const Vec& z_unconstrained);

// ---- softmax label decoder  p(y | z) = softmax(theta_tilde z)[y]

struct SoftmaxLabelDecoder {
  Mat theta_tilde;  // C x d_z
};

struct SoftmaxLabelScores {
  Vec z;
  Mat theta_tilde;
};

Vec softmax_label_probs(const SoftmaxLabelDecoder& dec, const Vec& z);
double softmax_label_log_lik(const SoftmaxLabelDecoder& dec, int y, const Vec& z);
// y is a zero-based class index in [0, C).
SoftmaxLabelScores softmax_label_scores(const SoftmaxLabelDecoder& dec, int y,
                                        const Vec& z);

// ---- type-erased decoder contract used by the trainer and evaluators
//
// theta is the flattened decoder parameter vector (row-major matrices).
// score_z may fold prior terms into itself (Poisson does); in that case
// prior_score_z is zero so the combination stays correct.

struct BoundDecoder {
  std::function<double(const Vec& x, const Vec& z)> log_lik;
  std::function<Vec(const Vec& x, const Vec& z)> score_z;
  std::function<Vec(const Vec& x, const Vec& z)> score_theta;
};

struct LikelihoodModel {
  int theta_dim = 0;
  int x_dim = 0;
  int z_dim = 0;
  std::function<double(const Vec& theta, const Vec& x, const Vec& z)> log_lik;
  std::function<Vec(const Vec& theta, const Vec& x, const Vec& z)> score_z;
  std::function<Vec(const Vec& theta, const Vec& x, const Vec& z)> score_theta;
  std::function<double(const Vec& z)> log_prior_z;
  std::function<Vec(const Vec& z)> prior_score_z;
  std::function<double(const Vec& theta)> log_prior_theta;
  std::function<Vec(const Vec& theta)> prior_score_theta;
  // Amortizes per-particle setup (e.g. unflattening MLP weights) across a
  // minibatch worth of (x, z) evaluations.
  std::function<BoundDecoder(const Vec& theta)> bind;
};

Vec flatten_row_major(const Mat& m);
Mat unflatten_row_major(const Vec& v, int rows, int cols);

LikelihoodModel make_model(const GaussianLinearDecoder& proto,
                           double theta_prior_scale = 1.0);
LikelihoodModel make_model(const BernoulliMlpDecoder& proto,
                           double theta_prior_scale = 1.0);
LikelihoodModel make_model(const PoissonFactorDecoder& proto);

struct LabelModel {
  int theta_dim = 0;
  int z_dim = 0;
  int num_classes = 0;
  std::function<double(const Vec& theta_tilde, int y, const Vec& z)> log_lik;
  std::function<Vec(const Vec& theta_tilde, int y, const Vec& z)> score_z;
  std::function<Vec(const Vec& theta_tilde, int y, const Vec& z)> score_theta;
  std::function<double(const Vec& theta_tilde)> log_prior_theta;
  std::function<Vec(const Vec& theta_tilde)> prior_score_theta;
  std::function<Vec(const Vec& theta_tilde, const Vec& z)> probs;
};

LabelModel make_label_model(int num_classes, int z_dim,
                            double prior_scale = 1.0);

}  // namespace steinflow::models
