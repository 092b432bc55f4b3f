#include "steinflow/recognition.hpp"

#include <cmath>
#include <stdexcept>

namespace steinflow::recognition {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Vec concat(const Vec& x, const Vec& xi) {
  Vec joined(x.size() + xi.size());
  joined << x, xi;
  return joined;
}

}  // namespace

RecognitionNet make_recognition(int data_dim, int latent_dim,
                                const std::vector<int>& hidden, RngStream& rng) {
  std::vector<int> dims;
  dims.push_back(data_dim + latent_dim);
  for (int h : hidden) dims.push_back(h);
  dims.push_back(latent_dim);
  std::vector<nn::Activation> acts(dims.size() - 1, nn::Activation::Tanh);
  acts.back() = nn::Activation::Identity;
  RecognitionNet rec;
  rec.net = nn::make_mlp(dims, acts, rng);
  rec.data_dim = data_dim;
  rec.noise_dim = latent_dim;
  return rec;
}

Vec draw_code(const RecognitionNet& rec, const Vec& x, const Vec& xi) {
  if (x.size() != rec.data_dim || xi.size() != rec.noise_dim)
    throw std::invalid_argument("recognition: input dimension mismatch");
  return nn::forward(rec.net, concat(x, xi)).first;
}

std::vector<Vec> draw_codes(const RecognitionNet& rec, const Vec& x,
                            std::span<const Vec> noises) {
  std::vector<Vec> codes;
  codes.reserve(noises.size());
  for (const Vec& xi : noises) codes.push_back(draw_code(rec, x, xi));
  return codes;
}

std::vector<double> fit_codes(RecognitionNet& rec,
                              std::span<const CodeFitExample> batch, int steps,
                              double lr) {
  if (steps < 1) throw std::invalid_argument("fit_codes: steps must be >= 1");
  std::vector<double> trace;
  trace.reserve(steps + 1);
  for (int step = 0; step < steps; ++step) {
    double loss = 0.0;
    nn::ParamGrads total;
    bool first = true;
    for (const CodeFitExample& ex : batch) {
      auto [out, tape] = nn::forward(rec.net, concat(ex.x, ex.noise));
      const Vec residual = out - ex.target;
      loss += residual.squaredNorm();
      auto [grads, input_grad] = nn::backward(rec.net, tape, 2.0 * residual);
      if (first) {
        total = std::move(grads);
        first = false;
      } else {
        for (size_t l = 0; l < total.d_weight.size(); ++l) {
          total.d_weight[l] += grads.d_weight[l];
          total.d_bias[l] += grads.d_bias[l];
        }
      }
    }
    trace.push_back(loss);
    if (!first) rec.net.apply_param_step(total, -lr);
  }
  double final_loss = 0.0;
  for (const CodeFitExample& ex : batch)
    final_loss += (draw_code(rec, ex.x, ex.noise) - ex.target).squaredNorm();
  trace.push_back(final_loss);
  return trace;
}

double code_log_density(const RecognitionNet& rec, const Vec& x, const Vec& xi) {
  if (rec.noise_dim != rec.latent_dim())
    throw std::invalid_argument("code_log_density: requires noise dim == latent dim");
  if (x.size() != rec.data_dim || xi.size() != rec.noise_dim)
    throw std::invalid_argument("recognition: input dimension mismatch");
  const Mat jac = nn::input_jacobian(rec.net, concat(x, xi), rec.data_dim,
                                     rec.noise_dim);
  const LogDet det = lu_log_abs_det(jac);
  if (det.sign == 0)
    throw std::runtime_error("recognition: non-invertible code map at sample");
  const double log_q0 =
      -0.5 * xi.squaredNorm() - 0.5 * static_cast<double>(xi.size()) * kLog2Pi;
  return log_q0 - det.log_abs_det;
}

}  // namespace steinflow::recognition
