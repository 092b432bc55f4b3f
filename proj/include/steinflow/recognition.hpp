#pragma once

#include "steinflow/nn.hpp"
#include "steinflow/numcore.hpp"

#include <span>
#include <vector>

namespace steinflow::recognition {

// Amortized sampler z = f_eta(x, xi) over concat(x, xi), with xi drawn from
// an isotropic Gaussian base. noise_dim equals the latent dim so the code
// density is defined via change of variables everywhere.
struct RecognitionNet {
  nn::Mlp net;
  int data_dim = 0;
  int noise_dim = 0;

  int latent_dim() const { return net.output_dim(); }
};

// Hidden layers are tanh, output identity; noise_dim = latent_dim.
RecognitionNet make_recognition(int data_dim, int latent_dim,
                                const std::vector<int>& hidden, RngStream& rng);

Vec draw_code(const RecognitionNet& rec, const Vec& x, const Vec& xi);
std::vector<Vec> draw_codes(const RecognitionNet& rec, const Vec& x,
                            std::span<const Vec> noises);

struct CodeFitExample {
  Vec x;
  Vec noise;
  Vec target;
};

// K gradient-descent steps on sum_i ||f(x_i, xi_i) - target_i||^2, step size
// lr, gradient realized as a Jacobian-transpose product with cotangent
// 2 (f - target). Returns the loss before each step plus the final loss
// (length K + 1).
std::vector<double> fit_codes(RecognitionNet& rec,
                              std::span<const CodeFitExample> batch, int steps,
                              double lr);

// log q(z) at z = f(x, xi):  log q0(xi) - log |det d f / d xi|.
// Throws if the Jacobian is singular.
double code_log_density(const RecognitionNet& rec, const Vec& x, const Vec& xi);

}  // namespace steinflow::recognition
