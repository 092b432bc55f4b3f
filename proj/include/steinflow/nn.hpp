#pragma once

#include "steinflow/numcore.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace steinflow::nn {

enum class Activation { Identity, Tanh, Softplus, LeakyRelu, Softmax };

struct Layer {
  Mat weight;  // out x in
  Vec bias;
  Activation act = Activation::Identity;
  double leaky_slope = 0.2;
};

// Cached forward pass for one input; consumed by backward().
struct Tape {
  Vec input;
  std::vector<Vec> preacts;
  std::vector<Vec> acts;
  std::uint64_t version = 0;
};

struct ParamGrads {
  std::vector<Mat> d_weight;
  std::vector<Vec> d_bias;
  Vec flatten() const;
};

// Plain MLP with manual forward/backward. Parameters mutate only through
// set_params / apply_param_step, which bump the version used to detect
// stale tapes.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<Layer> layers);

  int input_dim() const;
  int output_dim() const;
  const std::vector<Layer>& layers() const { return layers_; }
  std::uint64_t version() const { return version_; }

  int param_count() const;
  Vec flatten_params() const;  // row-major weights then bias, layer by layer
  void set_params(const Vec& flat);
  void apply_param_step(const ParamGrads& grads, double scale);

 private:
  std::vector<Layer> layers_;
  std::uint64_t version_ = 0;
};

// dims = {in, h1, ..., out}; acts has one entry per layer. Weights are
// N(0, 1/fan_in), biases zero.
Mlp make_mlp(const std::vector<int>& dims, const std::vector<Activation>& acts,
             RngStream& rng, double leaky_slope = 0.2);

std::pair<Vec, Tape> forward(const Mlp& net, const Vec& input);

// Exact reverse-mode gradients of <cotangent, output>.
std::pair<ParamGrads, Vec> backward(const Mlp& net, const Tape& tape,
                                    const Vec& cotangent);

// d output_i / d input_j for j in [wrt_begin, wrt_begin + wrt_len);
// one backward pass per output row.
Mat input_jacobian(const Mlp& net, const Vec& input, int wrt_begin, int wrt_len);

double softplus(double x);
double sigmoid(double x);

}  // namespace steinflow::nn
