#include "steinflow/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace steinflow::nn {

double softplus(double x) {
  if (x > 30.0) return x;  // log(1 + e^x) -> x, avoids overflow
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

Vec apply_activation(const Layer& layer, const Vec& pre) {
  switch (layer.act) {
    case Activation::Identity:
      return pre;
    case Activation::Tanh:
      return pre.array().tanh();
    case Activation::Softplus: {
      Vec out(pre.size());
      for (Eigen::Index i = 0; i < pre.size(); ++i) out[i] = softplus(pre[i]);
      return out;
    }
    case Activation::LeakyRelu: {
      Vec out(pre.size());
      for (Eigen::Index i = 0; i < pre.size(); ++i)
        out[i] = pre[i] >= 0.0 ? pre[i] : layer.leaky_slope * pre[i];
      return out;
    }
    case Activation::Softmax: {
      const double lse = log_sum_exp(pre);
      return (pre.array() - lse).exp();
    }
  }
  throw std::logic_error("nn: unknown activation");
}

// Pulls the cotangent back through the activation at one layer.
Vec activation_backward(const Layer& layer, const Vec& pre, const Vec& act,
                        const Vec& cot) {
  switch (layer.act) {
    case Activation::Identity:
      return cot;
    case Activation::Tanh:
      return ((1.0 - act.array().square()) * cot.array()).matrix();
    case Activation::Softplus: {
      Vec out(pre.size());
      for (Eigen::Index i = 0; i < pre.size(); ++i)
        out[i] = sigmoid(pre[i]) * cot[i];
      return out;
    }
    case Activation::LeakyRelu: {
      Vec out(pre.size());
      for (Eigen::Index i = 0; i < pre.size(); ++i)
        out[i] = (pre[i] >= 0.0 ? 1.0 : layer.leaky_slope) * cot[i];
      return out;
    }
    case Activation::Softmax: {
      const double dot = act.dot(cot);
      return (act.array() * (cot.array() - dot)).matrix();
    }
  }
  throw std::logic_error("nn: unknown activation");
}

}  // namespace

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  for (size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    if (layer.weight.rows() != layer.bias.size())
      throw std::invalid_argument("nn: bias size does not match layer rows");
    if (l > 0 && layers_[l - 1].weight.rows() != layer.weight.cols())
      throw std::invalid_argument("nn: adjacent layer dimensions do not chain");
    if (layer.act == Activation::Softmax && l + 1 != layers_.size())
      throw std::invalid_argument("nn: softmax is only valid as the final activation");
    check_finite(layer.weight, "nn: layer weight");
    check_finite(layer.bias, "nn: layer bias");
  }
}

int Mlp::input_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols());
}

int Mlp::output_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows());
}

int Mlp::param_count() const {
  int n = 0;
  for (const Layer& l : layers_)
    n += static_cast<int>(l.weight.size() + l.bias.size());
  return n;
}

Vec Mlp::flatten_params() const {
  Vec flat(param_count());
  Eigen::Index at = 0;
  for (const Layer& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) flat[at++] = l.weight(r, c);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) flat[at++] = l.bias[i];
  }
  return flat;
}

void Mlp::set_params(const Vec& flat) {
  if (flat.size() != param_count())
    throw std::invalid_argument("nn: flat parameter size mismatch");
  Eigen::Index at = 0;
  for (Layer& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat[at++];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = flat[at++];
  }
  ++version_;
}

void Mlp::apply_param_step(const ParamGrads& grads, double scale) {
  if (grads.d_weight.size() != layers_.size())
    throw std::invalid_argument("nn: gradient layer count mismatch");
  for (size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].weight += scale * grads.d_weight[l];
    layers_[l].bias += scale * grads.d_bias[l];
  }
  ++version_;
}

Vec ParamGrads::flatten() const {
  Eigen::Index n = 0;
  for (size_t l = 0; l < d_weight.size(); ++l)
    n += d_weight[l].size() + d_bias[l].size();
  Vec flat(n);
  Eigen::Index at = 0;
  for (size_t l = 0; l < d_weight.size(); ++l) {
    for (Eigen::Index r = 0; r < d_weight[l].rows(); ++r)
      for (Eigen::Index c = 0; c < d_weight[l].cols(); ++c)
        flat[at++] = d_weight[l](r, c);
    for (Eigen::Index i = 0; i < d_bias[l].size(); ++i) flat[at++] = d_bias[l][i];
  }
  return flat;
}

Mlp make_mlp(const std::vector<int>& dims, const std::vector<Activation>& acts,
             RngStream& rng, double leaky_slope) {
  if (dims.size() < 2 || acts.size() + 1 != dims.size())
    throw std::invalid_argument("nn: need one activation per layer");
  std::vector<Layer> layers;
  layers.reserve(acts.size());
  for (size_t l = 0; l < acts.size(); ++l) {
    Layer layer;
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    layer.weight = Mat(fan_out, fan_in);
    const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = sd * rng.gaussian();
    layer.bias = Vec::Zero(fan_out);
    layer.act = acts[l];
    layer.leaky_slope = leaky_slope;
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

std::pair<Vec, Tape> forward(const Mlp& net, const Vec& input) {
  if (input.size() != net.input_dim())
    throw std::invalid_argument("nn: input length does not match first layer");
  Tape tape;
  tape.input = input;
  tape.version = net.version();
  tape.preacts.reserve(net.layers().size());
  tape.acts.reserve(net.layers().size());
  Vec cur = input;
  for (const Layer& layer : net.layers()) {
    Vec pre = layer.weight * cur + layer.bias;
    cur = apply_activation(layer, pre);
    tape.preacts.push_back(std::move(pre));
    tape.acts.push_back(cur);
  }
  return {cur, std::move(tape)};
}

std::pair<ParamGrads, Vec> backward(const Mlp& net, const Tape& tape,
                                    const Vec& cotangent) {
  const auto& layers = net.layers();
  if (tape.version != net.version())
    throw std::runtime_error("nn: stale tape");
  if (tape.preacts.size() != layers.size())
    throw std::runtime_error("nn: tape does not match network");
  if (cotangent.size() != net.output_dim())
    throw std::invalid_argument("nn: cotangent length does not match output");

  ParamGrads grads;
  grads.d_weight.resize(layers.size());
  grads.d_bias.resize(layers.size());
  Vec cot = cotangent;
  for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
    const Layer& layer = layers[l];
    const Vec& below = l == 0 ? tape.input : tape.acts[l - 1];
    Vec dpre = activation_backward(layer, tape.preacts[l], tape.acts[l], cot);
    grads.d_weight[l] = dpre * below.transpose();
    grads.d_bias[l] = dpre;
    cot = layer.weight.transpose() * dpre;
  }
  return {std::move(grads), std::move(cot)};
}

Mat input_jacobian(const Mlp& net, const Vec& input, int wrt_begin, int wrt_len) {
  if (wrt_begin < 0 || wrt_len < 0 || wrt_begin + wrt_len > net.input_dim())
    throw std::invalid_argument("nn: jacobian range outside input dims");
  auto [out, tape] = forward(net, input);
  Mat jac(out.size(), wrt_len);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    Vec cot = Vec::Zero(out.size());
    cot[i] = 1.0;
    auto [grads, input_grad] = backward(net, tape, cot);
    jac.row(i) = input_grad.segment(wrt_begin, wrt_len).transpose();
  }
  return jac;
}

}  // namespace steinflow::nn
