#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "steinflow/eval.hpp"
#include "steinflow/nn.hpp"

#include <cmath>

using namespace steinflow;
using nn::Activation;

namespace {

nn::Mlp single_layer(Mat w, Vec b, Activation act) {
  nn::Layer layer;
  layer.weight = std::move(w);
  layer.bias = std::move(b);
  layer.act = act;
  return nn::Mlp({layer});
}

}  // namespace

TEST_CASE("identity layer passes input through") {
  nn::Mlp net = single_layer(Mat::Identity(3, 3), Vec::Zero(3), Activation::Identity);
  const Vec in = (Vec(3) << 1.0, -2.0, 0.5).finished();
  CHECK((nn::forward(net, in).first - in).norm() == 0.0);
}

TEST_CASE("tanh layer with zero weights outputs zero") {
  nn::Mlp net = single_layer(Mat::Zero(2, 3), Vec::Zero(2), Activation::Tanh);
  const Vec in = (Vec(3) << 1.0, 2.0, 3.0).finished();
  CHECK(nn::forward(net, in).first.norm() == 0.0);
}

TEST_CASE("two-layer forward matches independent recomputation") {
  RngStream rng(11, 0);
  nn::Mlp net = nn::make_mlp({3, 4, 2}, {Activation::Tanh, Activation::Identity}, rng);
  const Vec in = sample_gaussian(rng, 3);
  const Vec out = nn::forward(net, in).first;

  // straightforward recomputation from the raw layer parameters
  const auto& l0 = net.layers()[0];
  const auto& l1 = net.layers()[1];
  Vec h = l0.weight * in + l0.bias;
  for (int i = 0; i < h.size(); ++i) h[i] = std::tanh(h[i]);
  const Vec expect = l1.weight * h + l1.bias;
  CHECK((out - expect).norm() < 1e-12);
}

TEST_CASE("forward rejects dimension mismatch") {
  RngStream rng(11, 1);
  nn::Mlp net = nn::make_mlp({3, 2}, {Activation::Identity}, rng);
  CHECK_THROWS_AS(nn::forward(net, Vec::Zero(4)), std::invalid_argument);
}

TEST_CASE("zero cotangent gives zero gradients") {
  RngStream rng(12, 0);
  nn::Mlp net = nn::make_mlp({3, 5, 2}, {Activation::Softplus, Activation::Identity}, rng);
  const auto [out, tape] = nn::forward(net, sample_gaussian(rng, 3));
  const auto [grads, input_grad] = nn::backward(net, tape, Vec::Zero(2));
  CHECK(grads.flatten().norm() == 0.0);
  CHECK(input_grad.norm() == 0.0);
}

TEST_CASE("linear layer analytic gradients") {
  RngStream rng(13, 0);
  Mat w(2, 3);
  w << 1.0, -2.0, 0.5, 0.25, 3.0, -1.0;
  nn::Mlp net = single_layer(w, (Vec(2) << 0.1, -0.2).finished(), Activation::Identity);
  const Vec x = (Vec(3) << 0.7, -0.3, 1.1).finished();
  const Vec u = (Vec(2) << 2.0, -1.5).finished();
  const auto [out, tape] = nn::forward(net, x);
  const auto [grads, input_grad] = nn::backward(net, tape, u);
  CHECK((grads.d_weight[0] - u * x.transpose()).norm() < 1e-14);
  CHECK((grads.d_bias[0] - u).norm() < 1e-14);
  CHECK((input_grad - w.transpose() * u).norm() < 1e-14);
}

TEST_CASE("backward matches finite differences for every activation") {
  RngStream rng(14, 0);
  const Activation acts[] = {Activation::Identity, Activation::Tanh,
                             Activation::Softplus, Activation::LeakyRelu,
                             Activation::Softmax};
  for (Activation act : acts) {
    for (int t = 0; t < 4; ++t) {
      nn::Mlp net = nn::make_mlp({3, 4, 3}, {Activation::Tanh, act}, rng);
      const Vec x = sample_gaussian(rng, 3);
      const Vec u = sample_gaussian(rng, 3);

      auto objective = [&](const Vec& params) {
        nn::Mlp net2 = net;
        net2.set_params(params);
        return u.dot(nn::forward(net2, x).first);
      };
      auto grad = [&](const Vec& params) {
        nn::Mlp net2 = net;
        net2.set_params(params);
        const auto [out, tape] = nn::forward(net2, x);
        return nn::backward(net2, tape, u).first.flatten();
      };
      const double err =
          eval::grad_check(objective, grad, net.flatten_params(), 1e-5);
      CAPTURE(static_cast<int>(act));
      CHECK(err < 1e-4);

      // input gradient against finite differences as well
      auto in_obj = [&](const Vec& input) {
        return u.dot(nn::forward(net, input).first);
      };
      auto in_grad = [&](const Vec& input) {
        const auto [out, tape] = nn::forward(net, input);
        return nn::backward(net, tape, u).second;
      };
      CHECK(eval::grad_check(in_obj, in_grad, x, 1e-5) < 1e-4);
    }
  }
}

TEST_CASE("stale tape is rejected") {
  RngStream rng(15, 0);
  nn::Mlp net = nn::make_mlp({2, 2}, {Activation::Identity}, rng);
  const auto [out, tape] = nn::forward(net, Vec::Zero(2));
  net.set_params(net.flatten_params());  // bumps version
  CHECK_THROWS_WITH_AS(nn::backward(net, tape, Vec::Zero(2)), "nn: stale tape",
                       std::runtime_error);
}

TEST_CASE("input_jacobian on identity and linear nets") {
  nn::Mlp ident = single_layer(Mat::Identity(3, 3), Vec::Zero(3), Activation::Identity);
  CHECK((nn::input_jacobian(ident, Vec::Zero(3), 0, 3) - Mat::Identity(3, 3)).norm() ==
        0.0);

  RngStream rng(16, 0);
  Mat a(2, 4);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) a(r, c) = rng.gaussian();
  nn::Mlp lin = single_layer(a, Vec::Zero(2), Activation::Identity);
  const Mat jac = nn::input_jacobian(lin, sample_gaussian(rng, 4), 1, 2);
  CHECK((jac - a.middleCols(1, 2)).norm() < 1e-14);
}

TEST_CASE("input_jacobian of tanh net matches finite differences") {
  RngStream rng(17, 0);
  nn::Mlp net = nn::make_mlp({3, 6, 2}, {Activation::Tanh, Activation::Identity}, rng);
  const Vec x = sample_gaussian(rng, 3);
  const Mat jac = nn::input_jacobian(net, x, 0, 3);
  const double eps = 1e-5;
  for (int c = 0; c < 3; ++c) {
    Vec lo = x, hi = x;
    lo[c] -= eps;
    hi[c] += eps;
    const Vec fd = (nn::forward(net, hi).first - nn::forward(net, lo).first) / (2 * eps);
    for (int r = 0; r < 2; ++r) {
      const double denom = std::max({std::abs(jac(r, c)), std::abs(fd[r]), 1e-8});
      CHECK(std::abs(jac(r, c) - fd[r]) / denom < 1e-4);
    }
  }
}

TEST_CASE("jacobian-transpose consistency with backward") {
  RngStream rng(18, 0);
  nn::Mlp net = nn::make_mlp({4, 5, 3}, {Activation::LeakyRelu, Activation::Identity}, rng);
  const Vec x = sample_gaussian(rng, 4);
  const Vec u = sample_gaussian(rng, 3);
  const Mat jac = nn::input_jacobian(net, x, 0, 4);
  const auto [out, tape] = nn::forward(net, x);
  const Vec input_grad = nn::backward(net, tape, u).second;
  CHECK((jac.transpose() * u - input_grad).norm() < 1e-10);
}

TEST_CASE("softmax only allowed as final activation") {
  RngStream rng(19, 0);
  CHECK_THROWS_AS(
      nn::make_mlp({2, 3, 2}, {Activation::Softmax, Activation::Identity}, rng),
      std::invalid_argument);
}
