#include "steinflow/trainer.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

// Checkpoint format "steinflow-checkpoint 1": a line-oriented text dump.
// Doubles are written with 17 significant digits, which round-trips IEEE
// doubles exactly. Matrices are written row-major, one row per line.

namespace steinflow::trainer {

namespace {

void write_double(std::ostream& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

void write_mat(std::ostream& out, const Mat& m) {
  out << m.rows() << " " << m.cols() << "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << " ";
      write_double(out, m(r, c));
    }
    out << "\n";
  }
}

Mat read_mat(std::istream& in) {
  Eigen::Index rows = 0, cols = 0;
  if (!(in >> rows >> cols)) throw std::runtime_error("checkpoint: bad matrix header");
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      if (!(in >> m(r, c))) throw std::runtime_error("checkpoint: truncated matrix");
  return m;
}

void expect_token(std::istream& in, const std::string& expected) {
  std::string tok;
  if (!(in >> tok) || tok != expected)
    throw std::runtime_error("checkpoint: expected '" + expected + "', got '" + tok + "'");
}

void write_particle_set(std::ostream& out, const svgd::ParticleSet& set) {
  out << "particle_set " << set.step_count << "\n";
  write_mat(out, set.particles);
  write_mat(out, set.adam_m);
  write_mat(out, set.adam_v);
}

svgd::ParticleSet read_particle_set(std::istream& in) {
  expect_token(in, "particle_set");
  std::int64_t steps = 0;
  in >> steps;
  svgd::ParticleSet set;
  set.particles = read_mat(in);
  set.adam_m = read_mat(in);
  set.adam_v = read_mat(in);
  set.step_count = steps;
  return set;
}

const char* act_name(nn::Activation a) {
  switch (a) {
    case nn::Activation::Identity: return "identity";
    case nn::Activation::Tanh: return "tanh";
    case nn::Activation::Softplus: return "softplus";
    case nn::Activation::LeakyRelu: return "leaky_relu";
    case nn::Activation::Softmax: return "softmax";
  }
  return "identity";
}

nn::Activation act_from_name(const std::string& s) {
  if (s == "identity") return nn::Activation::Identity;
  if (s == "tanh") return nn::Activation::Tanh;
  if (s == "softplus") return nn::Activation::Softplus;
  if (s == "leaky_relu") return nn::Activation::LeakyRelu;
  if (s == "softmax") return nn::Activation::Softmax;
  throw std::runtime_error("checkpoint: unknown activation '" + s + "'");
}

void write_mlp(std::ostream& out, const nn::Mlp& net) {
  out << "mlp " << net.layers().size() << "\n";
  for (const nn::Layer& layer : net.layers()) {
    out << "layer " << act_name(layer.act) << " ";
    write_double(out, layer.leaky_slope);
    out << "\n";
    write_mat(out, layer.weight);
    Mat bias_row(1, layer.bias.size());
    bias_row.row(0) = layer.bias.transpose();
    write_mat(out, bias_row);
  }
}

nn::Mlp read_mlp(std::istream& in) {
  expect_token(in, "mlp");
  size_t count = 0;
  in >> count;
  std::vector<nn::Layer> layers;
  layers.reserve(count);
  for (size_t l = 0; l < count; ++l) {
    expect_token(in, "layer");
    std::string act;
    double slope = 0.2;
    in >> act >> slope;
    nn::Layer layer;
    layer.act = act_from_name(act);
    layer.leaky_slope = slope;
    layer.weight = read_mat(in);
    const Mat bias_row = read_mat(in);
    layer.bias = bias_row.row(0).transpose();
    layers.push_back(std::move(layer));
  }
  return nn::Mlp(std::move(layers));
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out << "steinflow-checkpoint 1\n";
  out << "epoch " << state.epoch << "\n";
  out << "theta_groups " << state.theta_groups.size() << "\n";
  for (const auto& g : state.theta_groups) write_particle_set(out, g);
  out << "label_groups " << state.label_groups.size() << "\n";
  for (const auto& g : state.label_groups) write_particle_set(out, g);
  out << "recognition " << state.rec.data_dim << " " << state.rec.noise_dim << "\n";
  write_mlp(out, state.rec.net);
  out << "codes " << state.last_codes.size() << "\n";
  for (size_t i = 0; i < state.last_codes.size(); ++i) {
    out << "datum " << state.last_codes.datum_ids[i] << "\n";
    write_mat(out, state.last_codes.codes[i]);
  }
  out << "history " << state.history.size() << "\n";
  for (const MetricRow& row : state.history) {
    out << row.epoch << " " << row.minibatch << " " << row.name << " ";
    write_double(out, row.value);
    out << "\n";
  }
  out << "end\n";
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  expect_token(in, "steinflow-checkpoint");
  int version = 0;
  in >> version;
  if (version != 1)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  TrainState state;
  expect_token(in, "epoch");
  in >> state.epoch;
  expect_token(in, "theta_groups");
  size_t k = 0;
  in >> k;
  for (size_t i = 0; i < k; ++i) state.theta_groups.push_back(read_particle_set(in));
  expect_token(in, "label_groups");
  size_t kl = 0;
  in >> kl;
  for (size_t i = 0; i < kl; ++i) state.label_groups.push_back(read_particle_set(in));
  expect_token(in, "recognition");
  in >> state.rec.data_dim >> state.rec.noise_dim;
  state.rec.net = read_mlp(in);
  expect_token(in, "codes");
  size_t n_codes = 0;
  in >> n_codes;
  for (size_t i = 0; i < n_codes; ++i) {
    expect_token(in, "datum");
    std::int64_t id = 0;
    in >> id;
    state.last_codes.add(id, read_mat(in));
  }
  expect_token(in, "history");
  size_t n_hist = 0;
  in >> n_hist;
  for (size_t i = 0; i < n_hist; ++i) {
    MetricRow row;
    if (!(in >> row.epoch >> row.minibatch >> row.name >> row.value))
      throw std::runtime_error("checkpoint: truncated history");
    state.history.push_back(std::move(row));
  }
  expect_token(in, "end");
  return state;
}

}  // namespace steinflow::trainer
