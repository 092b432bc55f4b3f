#pragma once

#include "steinflow/iwsvgd.hpp"
#include "steinflow/kernels.hpp"
#include "steinflow/models.hpp"
#include "steinflow/numcore.hpp"
#include "steinflow/recognition.hpp"
#include "steinflow/svgd.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace steinflow::trainer {

struct RunConfig {
  int m_theta = 100;  // decoder particles per group
  int m_codes = 100;  // latent code samples per datum
  int iw_k = 50;      // importance-weighted groups
  int batch = 64;
  int epochs = 1;
  double lr_theta = 2e-4;  // Adam lr for decoder particles (eps_1)
  double lr_label = 2e-4;  // Adam lr for label-decoder particles (eps_2)
  double lr_code = 2e-4;   // per-visit step for code clouds
  double recog_lr = 1e-3;  // delta, recognition fit step size
  int recog_steps = 5;     // K gradient steps per minibatch
  std::uint64_t seed = 0;
  std::uint64_t shuffle_salt = 0;
  double zeta_override = -1.0;  // < 0 means use N_X / (C rho)
  kernels::BandwidthMode bandwidth_mode = kernels::BandwidthMode::Squared;
  bool shared_noise = true;   // xi_jn = xi_j across the minibatch
  bool train_decoder = true;  // false pins theta (experiments with known decoders)
  bool raw_step = false;      // plain eps steps instead of Adam
  double prior_scale = 1.0;
  double leaky_slope = 0.2;
};

struct MetricRow {
  std::int64_t epoch = 0;
  std::int64_t minibatch = -1;  // -1 for epoch-level metrics
  std::string name;
  double value = 0.0;
};

struct Dataset {
  std::vector<Vec> x;
  std::vector<int> y;  // empty when unlabeled

  size_t size() const { return x.size(); }
  int dim() const { return x.empty() ? 0 : static_cast<int>(x[0].size()); }
};

struct TrainState {
  std::vector<svgd::ParticleSet> theta_groups;  // size 1 (VAE) or k (VIWAE)
  std::vector<svgd::ParticleSet> label_groups;  // empty outside semi-supervised runs
  recognition::RecognitionNet rec;
  svgd::CodeBank last_codes;  // group-0 refined codes of the last minibatch
  std::int64_t epoch = 0;
  std::vector<MetricRow> history;
};

// Stream roots for the deterministic substream layout; exposed so reduction
// tests can replay the exact noise the epochs consume.
inline constexpr std::uint64_t kStreamShuffle = 11;
inline constexpr std::uint64_t kStreamNoise = 12;

// iid N(0, sd^2) particles, one ParticleSet per group.
std::vector<svgd::ParticleSet> init_particle_groups(int k, int m, int dim,
                                                    double sd, RngStream rng);

// One initialized MLP parameter vector per particle row.
Mat init_mlp_particles(int m, const std::vector<int>& dims,
                       const std::vector<nn::Activation>& acts, RngStream rng,
                       double leaky_slope = 0.2);

Mat pooled_particles(const std::vector<svgd::ParticleSet>& groups);

// One pass over `data` in shuffled minibatches: draw codes, transport codes
// (Eq. for Delta z), transport decoder particles (Delta theta) unless the
// decoder is pinned, then fit the recognition net to the refined codes.
void stein_vae_epoch(TrainState& state, const Dataset& data,
                     const models::LikelihoodModel& model, const RunConfig& cfg);

// Importance-weighted variant over state.theta_groups.size() groups. With a
// single group it consumes identical randomness and produces bit-identical
// state to stein_vae_epoch.
void stein_viwae_epoch(TrainState& state, const Dataset& data,
                       const models::LikelihoodModel& model, const RunConfig& cfg);

// Semi-supervised pass: minibatches are drawn from the union; labeled items
// add zeta-weighted label scores to their code updates, feed the label
// decoder particles, and join the decoder update. zeta = N_X / (C rho) with
// rho the labeled fraction of the minibatch, unless overridden.
void semisup_epoch(TrainState& state, const Dataset& unlabeled,
                   const Dataset& labeled, const models::LikelihoodModel& model,
                   const models::LabelModel& label_model, const RunConfig& cfg);

// Model-averaged class probabilities: mean over label particles (rows) and
// noise draws of softmax(theta_tilde f(x, xi)).
Vec predict_label(const Vec& x, const Mat& label_particles,
                  const models::LabelModel& label_model,
                  const recognition::RecognitionNet& rec, int samples,
                  RngStream rng);

// Versioned structured-text dump; round-trips exactly (17 significant digits).
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

}  // namespace steinflow::trainer
