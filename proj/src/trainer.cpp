#include "steinflow/trainer.hpp"

#include "steinflow/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace steinflow::trainer {

std::vector<svgd::ParticleSet> init_particle_groups(int k, int m, int dim,
                                                    double sd, RngStream rng) {
  if (k < 1 || m < 1 || dim < 1)
    throw std::invalid_argument("init_particle_groups: bad shape");
  std::vector<svgd::ParticleSet> groups;
  groups.reserve(k);
  for (int i = 0; i < k; ++i) {
    Mat p(m, dim);
    for (int j = 0; j < m; ++j)
      for (int d = 0; d < dim; ++d) p(j, d) = sd * rng.gaussian();
    groups.emplace_back(std::move(p));
  }
  return groups;
}

Mat init_mlp_particles(int m, const std::vector<int>& dims,
                       const std::vector<nn::Activation>& acts, RngStream rng,
                       double leaky_slope) {
  Mat out;
  for (int j = 0; j < m; ++j) {
    const Vec flat = nn::make_mlp(dims, acts, rng, leaky_slope).flatten_params();
    if (j == 0) out = Mat(m, flat.size());
    out.row(j) = flat.transpose();
  }
  return out;
}

Mat pooled_particles(const std::vector<svgd::ParticleSet>& groups) {
  if (groups.empty()) throw std::invalid_argument("pooled_particles: no groups");
  const int m = groups.front().count();
  const int d = groups.front().dim();
  Mat pooled(static_cast<Eigen::Index>(groups.size()) * m, d);
  for (size_t i = 0; i < groups.size(); ++i)
    pooled.middleRows(static_cast<Eigen::Index>(i) * m, m) = groups[i].particles;
  return pooled;
}

namespace {

struct BatchItem {
  int index = 0;        // index within its source dataset
  bool labeled = false;
};

std::vector<int> shuffled_indices(int n, RngStream rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

// Group-0 noise comes first so the k = 1 draw sequence matches the plain
// epoch exactly.
struct MinibatchNoise {
  // [group][j] when shared, [group][local datum][j] otherwise
  std::vector<std::vector<Vec>> shared;
  std::vector<std::vector<std::vector<Vec>>> per_datum;

  const Vec& xi(int group, int local, int j) const {
    return shared.empty() ? per_datum[group][local][j] : shared[group][j];
  }
};

MinibatchNoise draw_noise(int k, int m_codes, int noise_dim, int batch_size,
                          bool shared, RngStream& rng) {
  MinibatchNoise noise;
  if (shared) {
    noise.shared.resize(k);
    for (int i = 0; i < k; ++i) {
      noise.shared[i].reserve(m_codes);
      for (int j = 0; j < m_codes; ++j)
        noise.shared[i].push_back(sample_gaussian(rng, noise_dim));
    }
  } else {
    noise.per_datum.resize(k);
    for (int i = 0; i < k; ++i) {
      noise.per_datum[i].resize(batch_size);
      for (int n = 0; n < batch_size; ++n) {
        noise.per_datum[i][n].reserve(m_codes);
        for (int j = 0; j < m_codes; ++j)
          noise.per_datum[i][n].push_back(sample_gaussian(rng, noise_dim));
      }
    }
  }
  return noise;
}

struct EpochInputs {
  const Dataset* unlabeled = nullptr;
  const Dataset* labeled = nullptr;  // null outside semi-supervised passes
  const models::LikelihoodModel* model = nullptr;
  const models::LabelModel* label_model = nullptr;
};

const Vec& item_x(const EpochInputs& in, const BatchItem& item) {
  return item.labeled ? in.labeled->x[item.index] : in.unlabeled->x[item.index];
}

std::int64_t item_global_id(const EpochInputs& in, const BatchItem& item) {
  return item.labeled
             ? static_cast<std::int64_t>(in.unlabeled ? in.unlabeled->size() : 0) +
                   item.index
             : item.index;
}

void run_epoch(TrainState& state, const EpochInputs& in, const RunConfig& cfg,
               bool use_iw_path) {
  const models::LikelihoodModel& model = *in.model;
  const int k = static_cast<int>(state.theta_groups.size());
  if (k < 1) throw std::invalid_argument("epoch: no theta particle groups");
  const int m_theta = state.theta_groups.front().count();
  const int m_codes = cfg.m_codes;
  const int d_z = model.z_dim;
  if (state.rec.latent_dim() != d_z)
    throw std::invalid_argument("epoch: recognition latent dim != model z dim");
  const bool semisup = in.labeled != nullptr;
  if (semisup && state.label_groups.size() != static_cast<size_t>(k))
    throw std::invalid_argument("epoch: label group count != theta group count");

  const int n_unlabeled = static_cast<int>(in.unlabeled->size());
  const int n_labeled = semisup ? static_cast<int>(in.labeled->size()) : 0;
  const int n_total = n_unlabeled + n_labeled;
  if (n_total == 0) throw std::invalid_argument("epoch: empty dataset");

  const kernels::KernelPolicy policy = kernels::KernelPolicy::median(cfg.bandwidth_mode);
  const svgd::AdamConfig code_adam{cfg.lr_code, 0.9, 0.999, 1e-8, cfg.raw_step};
  const svgd::AdamConfig theta_adam{cfg.lr_theta, 0.9, 0.999, 1e-8, cfg.raw_step};
  const svgd::AdamConfig label_adam{cfg.lr_label, 0.9, 0.999, 1e-8, cfg.raw_step};

  // Shuffle the merged index set, then cut into minibatches.
  const std::vector<int> order = shuffled_indices(
      n_total, RngStream(cfg.seed, kStreamShuffle)
                   .substream(static_cast<std::uint64_t>(state.epoch), cfg.shuffle_salt));
  std::vector<std::vector<BatchItem>> batches;
  for (int at = 0; at < n_total; at += cfg.batch) {
    std::vector<BatchItem> b;
    for (int i = at; i < std::min(n_total, at + cfg.batch); ++i) {
      const int idx = order[i];
      b.push_back(idx < n_unlabeled ? BatchItem{idx, false}
                                    : BatchItem{idx - n_unlabeled, true});
    }
    batches.push_back(std::move(b));
  }

  for (size_t mb = 0; mb < batches.size(); ++mb) {
    try {
      const std::vector<BatchItem>& batch = batches[mb];
      const int b_size = static_cast<int>(batch.size());
      int b_labeled = 0;
      for (const BatchItem& item : batch)
        if (item.labeled) ++b_labeled;
      const int b_unlabeled = b_size - b_labeled;

      double zeta = 0.0;
      if (semisup && b_labeled > 0) {
        const double rho = static_cast<double>(b_labeled) / b_size;
        zeta = cfg.zeta_override >= 0.0
                   ? cfg.zeta_override
                   : static_cast<double>(model.x_dim) /
                         (static_cast<double>(in.label_model->num_classes) * rho);
      }

      RngStream noise_rng =
          RngStream(cfg.seed, kStreamNoise)
              .substream(static_cast<std::uint64_t>(state.epoch), mb);
      const MinibatchNoise noise = draw_noise(k, m_codes, state.rec.noise_dim,
                                              b_size, cfg.shared_noise, noise_rng);

      // Decoder particles bound once per minibatch.
      std::vector<std::vector<models::BoundDecoder>> bound(k);
      for (int i = 0; i < k; ++i) {
        bound[i].reserve(m_theta);
        for (int j = 0; j < m_theta; ++j)
          bound[i].push_back(
              model.bind(state.theta_groups[i].particles.row(j).transpose()));
      }

      // (1) draw codes from the recognition net
      std::vector<std::vector<Mat>> clouds(k, std::vector<Mat>(b_size));
      parallel_for(static_cast<std::int64_t>(k) * b_size, [&](std::int64_t flat) {
        const int i = static_cast<int>(flat / b_size);
        const int n = static_cast<int>(flat % b_size);
        Mat cloud(m_codes, d_z);
        for (int j = 0; j < m_codes; ++j)
          cloud.row(j) = recognition::draw_code(state.rec, item_x(in, batch[n]),
                                                noise.xi(i, n, j))
                             .transpose();
        clouds[i][n] = std::move(cloud);
      });

      // Importance weights from the freshly drawn codes (k > 1 only; a single
      // group always carries normalized weight one).
      iwsvgd::IwWeights weights;
      if (use_iw_path && k > 1) {
        // Per-particle constants: prior and KDE terms do not vary with n.
        Mat theta_const(k, m_theta);
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < m_theta; ++j) {
            const Vec th = state.theta_groups[i].particles.row(j).transpose();
            double c = model.log_prior_theta(th) -
                       iwsvgd::gaussian_kde_log_density(
                           state.theta_groups[i].particles, th, cfg.bandwidth_mode);
            if (semisup) {
              const Vec tt = state.label_groups[i].particles.row(j % state.label_groups[i].count()).transpose();
              c += in.label_model->log_prior_theta(tt) -
                   iwsvgd::gaussian_kde_log_density(
                       state.label_groups[i].particles, tt, cfg.bandwidth_mode);
            }
            theta_const(i, j) = c;
          }
        weights = iwsvgd::log_importance_weights(
            k, m_codes, b_size, [&](int i, int j, int n) {
              const int jt = j % m_theta;
              const BatchItem& item = batch[n];
              const Vec& x = item_x(in, item);
              const Vec z = clouds[i][n].row(j).transpose();
              double lp = bound[i][jt].log_lik(x, z) + model.log_prior_z(z) +
                          theta_const(i, jt);
              if (item.labeled) {
                const Vec tt =
                    state.label_groups[i]
                        .particles.row(jt % state.label_groups[i].count())
                        .transpose();
                lp += in.label_model->log_lik(tt, in.labeled->y[item.index], z);
              }
              return lp - recognition::code_log_density(state.rec, x,
                                                        noise.xi(i, n, j));
            });
      } else {
        weights.theta = iwsvgd::WeightVector::unit();
        weights.per_datum.assign(b_size, iwsvgd::WeightVector::unit());
      }

      // (2) transport the code clouds
      std::vector<double> dz_accum(b_size, 0.0);
      parallel_for(b_size, [&](std::int64_t n) {
        const BatchItem& item = batch[static_cast<int>(n)];
        const Vec& x = item_x(in, item);

        auto group_score = [&](int i, const Vec& z) {
          Vec acc = Vec::Zero(d_z);
          for (int j = 0; j < m_theta; ++j) acc += bound[i][j].score_z(x, z);
          acc /= static_cast<double>(m_theta);
          if (semisup && item.labeled) {
            const svgd::ParticleSet& labels = state.label_groups[i];
            Vec lacc = Vec::Zero(d_z);
            for (int j = 0; j < labels.count(); ++j)
              lacc += in.label_model->score_z(labels.particles.row(j).transpose(),
                                              in.labeled->y[item.index], z);
            acc += (zeta / static_cast<double>(labels.count())) * lacc;
          }
          return Vec(acc + model.prior_score_z(z));
        };

        if (!use_iw_path) {
          const Mat deltas = svgd::svgd_direction_cloud(
              clouds[0][n], [&](const Vec& z) { return group_score(0, z); },
              policy);
          dz_accum[static_cast<size_t>(n)] = deltas.array().abs().mean();
          svgd::ParticleSet cloud_set(clouds[0][n]);
          svgd::apply_step(cloud_set, deltas, code_adam);
          clouds[0][n] = std::move(cloud_set.particles);
        } else {
          std::vector<Mat> groups(k);
          for (int i = 0; i < k; ++i) groups[i] = clouds[i][n];
          std::vector<Mat> scores(k, Mat(m_codes, d_z));
          for (int i = 0; i < k; ++i)
            for (int j = 0; j < m_codes; ++j)
              scores[i].row(j) =
                  group_score(i, groups[i].row(j).transpose()).transpose();
          const std::vector<Mat> deltas = iwsvgd::iw_direction(
              groups, weights.per_datum[static_cast<size_t>(n)], scores, policy);
          dz_accum[static_cast<size_t>(n)] = deltas[0].array().abs().mean();
          for (int i = 0; i < k; ++i) {
            svgd::ParticleSet cloud_set(std::move(groups[i]));
            svgd::apply_step(cloud_set, deltas[i], code_adam);
            clouds[i][n] = std::move(cloud_set.particles);
          }
        }
      });

      // (3) transport decoder particles on the refined codes
      if (cfg.train_decoder) {
        auto theta_score = [&](int i, const Vec& th) {
          const models::BoundDecoder b = model.bind(th);
          Vec acc = Vec::Zero(model.theta_dim);
          Vec acc_l = Vec::Zero(model.theta_dim);
          for (int n = 0; n < b_size; ++n) {
            const BatchItem& item = batch[n];
            Vec per_datum = Vec::Zero(model.theta_dim);
            for (int j = 0; j < m_codes; ++j)
              per_datum += b.score_theta(item_x(in, item),
                                         clouds[i][n].row(j).transpose());
            per_datum /= static_cast<double>(m_codes);
            (item.labeled ? acc_l : acc) += per_datum;
          }
          Vec total = model.prior_score_theta(th);
          if (b_unlabeled > 0)
            total += (static_cast<double>(n_unlabeled) / b_unlabeled) * acc;
          if (b_labeled > 0)
            total += (static_cast<double>(n_labeled) / b_labeled) * acc_l;
          return total;
        };

        if (!use_iw_path) {
          const Mat deltas = svgd::svgd_direction(
              state.theta_groups[0],
              [&](const Vec& th) { return theta_score(0, th); }, policy);
          svgd::apply_step(state.theta_groups[0], deltas, theta_adam);
        } else {
          std::vector<Mat> groups(k);
          std::vector<Mat> scores(k, Mat(m_theta, model.theta_dim));
          for (int i = 0; i < k; ++i) groups[i] = state.theta_groups[i].particles;
          parallel_for(static_cast<std::int64_t>(k) * m_theta, [&](std::int64_t flat) {
            const int i = static_cast<int>(flat / m_theta);
            const int j = static_cast<int>(flat % m_theta);
            scores[i].row(j) =
                theta_score(i, groups[i].row(j).transpose()).transpose();
          });
          const std::vector<Mat> deltas =
              iwsvgd::iw_direction(groups, weights.theta, scores, policy);
          for (int i = 0; i < k; ++i)
            svgd::apply_step(state.theta_groups[i], deltas[i], theta_adam);
        }
      }

      // (4) transport label-decoder particles (labeled items only)
      if (semisup && b_labeled > 0) {
        auto label_score = [&](int i, const Vec& tt) {
          Vec acc = Vec::Zero(in.label_model->theta_dim);
          for (int n = 0; n < b_size; ++n) {
            const BatchItem& item = batch[n];
            if (!item.labeled) continue;
            Vec per_datum = Vec::Zero(in.label_model->theta_dim);
            for (int j = 0; j < m_codes; ++j)
              per_datum += in.label_model->score_theta(
                  tt, in.labeled->y[item.index], clouds[i][n].row(j).transpose());
            per_datum /= static_cast<double>(m_codes);
            acc += per_datum;
          }
          return Vec(in.label_model->prior_score_theta(tt) +
                     (static_cast<double>(n_labeled) / b_labeled) * acc);
        };
        if (!use_iw_path) {
          const Mat deltas = svgd::svgd_direction(
              state.label_groups[0],
              [&](const Vec& tt) { return label_score(0, tt); }, policy);
          svgd::apply_step(state.label_groups[0], deltas, label_adam);
        } else {
          const int m_label = state.label_groups.front().count();
          std::vector<Mat> groups(k);
          std::vector<Mat> scores(k, Mat(m_label, in.label_model->theta_dim));
          for (int i = 0; i < k; ++i) groups[i] = state.label_groups[i].particles;
          parallel_for(static_cast<std::int64_t>(k) * m_label, [&](std::int64_t flat) {
            const int i = static_cast<int>(flat / m_label);
            const int j = static_cast<int>(flat % m_label);
            scores[i].row(j) =
                label_score(i, groups[i].row(j).transpose()).transpose();
          });
          const std::vector<Mat> deltas =
              iwsvgd::iw_direction(groups, weights.theta, scores, policy);
          for (int i = 0; i < k; ++i)
            svgd::apply_step(state.label_groups[i], deltas[i], label_adam);
        }
      }

      // (5) fit the recognition net to the refined codes
      std::vector<recognition::CodeFitExample> fit_batch;
      fit_batch.reserve(static_cast<size_t>(k) * b_size * m_codes);
      for (int i = 0; i < k; ++i)
        for (int n = 0; n < b_size; ++n)
          for (int j = 0; j < m_codes; ++j)
            fit_batch.push_back({item_x(in, batch[n]), noise.xi(i, n, j),
                                 clouds[i][n].row(j).transpose()});
      const std::vector<double> trace =
          recognition::fit_codes(state.rec, fit_batch, cfg.recog_steps, cfg.recog_lr);

      // bookkeeping
      state.last_codes = svgd::CodeBank();
      for (int n = 0; n < b_size; ++n)
        state.last_codes.add(item_global_id(in, batch[n]), clouds[0][n]);

      const std::int64_t mb_id = static_cast<std::int64_t>(mb);
      const double dz_mean =
          std::accumulate(dz_accum.begin(), dz_accum.end(), 0.0) / b_size;
      state.history.push_back({state.epoch, mb_id, "code_delta_mean_abs", dz_mean});
      state.history.push_back(
          {state.epoch, mb_id, "recog_fit_loss", trace.back()});
      if (use_iw_path && k > 1) {
        for (int i = 0; i < k; ++i)
          state.history.push_back({state.epoch, mb_id,
                                   "iw_weight_" + std::to_string(i),
                                   weights.theta.normalized(i)});
      }
      if (semisup)
        state.history.push_back({state.epoch, mb_id, "zeta", zeta});
    } catch (const std::exception& e) {
      throw std::runtime_error("minibatch " + std::to_string(mb) + ": " + e.what());
    }
  }
  state.epoch += 1;
}

}  // namespace

void stein_vae_epoch(TrainState& state, const Dataset& data,
                     const models::LikelihoodModel& model, const RunConfig& cfg) {
  if (state.theta_groups.size() != 1)
    throw std::invalid_argument("stein_vae_epoch: expected a single particle group");
  EpochInputs in;
  in.unlabeled = &data;
  in.model = &model;
  run_epoch(state, in, cfg, /*use_iw_path=*/false);
}

void stein_viwae_epoch(TrainState& state, const Dataset& data,
                       const models::LikelihoodModel& model, const RunConfig& cfg) {
  EpochInputs in;
  in.unlabeled = &data;
  in.model = &model;
  run_epoch(state, in, cfg, /*use_iw_path=*/true);
}

void semisup_epoch(TrainState& state, const Dataset& unlabeled,
                   const Dataset& labeled, const models::LikelihoodModel& model,
                   const models::LabelModel& label_model, const RunConfig& cfg) {
  if (labeled.size() == 0)
    throw std::invalid_argument("semisup_epoch: labeled set is empty");
  if (labeled.y.size() != labeled.size())
    throw std::invalid_argument("semisup_epoch: labeled set has no labels");
  EpochInputs in;
  in.unlabeled = &unlabeled;
  in.labeled = &labeled;
  in.model = &model;
  in.label_model = &label_model;
  run_epoch(state, in, cfg, /*use_iw_path=*/state.theta_groups.size() > 1);
}

Vec predict_label(const Vec& x, const Mat& label_particles,
                  const models::LabelModel& label_model,
                  const recognition::RecognitionNet& rec, int samples,
                  RngStream rng) {
  if (samples < 1) throw std::invalid_argument("predict_label: samples must be >= 1");
  Vec probs = Vec::Zero(label_model.num_classes);
  for (int s = 0; s < samples; ++s) {
    const Vec xi = sample_gaussian(rng, rec.noise_dim);
    const Vec z = recognition::draw_code(rec, x, xi);
    for (Eigen::Index j = 0; j < label_particles.rows(); ++j)
      probs += label_model.probs(label_particles.row(j).transpose(), z);
  }
  return probs / (static_cast<double>(samples) * label_particles.rows());
}

}  // namespace steinflow::trainer
