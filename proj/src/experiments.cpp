#include "experiments.hpp"

#include "steinflow/eval.hpp"
#include "steinflow/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace steinflow::cli {

namespace {

std::string check_line(const std::string& name, bool pass, const std::string& detail) {
  return name + ": " + (pass ? "PASS" : "FAIL") + " (" + detail + ")";
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

double sample_gamma(RngStream& rng, double shape, double rate) {
  // Marsaglia-Tsang; shapes below one use the boost Gamma(a+1) U^(1/a).
  double boost = 1.0;
  double a = shape;
  if (a < 1.0) {
    const double u = std::max(rng.uniform(), 1e-300);
    boost = std::pow(u, 1.0 / a);
    a += 1.0;
  }
  const double d = a - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.gaussian();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = std::max(rng.uniform(), 1e-300);
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v))
      return boost * d * v / rate;
  }
}

long sample_poisson(RngStream& rng, double lambda) {
  if (lambda <= 0.0) return 0;
  // Knuth product method; rates here stay small.
  const double limit = std::exp(-lambda);
  long count = 0;
  double prod = rng.uniform();
  while (prod > limit) {
    ++count;
    prod *= rng.uniform();
  }
  return count;
}

double inverse_softplus(double t) {
  // u with softplus(u) = t, t > 0
  if (t > 30.0) return t;
  return std::log(std::expm1(t));
}

int argmax(const Vec& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

void append_history(ExperimentResult& result, const trainer::TrainState& state,
                    size_t from) {
  for (size_t i = from; i < state.history.size(); ++i)
    result.metrics.push_back(state.history[i]);
}

}  // namespace

// ------------------------------------------------------------------ check

ExperimentResult run_check(const ExperimentSpec& spec) {
  ExperimentResult result;
  std::vector<eval::CheckResult> checks;
  auto extend = [&](std::vector<eval::CheckResult> more) {
    for (auto& c : more) checks.push_back(std::move(c));
  };
  extend(eval::theorem1_suite(spec.check_samples, spec.config.seed));
  extend(eval::theorem2_suite(spec.check_groups, spec.config.seed));
  extend(eval::theorem3_suite(spec.check_groups, spec.config.seed));
  extend(eval::gradient_suite(spec.config.seed));
  for (const eval::CheckResult& c : checks) {
    result.summary.push_back(check_line(c.name, c.pass, c.detail));
    result.metrics.push_back({0, -1, c.name, c.value});
    result.all_passed = result.all_passed && c.pass;
  }
  return result;
}

// -------------------------------------------------------------------- gmm

ExperimentResult run_gmm(const ExperimentSpec& spec) {
  ExperimentResult result;
  const trainer::RunConfig& cfg = spec.config;

  Mat theta_true(2, 2);
  theta_true << 2.0, -1.0, 1.0, -2.0;
  const double sigma = 0.1;
  Vec mu1(2), mu2(2);
  mu1 << 5.0, 5.0;
  mu2 << -5.0, -5.0;

  models::GaussianLinearDecoder dec{theta_true, sigma, mu1, mu2};
  const models::LikelihoodModel model = models::make_model(dec, cfg.prior_scale);

  auto draw_datum = [&](RngStream& rng) {
    const Vec& mu = rng.uniform() < 0.5 ? mu1 : mu2;
    const Vec z = mu + sample_gaussian(rng, 2);
    return Vec(theta_true * z + sigma * sample_gaussian(rng, 2));
  };

  RngStream data_rng(cfg.seed, 1001);
  trainer::Dataset train;
  for (int n = 0; n < spec.train_n; ++n) train.x.push_back(draw_datum(data_rng));
  RngStream test_rng(cfg.seed, 1002);
  std::vector<Vec> test_x;
  for (int n = 0; n < spec.test_n; ++n) test_x.push_back(draw_datum(test_rng));

  trainer::TrainState state;
  // decoder pinned at the true parameters; only codes and the recognition
  // net are learned
  state.theta_groups.emplace_back(
      Mat(models::flatten_row_major(theta_true).transpose()));
  RngStream init_rng(cfg.seed, 1003);
  state.rec = recognition::make_recognition(2, 2, {spec.recog_hidden}, init_rng);

  for (int e = 0; e < cfg.epochs; ++e) {
    const size_t from = state.history.size();
    trainer::stein_vae_epoch(state, train, model, cfg);
    append_history(result, state, from);
    // cheap progress metric: dominant-mode mean error averaged over test data
    RngStream eval_rng(cfg.seed, 1004);
    double err = 0.0;
    for (int t = 0; t < spec.test_n; ++t) {
      Mat codes(20, 2);
      for (int j = 0; j < 20; ++j)
        codes.row(j) = recognition::draw_code(state.rec, test_x[t],
                                              sample_gaussian(eval_rng, 2))
                           .transpose();
      const models::GmmPosterior post =
          models::gmm_analytic_posterior(test_x[t], theta_true, sigma, mu1, mu2);
      const eval::PosteriorDiag diag = eval::posterior_diagnostics(codes, post);
      err += diag.count1 >= diag.count2 ? diag.mean_error1 : diag.mean_error2;
    }
    result.metrics.push_back(
        {state.epoch - 1, -1, "test_dominant_mode_mean_error", err / spec.test_n});
  }

  // final evaluation at M = 100 recognition samples per test point
  const int eval_m = 100;
  RngStream final_rng(cfg.seed, 1005);
  for (int t = 0; t < spec.test_n; ++t) {
    Mat codes(eval_m, 2);
    for (int j = 0; j < eval_m; ++j)
      codes.row(j) = recognition::draw_code(state.rec, test_x[t],
                                            sample_gaussian(final_rng, 2))
                         .transpose();
    for (int j = 0; j < eval_m; ++j)
      for (int d = 0; d < 2; ++d)
        result.samples.push_back({t, j, d, codes(j, d)});

    const models::GmmPosterior post =
        models::gmm_analytic_posterior(test_x[t], theta_true, sigma, mu1, mu2);
    const eval::PosteriorDiag diag = eval::posterior_diagnostics(codes, post);

    const bool mid_weight = post.mode1_weight >= 0.2 && post.mode1_weight <= 0.8;
    bool point_pass = true;
    std::ostringstream detail;
    detail << "p_hat=" << fmt(post.mode1_weight)
           << " weight=" << fmt(diag.mode1_weight);
    if (mid_weight) {
      const bool both = diag.count1 >= eval_m / 20 && diag.count2 >= eval_m / 20;
      const bool close = std::abs(diag.mode1_weight - post.mode1_weight) <= 0.15;
      point_pass = point_pass && both && close;
      detail << " both_modes=" << (both ? "yes" : "no");
    }
    // per-mode means for modes holding at least 5% of the samples
    if (diag.count1 >= eval_m / 20) {
      point_pass = point_pass && diag.mean_error1 <= 0.5;
      detail << " mean_err1=" << fmt(diag.mean_error1);
    }
    if (diag.count2 >= eval_m / 20) {
      point_pass = point_pass && diag.mean_error2 <= 0.5;
      detail << " mean_err2=" << fmt(diag.mean_error2);
    }
    result.summary.push_back(
        check_line("gmm test point " + std::to_string(t), point_pass, detail.str()));
    result.metrics.push_back({state.epoch, -1, "final_mode1_weight_" + std::to_string(t),
                              diag.mode1_weight});
    result.all_passed = result.all_passed && point_pass;
  }
  return result;
}

// -------------------------------------------------------------------- pfa

namespace {

// Self-normalized importance sampling posterior mean with prior proposals.
Vec pfa_is_posterior_mean(const Vec& x, const Mat& theta_pos, double gamma_shape,
                          double gamma_rate, std::int64_t proposals,
                          RngStream rng) {
  const int v_dim = static_cast<int>(theta_pos.cols());
  Vec weighted = Vec::Zero(v_dim);
  double max_log = -std::numeric_limits<double>::infinity();
  std::vector<double> logs(proposals);
  Mat draws(proposals, v_dim);
  for (std::int64_t s = 0; s < proposals; ++s) {
    for (int v = 0; v < v_dim; ++v)
      draws(s, v) = sample_gamma(rng, gamma_shape, gamma_rate);
    const Vec rate = (theta_pos * draws.row(s).transpose()).cwiseMax(1e-12);
    double ll = 0.0;
    for (Eigen::Index p = 0; p < x.size(); ++p)
      ll += x[p] * std::log(rate[p]) - rate[p] - std::lgamma(x[p] + 1.0);
    logs[s] = ll;
    max_log = std::max(max_log, ll);
  }
  double total = 0.0;
  for (std::int64_t s = 0; s < proposals; ++s) {
    const double w = std::exp(logs[s] - max_log);
    total += w;
    weighted += w * draws.row(s).transpose();
  }
  return weighted / total;
}

}  // namespace

ExperimentResult run_pfa(const ExperimentSpec& spec) {
  ExperimentResult result;
  const trainer::RunConfig& cfg = spec.config;
  const int p_dim = 5;
  const int v_dim = 2;

  RngStream gen_rng(cfg.seed, 2001);
  Mat theta_pos(p_dim, v_dim);
  for (int p = 0; p < p_dim; ++p)
    for (int v = 0; v < v_dim; ++v) theta_pos(p, v) = 0.3 + 1.2 * gen_rng.uniform();

  models::PoissonFactorDecoder dec;
  dec.loadings_unconstrained = Mat(p_dim, v_dim);
  for (int p = 0; p < p_dim; ++p)
    for (int v = 0; v < v_dim; ++v)
      dec.loadings_unconstrained(p, v) = inverse_softplus(theta_pos(p, v));

  auto draw_datum = [&](RngStream& rng) {
    Vec z(v_dim);
    for (int v = 0; v < v_dim; ++v)
      z[v] = sample_gamma(rng, dec.score_gamma_shape, dec.score_gamma_rate);
    Vec x(p_dim);
    const Vec rate = theta_pos * z;
    for (int p = 0; p < p_dim; ++p)
      x[p] = static_cast<double>(sample_poisson(rng, rate[p]));
    return x;
  };

  RngStream data_rng(cfg.seed, 2002);
  trainer::Dataset train;
  for (int n = 0; n < spec.train_n; ++n) train.x.push_back(draw_datum(data_rng));
  RngStream test_rng(cfg.seed, 2003);
  std::vector<Vec> test_x;
  for (int n = 0; n < spec.test_n; ++n) test_x.push_back(draw_datum(test_rng));

  const models::LikelihoodModel model = models::make_model(dec);
  trainer::TrainState state;
  state.theta_groups.emplace_back(
      Mat(models::flatten_row_major(dec.loadings_unconstrained).transpose()));
  RngStream init_rng(cfg.seed, 2004);
  state.rec = recognition::make_recognition(p_dim, v_dim, {spec.recog_hidden}, init_rng);

  for (int e = 0; e < cfg.epochs; ++e) {
    const size_t from = state.history.size();
    trainer::stein_vae_epoch(state, train, model, cfg);
    append_history(result, state, from);
  }

  // oracle comparison on the test points
  const int eval_m = 100;
  bool all_pass = true;
  for (int t = 0; t < spec.test_n; ++t) {
    RngStream eval_rng(cfg.seed, 2005 + t);
    Vec rec_mean = Vec::Zero(v_dim);
    for (int j = 0; j < eval_m; ++j) {
      const Vec code = recognition::draw_code(state.rec, test_x[t],
                                              sample_gaussian(eval_rng, v_dim));
      for (int v = 0; v < v_dim; ++v)
        rec_mean[v] += models::softplus_floored(code[v]);
      for (int v = 0; v < v_dim; ++v)
        result.samples.push_back({t, j, v, models::softplus_floored(code[v])});
    }
    rec_mean /= eval_m;
    const Vec oracle = pfa_is_posterior_mean(
        test_x[t], theta_pos, dec.score_gamma_shape, dec.score_gamma_rate,
        1000000, RngStream(cfg.seed, 2100 + t));
    const double rel = (rec_mean - oracle).norm() / std::max(oracle.norm(), 1e-12);
    const bool pass = rel <= 0.2;
    all_pass = all_pass && pass;
    result.summary.push_back(check_line(
        "pfa test point " + std::to_string(t), pass,
        "rel_err=" + fmt(rel) + " rec_mean=[" + fmt(rec_mean[0]) + "," +
            fmt(rec_mean[1]) + "] oracle=[" + fmt(oracle[0]) + "," +
            fmt(oracle[1]) + "]"));
    result.metrics.push_back({state.epoch, -1,
                              "posterior_mean_rel_err_" + std::to_string(t), rel});
  }
  result.all_passed = all_pass;
  return result;
}

// ------------------------------------------------------------ density toy

ExperimentResult run_density_toy(const ExperimentSpec& spec) {
  ExperimentResult result;
  const trainer::RunConfig& cfg = spec.config;
  const int d_z = 2;
  const int pixels = 64;

  // Known generator: a fixed random MLP with spread-out logits.
  RngStream gen_rng(cfg.seed, 3001);
  nn::Mlp generator = nn::make_mlp({d_z, 16, pixels},
                                   {nn::Activation::Tanh, nn::Activation::Identity},
                                   gen_rng);
  generator.set_params(Vec(3.0 * generator.flatten_params()));

  auto draw_datum = [&](RngStream& rng) {
    const Vec z = sample_gaussian(rng, d_z);
    const Vec logits = nn::forward(generator, z).first;
    Vec x(pixels);
    for (int p = 0; p < pixels; ++p)
      x[p] = rng.uniform() < nn::sigmoid(logits[p]) ? 1.0 : 0.0;
    return x;
  };

  RngStream data_rng(cfg.seed, 3002);
  trainer::Dataset train;
  for (int n = 0; n < spec.train_n; ++n) train.x.push_back(draw_datum(data_rng));
  RngStream test_rng(cfg.seed, 3003);
  std::vector<Vec> test_x;
  for (int n = 0; n < spec.test_n; ++n) test_x.push_back(draw_datum(test_rng));

  const std::vector<int> dec_dims = {d_z, spec.decoder_hidden, pixels};
  const std::vector<nn::Activation> dec_acts = {nn::Activation::Tanh,
                                                nn::Activation::Identity};
  RngStream init_rng(cfg.seed, 3004);
  models::BernoulliMlpDecoder proto{nn::make_mlp(dec_dims, dec_acts, init_rng)};
  const models::LikelihoodModel model = models::make_model(proto, cfg.prior_scale);

  trainer::TrainState state;
  state.theta_groups.emplace_back(
      trainer::init_mlp_particles(cfg.m_theta, dec_dims, dec_acts, init_rng));
  state.rec = recognition::make_recognition(pixels, d_z, {spec.recog_hidden}, init_rng);

  // Held-out ELBO under common random numbers so the per-epoch trace
  // reflects training progress rather than evaluation noise.
  auto heldout_elbo = [&](double* se_out) {
    std::vector<double> vals(test_x.size());
    parallel_for(static_cast<std::int64_t>(test_x.size()), [&](std::int64_t t) {
      vals[t] = eval::elbo(test_x[t], trainer::pooled_particles(state.theta_groups),
                           model, state.rec, spec.elbo_samples,
                           RngStream(cfg.seed, 3100 + t));
    });
    const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
    if (se_out) {
      double ss = 0.0;
      for (double v : vals) ss += (v - mean) * (v - mean);
      *se_out = std::sqrt(ss / (vals.size() - 1.0) / vals.size());
    }
    return mean;
  };

  std::vector<double> elbo_trace;
  for (int e = 0; e < cfg.epochs; ++e) {
    const size_t from = state.history.size();
    trainer::stein_vae_epoch(state, train, model, cfg);
    append_history(result, state, from);
    const double held = heldout_elbo(nullptr);
    elbo_trace.push_back(held);
    result.metrics.push_back({state.epoch - 1, -1, "heldout_elbo", held});
  }

  // monotone increase over the first 20 epochs, at most 2 consecutive dips
  const int horizon = std::min<int>(20, static_cast<int>(elbo_trace.size()));
  int max_run = 0, run = 0;
  for (int e = 1; e < horizon; ++e) {
    if (elbo_trace[e] <= elbo_trace[e - 1]) {
      ++run;
      max_run = std::max(max_run, run);
    } else {
      run = 0;
    }
  }
  const bool rising = max_run <= 2 && horizon >= 2 &&
                      elbo_trace[horizon - 1] > elbo_trace[0];
  result.summary.push_back(check_line(
      "held-out ELBO increases over first 20 epochs", rising,
      "max consecutive dips=" + std::to_string(max_run) + " first=" +
          fmt(elbo_trace.empty() ? 0.0 : elbo_trace[0]) + " last=" +
          fmt(elbo_trace.empty() ? 0.0 : elbo_trace[horizon - 1])));

  // S-ELBO(k) tightness vs ELBO on the held-out mean
  double elbo_se = 0.0;
  const double elbo_mean = heldout_elbo(&elbo_se);
  std::vector<double> selbo_vals(test_x.size());
  parallel_for(static_cast<std::int64_t>(test_x.size()), [&](std::int64_t t) {
    selbo_vals[t] = eval::s_elbo(
        test_x[t], trainer::pooled_particles(state.theta_groups), model, state.rec,
        spec.selbo_k, spec.selbo_repeats, RngStream(cfg.seed, 3400 + t));
  });
  const double selbo_mean =
      std::accumulate(selbo_vals.begin(), selbo_vals.end(), 0.0) / selbo_vals.size();
  double selbo_se = 0.0;
  for (double v : selbo_vals) selbo_se += (v - selbo_mean) * (v - selbo_mean);
  selbo_se = std::sqrt(selbo_se / (selbo_vals.size() - 1.0) / selbo_vals.size());
  const double slack = 2.0 * std::sqrt(elbo_se * elbo_se + selbo_se * selbo_se);
  const bool tight = selbo_mean >= elbo_mean - slack;
  result.summary.push_back(check_line(
      "mean S-ELBO >= mean ELBO - 2 SE", tight,
      "elbo=" + fmt(elbo_mean) + " s_elbo=" + fmt(selbo_mean) + " slack=" + fmt(slack)));
  result.metrics.push_back({state.epoch, -1, "final_heldout_elbo", elbo_mean});
  result.metrics.push_back({state.epoch, -1, "final_heldout_s_elbo", selbo_mean});
  result.all_passed = rising && tight;
  return result;
}

// ------------------------------------------------------------ semisup toy

namespace {

struct SemisupData {
  trainer::Dataset unlabeled;
  trainer::Dataset labeled;
  std::vector<Vec> test_x;
  std::vector<int> test_y;
};

SemisupData make_semisup_data(const ExperimentSpec& spec, const Mat& decoder,
                              double noise_sd, std::uint64_t seed) {
  SemisupData data;
  Vec m1(2), m2(2);
  m1 << 2.0, 2.0;
  m2 << -2.0, -2.0;
  RngStream rng(seed, 4001);
  auto draw = [&](int cls) {
    const Vec z = (cls == 0 ? m1 : m2) + 0.5 * sample_gaussian(rng, 2);
    return Vec(decoder * z + noise_sd * sample_gaussian(rng, decoder.rows()));
  };
  for (int n = 0; n < spec.unlabeled_n; ++n) {
    const int cls = rng.uniform() < 0.5 ? 0 : 1;
    data.unlabeled.x.push_back(draw(cls));
  }
  for (int cls = 0; cls < 2; ++cls)
    for (int n = 0; n < spec.labeled_per_class; ++n) {
      data.labeled.x.push_back(draw(cls));
      data.labeled.y.push_back(cls);
    }
  for (int n = 0; n < spec.test_n; ++n) {
    const int cls = rng.uniform() < 0.5 ? 0 : 1;
    data.test_x.push_back(draw(cls));
    data.test_y.push_back(cls);
  }
  return data;
}

double semisup_accuracy(const ExperimentSpec& spec, int k_groups,
                        std::uint64_t seed) {
  const int d_x = 5;
  const int d_z = 2;
  trainer::RunConfig cfg = spec.config;
  cfg.seed = seed;

  RngStream world_rng(seed, 4000);
  Mat decoder_true(d_x, d_z);
  for (int r = 0; r < d_x; ++r)
    for (int c = 0; c < d_z; ++c) decoder_true(r, c) = world_rng.gaussian();
  const SemisupData data = make_semisup_data(spec, decoder_true, 0.25, seed);

  models::GaussianLinearDecoder proto;
  proto.theta = Mat::Zero(d_x, d_z);
  proto.sigma = 0.25;
  proto.prior_mu1 = Vec::Zero(d_z);  // equal prior modes: standard normal prior
  proto.prior_mu2 = Vec::Zero(d_z);
  const models::LikelihoodModel model = models::make_model(proto, cfg.prior_scale);
  const models::LabelModel label_model = models::make_label_model(2, d_z, cfg.prior_scale);

  trainer::TrainState state;
  RngStream init_rng(seed, 4002);
  state.theta_groups = trainer::init_particle_groups(
      k_groups, cfg.m_theta, d_x * d_z, 0.5, init_rng.substream(1));
  state.label_groups = trainer::init_particle_groups(
      k_groups, cfg.m_theta, 2 * d_z, 0.5, init_rng.substream(2));
  state.rec =
      recognition::make_recognition(d_x, d_z, {spec.recog_hidden}, init_rng);

  for (int e = 0; e < cfg.epochs; ++e)
    trainer::semisup_epoch(state, data.unlabeled, data.labeled, model,
                           label_model, cfg);

  const Mat pooled = trainer::pooled_particles(state.label_groups);
  int correct = 0;
  for (size_t t = 0; t < data.test_x.size(); ++t) {
    const Vec probs =
        trainer::predict_label(data.test_x[t], pooled, label_model, state.rec,
                               spec.predict_samples, RngStream(seed, 4100 + t));
    if (argmax(probs) == data.test_y[t]) ++correct;
  }
  return static_cast<double>(correct) / data.test_x.size();
}

}  // namespace

ExperimentResult run_semisup_toy(const ExperimentSpec& spec) {
  ExperimentResult result;
  std::vector<double> acc_vae, acc_viwae;
  for (int rep = 0; rep < spec.seed_reps; ++rep) {
    const std::uint64_t seed = spec.config.seed + rep;
    acc_vae.push_back(semisup_accuracy(spec, 1, seed));
    acc_viwae.push_back(semisup_accuracy(spec, 5, seed));
    result.metrics.push_back({0, -1, "accuracy_vae_rep" + std::to_string(rep),
                              acc_vae.back()});
    result.metrics.push_back({0, -1, "accuracy_viwae_rep" + std::to_string(rep),
                              acc_viwae.back()});
  }
  auto mean_var = [](const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double var = 0.0;
    for (double a : v) var += (a - mean) * (a - mean);
    if (v.size() > 1) var /= v.size() - 1.0;
    return std::pair<double, double>(mean, var);
  };
  const auto [vae_mean, vae_var] = mean_var(acc_vae);
  const auto [viwae_mean, viwae_var] = mean_var(acc_viwae);
  const bool pass = vae_mean >= 0.90;
  result.summary.push_back(check_line(
      "semisup mean accuracy >= 0.90 over seeds", pass,
      "vae_mean=" + fmt(vae_mean) + " vae_var=" + fmt(vae_var)));
  result.summary.push_back(
      "informational: viwae(k=5) mean=" + fmt(viwae_mean) +
      " var=" + fmt(viwae_var) + " vs vae var=" + fmt(vae_var));
  result.metrics.push_back({0, -1, "accuracy_vae_mean", vae_mean});
  result.metrics.push_back({0, -1, "accuracy_vae_var", vae_var});
  result.metrics.push_back({0, -1, "accuracy_viwae_mean", viwae_mean});
  result.metrics.push_back({0, -1, "accuracy_viwae_var", viwae_var});
  result.all_passed = pass;
  return result;
}

}  // namespace steinflow::cli
