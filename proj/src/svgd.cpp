#include "steinflow/svgd.hpp"

#include "steinflow/parallel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace steinflow::svgd {

void CodeBank::add(std::int64_t datum_id, Mat datum_codes) {
  if (contains(datum_id))
    throw std::invalid_argument("CodeBank: duplicate datum id " + std::to_string(datum_id));
  index_[datum_id] = codes.size();
  datum_ids.push_back(datum_id);
  codes.push_back(std::move(datum_codes));
}

bool CodeBank::contains(std::int64_t datum_id) const {
  return index_.count(datum_id) > 0;
}

const Mat& CodeBank::codes_for(std::int64_t datum_id) const {
  auto it = index_.find(datum_id);
  if (it == index_.end())
    throw std::invalid_argument("CodeBank: unknown datum id " + std::to_string(datum_id));
  return codes[it->second];
}

Mat& CodeBank::codes_for(std::int64_t datum_id) {
  auto it = index_.find(datum_id);
  if (it == index_.end())
    throw std::invalid_argument("CodeBank: unknown datum id " + std::to_string(datum_id));
  return codes[it->second];
}

Mat svgd_direction_cloud(const Mat& particles, const ScoreFn& score,
                         const kernels::KernelPolicy& policy) {
  const int m = static_cast<int>(particles.rows());
  const int d = static_cast<int>(particles.cols());
  if (m < 1) throw std::invalid_argument("svgd: empty particle set");

  const kernels::RbfKernel kern = policy.resolve(particles);

  Mat scores(m, d);
  parallel_for(m, [&](std::int64_t j) {
    const Vec s = score(particles.row(j).transpose());
    if (s.size() != d)
      throw std::runtime_error("svgd: score dimension mismatch at particle " + std::to_string(j));
    if (!s.allFinite())
      throw std::runtime_error("svgd: non-finite score at particle " + std::to_string(j));
    scores.row(j) = s.transpose();
  });

  Mat deltas(m, d);
  parallel_for(m, [&](std::int64_t j) {
    const Vec target = particles.row(j).transpose();
    Vec acc = Vec::Zero(d);
    for (int jp = 0; jp < m; ++jp) {
      const Vec source = particles.row(jp).transpose();
      const double kv = kernels::eval(kern, source, target);
      const Vec term = kv * scores.row(jp).transpose() +
                       kernels::grad_first(kern, source, target);
      acc += term;
    }
    deltas.row(j) = acc.transpose() / static_cast<double>(m);
  });
  return deltas;
}

Mat svgd_direction(const ParticleSet& set, const ScoreFn& score,
                   const kernels::KernelPolicy& policy) {
  return svgd_direction_cloud(set.particles, score, policy);
}

Mat svgd_direction_codes(const CodeBank& bank, std::int64_t datum_id,
                         const ScoreFn& score,
                         const kernels::KernelPolicy& policy) {
  return svgd_direction_cloud(bank.codes_for(datum_id), score, policy);
}

void apply_step(ParticleSet& set, const Mat& deltas, const AdamConfig& cfg) {
  if (deltas.rows() != set.particles.rows() || deltas.cols() != set.particles.cols())
    throw std::invalid_argument("apply_step: delta shape mismatch");
  set.step_count += 1;
  if (cfg.raw_step) {
    set.particles += cfg.lr * deltas;
  } else {
    const Mat grad = -deltas;  // minimize the negated objective
    set.adam_m = cfg.beta1 * set.adam_m + (1.0 - cfg.beta1) * grad;
    set.adam_v = cfg.beta2 * set.adam_v + (1.0 - cfg.beta2) * grad.array().square().matrix();
    const double t = static_cast<double>(set.step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    set.particles.array() -=
        cfg.lr * (set.adam_m.array() / bc1) /
        ((set.adam_v.array() / bc2).sqrt() + cfg.eps);
  }
  check_finite(set.particles, "apply_step: particles");
}

double kl_directional_derivative(const Mat& samples,
                                 const std::function<Vec(const Vec&)>& psi,
                                 const std::function<double(const Vec&)>& div_psi,
                                 const ScoreFn& score) {
  const Eigen::Index s = samples.rows();
  if (s == 0) throw std::invalid_argument("kl_directional_derivative: no samples");
  std::vector<double> terms(static_cast<size_t>(s));
  parallel_for(s, [&](std::int64_t i) {
    const Vec x = samples.row(i).transpose();
    terms[static_cast<size_t>(i)] = score(x).dot(psi(x)) + div_psi(x);
  });
  double acc = 0.0;
  for (double t : terms) acc += t;
  return -acc / static_cast<double>(s);
}

}  // namespace steinflow::svgd
