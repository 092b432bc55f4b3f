#pragma once

#include "steinflow/kernels.hpp"
#include "steinflow/numcore.hpp"

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

namespace steinflow::svgd {

// particle -> grad log p~ at that particle (same dimension)
using ScoreFn = std::function<Vec(const Vec&)>;

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool raw_step = false;  // plain theta += lr * delta, for fixed-point tests
};

// A bank of M parameter vectors evolving under Stein transport, with Adam
// state per entry.
struct ParticleSet {
  Mat particles;  // M x d
  Mat adam_m;
  Mat adam_v;
  std::int64_t step_count = 0;

  ParticleSet() = default;
  explicit ParticleSet(Mat initial)
      : particles(std::move(initial)),
        adam_m(Mat::Zero(particles.rows(), particles.cols())),
        adam_v(Mat::Zero(particles.rows(), particles.cols())) {}

  int count() const { return static_cast<int>(particles.rows()); }
  int dim() const { return static_cast<int>(particles.cols()); }
};

// Per-datum latent code clouds, one M x d_z matrix per datum.
struct CodeBank {
  std::vector<std::int64_t> datum_ids;
  std::vector<Mat> codes;

  void add(std::int64_t datum_id, Mat datum_codes);
  bool contains(std::int64_t datum_id) const;
  const Mat& codes_for(std::int64_t datum_id) const;
  Mat& codes_for(std::int64_t datum_id);
  size_t size() const { return codes.size(); }

 private:
  std::unordered_map<std::int64_t, size_t> index_;
};

// Delta_j = (1/M) sum_j' [ k(p_j', p_j) score(p_j') + grad_{p_j'} k(p_j', p_j) ]
// with the kernel bandwidth resolved from the cloud by `policy`.
// Throws (naming the particle index) if a score comes back non-finite.
Mat svgd_direction_cloud(const Mat& particles, const ScoreFn& score,
                         const kernels::KernelPolicy& policy);

Mat svgd_direction(const ParticleSet& set, const ScoreFn& score,
                   const kernels::KernelPolicy& policy);

// Per-datum analog over that datum's code cloud.
Mat svgd_direction_codes(const CodeBank& bank, std::int64_t datum_id,
                         const ScoreFn& score,
                         const kernels::KernelPolicy& policy);

// Treats deltas as ascent directions: feeds -delta to an Adam minimizer
// (or takes a raw lr * delta step when cfg.raw_step).
void apply_step(ParticleSet& set, const Mat& deltas, const AdamConfig& cfg);

// Sample estimate of d/deps KL(q_T || p) at eps = 0 for T(x) = x + eps psi(x):
//   -(1/S) sum_s [ score(x_s) . psi(x_s) + div_psi(x_s) ]
// Samples are rows of `samples`, drawn from q.
double kl_directional_derivative(const Mat& samples,
                                 const std::function<Vec(const Vec&)>& psi,
                                 const std::function<double(const Vec&)>& div_psi,
                                 const ScoreFn& score);

}  // namespace steinflow::svgd
