#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>

namespace steinflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// splitmix64 finalizer; full 64-bit avalanche.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based random stream. Every draw is a pure function of
// (seed, stream, counter), so a task that owns its stream reproduces the
// same sequence no matter how work is scheduled. Distinct stream ids give
// statistically independent sequences.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed),
        stream_(stream),
        key_(mix64(seed ^ mix64(stream ^ 0x5851f42d4c957f2dULL))) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() { return mix64(key_ ^ mix64(counter_++)); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double gaussian();

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Independent stream derived from this one; counter starts at zero.
  RngStream substream(std::uint64_t a, std::uint64_t b = 0) const {
    return RngStream(seed_, mix64(stream_ ^ mix64(a) ^ (mix64(b + 0x9e3779b97f4a7c15ULL) << 1)));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// d independent standard-normal draws; advances rng.
Vec sample_gaussian(RngStream& rng, int d);

// Shift-stabilized log sum exp. Throws on empty input.
double log_sum_exp(std::span<const double> values);
double log_sum_exp(const Vec& values);

struct LogDet {
  double log_abs_det = 0.0;
  int sign = 1;  // 0 marks a singular matrix (log_abs_det = -inf)
};

// log|det m| and the sign of det m via pivoted LU. Throws if m is not square.
LogDet lu_log_abs_det(const Mat& m);

// Throws std::runtime_error naming `what` if any entry is NaN/Inf.
void check_finite(const Eigen::Ref<const Mat>& values, const std::string& what);

}  // namespace steinflow
