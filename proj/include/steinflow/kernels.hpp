#pragma once

#include "steinflow/numcore.hpp"

namespace steinflow::kernels {

// How the median heuristic reads "median of pairwise distances": over
// squared distances (default) or over plain distances.
enum class BandwidthMode { Squared, Unsquared };

// k(x, y) = exp(-||x - y||^2 / h)
struct RbfKernel {
  double h = 1.0;
};

// Median (lower median on ties) over all unordered pairs of points, of the
// squared or plain Euclidean distance per `mode`. Fewer than two points or
// a zero median fall back to h = 1. Points are matrix rows.
double median_bandwidth(const Mat& points, BandwidthMode mode = BandwidthMode::Squared);

double eval(const RbfKernel& k, const Vec& x, const Vec& y);

// grad wrt the first argument: -(2/h) (x - y) k(x, y)
Vec grad_first(const RbfKernel& k, const Vec& x, const Vec& y);

struct KernelPolicy {
  bool adaptive = true;  // recompute bandwidth from the current particles
  double fixed_h = 1.0;
  BandwidthMode bandwidth_mode = BandwidthMode::Squared;

  RbfKernel resolve(const Mat& particles) const {
    return adaptive ? RbfKernel{median_bandwidth(particles, bandwidth_mode)}
                    : RbfKernel{fixed_h};
  }

  static KernelPolicy median(BandwidthMode mode = BandwidthMode::Squared) {
    KernelPolicy p;
    p.bandwidth_mode = mode;
    return p;
  }
  static KernelPolicy fixed(double h) {
    KernelPolicy p;
    p.adaptive = false;
    p.fixed_h = h;
    return p;
  }
};

}  // namespace steinflow::kernels
