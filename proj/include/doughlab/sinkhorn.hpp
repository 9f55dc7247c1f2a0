#pragma once

#include <vector>

#include "doughlab/tensor.hpp"

namespace dough::ot {

using ad::Tape;
using ad::Tensor;

// Discrete measure on 2-D points, weights sum to 1.
struct PointCloud {
  std::vector<double> pts;  // M x 2, row-major
  std::vector<double> w;    // M, nonnegative

  int size() const { return static_cast<int>(w.size()); }
  void validate() const;

  static PointCloud uniform(std::vector<double> pts_xy);
};

struct SinkhornConfig {
  double epsilon = 1e-3;  // entropic regularization, squared meters
  int max_iters = 200;
  double tol = 1e-6;  // max-change threshold on dual potentials
};

// Converged dual potentials, reusable as a warm start for nearby problems.
struct Potentials {
  std::vector<double> f, g;
  bool valid = false;
};

struct OtResult {
  double value = 0.0;
  bool converged = false;
  int iters = 0;
};

// Entropic OT value <plan, cost> with squared Euclidean cost, log-domain
// fixed-point iterations. Non-convergence returns the best value with
// converged=false rather than failing.
OtResult entropic_ot(const PointCloud& a, const PointCloud& b, const SinkhornConfig& cfg,
                     Potentials* warm = nullptr);

// Symmetric self-term OT(a,a) via the averaged fixed-point update.
OtResult entropic_ot_self(const PointCloud& a, const SinkhornConfig& cfg, Potentials* warm = nullptr);

// Debiased divergence S(a,b) = OT(a,b) - OT(a,a)/2 - OT(b,b)/2. Each term is
// the entropic dual value (second-order accurate in the potential residual,
// and what the envelope-rule gradient differentiates exactly).
OtResult sinkhorn_divergence(const PointCloud& a, const PointCloud& b, const SinkhornConfig& cfg);

// Warm-start bundle for repeated divergence evaluations along a trajectory.
// Set b_static after the first call when cloud b does not move; the b
// self-term is then reused.
struct DivergenceCache {
  Potentials ab, aa, bb;
  double bb_value = 0.0;
  bool bb_cached = false;
  bool b_static = false;
};

// Tape op: divergence between clouds with positions given as [M,2] tensors
// and fixed uniform-sum weights. Gradients w.r.t. positions flow through the
// converged potentials held fixed (envelope rule).
Tensor sinkhorn_divergence_op(const Tensor& xa, const std::vector<double>& wa, const Tensor& xb,
                              const std::vector<double>& wb, const SinkhornConfig& cfg,
                              DivergenceCache* cache = nullptr, OtResult* stats = nullptr);

}  // namespace dough::ot
