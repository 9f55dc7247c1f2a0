#pragma once

// Test-only reference implementations, independent of the library code they
// check: finite differences, brute-force optimal transport, a reference Adam,
// and a union-find cluster counter.

#include <cstdint>
#include <functional>
#include <vector>

namespace oracles {

// Central finite difference d/dx_i of f around x.
double central_diff(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x, size_t i,
                    double h = 1e-5);

// Largest relative error between analytic gradient and central differences,
// rel = |a - fd| / max(|a|, |fd|, floor).
double max_grad_rel_err(const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& x,
                        const std::vector<double>& analytic, double h = 1e-5, double floor_ = 1e-6);

// Exact squared-cost optimal transport between two equal-size uniform point
// sets by enumerating all assignment permutations (valid oracle for uniform
// marginals; n <= 8).
double brute_force_emd2(const std::vector<double>& a_xy, const std::vector<double>& b_xy);

// Reference Adam with bias correction, one parameter vector.
struct RefAdam {
  double lr, beta1, beta2, eps;
  std::vector<double> m, v;
  int64_t t = 0;
  RefAdam(size_t n, double lr_, double b1 = 0.9, double b2 = 0.999, double eps_ = 1e-8)
      : lr(lr_), beta1(b1), beta2(b2), eps(eps_), m(n, 0.0), v(n, 0.0) {}
  void step(std::vector<double>& params, const std::vector<double>& grads);
};

// Number of connected components of points linked when closer than `radius`.
int cluster_count(const std::vector<double>& xy, double radius);

// Chi-square statistic of observed counts against a uniform expectation.
double chi_square_uniform(const std::vector<int>& counts);

}  // namespace oracles
