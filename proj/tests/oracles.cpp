#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace oracles {

double central_diff(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x, size_t i,
                    double h) {
  double x0 = x[i];
  x[i] = x0 + h;
  double fp = f(x);
  x[i] = x0 - h;
  double fm = f(x);
  x[i] = x0;
  return (fp - fm) / (2.0 * h);
}

double max_grad_rel_err(const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& x,
                        const std::vector<double>& analytic, double h, double floor_) {
  if (analytic.size() != x.size()) throw std::runtime_error("max_grad_rel_err: size mismatch");
  double worst = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    double fd = central_diff(f, x, i, h);
    double denom = std::max({std::fabs(analytic[i]), std::fabs(fd), floor_});
    worst = std::max(worst, std::fabs(analytic[i] - fd) / denom);
  }
  return worst;
}

double brute_force_emd2(const std::vector<double>& a_xy, const std::vector<double>& b_xy) {
  if (a_xy.size() != b_xy.size() || a_xy.size() % 2 != 0)
    throw std::runtime_error("brute_force_emd2: need equal-size 2-D clouds");
  size_t n = a_xy.size() / 2;
  if (n > 8) throw std::runtime_error("brute_force_emd2: too many points");
  std::vector<size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double dx = a_xy[2 * i] - b_xy[2 * perm[i]];
      double dy = a_xy[2 * i + 1] - b_xy[2 * perm[i] + 1];
      cost += dx * dx + dy * dy;
    }
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(n);  // uniform weights 1/n
}

void RefAdam::step(std::vector<double>& params, const std::vector<double>& grads) {
  ++t;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < params.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
    params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
}

namespace {
int uf_find(std::vector<int>& parent, int i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}
}  // namespace

int cluster_count(const std::vector<double>& xy, double radius) {
  int n = static_cast<int>(xy.size() / 2);
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  double r2 = radius * radius;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double dx = xy[2 * i] - xy[2 * j];
      double dy = xy[2 * i + 1] - xy[2 * j + 1];
      if (dx * dx + dy * dy < r2) {
        int ri = uf_find(parent, i), rj = uf_find(parent, j);
        if (ri != rj) parent[ri] = rj;
      }
    }
  int count = 0;
  for (int i = 0; i < n; ++i)
    if (uf_find(parent, i) == i) ++count;
  return count;
}

double chi_square_uniform(const std::vector<int>& counts) {
  double total = 0;
  for (int c : counts) total += c;
  double expect = total / static_cast<double>(counts.size());
  double stat = 0;
  for (int c : counts) {
    double d = c - expect;
    stat += d * d / expect;
  }
  return stat;
}

}  // namespace oracles
