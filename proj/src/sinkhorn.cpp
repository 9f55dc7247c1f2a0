#include "doughlab/sinkhorn.hpp"

#include <algorithm>
#include <cmath>

namespace dough::ot {

using ad::Gradients;

void PointCloud::validate() const {
  if (w.empty()) fail("point cloud must have at least one point");
  if (pts.size() != w.size() * 2) fail("point cloud: pts/weights size mismatch");
  double s = 0.0;
  for (double x : w) {
    if (x < 0.0) fail("point cloud: negative weight");
    s += x;
  }
  if (std::fabs(s - 1.0) > 1e-9) fail("point cloud: weights sum to " + std::to_string(s) + ", expected 1");
}

PointCloud PointCloud::uniform(std::vector<double> pts_xy) {
  PointCloud c;
  c.pts = std::move(pts_xy);
  size_t m = c.pts.size() / 2;
  c.w.assign(m, 1.0 / static_cast<double>(m));
  return c;
}

namespace {

// C_ij = |a_i - b_j|^2
std::vector<double> cost_matrix(const std::vector<double>& a, const std::vector<double>& b) {
  size_t ma = a.size() / 2, mb = b.size() / 2;
  std::vector<double> c(ma * mb);
  for (size_t i = 0; i < ma; ++i) {
    double ax = a[2 * i], ay = a[2 * i + 1];
    for (size_t j = 0; j < mb; ++j) {
      double dx = ax - b[2 * j], dy = ay - b[2 * j + 1];
      c[i * mb + j] = dx * dx + dy * dy;
    }
  }
  return c;
}

// row_out_i = -eps * LSE_j((pot_j - C_ij)/eps + logw_j)
void lse_update(const std::vector<double>& cost, size_t rows, size_t cols, const std::vector<double>& pot,
                const std::vector<double>& logw, double eps, bool transpose, std::vector<double>& out) {
  for (size_t i = 0; i < rows; ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < cols; ++j) {
      double cij = transpose ? cost[j * rows + i] : cost[i * cols + j];
      double t = (pot[j] - cij) / eps + logw[j];
      if (t > hi) hi = t;
    }
    double s = 0.0;
    for (size_t j = 0; j < cols; ++j) {
      double cij = transpose ? cost[j * rows + i] : cost[i * cols + j];
      s += std::exp((pot[j] - cij) / eps + logw[j] - hi);
    }
    out[i] = -eps * (hi + std::log(s));
  }
}

std::vector<double> log_weights(const std::vector<double>& w) {
  std::vector<double> lw(w.size());
  for (size_t i = 0; i < w.size(); ++i) lw[i] = std::log(std::max(w[i], 1e-300));
  return lw;
}

struct PlanValues {
  double sharp = 0.0;  // <plan, cost>
  double dual = 0.0;   // sum f a + sum g b - eps (mass - 1); exact envelope target
};

// P_ij = wa_i wb_j exp((f_i + g_j - C_ij)/eps)
PlanValues plan_values(const std::vector<double>& cost, size_t ma, size_t mb, const std::vector<double>& f,
                       const std::vector<double>& g, const std::vector<double>& wa, const std::vector<double>& wb,
                       double eps, std::vector<double>* plan_out = nullptr) {
  PlanValues out;
  double mass = 0.0;
  if (plan_out) plan_out->resize(ma * mb);
  for (size_t i = 0; i < ma; ++i) {
    for (size_t j = 0; j < mb; ++j) {
      double cij = cost[i * mb + j];
      double p = wa[i] * wb[j] * std::exp((f[i] + g[j] - cij) / eps);
      if (plan_out) (*plan_out)[i * mb + j] = p;
      out.sharp += p * cij;
      mass += p;
    }
  }
  double fg = 0.0;
  for (size_t i = 0; i < ma; ++i) fg += f[i] * wa[i];
  for (size_t j = 0; j < mb; ++j) fg += g[j] * wb[j];
  out.dual = fg - eps * (mass - 1.0);
  return out;
}

struct OtFull {
  OtResult res;     // res.value holds the sharp <plan,cost>
  double dual = 0;  // second-order-accurate entropic value
  std::vector<double> f, g;
  std::vector<double> cost;
};

// Shift both clouds by a common offset; pairwise costs are unchanged
// mathematically and common translations cancel exactly.
void center_pair(std::vector<double>& a, const std::vector<double>& aw, std::vector<double>& b,
                 const std::vector<double>& bw) {
  double mx = 0, my = 0;
  for (size_t i = 0; i < aw.size(); ++i) {
    mx += 0.5 * aw[i] * a[2 * i];
    my += 0.5 * aw[i] * a[2 * i + 1];
  }
  for (size_t j = 0; j < bw.size(); ++j) {
    mx += 0.5 * bw[j] * b[2 * j];
    my += 0.5 * bw[j] * b[2 * j + 1];
  }
  for (size_t i = 0; i < aw.size(); ++i) {
    a[2 * i] -= mx;
    a[2 * i + 1] -= my;
  }
  for (size_t j = 0; j < bw.size(); ++j) {
    b[2 * j] -= mx;
    b[2 * j + 1] -= my;
  }
}

OtFull run_sinkhorn(const std::vector<double>& apts, const std::vector<double>& aw, const std::vector<double>& bpts,
                    const std::vector<double>& bw, const SinkhornConfig& cfg, Potentials* warm) {
  size_t ma = aw.size(), mb = bw.size();
  OtFull out;
  std::vector<double> ac = apts, bc = bpts;
  center_pair(ac, aw, bc, bw);
  out.cost = cost_matrix(ac, bc);
  std::vector<double> la = log_weights(aw), lb = log_weights(bw);

  std::vector<double>&f = out.f, &g = out.g;
  if (warm && warm->valid && warm->f.size() == ma && warm->g.size() == mb) {
    f = warm->f;
    g = warm->g;
  } else {
    f.assign(ma, 0.0);
    g.assign(mb, 0.0);
  }

  // Damped Jacobi updates: both potentials advance from the previous pair, so
  // the iteration treats the two clouds symmetrically and S(a,b) == S(b,a).
  std::vector<double> fn(ma), gn(mb);
  int it = 0;
  bool conv = false;
  for (; it < cfg.max_iters; ++it) {
    lse_update(out.cost, ma, mb, g, lb, cfg.epsilon, false, fn);
    lse_update(out.cost, mb, ma, f, la, cfg.epsilon, true, gn);
    double err = 0.0;
    for (size_t i = 0; i < ma; ++i) {
      fn[i] = 0.5 * (f[i] + fn[i]);
      err = std::max(err, std::fabs(fn[i] - f[i]));
    }
    for (size_t j = 0; j < mb; ++j) {
      gn[j] = 0.5 * (g[j] + gn[j]);
      err = std::max(err, std::fabs(gn[j] - g[j]));
    }
    f.swap(fn);
    g.swap(gn);
    if (err < cfg.tol) {
      conv = true;
      ++it;
      break;
    }
  }
  out.res.converged = conv;
  out.res.iters = it;
  PlanValues pv = plan_values(out.cost, ma, mb, f, g, aw, bw, cfg.epsilon);
  out.res.value = pv.sharp;
  out.dual = pv.dual;
  if (warm) {
    warm->f = f;
    warm->g = g;
    warm->valid = true;
  }
  return out;
}

OtFull run_sinkhorn_self(const std::vector<double>& apts, const std::vector<double>& aw, const SinkhornConfig& cfg,
                         Potentials* warm) {
  size_t m = aw.size();
  OtFull out;
  std::vector<double> ac = apts, ac2 = apts;
  center_pair(ac, aw, ac2, aw);
  out.cost = cost_matrix(ac, ac);
  std::vector<double> la = log_weights(aw);

  std::vector<double>& f = out.f;
  if (warm && warm->valid && warm->f.size() == m) {
    f = warm->f;
  } else {
    f.assign(m, 0.0);
  }

  std::vector<double> fn(m);
  int it = 0;
  bool conv = false;
  for (; it < cfg.max_iters; ++it) {
    lse_update(out.cost, m, m, f, la, cfg.epsilon, false, fn);
    double err = 0.0;
    for (size_t i = 0; i < m; ++i) {
      fn[i] = 0.5 * (f[i] + fn[i]);  // averaged update keeps the symmetric fixed point stable
      err = std::max(err, std::fabs(fn[i] - f[i]));
    }
    f.swap(fn);
    if (err < cfg.tol) {
      conv = true;
      ++it;
      break;
    }
  }
  out.g = f;
  out.res.converged = conv;
  out.res.iters = it;
  PlanValues pv = plan_values(out.cost, m, m, f, f, aw, aw, cfg.epsilon);
  out.res.value = pv.sharp;
  out.dual = pv.dual;
  if (warm) {
    warm->f = f;
    warm->g = f;
    warm->valid = true;
  }
  return out;
}

}  // namespace

OtResult entropic_ot(const PointCloud& a, const PointCloud& b, const SinkhornConfig& cfg, Potentials* warm) {
  a.validate();
  b.validate();
  if (cfg.epsilon <= 0.0) fail("sinkhorn: epsilon must be > 0");
  if (cfg.max_iters < 1) fail("sinkhorn: max_iters must be >= 1");
  return run_sinkhorn(a.pts, a.w, b.pts, b.w, cfg, warm).res;
}

OtResult entropic_ot_self(const PointCloud& a, const SinkhornConfig& cfg, Potentials* warm) {
  a.validate();
  return run_sinkhorn_self(a.pts, a.w, cfg, warm).res;
}

OtResult sinkhorn_divergence(const PointCloud& a, const PointCloud& b, const SinkhornConfig& cfg) {
  a.validate();
  b.validate();
  OtFull ab = run_sinkhorn(a.pts, a.w, b.pts, b.w, cfg, nullptr);
  OtFull aa = run_sinkhorn_self(a.pts, a.w, cfg, nullptr);
  OtFull bb = run_sinkhorn_self(b.pts, b.w, cfg, nullptr);
  OtResult out;
  out.value = ab.dual - 0.5 * aa.dual - 0.5 * bb.dual;
  out.converged = ab.res.converged && aa.res.converged && bb.res.converged;
  out.iters = std::max({ab.res.iters, aa.res.iters, bb.res.iters});
  return out;
}

Tensor sinkhorn_divergence_op(const Tensor& xa, const std::vector<double>& wa, const Tensor& xb,
                              const std::vector<double>& wb, const SinkhornConfig& cfg, DivergenceCache* cache,
                              OtResult* stats) {
  if (xa.ndim() != 2 || xa.dim(1) != 2 || xb.ndim() != 2 || xb.dim(1) != 2)
    fail("sinkhorn_divergence_op: positions must be [M,2]");
  size_t ma = wa.size(), mb = wb.size();
  if (static_cast<size_t>(xa.dim(0)) != ma || static_cast<size_t>(xb.dim(0)) != mb)
    fail("sinkhorn_divergence_op: weight count mismatch");

  DivergenceCache local;
  DivergenceCache* c = cache ? cache : &local;

  OtFull ab = run_sinkhorn(xa.v, wa, xb.v, wb, cfg, &c->ab);
  OtFull aa = run_sinkhorn_self(xa.v, wa, cfg, &c->aa);

  double bb_value;
  bool bb_conv = true;
  std::vector<double> bb_f;
  bool need_bb_plan = xb.on_tape();
  if (c->b_static && c->bb_cached && !need_bb_plan) {
    bb_value = c->bb_value;
  } else {
    OtFull bb = run_sinkhorn_self(xb.v, wb, cfg, &c->bb);
    bb_value = bb.dual;
    bb_conv = bb.res.converged;
    bb_f = std::move(bb.f);
    c->bb_value = bb_value;
    c->bb_cached = true;
  }

  double value = ab.dual - 0.5 * aa.dual - 0.5 * bb_value;
  if (stats) {
    stats->value = value;
    stats->converged = ab.res.converged && aa.res.converged && bb_conv;
    stats->iters = std::max(ab.res.iters, aa.res.iters);
  }

  Tensor out = Tensor::scalar(value);
  Tape* tape = nullptr;
  if (xa.on_tape()) tape = xa.tape;
  if (xb.on_tape()) {
    if (tape && xb.tape != tape) fail("sinkhorn_divergence_op: inputs on different tapes");
    tape = xb.tape;
  }
  if (!tape) return out;

  // Envelope rule: hold converged potentials fixed. The dual value depends on
  // positions only through the cost entries, with d(dual)/dC_ij = P_ij, so
  //   d/dxa_i = sum_j Pab_ij 2(xa_i-xb_j) - 1/2 sum_j (Paa_ij+Paa_ji) 2(xa_i-xa_j)
  std::vector<double> plan_ab, plan_aa, plan_bb;
  plan_values(ab.cost, ma, mb, ab.f, ab.g, wa, wb, cfg.epsilon, &plan_ab);
  if (xa.on_tape()) plan_values(aa.cost, ma, ma, aa.f, aa.f, wa, wa, cfg.epsilon, &plan_aa);
  if (need_bb_plan) {
    std::vector<double> bb_cost = cost_matrix(xb.v, xb.v);
    plan_values(bb_cost, mb, mb, bb_f, bb_f, wb, wb, cfg.epsilon, &plan_bb);
  }

  int pa = xa.node, pb = xb.node;
  return tape->record(
      "sinkhorn_divergence", std::move(out), {pa, pb},
      [pa, pb, ma, mb, xav = xa.v, xbv = xb.v, plan_ab = std::move(plan_ab), plan_aa = std::move(plan_aa),
       plan_bb = std::move(plan_bb)](const std::vector<double>& g, Gradients& gr) {
        double go = g[0];
        if (pa >= 0) {
          auto& ga = gr.touch(pa, ma * 2);
          for (size_t i = 0; i < ma; ++i) {
            double gx = 0, gy = 0;
            for (size_t j = 0; j < mb; ++j) {
              double p = plan_ab[i * mb + j];
              gx += p * 2.0 * (xav[2 * i] - xbv[2 * j]);
              gy += p * 2.0 * (xav[2 * i + 1] - xbv[2 * j + 1]);
            }
            for (size_t j = 0; j < ma; ++j) {
              double p = plan_aa[i * ma + j] + plan_aa[j * ma + i];
              gx -= 0.5 * p * 2.0 * (xav[2 * i] - xav[2 * j]);
              gy -= 0.5 * p * 2.0 * (xav[2 * i + 1] - xav[2 * j + 1]);
            }
            ga[2 * i] += go * gx;
            ga[2 * i + 1] += go * gy;
          }
        }
        if (pb >= 0) {
          auto& gb = gr.touch(pb, mb * 2);
          for (size_t j = 0; j < mb; ++j) {
            double gx = 0, gy = 0;
            for (size_t i = 0; i < ma; ++i) {
              double p = plan_ab[i * mb + j];
              gx += p * 2.0 * (xbv[2 * j] - xav[2 * i]);
              gy += p * 2.0 * (xbv[2 * j + 1] - xav[2 * i + 1]);
            }
            for (size_t i = 0; i < mb; ++i) {
              double p = plan_bb[j * mb + i] + plan_bb[i * mb + j];
              gx -= 0.5 * p * 2.0 * (xbv[2 * j] - xbv[2 * i]);
              gy -= 0.5 * p * 2.0 * (xbv[2 * j + 1] - xbv[2 * i + 1]);
            }
            gb[2 * j] += go * gx;
            gb[2 * j + 1] += go * gy;
          }
        }
      });
}

}  // namespace dough::ot
