#include "bregcal/softcal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "bregcal/errors.hpp"
#include "bregcal/estimate.hpp"
#include "bregcal/inference.hpp"
#include "bregcal/math.hpp"
#include "newton_core.hpp"

namespace bregcal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

// Euclidean projection onto the probability simplex {t >= 0, sum t = 1}.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& w) {
  const Eigen::Index m = w.size();
  std::vector<double> u(w.data(), w.data() + m);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cum = 0.0, theta = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    cum += u[k];
    const double t = (cum - 1.0) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) theta = t;
  }
  return (w.array() - theta).max(0.0);
}

// Euclidean projection onto the l1 ball of radius r.
Eigen::VectorXd project_l1_ball(const Eigen::VectorXd& z, double r) {
  if (r <= 0.0) return Eigen::VectorXd::Zero(z.size());
  if (z.lpNorm<1>() <= r) return z;
  const Eigen::VectorXd proj = project_simplex(z.cwiseAbs() / r) * r;
  return proj.array() * z.array().sign();
}

// prox of thresh * ||.||_{pen} (pen = the dual-norm order q*).
Eigen::VectorXd prox_penalty(const Eigen::VectorXd& z, double thresh,
                             NormOrder pen) {
  switch (pen) {
    case NormOrder::L1: {
      Eigen::VectorXd out(z.size());
      for (Eigen::Index k = 0; k < z.size(); ++k) {
        out[k] = soft_threshold(z[k], thresh);
      }
      return out;
    }
    case NormOrder::L2: {
      const double nz = z.norm();
      if (nz <= thresh) return Eigen::VectorXd::Zero(z.size());
      return z * (1.0 - thresh / nz);
    }
    case NormOrder::LInf:
      // Moreau: prox of the support function of the l1 ball.
      return z - project_l1_ball(z, thresh);
  }
  return z;
}

// Nearest subgradient of ||.||_{pen} at mu to the vector v.
Eigen::VectorXd nearest_subgradient(const Eigen::VectorXd& v,
                                    const Eigen::VectorXd& mu,
                                    NormOrder pen) {
  const Eigen::Index m = v.size();
  switch (pen) {
    case NormOrder::L1: {
      Eigen::VectorXd s(m);
      for (Eigen::Index k = 0; k < m; ++k) {
        s[k] = mu[k] != 0.0 ? (mu[k] > 0.0 ? 1.0 : -1.0)
                            : std::clamp(v[k], -1.0, 1.0);
      }
      return s;
    }
    case NormOrder::L2: {
      const double nmu = mu.norm();
      if (nmu > 0.0) return mu / nmu;
      const double nv = v.norm();
      return nv <= 1.0 ? v : Eigen::VectorXd(v / nv);
    }
    case NormOrder::LInf: {
      const double nmu = mu.lpNorm<Eigen::Infinity>();
      if (nmu == 0.0) return project_l1_ball(v, 1.0);
      // Subdifferential at mu != 0: convex hull of sign(mu_k) e_k over the
      // max-magnitude face.
      const double face_tol = nmu * 1e-9 + 1e-300;
      std::vector<double> w;
      std::vector<Eigen::Index> face;
      for (Eigen::Index k = 0; k < m; ++k) {
        if (nmu - std::abs(mu[k]) <= face_tol) {
          face.push_back(k);
          w.push_back((mu[k] > 0.0 ? 1.0 : -1.0) * v[k]);
        }
      }
      Eigen::VectorXd wv = Eigen::Map<Eigen::VectorXd>(
          w.data(), static_cast<Eigen::Index>(w.size()));
      const Eigen::VectorXd pw = project_simplex(wv);
      Eigen::VectorXd s = Eigen::VectorXd::Zero(m);
      for (std::size_t idx = 0; idx < face.size(); ++idx) {
        const Eigen::Index k = face[idx];
        s[k] = (mu[k] > 0.0 ? 1.0 : -1.0) * pw[static_cast<Eigen::Index>(idx)];
      }
      return s;
    }
  }
  return Eigen::VectorXd::Zero(m);
}

// Stationarity gap on the per-unit balance scale: with v = -grad(smooth)/n
// in the tau-rescaled coordinates, tau_k * (v_k - s_k) recovers the
// original-scale condition  n^{-1} sum_i w_i xt_ik + tau_k s_k = 0, so the
// gap is comparable to the tolerance slack regardless of how small tau is.
double kkt_gap_abs(const Eigen::VectorXd& v, const Eigen::VectorXd& mu,
                   const Eigen::VectorXd& tau_active, NormOrder pen) {
  const Eigen::VectorXd s = nearest_subgradient(v, mu, pen);
  double gap = 0.0;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    gap = std::max(gap, tau_active[k] * std::abs(v[k] - s[k]));
  }
  return gap;
}

// Smooth part of the profiled dual: at each mu the intercept solves
// sum_i F'(g(w0_i) + lambda0 + z_i'mu) = n exactly.
struct SmoothModel {
  const Generator& gen;
  Eigen::MatrixXd Z;        // n x m, active columns of Xt scaled by 1/tau
  Eigen::VectorXd base;     // g(w0_i)
  double constant;          // C(w0)
  double n;                 // intercept target (= sample size)
  double margin;
  double intercept_tol;

  struct Eval {
    double lambda0 = 0.0;
    Eigen::VectorXd nu;
    Eigen::VectorXd w;   // F'(nu)
    double value = 0.0;  // smooth dual value
    bool feasible = false;
  };

  double wall_lo(const Eigen::VectorXd& s) const {
    const double lo = gen.dual_lo();
    return std::isfinite(lo) ? lo + margin - s.minCoeff() : -kInf;
  }
  double wall_hi(const Eigen::VectorXd& s) const {
    const double hi = gen.dual_hi();
    return std::isfinite(hi) ? hi - margin - s.maxCoeff() : kInf;
  }

  // h(lambda0) = sum F'(s_i + lambda0) - n and its derivative.
  void h_eval(const Eigen::VectorXd& s, double l0, double* h,
              double* hp) const {
    double acc = 0.0, accp = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      acc += gen.Fprime(s[i] + l0);
      if (hp != nullptr) accp += gen.Fsecond(s[i] + l0);
    }
    *h = acc - n;
    if (hp != nullptr) *hp = accp;
  }

  Eval profile(const Eigen::VectorXd& mu, double warm) const {
    Eval ev;
    const Eigen::VectorXd s = base + Z * mu;
    double lo = wall_lo(s), hi = wall_hi(s);
    if (!(lo < hi)) return ev;

    auto clamp_in = [&](double x) {
      const double width = (std::isfinite(lo) && std::isfinite(hi)) ? hi - lo : 1.0;
      const double nudge = 1e-9 * width;
      if (std::isfinite(lo)) x = std::max(x, lo + nudge);
      if (std::isfinite(hi)) x = std::min(x, hi - nudge);
      return x;
    };
    double x = clamp_in(std::isfinite(warm) ? warm : 0.0);

    double h, hp;
    h_eval(s, x, &h, nullptr);
    // Bracket the root of the increasing h.
    double a = x, b = x, ha = h, hb = h;
    double step = std::max(1.0, std::abs(x));
    for (int it = 0; it < 200 && ha > 0.0; ++it) {
      const double prev = a;
      a = std::isfinite(lo) ? 0.5 * (a + lo) : a - step;
      step *= 2.0;
      if (a == prev) return ev;
      h_eval(s, a, &ha, nullptr);
      if (std::isfinite(lo) && ha > 0.0 && a - lo < 1e-13 * std::max(1.0, std::abs(lo))) {
        return ev;  // sum of weights exceeds n everywhere: infeasible
      }
    }
    step = std::max(1.0, std::abs(x));
    for (int it = 0; it < 200 && hb < 0.0; ++it) {
      const double prev = b;
      b = std::isfinite(hi) ? 0.5 * (b + hi) : b + step;
      step *= 2.0;
      if (b == prev) return ev;
      h_eval(s, b, &hb, nullptr);
      if (std::isfinite(hi) && hb < 0.0 && hi - b < 1e-13 * std::max(1.0, std::abs(hi))) {
        return ev;
      }
    }
    if (ha > 0.0 || hb < 0.0) return ev;

    // Safeguarded Newton within [a, b].
    x = std::clamp(x, a, b);
    for (int it = 0; it < 200; ++it) {
      h_eval(s, x, &h, &hp);
      if (std::abs(h) <= intercept_tol * n) break;
      if (h < 0.0) a = x; else b = x;
      double cand = x - h / hp;
      if (!std::isfinite(cand) || cand <= a || cand >= b) cand = 0.5 * (a + b);
      if (cand == x) break;
      x = cand;
    }

    ev.lambda0 = x;
    ev.nu = s.array() + x;
    ev.w.resize(s.size());
    double val = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      ev.w[i] = gen.Fprime(ev.nu[i]);
      // A root that pins a weight onto the boundary of the open weight
      // domain is a limit point, not a solution (e.g. shifted-KL weights
      // cannot average to one).
      if (!gen.weight_in_domain(ev.w[i])) return ev;
      val += gen.F(ev.nu[i]);
    }
    ev.value = val - n * x + constant;
    ev.feasible = true;
    return ev;
  }

  Eigen::VectorXd grad(const Eval& ev) const { return Z.transpose() * ev.w; }
};

// Unprofiled evaluation at explicit (lambda0, mu); ok = false when some nu
// leaves the dual domain.
struct RawPoint {
  Eigen::VectorXd nu, w, fsec;
  bool ok = false;
};

RawPoint raw_eval(const SmoothModel& model, double lambda0,
                  const Eigen::VectorXd& mu) {
  RawPoint r;
  Eigen::VectorXd nu = model.base + model.Z * mu;
  nu.array() += lambda0;
  const double lo = model.gen.dual_lo();
  const double hi = model.gen.dual_hi();
  for (Eigen::Index i = 0; i < nu.size(); ++i) {
    if (!std::isfinite(nu[i])) return r;
    if (std::isfinite(lo) && nu[i] - lo <= model.margin) return r;
    if (std::isfinite(hi) && hi - nu[i] <= model.margin) return r;
  }
  r.nu = std::move(nu);
  r.w.resize(r.nu.size());
  r.fsec.resize(r.nu.size());
  for (Eigen::Index i = 0; i < r.nu.size(); ++i) {
    r.w[i] = model.gen.Fprime(r.nu[i]);
    r.fsec[i] = model.gen.Fsecond(r.nu[i]);
  }
  r.ok = true;
  return r;
}

// Largest step along dnu keeping every nu strictly inside the dual domain.
double nu_step_cap(const SmoothModel& model, const Eigen::VectorXd& nu,
                   const Eigen::VectorXd& dnu) {
  const double lo = model.gen.dual_lo();
  const double hi = model.gen.dual_hi();
  double t = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < nu.size(); ++i) {
    if (dnu[i] < 0.0 && std::isfinite(lo)) {
      t = std::min(t, (nu[i] - lo - model.margin) / -dnu[i]);
    } else if (dnu[i] > 0.0 && std::isfinite(hi)) {
      t = std::min(t, (hi - model.margin - nu[i]) / dnu[i]);
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Newton refinement on the structure identified by the proximal iteration.
// FISTA locates the active set reliably but its sublinear tail cannot push
// badly scaled instances (adaptive tolerances spread over orders of
// magnitude) down to the 1e-6 stationarity gap; on the fixed structure the
// KKT system is smooth and Newton finishes the job quadratically.

// Weighted-l1 penalty (primal q = inf): active coordinates carry fixed
// signs, mu stays zero elsewhere.
bool polish_l1(const SmoothModel& model, double kkt_tol, double& lambda0,
               Eigen::VectorXd& mu) {
  const double nd = model.n;
  const Eigen::Index m = mu.size();
  std::vector<Eigen::Index> act;
  for (Eigen::Index k = 0; k < m; ++k) {
    if (mu[k] != 0.0) act.push_back(k);
  }

  for (int outer = 0; outer < 60; ++outer) {
    // Inner Newton on (lambda0, mu_act) with fixed signs.
    for (int it = 0; it < 50; ++it) {
      const RawPoint pt = raw_eval(model, lambda0, mu);
      if (!pt.ok) return false;
      const Eigen::VectorXd grad = model.Z.transpose() * pt.w;
      const Eigen::Index a = static_cast<Eigen::Index>(act.size());
      Eigen::VectorXd R(1 + a);
      R[0] = pt.w.sum() - nd;
      for (Eigen::Index j = 0; j < a; ++j) {
        R[1 + j] = grad[act[j]] + nd * (mu[act[j]] > 0.0 ? 1.0 : -1.0);
      }
      if (std::abs(R[0]) <= 1e-11 * nd &&
          (a == 0 || R.tail(a).lpNorm<Eigen::Infinity>() <= 0.2 * kkt_tol * nd)) {
        break;
      }

      Eigen::MatrixXd B(pt.nu.size(), 1 + a);
      B.col(0).setOnes();
      for (Eigen::Index j = 0; j < a; ++j) B.col(1 + j) = model.Z.col(act[j]);
      const Eigen::MatrixXd J = B.transpose() * pt.fsec.asDiagonal() * B;
      const Eigen::VectorXd du = detail::solve_spd(J, -R);

      const Eigen::VectorXd dnu = B * du;
      double t = std::min(1.0, 0.995 * nu_step_cap(model, pt.nu, dnu));
      // Cap at the first sign crossing, so signs stay consistent.
      Eigen::Index crossing = -1;
      for (Eigen::Index j = 0; j < a; ++j) {
        const double d = du[1 + j];
        const double cur = mu[act[j]];
        if (d != 0.0 && cur * (cur + t * d) < 0.0) {
          const double tc = -cur / d;
          if (tc < t) {
            t = tc;
            crossing = j;
          }
        }
      }
      if (!(t > 0.0)) return false;
      lambda0 += t * du[0];
      for (Eigen::Index j = 0; j < a; ++j) mu[act[j]] += t * du[1 + j];
      if (crossing >= 0) {
        mu[act[crossing]] = 0.0;
        act.erase(act.begin() + crossing);
        continue;  // restart the inner loop on the reduced set
      }
    }

    // Working-set check for the inactive coordinates.
    const RawPoint pt = raw_eval(model, lambda0, mu);
    if (!pt.ok) return false;
    const Eigen::VectorXd grad = model.Z.transpose() * pt.w;
    double worst = 0.0;
    Eigen::Index enter = -1;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (mu[k] != 0.0) continue;
      const double viol = std::abs(grad[k]) - nd;
      if (viol > worst) {
        worst = viol;
        enter = k;
      }
    }
    if (enter < 0 || worst <= 0.2 * kkt_tol * nd) return true;
    // Enter with an infinitesimal value carrying the descent sign.
    mu[enter] = grad[enter] > 0.0 ? -1e-300 : 1e-300;
    act.push_back(enter);
    std::sort(act.begin(), act.end());
  }
  return true;
}

// l2 penalty: smooth away from mu = 0; full Newton on (lambda0, mu).
bool polish_l2(const SmoothModel& model, double kkt_tol, double& lambda0,
               Eigen::VectorXd& mu) {
  const double nd = model.n;
  const Eigen::Index m = mu.size();
  if (mu.norm() == 0.0) return true;

  for (int it = 0; it < 80; ++it) {
    const RawPoint pt = raw_eval(model, lambda0, mu);
    if (!pt.ok) return false;
    const double nmu = mu.norm();
    if (!(nmu > 1e-300)) return true;
    const Eigen::VectorXd grad = model.Z.transpose() * pt.w;
    Eigen::VectorXd R(1 + m);
    R[0] = pt.w.sum() - nd;
    R.tail(m) = grad + nd * mu / nmu;
    if (std::abs(R[0]) <= 1e-11 * nd &&
        R.tail(m).lpNorm<Eigen::Infinity>() <= 0.2 * kkt_tol * nd) {
      return true;
    }

    Eigen::MatrixXd J(1 + m, 1 + m);
    J(0, 0) = pt.fsec.sum();
    const Eigen::VectorXd zf = model.Z.transpose() * pt.fsec;
    J.block(0, 1, 1, m) = zf.transpose();
    J.block(1, 0, m, 1) = zf;
    J.block(1, 1, m, m) =
        model.Z.transpose() * pt.fsec.asDiagonal() * model.Z +
        nd * (Eigen::MatrixXd::Identity(m, m) / nmu -
              mu * mu.transpose() / (nmu * nmu * nmu));
    const Eigen::VectorXd du = detail::solve_spd(J, -R);

    Eigen::VectorXd dnu = model.Z * du.tail(m);
    dnu.array() += du[0];
    double t = std::min(1.0, 0.995 * nu_step_cap(model, pt.nu, dnu));
    if (!(t > 0.0)) return false;

    // Backtrack on the residual norm.
    const double r0 = R.norm();
    for (int h = 0; h < 30; ++h) {
      const double l0c = lambda0 + t * du[0];
      const Eigen::VectorXd muc = mu + t * du.tail(m);
      const RawPoint pc = raw_eval(model, l0c, muc);
      if (pc.ok && muc.norm() > 1e-300) {
        Eigen::VectorXd Rc(1 + m);
        Rc[0] = pc.w.sum() - nd;
        Rc.tail(m) =
            model.Z.transpose() * pc.w + nd * muc / muc.norm();
        if (Rc.norm() <= (1.0 - 1e-4 * t) * r0) {
          lambda0 = l0c;
          mu = muc;
          break;
        }
      }
      t *= 0.5;
      if (h == 29) return true;  // stalled: caller rechecks the gap
    }
  }
  return true;
}

// l-infinity penalty (primal q = 1): the max-magnitude face carries a
// simplex of subgradient weights; off-face coordinates have zero gradient.
bool polish_linf(const SmoothModel& model, double kkt_tol, double& lambda0,
                 Eigen::VectorXd& mu) {
  const double nd = model.n;
  const Eigen::Index m = mu.size();

  for (int outer = 0; outer < 60; ++outer) {
    const double M0 = mu.lpNorm<Eigen::Infinity>();
    if (M0 <= 0.0) return true;
    std::vector<Eigen::Index> face, off;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (M0 - std::abs(mu[k]) <= 1e-9 * M0) {
        face.push_back(k);
      } else {
        off.push_back(k);
      }
    }
    const Eigen::Index f = static_cast<Eigen::Index>(face.size());
    const Eigen::Index o = static_cast<Eigen::Index>(off.size());
    Eigen::VectorXd sgn(f);
    for (Eigen::Index j = 0; j < f; ++j) {
      sgn[j] = mu[face[j]] > 0.0 ? 1.0 : -1.0;
    }
    double M = M0;

    // Inner Newton on u = (lambda0, M, mu_off).
    for (int it = 0; it < 50; ++it) {
      const RawPoint pt = raw_eval(model, lambda0, mu);
      if (!pt.ok) return false;
      const Eigen::VectorXd grad = model.Z.transpose() * pt.w;
      Eigen::VectorXd R(2 + o);
      R[0] = pt.w.sum() - nd;
      R[1] = -nd;
      for (Eigen::Index j = 0; j < f; ++j) R[1] -= sgn[j] * grad[face[j]];
      for (Eigen::Index j = 0; j < o; ++j) R[2 + j] = grad[off[j]];
      if (std::abs(R[0]) <= 1e-11 * nd &&
          R.tail(1 + o).lpNorm<Eigen::Infinity>() <= 0.2 * kkt_tol * nd) {
        break;
      }

      // nu varies through B = [1, Z_F s, Z_off].
      Eigen::MatrixXd B(pt.nu.size(), 2 + o);
      B.col(0).setOnes();
      B.col(1).setZero();
      for (Eigen::Index j = 0; j < f; ++j) {
        B.col(1) += sgn[j] * model.Z.col(face[j]);
      }
      for (Eigen::Index j = 0; j < o; ++j) B.col(2 + j) = model.Z.col(off[j]);

      const Eigen::MatrixXd dgrad =
          model.Z.transpose() * pt.fsec.asDiagonal() * B;  // m x (2+o)
      Eigen::MatrixXd J(2 + o, 2 + o);
      J.row(0) = (B.transpose() * pt.fsec).transpose();
      J.row(1).setZero();
      for (Eigen::Index j = 0; j < f; ++j) {
        J.row(1) -= sgn[j] * dgrad.row(face[j]);
      }
      for (Eigen::Index j = 0; j < o; ++j) J.row(2 + j) = dgrad.row(off[j]);

      Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
      const Eigen::VectorXd du = lu.solve(-R);
      if (!du.allFinite()) return false;

      const Eigen::VectorXd dnu = B * du;
      double t = std::min(1.0, 0.995 * nu_step_cap(model, pt.nu, dnu));
      // Keep M positive and off-face magnitudes below M.
      if (du[1] < 0.0) t = std::min(t, -0.9 * M / du[1]);
      if (!(t > 0.0)) return false;

      const double r0 = R.norm();
      bool stepped = false;
      for (int h = 0; h < 30; ++h) {
        const double l0c = lambda0 + t * du[0];
        const double Mc = M + t * du[1];
        Eigen::VectorXd muc = mu;
        for (Eigen::Index j = 0; j < f; ++j) muc[face[j]] = sgn[j] * Mc;
        for (Eigen::Index j = 0; j < o; ++j) muc[off[j]] += t * du[2 + j];
        const RawPoint pc = raw_eval(model, l0c, muc);
        if (pc.ok && Mc > 0.0) {
          const Eigen::VectorXd gc = model.Z.transpose() * pc.w;
          Eigen::VectorXd Rc(2 + o);
          Rc[0] = pc.w.sum() - nd;
          Rc[1] = -nd;
          for (Eigen::Index j = 0; j < f; ++j) Rc[1] -= sgn[j] * gc[face[j]];
          for (Eigen::Index j = 0; j < o; ++j) Rc[2 + j] = gc[off[j]];
          if (Rc.norm() <= (1.0 - 1e-4 * t) * r0) {
            lambda0 = l0c;
            M = Mc;
            mu = muc;
            stepped = true;
            break;
          }
        }
        t *= 0.5;
      }
      if (!stepped) break;
    }

    // Structure update: simplex weights must stay nonnegative and off-face
    // magnitudes below M.
    const RawPoint pt = raw_eval(model, lambda0, mu);
    if (!pt.ok) return false;
    const Eigen::VectorXd grad = model.Z.transpose() * pt.w;
    double theta_min = std::numeric_limits<double>::infinity();
    Eigen::Index leaver = -1;
    for (Eigen::Index j = 0; j < f; ++j) {
      const double theta = -sgn[j] * grad[face[j]] / nd;
      if (theta < theta_min) {
        theta_min = theta;
        leaver = j;
      }
    }
    if (f > 1 && theta_min < -1e-9) {
      mu[face[leaver]] = sgn[leaver] * M * (1.0 - 1e-7);
      continue;
    }
    bool joined = false;
    for (Eigen::Index j = 0; j < o; ++j) {
      if (std::abs(mu[off[j]]) >= M * (1.0 - 1e-12)) {
        mu[off[j]] = (mu[off[j]] > 0.0 ? 1.0 : -1.0) * M;
        joined = true;
      }
    }
    if (joined) continue;
    return true;
  }
  return true;
}

bool polish(const SmoothModel& model, NormOrder pen, double kkt_tol,
            double& lambda0, Eigen::VectorXd& mu) {
  switch (pen) {
    case NormOrder::L1: return polish_l1(model, kkt_tol, lambda0, mu);
    case NormOrder::L2: return polish_l2(model, kkt_tol, lambda0, mu);
    case NormOrder::LInf: return polish_linf(model, kkt_tol, lambda0, mu);
  }
  return false;
}

}  // namespace

NormOrder holder_conjugate(NormOrder q) {
  switch (q) {
    case NormOrder::L1: return NormOrder::LInf;
    case NormOrder::L2: return NormOrder::L2;
    case NormOrder::LInf: return NormOrder::L1;
  }
  return NormOrder::L2;
}

std::string norm_order_name(NormOrder q) {
  switch (q) {
    case NormOrder::L1: return "1";
    case NormOrder::L2: return "2";
    case NormOrder::LInf: return "inf";
  }
  return "?";
}

void SoftProblem::validate(const Generator& gen) const {
  if (Xt.rows() == 0) throw InvalidArgument("soft problem: no respondents");
  if (w0.size() != Xt.rows()) {
    throw InvalidArgument("soft problem: w0 length != rows of Xt");
  }
  if (tau.size() != Xt.cols()) {
    throw InvalidArgument("soft problem: tau length != cols of Xt");
  }
  for (Eigen::Index k = 0; k < tau.size(); ++k) {
    if (!(tau[k] > 0.0)) {
      throw InvalidArgument("soft problem: tolerances must be positive");
    }
  }
  for (Eigen::Index i = 0; i < w0.size(); ++i) gen.check_weight(w0[i], i);
}

double soft_dual_value(const Generator& gen, const SoftProblem& prob,
                       double lambda0, const Eigen::VectorXd& lambda) {
  prob.validate(gen);
  if (lambda.size() != prob.p()) {
    throw InvalidArgument("soft_dual_value: lambda length != p");
  }
  double constant = 0.0;
  Eigen::VectorXd nu = prob.Xt * lambda;
  for (Eigen::Index i = 0; i < prob.n(); ++i) {
    const double w0 = prob.w0[i];
    const double gw = gen.g(w0);
    constant += gen.G(w0) - gw * w0;
    nu[i] += gw + lambda0;
    gen.check_dual(nu[i], i);
  }
  double smooth = -static_cast<double>(prob.n()) * lambda0 + constant;
  for (Eigen::Index i = 0; i < prob.n(); ++i) smooth += gen.F(nu[i]);

  const NormOrder pen = holder_conjugate(prob.q);
  Eigen::VectorXd scaled(prob.p());
  for (Eigen::Index k = 0; k < prob.p(); ++k) {
    if (std::isinf(prob.tau[k])) {
      if (lambda[k] != 0.0) return kInf;
      scaled[k] = 0.0;
    } else {
      scaled[k] = prob.tau[k] * lambda[k];
    }
  }
  double pnorm = 0.0;
  switch (pen) {
    case NormOrder::L1: pnorm = scaled.lpNorm<1>(); break;
    case NormOrder::L2: pnorm = scaled.norm(); break;
    case NormOrder::LInf: pnorm = scaled.lpNorm<Eigen::Infinity>(); break;
  }
  return smooth + static_cast<double>(prob.n()) * pnorm;
}

SoftResult solve_soft(const Generator& gen, const SoftProblem& prob,
                      const SoftOptions& opts) {
  prob.validate(gen);
  const Eigen::Index n = prob.n();
  const Eigen::Index p = prob.p();
  const NormOrder pen = holder_conjugate(prob.q);

  // Coordinates with infinite tolerance are excluded from the optimization.
  std::vector<Eigen::Index> active_cols;
  for (Eigen::Index k = 0; k < p; ++k) {
    if (std::isfinite(prob.tau[k])) active_cols.push_back(k);
  }
  const Eigen::Index m = static_cast<Eigen::Index>(active_cols.size());

  SmoothModel model{gen,
                    Eigen::MatrixXd(n, m),
                    Eigen::VectorXd(n),
                    0.0,
                    static_cast<double>(n),
                    opts.domain_margin,
                    opts.intercept_tol};
  for (Eigen::Index j = 0; j < m; ++j) {
    model.Z.col(j) = prob.Xt.col(active_cols[j]) / prob.tau[active_cols[j]];
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w0 = prob.w0[i];
    model.base[i] = gen.g(w0);
    model.constant += gen.G(w0) - model.base[i] * w0;
  }

  Eigen::VectorXd mu = Eigen::VectorXd::Zero(m);
  SmoothModel::Eval ev = model.profile(mu, 0.0);
  if (!ev.feasible) {
    throw InfeasibleError(
        "soft calibration: the intercept constraint sum(w) = n is "
        "unattainable inside the " +
            gen.name() + " domain",
        static_cast<double>(n));
  }

  Eigen::VectorXd tau_active(m);
  for (Eigen::Index j = 0; j < m; ++j) tau_active[j] = prob.tau[active_cols[j]];

  SoftResult res;
  res.lambda = Eigen::VectorXd::Zero(p);

  auto finish = [&](const SmoothModel::Eval& e, const Eigen::VectorXd& mu_f,
                    double gap, int iters, bool conv) {
    res.weights = e.w;
    res.lambda0 = e.lambda0;
    res.lambda.setZero();
    res.active_set.clear();
    for (Eigen::Index j = 0; j < m; ++j) {
      const Eigen::Index k = active_cols[j];
      res.lambda[k] = mu_f[j] / prob.tau[k];
      if (res.lambda[k] != 0.0) res.active_set.push_back(k);
    }
    res.kkt_gap = gap;
    res.iterations = iters;
    res.converged = conv;
  };

  if (m == 0) {
    finish(ev, mu, 0.0, 0, true);
    return res;
  }

  const double nd = static_cast<double>(n);
  Eigen::VectorXd grad = model.grad(ev);
  double gap = kkt_gap_abs(-grad / nd, mu, tau_active, pen);
  if (gap <= opts.kkt_tol) {
    finish(ev, mu, gap, 0, true);
    return res;
  }

  // Initial Lipschitz guess: largest diagonal entry of the Hessian.
  Eigen::VectorXd fsec(n);
  for (Eigen::Index i = 0; i < n; ++i) fsec[i] = gen.Fsecond(ev.nu[i]);
  double L = 1e-8;
  for (Eigen::Index j = 0; j < m; ++j) {
    L = std::max(L, model.Z.col(j).array().square().matrix().dot(fsec));
  }

  Eigen::VectorXd x_prev = mu, v = mu;
  SmoothModel::Eval ev_x = ev;
  double t = 1.0;

  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    Eigen::VectorXd y = v;
    SmoothModel::Eval ev_y = model.profile(y, ev_x.lambda0);
    if (!ev_y.feasible) {  // momentum overshot a domain wall
      y = x_prev;
      ev_y = ev_x;
      t = 1.0;
    }
    const Eigen::VectorXd g_y = model.grad(ev_y);

    Eigen::VectorXd x;
    SmoothModel::Eval ev_cand;
    bool stepped = false;
    for (int bt = 0; bt < 120; ++bt) {
      const double step = 1.0 / L;
      x = prox_penalty(y - step * g_y, nd * step, pen);
      ev_cand = model.profile(x, ev_y.lambda0);
      if (ev_cand.feasible) {
        const Eigen::VectorXd d = x - y;
        if (ev_cand.value <=
            ev_y.value + g_y.dot(d) + 0.5 * L * d.squaredNorm() + 1e-12) {
          stepped = true;
          break;
        }
      }
      L *= 2.0;
    }
    if (!stepped) {
      throw InfeasibleError(
          "soft calibration: proximal step stalled against the dual domain",
          grad.lpNorm<Eigen::Infinity>() / nd);
    }

    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    v = x + ((t - 1.0) / t_next) * (x - x_prev);
    // Gradient-based adaptive restart.
    if (g_y.dot(x - x_prev) > 0.0) {
      v = x;
      t = 1.0;
    } else {
      t = t_next;
    }
    x_prev = x;
    ev_x = ev_cand;
    L = std::max(L * 0.9, 1e-8);

    if (iter % 5 == 0 || iter == opts.max_iter) {
      grad = model.grad(ev_x);
      gap = kkt_gap_abs(-grad / nd, x_prev, tau_active, pen);
      if (gap <= opts.kkt_tol) {
        finish(ev_x, x_prev, gap, iter, true);
        return res;
      }
      // Newton polish on the identified structure: FISTA's sublinear tail
      // is too slow once adaptive tolerances spread the scaling.
      if (iter % 100 == 0 || gap <= 1e3 * opts.kkt_tol) {
        double l0 = ev_x.lambda0;
        Eigen::VectorXd mu_p = x_prev;
        if (polish(model, pen, opts.kkt_tol, l0, mu_p)) {
          const SmoothModel::Eval ev_p = model.profile(mu_p, l0);
          if (ev_p.feasible) {
            const Eigen::VectorXd g_p = model.grad(ev_p);
            const double gap_p = kkt_gap_abs(-g_p / nd, mu_p, tau_active, pen);
            if (gap_p <= opts.kkt_tol) {
              finish(ev_p, mu_p, gap_p, iter, true);
              return res;
            }
            if (gap_p < gap) {  // adopt the improvement, restart momentum
              x_prev = mu_p;
              ev_x = ev_p;
              v = x_prev;
              t = 1.0;
              gap = gap_p;
            }
          }
        }
      }
    }
  }

  std::ostringstream msg;
  msg << "soft calibration did not reach kkt_gap <= " << opts.kkt_tol
      << " in " << opts.max_iter << " iterations (gap = " << gap << ")";
  throw MaxIterationsError(msg.str(), gap);
}

Eigen::VectorXd adaptive_tau(const Eigen::VectorXd& beta_pilot,
                             double tau_global) {
  if (!(tau_global > 0.0)) {
    throw InvalidArgument("adaptive_tau: tau_global must be > 0");
  }
  Eigen::VectorXd tau(beta_pilot.size());
  for (Eigen::Index k = 0; k < beta_pilot.size(); ++k) {
    tau[k] = beta_pilot[k] == 0.0 ? kInf : tau_global / std::abs(beta_pilot[k]);
  }
  return tau;
}

namespace {

// One pass of cyclic coordinate descent over a decreasing lambda path.
// Columns of Xs are standardized to mean 0, mean-square 1; yc is centered.
Eigen::MatrixXd lasso_path(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& yc,
                           const std::vector<double>& lambdas) {
  const Eigen::Index n = Xs.rows(), p = Xs.cols();
  const double nd = static_cast<double>(n);
  Eigen::MatrixXd betas(p, static_cast<Eigen::Index>(lambdas.size()));
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd r = yc;
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    const double lam = lambdas[l];
    for (int sweep = 0; sweep < 1000; ++sweep) {
      double max_delta = 0.0;
      for (Eigen::Index k = 0; k < p; ++k) {
        const double old = beta[k];
        const double z = old + Xs.col(k).dot(r) / nd;
        const double nb = soft_threshold(z, lam);
        if (nb != old) {
          r -= Xs.col(k) * (nb - old);
          beta[k] = nb;
          max_delta = std::max(max_delta, std::abs(nb - old));
        }
      }
      if (max_delta < 1e-7) break;
    }
    betas.col(static_cast<Eigen::Index>(l)) = beta;
  }
  return betas;
}

}  // namespace

Eigen::VectorXd pilot_coef(const Eigen::MatrixXd& X_resp,
                           const Eigen::VectorXd& y, PilotMethod method,
                           std::uint64_t seed) {
  const Eigen::Index n = X_resp.rows(), p = X_resp.cols();
  if (y.size() != n) throw InvalidArgument("pilot_coef: y length != rows");
  if (n <= 2) throw InvalidArgument("pilot_coef: need n > 2");

  if (method == PilotMethod::OLS) {
    if (p >= n) {
      throw SingularFitError(
          "pilot OLS needs n > p; use the LassoRefit pilot instead");
    }
    Eigen::MatrixXd A(n, p + 1);
    A.col(0).setOnes();
    A.rightCols(p) = X_resp;
    const Eigen::VectorXd sol = A.colPivHouseholderQr().solve(y);
    return sol.tail(p);
  }

  // LassoRefit: 5-fold CV lasso with the 1-SE rule, then OLS on the support.
  Eigen::VectorXd xm(p), xs(p);
  Eigen::MatrixXd Xs(n, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    xm[k] = X_resp.col(k).mean();
    const double var =
        (X_resp.col(k).array() - xm[k]).square().sum() / static_cast<double>(n);
    xs[k] = std::max(std::sqrt(var), 1e-12);
    Xs.col(k) = (X_resp.col(k).array() - xm[k]) / xs[k];
  }
  const double ym = y.mean();
  const Eigen::VectorXd yc = y.array() - ym;

  const double lam_max =
      (Xs.transpose() * yc).cwiseAbs().maxCoeff() / static_cast<double>(n);
  if (lam_max <= 0.0) return Eigen::VectorXd::Zero(p);
  const int n_lam = 100;
  std::vector<double> lambdas(n_lam);
  for (int l = 0; l < n_lam; ++l) {
    lambdas[l] = lam_max * std::pow(1e-3, l / (n_lam - 1.0));
  }

  const int K = 5;
  Rng rng(mix_seed(seed, 0x6c61736fULL));  // "laso"
  std::vector<int> fold(n);
  for (auto& f : fold) f = rng.uniform_int(K);

  Eigen::MatrixXd mse(K, n_lam);
  for (int k = 0; k < K; ++k) {
    std::vector<Eigen::Index> tr, te;
    for (Eigen::Index i = 0; i < n; ++i) (fold[i] == k ? te : tr).push_back(i);
    if (tr.empty() || te.empty()) {
      mse.row(k).setZero();
      continue;
    }
    const Eigen::MatrixXd B = lasso_path(Xs(tr, Eigen::all), yc(tr), lambdas);
    for (int l = 0; l < n_lam; ++l) {
      const Eigen::VectorXd pred = Xs(te, Eigen::all) * B.col(l);
      mse(k, l) = (yc(te) - pred).squaredNorm() / static_cast<double>(te.size());
    }
  }
  Eigen::VectorXd cvm = mse.colwise().mean();
  Eigen::VectorXd cvse(n_lam);
  for (int l = 0; l < n_lam; ++l) {
    cvse[l] = std::sqrt((mse.col(l).array() - cvm[l]).square().sum() /
                        (K * (K - 1.0)));
  }
  Eigen::Index best;
  cvm.minCoeff(&best);
  const double thresh = cvm[best] + cvse[best];
  Eigen::Index pick = best;
  for (Eigen::Index l = 0; l <= best; ++l) {
    if (cvm[l] <= thresh) {
      pick = l;  // largest lambda within one SE of the minimum
      break;
    }
  }

  const Eigen::MatrixXd B = lasso_path(Xs, yc, lambdas);
  std::vector<Eigen::Index> support;
  for (Eigen::Index k = 0; k < p; ++k) {
    if (B(k, pick) != 0.0) support.push_back(k);
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p);
  if (support.empty()) return out;

  Eigen::MatrixXd A(n, static_cast<Eigen::Index>(support.size()) + 1);
  A.col(0).setOnes();
  for (std::size_t sidx = 0; sidx < support.size(); ++sidx) {
    A.col(static_cast<Eigen::Index>(sidx) + 1) = X_resp.col(support[sidx]);
  }
  const Eigen::VectorXd sol = A.colPivHouseholderQr().solve(y);
  for (std::size_t sidx = 0; sidx < support.size(); ++sidx) {
    out[support[sidx]] = sol[static_cast<Eigen::Index>(sidx) + 1];
  }
  return out;
}

CvTauResult cv_select_tau(const Generator& gen,
                          const SoftProblemBuilder& builder,
                          const Eigen::VectorXd& y,
                          const std::vector<double>& grid, int K_cv,
                          std::uint64_t seed) {
  if (grid.empty()) throw InvalidArgument("cv_select_tau: empty grid");
  if (K_cv < 2) throw InvalidArgument("cv_select_tau: K_cv must be >= 2");
  const Eigen::Index n = y.size();

  std::vector<Eigen::Index> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), 0);

  Rng rng(mix_seed(seed, 0x63767461ULL));  // "cvta"
  std::vector<int> fold(n);
  for (auto& f : fold) f = rng.uniform_int(K_cv);

  CvTauResult out;
  double best = kInf;
  bool any = false;
  for (const double tau : grid) {
    CvCurvePoint pt;
    pt.tau = tau;
    try {
      const SoftProblem prob = builder(tau, all_rows);
      if (prob.n() != n) {
        throw InvalidArgument("builder returned a problem of the wrong size");
      }
      if (prob.n_pop <= 0) {
        throw InvalidArgument("builder must set n_pop for the CV criterion");
      }
      const SoftResult fit = solve_soft(gen, prob);
      const double mu_all =
          fit.weights.dot(y) / static_cast<double>(n);

      Eigen::MatrixXd Xv(n, prob.p() + 1);
      Xv.col(0).setOnes();
      Xv.rightCols(prob.p()) = prob.Xt;
      const WeightedRegCoef beta =
          weighted_reg_coef(Xv, y, curvature_weights(gen, fit.weights));
      const double rate =
          static_cast<double>(n) / static_cast<double>(prob.n_pop);
      const Eigen::VectorXd pi_hat = (prob.w0 / rate).cwiseInverse();
      const double vso =
          var_sample_only(Xv, y, pi_hat, beta, mu_all, prob.n_pop).value;

      double sq = 0.0;
      for (int k = 0; k < K_cv; ++k) {
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (fold[i] != k) keep.push_back(i);
        }
        if (keep.empty()) continue;
        const SoftProblem sub = builder(tau, keep);
        const SoftResult fit_k = solve_soft(gen, sub);
        const double mu_k =
            fit_k.weights.dot(y(keep)) / static_cast<double>(keep.size());
        sq += (mu_k - mu_all) * (mu_k - mu_all);
      }
      pt.criterion = sq * (K_cv - 1.0) / K_cv + vso;
      pt.feasible = true;
      if (pt.criterion < best) {
        best = pt.criterion;
        out.tau_selected = tau;
      }
      any = true;
    } catch (const Error& e) {
      pt.criterion = std::numeric_limits<double>::quiet_NaN();
      pt.feasible = false;
      pt.message = e.what();
    }
    out.curve.push_back(std::move(pt));
  }
  if (!any) {
    std::ostringstream msg;
    msg << "cv_select_tau: every grid value failed:";
    for (const auto& pt : out.curve) {
      msg << "\n  tau=" << pt.tau << ": " << pt.message;
    }
    throw InvalidArgument(msg.str());
  }
  return out;
}

std::vector<double> default_tau_grid() {
  std::vector<double> grid(20);
  for (int i = 0; i < 20; ++i) {
    grid[i] = std::pow(10.0, -5.0 + 4.0 * i / 19.0);
  }
  return grid;
}

PopulationStandardizer PopulationStandardizer::fit(
    const Eigen::MatrixXd& pop_X) {
  const Eigen::Index N = pop_X.rows(), p = pop_X.cols();
  if (N == 0) throw InvalidArgument("standardizer: empty population");
  PopulationStandardizer s;
  s.mean = pop_X.colwise().mean();
  s.sd.resize(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double var =
        (pop_X.col(k).array() - s.mean[k]).square().sum() / static_cast<double>(N);
    if (var < 1e-24) {
      throw InvalidArgument("standardizer: column " + std::to_string(k) +
                            " is constant over the population");
    }
    s.sd[k] = std::sqrt(var);
  }
  // Verify the moments actually standardize to 1e-8.
  const Eigen::MatrixXd Zc = s.apply(pop_X);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double m = Zc.col(k).mean();
    const double v = Zc.col(k).squaredNorm() / static_cast<double>(N);
    if (std::abs(m) > 1e-8 || std::abs(v - 1.0) > 1e-8) {
      throw InvalidArgument(
          "standardizer: population moments failed verification");
    }
  }
  return s;
}

Eigen::MatrixXd PopulationStandardizer::apply(const Eigen::MatrixXd& X) const {
  if (X.cols() != mean.size()) {
    throw InvalidArgument("standardizer: column mismatch");
  }
  return (X.rowwise() - mean.transpose()).array().rowwise() /
         sd.transpose().array();
}

}  // namespace bregcal
