#ifndef UPN_OPTIM_HPP
#define UPN_OPTIM_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "upn/common.hpp"

// Inner solver for small smooth concave maximization over a convex polytope
// with open-domain poles (logs, 1/(E-e) barriers) inside the objective.
//
// Two algorithm paths behind one contract:
//  - box-projected gradient with Barzilai-Borwein steps, linear inequality
//    rows kept strictly feasible by a fixed tiny log-barrier (problems
//    without equality rows; used by the per-user subproblems and the SOP);
//  - log-barrier Newton for problems with equality rows (the bargaining
//    oracle and feasibility projections). The negated objective Hessians
//    here are diag + sum_k w_k b_k b_k', so Newton systems are solved
//    exactly through the Woodbury identity plus a small equality Schur
//    complement.
// The contract is only the KKT-residual guarantee, not the path taken.

namespace upn::optim {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Sparse linear row: terms . v (<=|==) rhs.
struct LinRow {
  std::vector<std::pair<int, Real>> terms;
  Real rhs = 0.0;

  Real dot(const Vec& v) const {
    Real s = 0.0;
    for (auto& [j, c] : terms) s += c * v[j];
    return s;
  }
};

using SparseTerms = std::vector<std::pair<int, Real>>;

/// One rank-one curvature factor of the negated objective Hessian:
/// -H_f += weight * vec vec'.
struct CurvatureFactor {
  Real weight = 0.0;
  const SparseTerms* vec = nullptr;
};

/// Concave objective with optional curvature access for the Newton path.
///
/// eval() must be callable only at guard-interior points; maximize() takes
/// care of that. curvature() refers to the most recent eval() point.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual Real eval(const Vec& v, Vec* grad) = 0;
  /// Margin to the nearest pole/log boundary; must stay > 0. Cheap.
  virtual Real guard_margin(const Vec& /*v*/) const { return 1.0; }
  virtual bool has_hessian() const { return false; }
  /// -H_f = diag_shift*I + sum_k w_k b_k b_k' at the last eval point.
  virtual void curvature(std::vector<CurvatureFactor>& /*out*/, Real& diag_shift) const {
    diag_shift = 0.0;
  }
};

struct ConcaveProblem {
  int n = 0;
  Objective* objective = nullptr;
  Vec lower, upper;           // box bounds; +-inf allowed on the PG path only
  std::vector<LinRow> ineq;   // a.v <= b, kept strictly feasible
  std::vector<LinRow> eq;     // a.v == b
};

struct SolveResult {
  Vec x;
  Real value = -kInf;
  Real kkt_residual = kInf;
  bool converged = false;
  int iterations = 0;
  // Multiplier estimates (Newton path): one per ineq row / eq row; box
  // multipliers folded into kkt_residual.
  std::vector<Real> ineq_mult, eq_mult;
  Real complementarity = 0.0;  // max |mult * slack| over rows and boxes
};

namespace detail {

constexpr Real kRowBarrierWeight = 1e-7;  // PG path; O(1e-7) value bias, documented
constexpr Real kGuardFloor = 1e-9;        // epsilon_dom

inline void clamp(const ConcaveProblem& p, Vec& v) {
  for (int j = 0; j < p.n; ++j) v[j] = std::min(std::max(v[j], p.lower[j]), p.upper[j]);
}

// ----------------------------- PG path ------------------------------------

struct PgEval {
  Real value = -kInf;     // barrier-augmented
  Real raw = -kInf;       // objective alone
  bool feasible = false;  // rows strictly satisfied and guard clear
};

inline PgEval pg_eval(const ConcaveProblem& p, const Vec& v, Vec* grad) {
  PgEval out;
  if (p.objective->guard_margin(v) <= kGuardFloor) return out;
  for (auto& row : p.ineq)
    if (row.rhs - row.dot(v) <= 0.0) return out;
  out.raw = p.objective->eval(v, grad);
  out.value = out.raw;
  for (auto& row : p.ineq) {
    Real s = row.rhs - row.dot(v);
    out.value += kRowBarrierWeight * std::log(s);
    if (grad)
      for (auto& [j, c] : row.terms) (*grad)[j] -= kRowBarrierWeight * c / s;
  }
  out.feasible = true;
  return out;
}

inline SolveResult maximize_pg(const ConcaveProblem& p, const Vec& x0, Real tol, int max_iters) {
  SolveResult res;
  Vec v = x0;
  clamp(p, v);
  Vec g(p.n), cand(p.n), gc(p.n);
  PgEval cur = pg_eval(p, v, &g);
  if (!cur.feasible) throw DomainError("maximize: start point violates guard or rows");
  Real step = 1.0;
  int it = 0;
  for (; it < max_iters; ++it) {
    // KKT measure: box-projected gradient displacement at unit step.
    Real kkt = 0.0;
    for (int j = 0; j < p.n; ++j) {
      Real t = std::min(std::max(v[j] + g[j], p.lower[j]), p.upper[j]) - v[j];
      kkt = std::max(kkt, std::abs(t));
    }
    res.kkt_residual = kkt;
    if (kkt <= tol) {
      res.converged = true;
      break;
    }
    Real trial = step;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      cand = v + trial * g;
      clamp(p, cand);
      Vec d = cand - v;
      Real gd = g.dot(d);
      if (gd <= 0.0 || d.lpNorm<Eigen::Infinity>() == 0.0) break;
      PgEval ce = pg_eval(p, cand, &gc);
      if (ce.feasible && ce.value >= cur.value + 1e-4 * gd) {
        // BB step from the accepted move, safeguarded.
        Vec dg = gc - g;
        Real denom = dg.squaredNorm();
        step = denom > 1e-300 ? std::abs(d.dot(dg)) / denom : trial * 2.0;
        step = std::min(std::max(step, 1e-12), 1e12);
        v = cand;
        g = gc;
        cur = ce;
        accepted = true;
        break;
      }
      trial *= 0.5;
    }
    if (!accepted) {
      // No admissible ascent step at this scale; declare stationarity at the
      // achievable resolution.
      res.kkt_residual = std::min(res.kkt_residual, trial);
      res.converged = res.kkt_residual <= tol * 10;
      break;
    }
  }
  res.x = v;
  res.value = cur.raw;
  res.iterations = it;
  return res;
}

// --------------------------- Newton path ----------------------------------

// phi_t = -(t f(v) + sum ln(row slack) + sum ln(box slacks)); guard poles live
// inside f itself.
struct BarrierEval {
  Real phi = kInf;
  Real f_raw = -kInf;
  bool ok = false;
};

inline Real min_slack(const ConcaveProblem& p, const Vec& v) {
  Real s = p.objective->guard_margin(v);
  for (auto& row : p.ineq) s = std::min(s, row.rhs - row.dot(v));
  for (int j = 0; j < p.n; ++j) {
    if (std::isfinite(p.lower[j])) s = std::min(s, v[j] - p.lower[j]);
    if (std::isfinite(p.upper[j])) s = std::min(s, p.upper[j] - v[j]);
  }
  return s;
}

inline BarrierEval barrier_eval(const ConcaveProblem& p, Real t, const Vec& v, Vec* g) {
  BarrierEval out;
  if (min_slack(p, v) <= kGuardFloor) return out;
  Vec fg;
  if (g) fg.resize(p.n);
  Real f = p.objective->eval(v, g ? &fg : nullptr);
  Real phi = -t * f;
  if (g) *g = -t * fg;
  for (auto& row : p.ineq) {
    Real s = row.rhs - row.dot(v);
    phi -= std::log(s);
    if (g)
      for (auto& [j, c] : row.terms) (*g)[j] += c / s;
  }
  for (int j = 0; j < p.n; ++j) {
    if (std::isfinite(p.lower[j])) {
      Real s = v[j] - p.lower[j];
      phi -= std::log(s);
      if (g) (*g)[j] -= 1.0 / s;
    }
    if (std::isfinite(p.upper[j])) {
      Real s = p.upper[j] - v[j];
      phi -= std::log(s);
      if (g) (*g)[j] += 1.0 / s;
    }
  }
  out.phi = phi;
  out.f_raw = f;
  out.ok = true;
  return out;
}

inline Real max_step_to_boundary(const ConcaveProblem& p, const Vec& v, const Vec& dv) {
  Real amax = 1.0;
  const Real frac = 0.995;
  for (int j = 0; j < p.n; ++j) {
    if (dv[j] < 0.0 && std::isfinite(p.lower[j]))
      amax = std::min(amax, frac * (p.lower[j] - v[j]) / dv[j]);
    if (dv[j] > 0.0 && std::isfinite(p.upper[j]))
      amax = std::min(amax, frac * (p.upper[j] - v[j]) / dv[j]);
  }
  for (auto& row : p.ineq) {
    Real adv = 0.0;
    for (auto& [j, c] : row.terms) adv += c * dv[j];
    if (adv > 0.0) amax = std::min(amax, frac * (row.rhs - row.dot(v)) / adv);
  }
  return std::max(amax, 0.0);
}

// Woodbury solver for H = D + B W B' (all positive), supporting solves with
// multiple right-hand sides, where the factor columns gather the objective's
// rank-one curvature terms and the inequality-row barrier terms.
class HessianSolver {
 public:
  void factor(const ConcaveProblem& p, Real t, const Vec& v) {
    const int n = p.n;
    std::vector<CurvatureFactor> facs;
    Real dshift = 0.0;
    p.objective->curvature(facs, dshift);
    D_ = Vec::Constant(n, std::max(t * dshift, 0.0));
    for (int j = 0; j < n; ++j) {
      if (std::isfinite(p.lower[j])) {
        Real s = v[j] - p.lower[j];
        D_[j] += 1.0 / (s * s);
      }
      if (std::isfinite(p.upper[j])) {
        Real s = p.upper[j] - v[j];
        D_[j] += 1.0 / (s * s);
      }
      D_[j] = std::max(D_[j], 1e-10);
    }
    cols_.clear();
    weights_.clear();
    for (auto& fc : facs) {
      if (fc.weight <= 0.0 || fc.vec == nullptr || fc.vec->empty()) continue;
      cols_.push_back(fc.vec);
      weights_.push_back(t * fc.weight);
    }
    own_rows_.clear();
    for (auto& row : p.ineq) {
      Real s = row.rhs - row.dot(v);
      own_rows_.push_back(&row.terms);
      cols_.push_back(&row.terms);
      weights_.push_back(1.0 / (s * s));
    }
    const int k = static_cast<int>(cols_.size());
    if (k == 0) {
      core_ok_ = false;
      return;
    }
    // M = W^-1 + B' D^-1 B, built column-sparse.
    Mat M = Mat::Zero(k, k);
    Bd_.assign(k, Vec::Zero(n));
    for (int c = 0; c < k; ++c) {
      for (auto& [j, cf] : *cols_[c]) Bd_[c][j] = cf / D_[j];
      M(c, c) = 1.0 / weights_[c];
    }
    for (int a = 0; a < k; ++a)
      for (int b = a; b < k; ++b) {
        Real s = 0.0;
        // dot of sparse col b with dense Bd_[a]
        for (auto& [j, cf] : *cols_[b]) s += cf * Bd_[a][j];
        M(a, b) += s;
        if (a != b) M(b, a) = M(a, b);
      }
    core_.compute(M);
    core_ok_ = true;
  }

  Vec solve(const Vec& rhs) const {
    Vec y = (rhs.array() / D_.array()).matrix();
    if (!core_ok_) return y;
    const int k = static_cast<int>(cols_.size());
    Vec bty(k);
    for (int c = 0; c < k; ++c) {
      Real s = 0.0;
      for (auto& [j, cf] : *cols_[c]) s += cf * y[j];
      bty[c] = s;
    }
    Vec m = core_.solve(bty);
    for (int c = 0; c < k; ++c) y -= m[c] * Bd_[c];
    return y;
  }

 private:
  Vec D_;
  std::vector<const SparseTerms*> cols_, own_rows_;
  std::vector<Real> weights_;
  std::vector<Vec> Bd_;  // D^-1 B columns, dense
  Eigen::LDLT<Mat> core_;
  bool core_ok_ = false;
};

inline SolveResult maximize_newton(const ConcaveProblem& p, const Vec& x0, Real tol,
                                   int max_iters) {
  SolveResult res;
  const int n = p.n;
  const int m_eq = static_cast<int>(p.eq.size());
  Mat A = Mat::Zero(m_eq, n);
  Vec b(m_eq);
  for (int k = 0; k < m_eq; ++k) {
    for (auto& [j, c] : p.eq[k].terms) A(k, j) = c;
    b[k] = p.eq[k].rhs;
  }
  Vec v = x0;
  if (min_slack(p, v) <= kGuardFloor)
    throw DomainError("maximize: start point violates guard, rows or boxes");

  const int m_barrier = static_cast<int>(p.ineq.size()) +
                        static_cast<int>((p.lower.array() > -kInf).count()) +
                        static_cast<int>((p.upper.array() < kInf).count());
  Real t = 1000.0;
  const Real t_final = std::max({1e9, static_cast<Real>(m_barrier) * 1e6});
  HessianSolver hs;
  Vec g(n), dv(n), w_eq;
  int newton_total = 0;
  bool stage_done = false;
  while (true) {
    for (int it = 0; it < 80 && newton_total < max_iters; ++it, ++newton_total) {
      BarrierEval be = barrier_eval(p, t, v, &g);
      if (!be.ok) throw DomainError("maximize: iterate left the domain");
      hs.factor(p, t, v);
      Vec r_p = m_eq > 0 ? Vec(b - A * v) : Vec();
      Vec hinv_g = hs.solve(g);
      if (m_eq > 0) {
        // Schur solve for the equality multipliers:
        // (A H^-1 A') w = -(r_p + A H^-1 g); dv = -H^-1 (g + A' w).
        Mat HiAt(n, m_eq);
        for (int k = 0; k < m_eq; ++k) HiAt.col(k) = hs.solve(A.row(k).transpose());
        Mat S = A * HiAt;
        S.diagonal().array() += 1e-14;
        w_eq = S.ldlt().solve(-(r_p + A * hinv_g));
        dv = -(hinv_g + HiAt * w_eq);
      } else {
        dv = -hinv_g;
      }
      Real decr2 = -g.dot(dv);  // Newton decrement^2 when eq-feasible
      Real eq_res = m_eq > 0 ? r_p.lpNorm<Eigen::Infinity>() : 0.0;
      if (decr2 <= 2e-13 * (std::abs(be.phi) + 1.0) && eq_res <= 1e-11) {
        stage_done = true;
        break;
      }
      // merit: phi + nu*|Av-b|_1 with nu dominating the equality multipliers
      Real nu = m_eq > 0 ? 2.0 * w_eq.lpNorm<Eigen::Infinity>() + 1.0 : 0.0;
      Real eq_l1 = m_eq > 0 ? (A * v - b).lpNorm<1>() : 0.0;
      Real merit0 = be.phi + nu * eq_l1;
      Real dir_deriv = g.dot(dv) - nu * eq_l1;  // eq part shrinks by (1-alpha)
      Real amax = max_step_to_boundary(p, v, dv);
      if (amax <= 1e-16) {
        stage_done = true;
        break;
      }
      Real alpha = amax;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        Vec cand = v + alpha * dv;
        BarrierEval ce = barrier_eval(p, t, cand, nullptr);
        if (ce.ok) {
          Real cand_eq = m_eq > 0 ? (A * cand - b).lpNorm<1>() : 0.0;
          Real merit_c = ce.phi + nu * cand_eq;
          if (merit_c <= merit0 + 1e-4 * alpha * dir_deriv + 1e-10 * (std::abs(merit0) + 1.0)) {
            v = cand;
            moved = true;
            break;
          }
        }
        alpha *= 0.5;
      }
      if (!moved) {
        stage_done = true;
        break;
      }
    }
    if (t >= t_final || newton_total >= max_iters) break;
    t = std::min(t * 30.0, t_final);
    (void)stage_done;
  }
  BarrierEval be = barrier_eval(p, t, v, &g);
  res.x = v;
  res.value = be.f_raw;
  res.iterations = newton_total;
  res.ineq_mult.resize(p.ineq.size());
  res.complementarity = p.ineq.empty() && m_barrier == 0 ? 0.0 : 1.0 / t;
  for (size_t k = 0; k < p.ineq.size(); ++k) {
    Real s = p.ineq[k].rhs - p.ineq[k].dot(v);
    res.ineq_mult[k] = 1.0 / (t * s);
  }
  if (m_eq > 0 && w_eq.size() == m_eq) {
    // grad phi + A'w = 0 at the stage optimum and phi = -t f + barriers,
    // so the f-scale equality multipliers are w/t.
    res.eq_mult.resize(m_eq);
    for (int k = 0; k < m_eq; ++k) res.eq_mult[k] = w_eq[k] / t;
  }
  Real eq_res = m_eq > 0 ? (A * v - b).lpNorm<Eigen::Infinity>() : 0.0;
  res.kkt_residual = eq_res;
  res.converged = eq_res <= 1e-8;
  return res;
}

}  // namespace detail

/// Maximize p over its polytope from a strictly feasible start. Returns the
/// best point found with its KKT residual; `converged` reports whether the
/// residual target was met before the iteration cap.
inline SolveResult maximize(const ConcaveProblem& p, const Vec& x0, Real tol_inner = 1e-8,
                            int max_iters = 10000) {
  if (p.n <= 0 || p.objective == nullptr) throw DomainError("maximize: empty problem");
  if (!p.eq.empty()) return detail::maximize_newton(p, x0, tol_inner, max_iters);
  return detail::maximize_pg(p, x0, tol_inner, max_iters);
}

}  // namespace upn::optim

#endif  // UPN_OPTIM_HPP
