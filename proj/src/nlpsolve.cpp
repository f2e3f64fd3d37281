#include "ocpreg/nlpsolve.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace ocpreg {

void SolverConfig::validate() const {
  if (!(tol_stationarity > 0.0) || !(tol_feasibility > 0.0))
    throw std::invalid_argument("solver tolerances must be positive");
  if (max_outer < 1 || max_inner < 1) throw std::invalid_argument("iteration limits must be >= 1");
  if (!(initial_penalty > 0.0)) throw std::invalid_argument("initial_penalty must be positive");
  if (!(penalty_growth > 1.0)) throw std::invalid_argument("penalty_growth must be > 1");
  if (memory < 1) throw std::invalid_argument("memory must be >= 1");
  if (!(armijo > 0.0 && armijo < 1.0)) throw std::invalid_argument("armijo must be in (0,1)");
  if (!(backtrack > 0.0 && backtrack < 1.0))
    throw std::invalid_argument("backtrack must be in (0,1)");
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kConverged:
      return "converged";
    case SolveStatus::kMaxIterations:
      return "max-iterations";
    case SolveStatus::kInnerFailure:
      return "inner-failure";
  }
  return "unknown";
}

namespace {

Eigen::VectorXd project(const Eigen::VectorXd& v, const Eigen::VectorXd& lo,
                        const Eigen::VectorXd& hi) {
  return v.cwiseMax(lo).cwiseMin(hi);
}

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

Eigen::VectorXd projected_gradient(const Eigen::VectorXd& v, const Eigen::VectorXd& g,
                                   const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return project(v - g, lo, hi) - v;
}

// The augmented Lagrangian of the slack-extended problem in v = (w, s):
//   Phi(v) = f(w) - lambda^T C(v) + rho/2 |C(v)|^2,  C = (c_eq(w), c_in(w) - s).
class AugmentedLagrangian {
 public:
  explicit AugmentedLagrangian(const SmoothNlp& nlp)
      : nlp_(nlp), n_(nlp.num_vars()), m_eq_(nlp.num_eq()), m_in_(nlp.num_ineq()) {
    lo_.resize(n_ + m_in_);
    hi_.resize(n_ + m_in_);
    lo_ << nlp.lower_bounds(), Eigen::VectorXd::Zero(m_in_);
    hi_ << nlp.upper_bounds(),
        Eigen::VectorXd::Constant(m_in_, std::numeric_limits<double>::infinity());
    if (lo_.head(n_).size() != n_ || hi_.head(n_).size() != n_)
      throw std::invalid_argument("bound vectors have wrong dimension");
  }

  Eigen::Index dim() const { return n_ + m_in_; }
  Eigen::Index num_constraints() const { return m_eq_ + m_in_; }
  const Eigen::VectorXd& lo() const { return lo_; }
  const Eigen::VectorXd& hi() const { return hi_; }
  Eigen::Index n() const { return n_; }

  Eigen::VectorXd constraints(const Eigen::VectorXd& v) const {
    Eigen::VectorXd c(m_eq_ + m_in_);
    const Eigen::VectorXd w = v.head(n_);
    if (m_eq_) c.head(m_eq_) = nlp_.eq_residuals(w);
    if (m_in_) c.tail(m_in_) = nlp_.ineq_residuals(w) - v.tail(m_in_);
    return c;
  }

  Eigen::MatrixXd constraint_jacobian(const Eigen::VectorXd& v) const {
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(m_eq_ + m_in_, dim());
    const Eigen::VectorXd w = v.head(n_);
    if (m_eq_) jac.topLeftCorner(m_eq_, n_) = nlp_.eq_jacobian(w);
    if (m_in_) {
      jac.bottomLeftCorner(m_in_, n_) = nlp_.ineq_jacobian(w);
      jac.bottomRightCorner(m_in_, m_in_).diagonal().setConstant(-1.0);
    }
    return jac;
  }

  // J_C^T y
  Eigen::VectorXd constraint_jacobian_transpose_times(const Eigen::VectorXd& v,
                                                      const Eigen::VectorXd& y) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim());
    const Eigen::VectorXd w = v.head(n_);
    if (m_eq_) out.head(n_) += nlp_.eq_jacobian(w).transpose() * y.head(m_eq_);
    if (m_in_) {
      out.head(n_) += nlp_.ineq_jacobian(w).transpose() * y.tail(m_in_);
      out.tail(m_in_) = -y.tail(m_in_);
    }
    return out;
  }

  Eigen::VectorXd lagrangian_gradient(const Eigen::VectorXd& v, const Eigen::VectorXd& lambda) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim());
    g.head(n_) = nlp_.objective_gradient(v.head(n_));
    return g - constraint_jacobian_transpose_times(v, lambda);
  }

  double value(const Eigen::VectorXd& v, const Eigen::VectorXd& lambda, double rho) const {
    const Eigen::VectorXd c = constraints(v);
    return nlp_.objective(v.head(n_)) - lambda.dot(c) + 0.5 * rho * c.squaredNorm();
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& v, const Eigen::VectorXd& lambda,
                           double rho) const {
    const Eigen::VectorXd c = constraints(v);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim());
    g.head(n_) = nlp_.objective_gradient(v.head(n_));
    return g + constraint_jacobian_transpose_times(v, rho * c - lambda);
  }

 private:
  const SmoothNlp& nlp_;
  Eigen::Index n_, m_eq_, m_in_;
  Eigen::VectorXd lo_, hi_;
};

struct InnerResult {
  int iterations = 0;
  bool failed = false;
  double projected_gradient = 0.0;
};

// Projected limited-memory BFGS on the box [lo, hi] with an epsilon-active
// set: variables at a bound whose gradient pushes outward are held fixed and
// the quasi-Newton direction is computed on the remaining ones. The two-loop
// recursion starts from the Gauss-Newton matrix sigma I + rho J^T J of the
// penalty term instead of a scaled identity.
class ProjectedLbfgs {
 public:
  ProjectedLbfgs(const AugmentedLagrangian& al, const SolverConfig& cfg) : al_(al), cfg_(cfg) {}

  InnerResult minimize(Eigen::VectorXd& v, const Eigen::VectorXd& lambda, double rho,
                       double tol) {
    s_.clear();
    y_.clear();
    rho_ = rho;
    const Eigen::VectorXd& lo = al_.lo();
    const Eigen::VectorXd& hi = al_.hi();
    InnerResult res;
    double f = al_.value(v, lambda, rho);
    Eigen::VectorXd g = al_.gradient(v, lambda, rho);
    if (!std::isfinite(f) || !g.allFinite())
      throw std::runtime_error("non-finite objective or gradient");

    for (;;) {
      const Eigen::VectorXd pg = projected_gradient(v, g, lo, hi);
      res.projected_gradient = inf_norm(pg);
      if (res.projected_gradient <= tol) return res;
      if (res.iterations >= cfg_.max_inner) return res;

      const double eps = std::min(res.projected_gradient, 1e-3);
      Eigen::VectorXd free = Eigen::VectorXd::Ones(v.size());
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        const bool at_lo = v[i] <= lo[i] + eps && g[i] > 0.0;
        const bool at_hi = v[i] >= hi[i] - eps && g[i] < 0.0;
        if (at_lo || at_hi) free[i] = 0.0;
      }
      precondition(v, free);

      bool accepted = false;
      for (int attempt = 0; attempt < 3 && !accepted; ++attempt) {
        Eigen::VectorXd d;
        if (attempt < 2) {
          if (attempt == 1) {
            s_.clear();
            y_.clear();
          }
          d = -two_loop(g.cwiseProduct(free), free);
          // held variables move onto their bound
          d += pg.cwiseProduct(Eigen::VectorXd::Ones(v.size()) - free);
          if (!d.allFinite() || !(g.dot(d) < 0.0)) continue;
        } else {
          s_.clear();
          y_.clear();
          d = -g.cwiseProduct(free);
          const double dn = inf_norm(d);
          if (dn > 1.0) d /= dn;
          d += pg.cwiseProduct(Eigen::VectorXd::Ones(v.size()) - free);
          // freshly released variables at a bound may still produce a zero step
          if (inf_norm(d) == 0.0) d = pg;
        }

        double alpha = 1.0;
        for (int bt = 0; bt <= cfg_.max_backtracks; ++bt) {
          Eigen::VectorXd v_new = project(v + alpha * d, lo, hi);
          const double f_new = al_.value(v_new, lambda, rho);
          const double decrease = g.dot(v_new - v);
          if (!std::isfinite(f_new) || !(decrease < 0.0)) {
            alpha *= cfg_.backtrack;
            continue;
          }
          bool ok = f_new <= f + cfg_.armijo * decrease;
          Eigen::VectorXd g_new;
          if (!ok && f_new <= f + 1e-12 * std::abs(f)) {
            // approximate Armijo (Hager-Zhang) once f differences drown in rounding
            g_new = al_.gradient(v_new, lambda, rho);
            ok = g_new.dot(v_new - v) <= (2.0 * cfg_.armijo - 1.0) * decrease;
          }
          if (ok) {
            if (g_new.size() == 0) g_new = al_.gradient(v_new, lambda, rho);
            if (!g_new.allFinite()) throw std::runtime_error("non-finite gradient");
            remember(v_new - v, g_new - g);
            v = std::move(v_new);
            f = f_new;
            g = g_new;
            accepted = true;
            break;
          }
          alpha *= cfg_.backtrack;
        }
      }
      ++res.iterations;
      if (!accepted) {
        res.failed = true;
        res.projected_gradient = inf_norm(projected_gradient(v, g, lo, hi));
        return res;
      }
    }
  }

 private:
  void remember(const Eigen::VectorXd& s, const Eigen::VectorXd& y) {
    const double sy = s.dot(y);
    if (!(sy > 1e-12 * s.norm() * y.norm()) || sy <= 0.0) return;
    // curvature not explained by the penalty term sets the identity shift
    const double ss = s.squaredNorm();
    const double rest = (sy - rho_ * (jac_ * s).squaredNorm()) / ss;
    if (rest > 0.0 && std::isfinite(rest)) sigma_ = std::clamp(rest, 1e-8, 1e8);
    s_.push_back(s);
    y_.push_back(y);
    if (static_cast<int>(s_.size()) > cfg_.memory) {
      s_.pop_front();
      y_.pop_front();
    }
  }

  void precondition(const Eigen::VectorXd& v, const Eigen::VectorXd& free) {
    jac_ = al_.constraint_jacobian(v);
    free_idx_.clear();
    for (Eigen::Index i = 0; i < free.size(); ++i)
      if (free[i] != 0.0) free_idx_.push_back(i);
    const Eigen::Index nf = static_cast<Eigen::Index>(free_idx_.size());
    Eigen::MatrixXd jf(jac_.rows(), nf);
    for (Eigen::Index j = 0; j < nf; ++j) jf.col(j) = jac_.col(free_idx_[j]);
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(nf, nf) * sigma_;
    m.selfadjointView<Eigen::Lower>().rankUpdate(jf.transpose(), rho_);
    llt_.compute(m);
  }

  // H * q restricted to the free variables.
  Eigen::VectorXd two_loop(Eigen::VectorXd q, const Eigen::VectorXd& free) const {
    const std::size_t m = s_.size();
    std::vector<double> alpha(m), rho(m);
    std::vector<Eigen::VectorXd> s(m), y(m);
    for (std::size_t i = 0; i < m; ++i) {
      s[i] = s_[i].cwiseProduct(free);
      y[i] = y_[i].cwiseProduct(free);
      const double sy = s[i].dot(y[i]);
      rho[i] = sy > 0.0 ? 1.0 / sy : 0.0;
    }
    for (std::size_t k = m; k-- > 0;) {
      alpha[k] = rho[k] * s[k].dot(q);
      q -= alpha[k] * y[k];
    }
    const Eigen::Index nf = static_cast<Eigen::Index>(free_idx_.size());
    Eigen::VectorXd qf(nf);
    for (Eigen::Index j = 0; j < nf; ++j) qf[j] = q[free_idx_[j]];
    qf = llt_.solve(qf);
    q.setZero();
    for (Eigen::Index j = 0; j < nf; ++j) q[free_idx_[j]] = qf[j];
    for (std::size_t k = 0; k < m; ++k) {
      const double beta = rho[k] * y[k].dot(q);
      q += (alpha[k] - beta) * s[k];
    }
    return q.cwiseProduct(free);
  }

  const AugmentedLagrangian& al_;
  const SolverConfig& cfg_;
  std::deque<Eigen::VectorXd> s_, y_;
  double rho_ = 1.0;
  double sigma_ = 1.0;
  Eigen::MatrixXd jac_;
  std::vector<Eigen::Index> free_idx_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

}  // namespace

KktResiduals kkt_residuals(const SmoothNlp& nlp, const Eigen::VectorXd& w,
                           const Eigen::VectorXd& multipliers,
                           const Eigen::VectorXd& ineq_multipliers) {
  const Eigen::Index m_in = nlp.num_ineq();
  const Eigen::VectorXd mu =
      ineq_multipliers.size() == m_in ? ineq_multipliers : Eigen::VectorXd::Zero(m_in);
  const Eigen::VectorXd lo = nlp.lower_bounds();
  const Eigen::VectorXd hi = nlp.upper_bounds();

  Eigen::VectorXd gl = nlp.objective_gradient(w);
  if (nlp.num_eq()) gl -= nlp.eq_jacobian(w).transpose() * multipliers;
  Eigen::VectorXd c_in;
  if (m_in) {
    gl -= nlp.ineq_jacobian(w).transpose() * mu;
    c_in = nlp.ineq_residuals(w);
  }

  KktResiduals k;
  k.stationarity = inf_norm(projected_gradient(w, gl, lo, hi));
  k.feasibility = nlp.num_eq() ? inf_norm(nlp.eq_residuals(w)) : 0.0;
  for (Eigen::Index j = 0; j < m_in; ++j) {
    k.feasibility = std::max(k.feasibility, std::max(-c_in[j], 0.0));
    k.complementarity = std::max(k.complementarity, std::abs(std::min(c_in[j], mu[j])));
    k.complementarity = std::max(k.complementarity, std::max(-mu[j], 0.0));
  }
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (std::isfinite(lo[i]))
      k.complementarity =
          std::max(k.complementarity, std::abs(std::min(w[i] - lo[i], std::max(gl[i], 0.0))));
    if (std::isfinite(hi[i]))
      k.complementarity =
          std::max(k.complementarity, std::abs(std::min(hi[i] - w[i], std::max(-gl[i], 0.0))));
  }
  return k;
}

Solution solve(const SmoothNlp& nlp, const Eigen::VectorXd& w0, const SolverConfig& cfg,
               std::ostream* log) {
  cfg.validate();
  if (w0.size() != nlp.num_vars())
    throw std::invalid_argument(
        fmt::format("initial point has dimension {}, expected {}", w0.size(), nlp.num_vars()));

  const AugmentedLagrangian al(nlp);
  const Eigen::Index n = al.n();
  const Eigen::Index m_eq = nlp.num_eq();
  const Eigen::Index m_in = nlp.num_ineq();

  Eigen::VectorXd v(al.dim());
  v.head(n) = project(w0, al.lo().head(n), al.hi().head(n));
  if (m_in) v.tail(m_in) = nlp.ineq_residuals(v.head(n)).cwiseMax(0.0);

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(al.num_constraints());
  double rho = cfg.initial_penalty;
  double inner_tol = std::max(1e-2, cfg.tol_stationarity);
  double prev_feas = std::numeric_limits<double>::infinity();
  ProjectedLbfgs inner(al, cfg);

  Solution sol;
  if (log) *log << "outer,inner,J,phi,feas,stat,rho\n";

  for (int outer = 1; outer <= cfg.max_outer; ++outer) {
    const InnerResult ir = inner.minimize(v, lambda, rho, inner_tol);
    sol.inner_iterations += ir.iterations;
    sol.outer_iterations = outer;

    const Eigen::VectorXd c = al.constraints(v);
    lambda -= rho * c;
    const double feas = inf_norm(c);
    const double stat =
        inf_norm(projected_gradient(v, al.lagrangian_gradient(v, lambda), al.lo(), al.hi()));

    const Eigen::VectorXd w = v.head(n);
    const double phi = nlp.regularization(w);
    IterationLog entry{outer, ir.iterations, nlp.objective(w) - phi, phi, feas, stat, rho};
    sol.history.push_back(entry);
    if (log)
      *log << fmt::format("{},{},{:.17g},{:.17g},{:.6e},{:.6e},{:.6e}\n", entry.outer, entry.inner,
                          entry.objective, entry.phi, entry.feasibility, entry.stationarity,
                          entry.penalty);

    if (stat <= cfg.tol_stationarity && feas <= cfg.tol_feasibility) {
      const KktResiduals k = kkt_residuals(nlp, w, lambda.head(m_eq), lambda.tail(m_in));
      if (k.stationarity <= cfg.tol_stationarity && k.feasibility <= cfg.tol_feasibility &&
          k.complementarity <= cfg.tol_stationarity) {
        sol.status = SolveStatus::kConverged;
        break;
      }
    }
    if (ir.failed && ir.iterations <= 1 && feas <= prev_feas) {
      sol.status = SolveStatus::kInnerFailure;
      sol.message = fmt::format("line search collapsed at outer iteration {}", outer);
      break;
    }
    if (feas > cfg.tol_feasibility && feas > 0.25 * prev_feas) rho = std::min(rho * cfg.penalty_growth, cfg.max_penalty);
    prev_feas = std::min(prev_feas, feas);
    inner_tol = std::max(0.5 * cfg.tol_stationarity, 0.1 * inner_tol);
    if (outer == cfg.max_outer) sol.message = "outer iteration limit reached";
  }

  sol.w_star = v.head(n);
  sol.multipliers = lambda.head(m_eq);
  sol.ineq_multipliers = lambda.tail(m_in);
  sol.kkt = kkt_residuals(nlp, sol.w_star, sol.multipliers, sol.ineq_multipliers);
  sol.phi = nlp.regularization(sol.w_star);
  sol.objective = nlp.objective(sol.w_star) - sol.phi;
  if (!std::isfinite(sol.objective)) throw std::runtime_error("non-finite objective at solution");
  return sol;
}

}  // namespace ocpreg
