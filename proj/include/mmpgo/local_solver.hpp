#pragma once

// Per-robot subproblem solver for the node surrogate
//   q(X) = 1/2 <Gamma (X - anchor), X - anchor> + <grad, X - anchor>.
// Riemannian descent with Armijo backtracking and projection retraction; the
// search direction is the tangent projection of the Newton step of q, which
// Gamma makes available through a factorization computed once per robot.
// The anchor may be an ambient (extrapolated) point; the iterate stays on
// R^{d x n} x SO(d)^n.

#include <mmpgo/core.hpp>
#include <mmpgo/graph.hpp>
#include <mmpgo/manifold.hpp>
#include <mmpgo/quadratic.hpp>

#include <cmath>
#include <limits>
#include <memory>

namespace mmpgo {

struct LocalSolveConfig {
  double grad_tol_rel = 1e-7;  // stop at ||grad q|| <= grad_tol_rel * (1 + ||grad||_anchor)
  int max_inner_iters = 50;
  double armijo_init = 1.0;
  double armijo_shrink = 0.5;
  double armijo_c = 1e-4;

  void validate() const {
    if (!(armijo_shrink > 0.0 && armijo_shrink < 1.0))
      throw InvalidParameter("LocalSolveConfig: shrink factor must be in (0,1)");
    if (!(armijo_c > 0.0 && armijo_c <= 0.5))
      throw InvalidParameter("LocalSolveConfig: sufficient-decrease constant in (0,0.5]");
    if (!(grad_tol_rel > 0.0) || max_inner_iters <= 0)
      throw InvalidParameter("LocalSolveConfig: invalid tolerance or iteration cap");
  }
};

// Gamma together with its LDLT factorization. Gamma is fixed for the whole
// outer run, so one factorization serves every subproblem of the robot. A
// PSD-singular Gamma (xi = 0, robot with no inter-node edges) gets a tiny
// ridge that only affects the preconditioner, never the objective.
class SurrogateProblem {
 public:
  explicit SurrogateProblem(SparseMatrix gamma) : gamma_(std::move(gamma)) {
    if (!try_factorize(gamma_)) {
      double max_diag = 0.0;
      for (int c = 0; c < gamma_.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(gamma_, c); it; ++it) {
          if (it.row() == it.col()) max_diag = std::max(max_diag, it.value());
        }
      }
      SparseMatrix eye(gamma_.rows(), gamma_.cols());
      eye.setIdentity();
      has_newton_ = try_factorize(gamma_ + 1e-10 * (1.0 + max_diag) * eye);
    }
  }

  const SparseMatrix& gamma() const { return gamma_; }
  bool has_newton() const { return has_newton_; }

  // Solves D Gamma = egrad for D (layout d x (d+1)n, Gamma symmetric).
  Matrix newton_step(const Matrix& egrad) const {
    return ldlt_->solve(egrad.transpose()).transpose();
  }

 private:
  bool try_factorize(const SparseMatrix& m) {
    ldlt_ = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>(m);
    if (ldlt_->info() != Eigen::Success) return false;
    const Vector diag = ldlt_->vectorD();
    has_newton_ = diag.size() == 0 ||
                  diag.minCoeff() > 1e-14 * std::max(1.0, diag.maxCoeff());
    return has_newton_;
  }

  SparseMatrix gamma_;
  std::shared_ptr<Eigen::SimplicialLDLT<SparseMatrix>> ldlt_;
  bool has_newton_ = false;
};

struct LocalSolveResult {
  PoseBlock x;
  double surrogate_delta = 0.0;  // q(x) - q(start), always <= 0
  double grad_norm = 0.0;
  int iters = 0;
  bool hit_iteration_cap = false;
};

inline LocalSolveResult minimize_node_surrogate(const PoseBlock& start,
                                                const Matrix& anchor_flat,
                                                const Matrix& grad_at_anchor,
                                                const SurrogateProblem& prob,
                                                const LocalSolveConfig& cfg) {
  cfg.validate();
  const int d = start.rot.d;
  const int n = start.num_poses();
  if (anchor_flat.cols() != static_cast<Eigen::Index>(d + 1) * n ||
      grad_at_anchor.cols() != anchor_flat.cols()) {
    throw DimensionMismatch("minimize_node_surrogate: layout mismatch");
  }
  const SparseMatrix& gamma = prob.gamma();

  auto surrogate = [&](const Matrix& flat) {
    const Matrix dx = flat - anchor_flat;
    return 0.5 * quadratic_form(dx, gamma) + grad_at_anchor.cwiseProduct(dx).sum();
  };
  auto tangent = [&](const PoseBlock& x, const Matrix& ambient) {
    return riemannian_gradient(x.rot, ambient.leftCols(n),
                               ambient.rightCols(static_cast<Eigen::Index>(d) * n));
  };
  auto pair = [&](const Matrix& ambient, const TangentBlock& dir) {
    return ambient.leftCols(n).cwiseProduct(dir.t).sum() +
           ambient.rightCols(static_cast<Eigen::Index>(d) * n)
               .cwiseProduct(dir.rot)
               .sum();
  };

  PoseBlock x = start;
  Matrix flat = x.flat();
  double q = surrogate(flat);
  const double q_start = q;
  // relative to the Riemannian gradient at the start; the ambient gradient
  // never vanishes on the manifold, so its norm would set a spurious floor
  double grad_tol = 0.0;

  auto embed = [&](const TangentBlock& v) {
    Matrix amb(d, anchor_flat.cols());
    amb.leftCols(n) = v.t;
    amb.rightCols(static_cast<Eigen::Index>(d) * n) = v.rot;
    return amb;
  };
  // Evaluating the surrogate carries rounding noise of order
  // eps * ||grad_at_anchor||: the ambient gradient stays O(edge weights) at
  // critical points and pairs with the eps-size reprojection jitter of every
  // retraction. Below this scale surrogate comparisons are coin flips, while
  // the Riemannian gradient norm remains reliable; acceptance logic switches
  // between the two accordingly.
  const double q_noise = 1e-15 * (1.0 + grad_at_anchor.norm());

  LocalSolveResult out;
  int iter = 0;
  double prev_gnorm = std::numeric_limits<double>::infinity();
  double prev_q = q;
  int stalls = 0;
  for (; iter < cfg.max_inner_iters; ++iter) {
    const Matrix egrad = grad_at_anchor + (flat - anchor_flat) * gamma;
    if (!egrad.allFinite()) {
      throw NumericalFailure("minimize_node_surrogate: non-finite gradient at inner iter " +
                             std::to_string(iter));
    }
    const TangentBlock rgrad = tangent(x, egrad);
    const double gnorm = rgrad.norm();
    out.grad_norm = gnorm;
    if (iter == 0) grad_tol = cfg.grad_tol_rel * (1.0 + gnorm);
    if (gnorm <= grad_tol) break;

    // stall guard: accepted steps that neither contract the gradient nor
    // move the surrogate beyond its noise are a random walk; stop it
    if (gnorm > 0.99 * prev_gnorm && prev_q - q < q_noise) {
      if (++stalls >= 3) break;
    } else {
      stalls = 0;
    }
    prev_gnorm = gnorm;
    prev_q = q;

    PoseBlock best;
    double q_best = q;
    bool accepted = false;

    // Gamma-preconditioned Riemannian gradient step, accepted on gradient
    // contraction with the surrogate increase capped at noise level.
    // Preconditioning the Riemannian gradient (rather than the ambient one,
    // whose large normal component would dominate the solve) gives a
    // direction that vanishes only at critical points.
    if (prob.has_newton()) {
      const TangentBlock dir = tangent(x, Matrix(-prob.newton_step(embed(rgrad))));
      double step = cfg.armijo_init;
      for (int t = 0; t < 8 && !accepted; ++t, step *= cfg.armijo_shrink) {
        PoseBlock trial = x;
        retract_in_place(trial.t, trial.rot, dir, step);
        const Matrix trial_flat = trial.flat();
        const double q_trial = surrogate(trial_flat);
        if (!std::isfinite(q_trial)) {
          throw NumericalFailure("minimize_node_surrogate: non-finite surrogate value");
        }
        const Matrix eg_trial = grad_at_anchor + (trial_flat - anchor_flat) * gamma;
        if (tangent(trial, eg_trial).norm() <= 0.95 * gnorm &&
            q_trial <= q + 4.0 * q_noise) {
          best = std::move(trial);
          q_best = q_trial;
          accepted = true;
        }
      }
    }

    // Steepest-descent Armijo fallback, started at the exact minimizing step
    // of the ambient quadratic along the direction so backtracking only has
    // to absorb the retraction curvature.
    if (!accepted) {
      const TangentBlock sd{-rgrad.t, -rgrad.rot};
      const double dgd = quadratic_form(embed(sd), gamma);
      double step =
          dgd > 0.0 ? std::min(cfg.armijo_init, gnorm * gnorm / dgd) : cfg.armijo_init;
      const double step_min = step * std::pow(cfg.armijo_shrink, 40);
      const double dd = -gnorm * gnorm;
      while (step > step_min) {
        PoseBlock trial = x;
        retract_in_place(trial.t, trial.rot, sd, step);
        const double q_trial = surrogate(trial.flat());
        if (!std::isfinite(q_trial)) {
          throw NumericalFailure("minimize_node_surrogate: non-finite surrogate value");
        }
        if (q_trial <= q + cfg.armijo_c * step * dd) {
          best = std::move(trial);
          q_best = q_trial;
          accepted = true;
          break;
        }
        step *= cfg.armijo_shrink;
      }
    }

    if (!accepted) break;  // no improving step; current iterate is the answer
    x = std::move(best);
    flat = x.flat();
    q = q_best;
  }
  out.hit_iteration_cap = iter >= cfg.max_inner_iters;
  out.surrogate_delta = q - q_start;
  out.iters = iter;
  out.x = std::move(x);
  return out;
}

inline LocalSolveResult minimize_node_surrogate(const PoseBlock& start,
                                                const Matrix& anchor_flat,
                                                const Matrix& grad_at_anchor,
                                                const SparseMatrix& gamma,
                                                const LocalSolveConfig& cfg) {
  return minimize_node_surrogate(start, anchor_flat, grad_at_anchor,
                                 SurrogateProblem(gamma), cfg);
}

}  // namespace mmpgo
