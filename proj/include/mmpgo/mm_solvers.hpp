#pragma once

// MM-PGO and AMM-PGO drivers. The per-robot step logic lives in NodeWorker so
// the shared-memory drivers here and the message-passing runtime execute
// identical arithmetic; only where separator poses come from differs.

#include <mmpgo/core.hpp>
#include <mmpgo/graph.hpp>
#include <mmpgo/local_solver.hpp>
#include <mmpgo/manifold.hpp>
#include <mmpgo/quadratic.hpp>

#include <chrono>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace mmpgo {

struct RunRecord {
  int k = 0;
  double f = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
  unsigned long long bytes = 0;
};

struct SolverRun {
  PoseEstimate x;
  std::vector<RunRecord> records;
  std::string termination;  // "iteration budget" or "gradient tolerance"
};

struct SolverConfig {
  double xi = 0.001;
  int iters = 100;
  double grad_stop_tol = 0.0;  // early stop on grad norm; 0 disables
  LocalSolveConfig local;
};

enum class Algorithm { mm, amm, chordal };

inline double gradient_norm(const PoseGraph& g, const PoseEstimate& x) {
  const Matrix egrad = euclidean_gradient_edges(g, x);
  const BlockLayout layout(g);
  double sq = 0.0;
  for (int r = 0; r < g.num_robots(); ++r) {
    const int n = g.num_poses(r);
    const Matrix ga = egrad.middleCols(layout.robot_col[r], layout.robot_cols[r]);
    const TangentBlock tg = riemannian_gradient(
        x.blocks[r].rot, ga.leftCols(n), ga.rightCols(static_cast<Eigen::Index>(g.d()) * n));
    sq += tg.t.squaredNorm() + tg.rot.squaredNorm();
  }
  return std::sqrt(sq);
}

// Per-robot state and the per-iteration update rules of the MM-PGO and
// AMM-PGO loops. Reads remote state only through the SeparatorView handed to
// refresh(); the solve phase touches local state alone.
class NodeWorker {
 public:
  NodeWorker(const PoseGraph& g, int alpha, SparseMatrix gamma, PoseBlock x0,
             LocalSolveConfig local_cfg)
      : graph_(g),
        alpha_(alpha),
        prob_(std::move(gamma)),
        x_(std::move(x0)),
        local_cfg_(local_cfg) {
    x_prev_flat_ = x_.flat();
    s_ = 1.0;
  }

  // Recompute grad_a F and Gbar^a at the current iterate; called once per
  // round after all robots have updated (and at round 0).
  void refresh(const SeparatorView& remote) {
    grad_prev_ = grad_.size() > 0 ? grad_ : Matrix();
    grad_ = node_euclidean_gradient(graph_, alpha_, x_, remote);
    if (grad_prev_.size() == 0) grad_prev_ = grad_;  // k = 0: grad(X^(-1)) = grad(X^(0))
    gbar_ = gbar_node(graph_, alpha_, x_, remote);
  }

  void mm_step() {
    const Matrix anchor = x_.flat();
    LocalSolveResult res =
        minimize_node_surrogate(x_, anchor, grad_, prob_, local_cfg_);
    x_prev_flat_ = anchor;
    x_ = std::move(res.x);
  }

  void amm_step() {
    double s_next = (std::sqrt(4.0 * s_ * s_ + 1.0) + 1.0) / 2.0;
    const double gamma_k = (s_ - 1.0) / s_next;
    const Matrix x_flat = x_.flat();
    const Matrix y = gamma_k == 0.0 ? x_flat : Matrix(x_flat + gamma_k * (x_flat - x_prev_flat_));
    const Matrix grad_y =
        gamma_k == 0.0 ? grad_ : Matrix(grad_ + gamma_k * (grad_ - grad_prev_));

    // The extrapolated anchor may leave the manifold; the optimization
    // variable starts from its retraction. With zero momentum Y = X exactly
    // and no re-projection is needed.
    PoseBlock start = x_;
    if (gamma_k != 0.0) {
      start.set_flat(y);
      for (int i = 0; i < start.num_poses(); ++i) {
        start.rot.block(i) = project_to_rotation(start.rot.block(i));
      }
    }
    LocalSolveResult res = minimize_node_surrogate(start, y, grad_y, prob_, local_cfg_);

    // Restart test: the accepted iterate must not overshoot the surrogate
    // anchored at X^(k).
    const double g_at_xk =
        surrogate_G_node(res.x.flat(), x_flat, prob_.gamma(), grad_, gbar_);
    if (g_at_xk > gbar_) {
      res = minimize_node_surrogate(x_, x_flat, grad_, prob_, local_cfg_);
      s_next = std::max(0.5 * s_next, 1.0);
      ++restart_count_;
    }
    x_prev_flat_ = x_flat;
    x_ = std::move(res.x);
    s_ = s_next;
  }

  // Local contributions to the round metrics.
  double gbar() const { return gbar_; }
  double squared_grad_norm() const {
    const int n = x_.num_poses();
    const TangentBlock tg = riemannian_gradient(
        x_.rot, grad_.leftCols(n),
        grad_.rightCols(static_cast<Eigen::Index>(graph_.d()) * n));
    return tg.t.squaredNorm() + tg.rot.squaredNorm();
  }

  const PoseBlock& x() const { return x_; }
  int restart_count() const { return restart_count_; }

 private:
  const PoseGraph& graph_;
  int alpha_;
  SurrogateProblem prob_;
  PoseBlock x_;
  Matrix x_prev_flat_;
  Matrix grad_;       // grad_a F(X^(k))
  Matrix grad_prev_;  // grad_a F(X^(k-1))
  double gbar_ = 0.0;
  double s_ = 1.0;
  int restart_count_ = 0;
  LocalSolveConfig local_cfg_;
};

inline std::vector<NodeWorker> make_workers(const PoseGraph& g,
                                            const PoseEstimate& x0,
                                            const SolverConfig& cfg) {
  if (!x0.conforms(g)) throw DimensionMismatch("solver: initial estimate mismatch");
  const MajorantBlocks maj = build_majorant(g, cfg.xi);
  std::vector<NodeWorker> workers;
  workers.reserve(g.num_robots());
  for (int r = 0; r < g.num_robots(); ++r) {
    workers.emplace_back(g, r, maj.gamma[r], x0.blocks[r], cfg.local);
  }
  return workers;
}

namespace detail {

inline SolverRun run_shared_memory(const PoseGraph& g, const PoseEstimate& x0,
                                   const SolverConfig& cfg, bool accelerated) {
  if (cfg.iters < 0) throw InvalidParameter("solver: iters must be >= 0");
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                     t_start)
        .count();
  };

  std::vector<NodeWorker> workers = make_workers(g, x0, cfg);
  PoseEstimate x = x0;

  SolverRun run;
  run.x = x0;
  auto record = [&](int k) {
    double f = 0.0, grad_sq = 0.0;
    for (const NodeWorker& w : workers) {
      f += w.gbar();
      grad_sq += w.squared_grad_norm();
    }
    run.records.push_back({k, f, std::sqrt(grad_sq), elapsed_ms(), 0});
  };

  {
    const EstimateView view(x);
    for (NodeWorker& w : workers) w.refresh(view);
  }
  record(0);
  run.termination = "iteration budget";
  for (int k = 0; k < cfg.iters; ++k) {
    for (NodeWorker& w : workers) {
      if (accelerated) {
        w.amm_step();
      } else {
        w.mm_step();
      }
    }
    for (int r = 0; r < g.num_robots(); ++r) x.blocks[r] = workers[r].x();
    const EstimateView view(x);
    for (NodeWorker& w : workers) w.refresh(view);
    record(k + 1);
    if (cfg.grad_stop_tol > 0.0 && run.records.back().grad_norm < cfg.grad_stop_tol) {
      run.termination = "gradient tolerance";
      break;
    }
  }
  run.x = std::move(x);
  return run;
}

}  // namespace detail

inline SolverRun mm_pgo(const PoseGraph& g, const PoseEstimate& x0,
                        const SolverConfig& cfg) {
  return detail::run_shared_memory(g, x0, cfg, /*accelerated=*/false);
}

inline SolverRun amm_pgo(const PoseGraph& g, const PoseEstimate& x0,
                         const SolverConfig& cfg) {
  return detail::run_shared_memory(g, x0, cfg, /*accelerated=*/true);
}

}  // namespace mmpgo
