#pragma once

// Distributed chordal initialization: the convex rotation relaxation solved by
// accelerated MM with exact per-robot linear solves, blockwise SVD projection
// to SO(d)^n, then translation recovery by the same machinery.
//
// Both phases are instances of one convex block problem: per pose a d x bw
// block B, per edge a residual B_i * C_e + c_e - B_j with weight w_e, the
// first pose of robot 0 anchored to a fixed value.

#include <mmpgo/core.hpp>
#include <mmpgo/graph.hpp>
#include <mmpgo/manifold.hpp>
#include <mmpgo/quadratic.hpp>

#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

namespace mmpgo {

// Remote pose blocks for the convex phases (d x bw per pose).
using BlockLookup = std::function<Matrix(const PoseId&)>;

namespace detail {

struct ConvexEdge {
  Matrix c_mat;  // bw x bw
  Vector c_vec;  // d, zero for the rotation phase
  double weight = 0.0;
};

// Accelerated MM on a convex block-separable surrogate. Majorant Hessians are
// intra-edge exact and inter-edge doubled-diagonal, plus xi*I; subproblems are
// solved exactly by sparse LDLT on the non-anchored columns.
class ConvexBlockEngine {
 public:
  ConvexBlockEngine(const PoseGraph& g, int bw, std::vector<ConvexEdge> edges,
                    double xi, Matrix anchor_value)
      : graph_(g), bw_(bw), edges_(std::move(edges)), anchor_(std::move(anchor_value)) {
    factorize(xi);
  }

  double xi() const { return xi_; }
  int block_width() const { return bw_; }
  const Matrix& anchor_value() const { return anchor_; }

  Matrix initial_state(int alpha) const {
    Matrix b = anchor_.replicate(1, graph_.num_poses(alpha));
    return b;
  }

  // grad_a of the (unsurrogated) convex objective.
  Matrix node_gradient(int alpha, const Matrix& local, const BlockLookup& remote) const {
    Matrix grad = Matrix::Zero(graph_.d(), local.cols());
    for (int e : graph_.incident_edges(alpha)) {
      const Measurement& m = graph_.edges()[e];
      const ConvexEdge& ce = edges_[e];
      const Matrix bi = m.src.robot == alpha
                            ? Matrix(local.middleCols(bw_ * m.src.pose, bw_))
                            : remote(m.src);
      const Matrix bj = m.dst.robot == alpha
                            ? Matrix(local.middleCols(bw_ * m.dst.pose, bw_))
                            : remote(m.dst);
      Matrix res = bi * ce.c_mat - bj;
      res.col(0) += ce.c_vec.size() > 0 ? ce.c_vec : Vector::Zero(graph_.d());
      if (m.src.robot == alpha) {
        grad.middleCols(bw_ * m.src.pose, bw_) += ce.weight * res * ce.c_mat.transpose();
      }
      if (m.dst.robot == alpha) {
        grad.middleCols(bw_ * m.dst.pose, bw_) -= ce.weight * res;
      }
    }
    return grad;
  }

  // Robot a's additive share of the objective: full weight on intra edges,
  // half of the half-weighted inter terms on each side.
  double node_objective_share(int alpha, const Matrix& local,
                              const BlockLookup& remote) const {
    double val = 0.0;
    for (int e : graph_.incident_edges(alpha)) {
      const Measurement& m = graph_.edges()[e];
      const ConvexEdge& ce = edges_[e];
      const Matrix bi = m.src.robot == alpha
                            ? Matrix(local.middleCols(bw_ * m.src.pose, bw_))
                            : remote(m.src);
      const Matrix bj = m.dst.robot == alpha
                            ? Matrix(local.middleCols(bw_ * m.dst.pose, bw_))
                            : remote(m.dst);
      Matrix res = bi * ce.c_mat - bj;
      res.col(0) += ce.c_vec.size() > 0 ? ce.c_vec : Vector::Zero(graph_.d());
      val += (m.intra() ? 0.5 : 0.25) * ce.weight * res.squaredNorm();
    }
    return val;
  }

  // argmin over the free columns of
  //   1/2 <H^a (Z - Y), Z - Y> + <grad, Z - Y>,
  // with the anchored block held fixed.
  Matrix exact_node_solve(int alpha, const Matrix& y, const Matrix& grad) const {
    const std::vector<int>& free = free_cols_[alpha];
    Matrix rhs(free.size(), graph_.d());
    for (size_t i = 0; i < free.size(); ++i) rhs.row(i) = grad.col(free[i]).transpose();
    const Matrix delta = solvers_[alpha]->solve(rhs);
    if (solvers_[alpha]->info() != Eigen::Success) {
      throw SingularSubproblem("chordal: subproblem solve failed for robot " +
                               std::to_string(alpha));
    }
    Matrix z = y;
    for (size_t i = 0; i < free.size(); ++i) z.col(free[i]) -= delta.row(i).transpose();
    if (alpha == 0) z.leftCols(bw_) = anchor_;  // anchored bit-exactly
    return z;
  }

 private:
  void factorize(double xi) {
    xi_ = xi;
    if (!build_solvers()) {
      // A xi of zero can leave a subproblem singular when a robot has no
      // anchoring term; bump to a tiny ridge and retry.
      xi_ = 1e-8;
      if (!build_solvers()) {
        throw SingularSubproblem("chordal: singular subproblem even with ridge");
      }
    }
  }

  bool build_solvers() {
    const int a = graph_.num_robots();
    solvers_.clear();
    free_cols_.assign(a, {});
    for (int alpha = 0; alpha < a; ++alpha) {
      const int cols = bw_ * graph_.num_poses(alpha);
      std::vector<Triplet> trip;
      for (int e : graph_.incident_edges(alpha)) {
        const Measurement& m = graph_.edges()[e];
        const ConvexEdge& ce = edges_[e];
        const double w = m.intra() ? ce.weight : 2.0 * ce.weight;
        if (m.src.robot == alpha) {
          add_block(trip, bw_ * m.src.pose, bw_ * m.src.pose,
                    Matrix(w * ce.c_mat * ce.c_mat.transpose()));
        }
        if (m.dst.robot == alpha) {
          add_block(trip, bw_ * m.dst.pose, bw_ * m.dst.pose,
                    Matrix(w * Matrix::Identity(bw_, bw_)));
        }
        if (m.intra()) {
          add_block(trip, bw_ * m.src.pose, bw_ * m.dst.pose, Matrix(-w * ce.c_mat));
          add_block(trip, bw_ * m.dst.pose, bw_ * m.src.pose,
                    Matrix(-w * ce.c_mat.transpose()));
        }
      }
      for (int c = 0; c < cols; ++c) trip.emplace_back(c, c, xi_);
      SparseMatrix h(cols, cols);
      h.setFromTriplets(trip.begin(), trip.end());

      std::vector<int>& free = free_cols_[alpha];
      for (int c = alpha == 0 ? bw_ : 0; c < cols; ++c) free.push_back(c);
      SparseMatrix hff = submatrix(h, free);
      auto solver = std::make_unique<Eigen::SimplicialLDLT<SparseMatrix>>();
      solver->compute(hff);
      if (solver->info() != Eigen::Success) return false;
      const Vector diag = solver->vectorD();
      if (diag.size() > 0 &&
          diag.minCoeff() <= 1e-12 * std::max(1.0, diag.maxCoeff())) {
        return false;
      }
      solvers_.push_back(std::move(solver));
    }
    return true;
  }

  static void add_block(std::vector<Triplet>& t, int row, int col, const Matrix& b) {
    for (int r = 0; r < b.rows(); ++r)
      for (int c = 0; c < b.cols(); ++c)
        if (b(r, c) != 0.0) t.emplace_back(row + r, col + c, b(r, c));
  }

  static SparseMatrix submatrix(const SparseMatrix& h, const std::vector<int>& idx) {
    std::vector<int> pos(h.rows(), -1);
    for (size_t i = 0; i < idx.size(); ++i) pos[idx[i]] = static_cast<int>(i);
    std::vector<Triplet> trip;
    for (int k = 0; k < h.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(h, k); it; ++it) {
        const int r = pos[it.row()];
        const int c = pos[it.col()];
        if (r >= 0 && c >= 0) trip.emplace_back(r, c, it.value());
      }
    }
    SparseMatrix out(idx.size(), idx.size());
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
  }

  const PoseGraph& graph_;
  int bw_;
  std::vector<ConvexEdge> edges_;  // indexed like graph_.edges()
  Matrix anchor_;
  double xi_ = 0.0;
  std::vector<std::unique_ptr<Eigen::SimplicialLDLT<SparseMatrix>>> solvers_;
  std::vector<std::vector<int>> free_cols_;
};

inline std::vector<ConvexEdge> rotation_edges(const PoseGraph& g) {
  std::vector<ConvexEdge> out;
  out.reserve(g.edges().size());
  for (const Measurement& m : g.edges()) {
    out.push_back({m.rot, Vector(), m.kappa});
  }
  return out;
}

inline std::vector<ConvexEdge> translation_edges(
    const PoseGraph& g, const std::vector<RotationBlock>& r0) {
  std::vector<ConvexEdge> out;
  out.reserve(g.edges().size());
  for (const Measurement& m : g.edges()) {
    const Vector b = r0[m.src.robot].block(m.src.pose) * m.trans;
    out.push_back({Matrix::Identity(1, 1), b, m.tau});
  }
  return out;
}

}  // namespace detail

// One d x (d n_a) unconstrained block per robot; robot 0's first block is the
// identity anchor.
struct RelaxedRotation {
  std::vector<Matrix> blocks;
};

struct RelaxedTranslation {
  std::vector<Matrix> blocks;  // d x n_a each
};

struct ChordalTrace {
  std::vector<double> objective;  // F at iterations 0..iters
};

inline double rotation_objective(const PoseGraph& g, const RelaxedRotation& r) {
  const int d = g.d();
  double f = 0.0;
  for (const Measurement& m : g.edges()) {
    const Matrix ri = r.blocks[m.src.robot].middleCols(d * m.src.pose, d);
    const Matrix rj = r.blocks[m.dst.robot].middleCols(d * m.dst.pose, d);
    f += 0.5 * m.kappa * (ri * m.rot - rj).squaredNorm();
  }
  return f;
}

inline double translation_objective(const PoseGraph& g,
                                    const std::vector<RotationBlock>& r0,
                                    const RelaxedTranslation& t) {
  double f = 0.0;
  for (const Measurement& m : g.edges()) {
    const Vector ti = t.blocks[m.src.robot].col(m.src.pose);
    const Vector tj = t.blocks[m.dst.robot].col(m.dst.pose);
    f += 0.5 * m.tau *
         (r0[m.src.robot].block(m.src.pose) * m.trans + ti - tj).squaredNorm();
  }
  return f;
}

namespace detail {

// Shared-memory accelerated loop (no restart branch). Exact convex solves,
// exact gradient extrapolation (the gradient is affine in the state).
inline ChordalTrace amm_convex(const ConvexBlockEngine& engine, const PoseGraph& g,
                               std::vector<Matrix>& state, int iters) {
  const int a = g.num_robots();
  const BlockLookup lookup = [&](const PoseId& id) {
    return Matrix(
        state[id.robot].middleCols(engine.block_width() * id.pose, engine.block_width()));
  };
  std::vector<Matrix> prev = state;
  std::vector<Matrix> grad(a), grad_prev(a);
  for (int r = 0; r < a; ++r) grad[r] = engine.node_gradient(r, state[r], lookup);
  grad_prev = grad;
  std::vector<double> s(a, 1.0);

  ChordalTrace trace;
  auto record = [&] {
    double f = 0.0;
    for (int r = 0; r < a; ++r) f += engine.node_objective_share(r, state[r], lookup);
    trace.objective.push_back(f);
  };
  record();
  for (int k = 0; k < iters; ++k) {
    std::vector<Matrix> next(a);
    for (int r = 0; r < a; ++r) {
      const double s_next = (std::sqrt(4.0 * s[r] * s[r] + 1.0) + 1.0) / 2.0;
      const double gamma_k = (s[r] - 1.0) / s_next;
      const Matrix y = state[r] + gamma_k * (state[r] - prev[r]);
      const Matrix grad_y = grad[r] + gamma_k * (grad[r] - grad_prev[r]);
      next[r] = engine.exact_node_solve(r, y, grad_y);
      s[r] = s_next;
    }
    prev = std::move(state);
    state = std::move(next);
    grad_prev = std::move(grad);
    grad.resize(a);
    for (int r = 0; r < a; ++r) grad[r] = engine.node_gradient(r, state[r], lookup);
    record();
  }
  return trace;
}

}  // namespace detail

inline std::pair<ChordalTrace, RelaxedRotation> amm_chordal(const PoseGraph& g,
                                                            const RelaxedRotation& r0,
                                                            double xi, int iters) {
  if (iters < 0) throw InvalidParameter("amm_chordal: iters must be >= 0");
  const detail::ConvexBlockEngine engine(g, g.d(), detail::rotation_edges(g), xi,
                                         Matrix::Identity(g.d(), g.d()));
  std::vector<Matrix> state = r0.blocks;
  ChordalTrace trace = detail::amm_convex(engine, g, state, iters);
  return {std::move(trace), RelaxedRotation{std::move(state)}};
}

inline RelaxedRotation identity_relaxed_rotation(const PoseGraph& g) {
  RelaxedRotation r;
  for (int alpha = 0; alpha < g.num_robots(); ++alpha) {
    r.blocks.push_back(
        Matrix::Identity(g.d(), g.d()).replicate(1, g.num_poses(alpha)));
  }
  return r;
}

inline std::vector<RotationBlock> project_rotations(const PoseGraph& g,
                                                    const RelaxedRotation& relaxed) {
  const int d = g.d();
  std::vector<RotationBlock> out;
  for (int alpha = 0; alpha < g.num_robots(); ++alpha) {
    RotationBlock rb;
    rb.d = d;
    rb.entries.resize(d, relaxed.blocks[alpha].cols());
    for (int i = 0; i < g.num_poses(alpha); ++i) {
      try {
        rb.block(i) = project_to_rotation(relaxed.blocks[alpha].middleCols(d * i, d));
      } catch (const DegenerateProjection&) {
        throw DegenerateProjection("project_rotations: degenerate block at robot " +
                                   std::to_string(alpha) + " pose " + std::to_string(i));
      }
    }
    out.push_back(std::move(rb));
  }
  return out;
}

inline std::pair<ChordalTrace, RelaxedTranslation> translation_init(
    const PoseGraph& g, const std::vector<RotationBlock>& r0, double xi, int iters) {
  if (iters < 0) throw InvalidParameter("translation_init: iters must be >= 0");
  const detail::ConvexBlockEngine engine(g, 1, detail::translation_edges(g, r0), xi,
                                         Matrix::Zero(g.d(), 1));
  std::vector<Matrix> state;
  for (int alpha = 0; alpha < g.num_robots(); ++alpha) {
    state.push_back(Matrix::Zero(g.d(), g.num_poses(alpha)));
  }
  ChordalTrace trace = detail::amm_convex(engine, g, state, iters);
  return {std::move(trace), RelaxedTranslation{std::move(state)}};
}

// Full pipeline: rotation relaxation, projection, translation recovery.
inline PoseEstimate chordal_initialize(const PoseGraph& g, double xi, int rot_iters,
                                       int trans_iters) {
  auto [rot_trace, relaxed] = amm_chordal(g, identity_relaxed_rotation(g), xi, rot_iters);
  std::vector<RotationBlock> r0 = project_rotations(g, relaxed);
  auto [trans_trace, t0] = translation_init(g, r0, xi, trans_iters);
  PoseEstimate x = PoseEstimate::identity(g);
  for (int alpha = 0; alpha < g.num_robots(); ++alpha) {
    x.blocks[alpha].rot = r0[alpha];
    x.blocks[alpha].t = t0.blocks[alpha];
  }
  return x;
}

}  // namespace mmpgo
