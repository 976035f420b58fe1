#pragma once

// Objective and surrogate machinery: the edge-sum objective F, its sparse
// quadratic-form data matrix, Euclidean gradients by two independent routes,
// the block-diagonal majorant (Omega, Gamma = Omega + xi*I), inter-node
// anchors, and the per-node surrogate G with its anchor constant Gbar.

#include <mmpgo/core.hpp>
#include <mmpgo/graph.hpp>

#include <unordered_map>
#include <vector>

namespace mmpgo {

// Read access to remote poses. The distributed runtime backs this with
// received messages; shared-memory evaluation backs it with the full estimate.
class SeparatorView {
 public:
  virtual ~SeparatorView() = default;
  virtual Vector t(const PoseId& id) const = 0;
  virtual Matrix rot(const PoseId& id) const = 0;
};

class EstimateView final : public SeparatorView {
 public:
  explicit EstimateView(const PoseEstimate& x) : x_(x) {}
  Vector t(const PoseId& id) const override { return x_.blocks[id.robot].t.col(id.pose); }
  Matrix rot(const PoseId& id) const override {
    return x_.blocks[id.robot].rot.block(id.pose);
  }

 private:
  const PoseEstimate& x_;
};

inline double quadratic_form(const Matrix& a, const SparseMatrix& s) {
  return (a * s).cwiseProduct(a).sum();
}

// --- objective -------------------------------------------------------------

inline double objective_edge_sum(const PoseGraph& g, const PoseEstimate& x) {
  if (!x.conforms(g)) throw DimensionMismatch("objective_edge_sum: estimate mismatch");
  double f = 0.0;
  for (const Measurement& m : g.edges()) {
    const auto ri = x.blocks[m.src.robot].rot.block(m.src.pose);
    const auto rj = x.blocks[m.dst.robot].rot.block(m.dst.pose);
    const Vector ti = x.blocks[m.src.robot].t.col(m.src.pose);
    const Vector tj = x.blocks[m.dst.robot].t.col(m.dst.pose);
    f += 0.5 * m.kappa * (ri * m.rot - rj).squaredNorm();
    f += 0.5 * m.tau * (ri * m.trans + ti - tj).squaredNorm();
  }
  return f;
}

// --- data matrix -----------------------------------------------------------

struct DataMatrix {
  SparseMatrix m;  // (d+1)n x (d+1)n, F(X) = 1/2 tr(X m X^T)
};

namespace detail {

inline void add_block(std::vector<Triplet>& t, int row, int col, const Matrix& b) {
  for (int r = 0; r < b.rows(); ++r)
    for (int c = 0; c < b.cols(); ++c)
      if (b(r, c) != 0.0) t.emplace_back(row + r, col + c, b(r, c));
}

// Quadratic-form contributions of one edge, emitted at the given column
// offsets (global for the data matrix, robot-local for the majorant blocks).
// Inter-node majorant contributions use doubled weights and only the diagonal
// blocks of the incident robot (pass has_i/has_j accordingly).
inline void add_edge_quadratic(std::vector<Triplet>& out, const Measurement& m, int d,
                               int ti, int ri, int tj, int rj, double wscale,
                               bool has_i, bool has_j, bool cross) {
  const double kappa = wscale * m.kappa;
  const double tau = wscale * m.tau;
  const Vector& tt = m.trans;
  if (has_i) {
    out.emplace_back(ti, ti, tau);
    add_block(out, ti, ri, tau * tt.transpose());
    add_block(out, ri, ti, tau * tt);
    add_block(out, ri, ri, Matrix(tau * tt * tt.transpose() +
                                  kappa * m.rot * m.rot.transpose()));
  }
  if (has_j) {
    out.emplace_back(tj, tj, tau);
    add_block(out, rj, rj, kappa * Matrix::Identity(d, d));
  }
  if (cross) {
    out.emplace_back(ti, tj, -tau);
    out.emplace_back(tj, ti, -tau);
    add_block(out, tj, ri, -tau * tt.transpose());
    add_block(out, ri, tj, -tau * tt);
    add_block(out, ri, rj, Matrix(-kappa * m.rot));
    add_block(out, rj, ri, Matrix(-kappa * m.rot.transpose()));
  }
}

}  // namespace detail

inline DataMatrix build_data_matrix(const PoseGraph& g) {
  const BlockLayout layout(g);
  std::vector<Triplet> trip;
  for (const Measurement& m : g.edges()) {
    detail::add_edge_quadratic(trip, m, g.d(), layout.t_col(g, m.src),
                               layout.rot_col(g, m.src), layout.t_col(g, m.dst),
                               layout.rot_col(g, m.dst), 1.0, true, true, true);
  }
  DataMatrix out;
  out.m.resize(layout.total_cols, layout.total_cols);
  out.m.setFromTriplets(trip.begin(), trip.end());
  return out;
}

// --- Euclidean gradient, two routes ----------------------------------------

// Route 1: X * M.
inline Matrix euclidean_gradient_matrix(const PoseEstimate& x, const DataMatrix& dm) {
  return x.flat() * dm.m;
}

// Route 2: per-edge accumulation into robot `alpha`'s columns only. Remote
// endpoints of inter-node edges come through the separator view. Accumulation
// follows the robot's incident-edge order, so shared-memory and distributed
// evaluations perform identical arithmetic.
inline Matrix node_euclidean_gradient(const PoseGraph& g, int alpha,
                                      const PoseBlock& xa, const SeparatorView& remote) {
  const int d = g.d();
  const int n = g.num_poses(alpha);
  Matrix grad = Matrix::Zero(d, static_cast<Eigen::Index>(d + 1) * n);
  auto tcol = [&](int pose) { return grad.col(pose); };
  auto rblk = [&](int pose) { return grad.block(0, n + d * pose, d, d); };
  for (int e : g.incident_edges(alpha)) {
    const Measurement& m = g.edges()[e];
    const bool src_local = m.src.robot == alpha;
    const bool dst_local = m.dst.robot == alpha;
    const Matrix ri = src_local ? Matrix(xa.rot.block(m.src.pose)) : remote.rot(m.src);
    const Matrix rj = dst_local ? Matrix(xa.rot.block(m.dst.pose)) : remote.rot(m.dst);
    const Vector ti = src_local ? Vector(xa.t.col(m.src.pose)) : remote.t(m.src);
    const Vector tj = dst_local ? Vector(xa.t.col(m.dst.pose)) : remote.t(m.dst);
    const Matrix res_r = ri * m.rot - rj;
    const Vector res_t = ri * m.trans + ti - tj;
    if (src_local) {
      tcol(m.src.pose) += m.tau * res_t;
      rblk(m.src.pose) += m.kappa * res_r * m.rot.transpose();
      rblk(m.src.pose) += m.tau * res_t * m.trans.transpose();
    }
    if (dst_local) {
      tcol(m.dst.pose) -= m.tau * res_t;
      rblk(m.dst.pose) -= m.kappa * res_r;
    }
  }
  return grad;
}

inline Matrix euclidean_gradient_edges(const PoseGraph& g, const PoseEstimate& x) {
  const BlockLayout layout(g);
  Matrix grad(g.d(), layout.total_cols);
  const EstimateView view(x);
  for (int r = 0; r < g.num_robots(); ++r) {
    grad.middleCols(layout.robot_col[r], layout.robot_cols[r]) =
        node_euclidean_gradient(g, r, x.blocks[r], view);
  }
  return grad;
}

// --- majorant --------------------------------------------------------------

struct MajorantBlocks {
  double xi = 0.0;
  std::vector<SparseMatrix> omega;  // per robot, (d+1)n_a square
  std::vector<SparseMatrix> gamma;  // omega + xi*I
};

inline MajorantBlocks build_majorant(const PoseGraph& g, double xi) {
  if (xi < 0.0) throw InvalidParameter("build_majorant: xi must be nonnegative");
  const int d = g.d();
  MajorantBlocks out;
  out.xi = xi;
  for (int alpha = 0; alpha < g.num_robots(); ++alpha) {
    const int n = g.num_poses(alpha);
    const int size = (d + 1) * n;
    std::vector<Triplet> trip;
    for (int e : g.incident_edges(alpha)) {
      const Measurement& m = g.edges()[e];
      const bool src_local = m.src.robot == alpha;
      const int ti = src_local ? m.src.pose : 0;
      const int ri = src_local ? n + d * m.src.pose : 0;
      const int tj = m.dst.robot == alpha ? m.dst.pose : 0;
      const int rj = m.dst.robot == alpha ? n + d * m.dst.pose : 0;
      if (m.intra()) {
        detail::add_edge_quadratic(trip, m, d, ti, ri, tj, rj, 1.0, true, true, true);
      } else {
        // Inter-node edge: doubled weights on the incident diagonal blocks,
        // no cross terms.
        detail::add_edge_quadratic(trip, m, d, ti, ri, tj, rj, 2.0, src_local,
                                   !src_local, false);
      }
    }
    SparseMatrix omega(size, size);
    omega.setFromTriplets(trip.begin(), trip.end());
    SparseMatrix eye(size, size);
    eye.setIdentity();
    out.omega.push_back(omega);
    out.gamma.push_back(omega + xi * eye);
  }
  return out;
}

// Block-diagonal assembly of the per-robot majorant blocks.
inline SparseMatrix assemble_block_diagonal(const std::vector<SparseMatrix>& blocks) {
  int size = 0;
  for (const SparseMatrix& b : blocks) size += static_cast<int>(b.rows());
  std::vector<Triplet> trip;
  int at = 0;
  for (const SparseMatrix& b : blocks) {
    for (int k = 0; k < b.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(b, k); it; ++it) {
        trip.emplace_back(at + static_cast<int>(it.row()), at + static_cast<int>(it.col()),
                          it.value());
      }
    }
    at += static_cast<int>(b.rows());
  }
  SparseMatrix out(size, size);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

// --- separator anchors -----------------------------------------------------

// For every inter-node edge, the midpoint anchors the splitting inequality is
// tight at: P = 1/2 R_i^(k) Rtilde + 1/2 R_j^(k) and
// p = 1/2 (R_i^(k) ttilde + t_i^(k) + t_j^(k)).
struct SeparatorAnchors {
  std::unordered_map<int, Matrix> P;  // edge index -> d x d
  std::unordered_map<int, Vector> p;  // edge index -> d
};

inline SeparatorAnchors compute_anchors(const PoseGraph& g, const PoseEstimate& xk) {
  SeparatorAnchors out;
  for (int e = 0; e < static_cast<int>(g.edges().size()); ++e) {
    const Measurement& m = g.edges()[e];
    if (m.intra()) continue;
    const auto ri = xk.blocks[m.src.robot].rot.block(m.src.pose);
    const auto rj = xk.blocks[m.dst.robot].rot.block(m.dst.pose);
    const Vector ti = xk.blocks[m.src.robot].t.col(m.src.pose);
    const Vector tj = xk.blocks[m.dst.robot].t.col(m.dst.pose);
    out.P[e] = 0.5 * ri * m.rot + 0.5 * rj;
    out.p[e] = 0.5 * (ri * m.trans + ti + tj);
  }
  return out;
}

// --- surrogate E -----------------------------------------------------------

// Edge-sum route: intra terms as in F, inter terms split against the anchors.
inline double surrogate_E_edges(const PoseGraph& g, const PoseEstimate& x,
                                const SeparatorAnchors& anchors) {
  double e_val = 0.0;
  for (int e = 0; e < static_cast<int>(g.edges().size()); ++e) {
    const Measurement& m = g.edges()[e];
    const auto ri = x.blocks[m.src.robot].rot.block(m.src.pose);
    const auto rj = x.blocks[m.dst.robot].rot.block(m.dst.pose);
    const Vector ti = x.blocks[m.src.robot].t.col(m.src.pose);
    const Vector tj = x.blocks[m.dst.robot].t.col(m.dst.pose);
    if (m.intra()) {
      e_val += 0.5 * m.kappa * (ri * m.rot - rj).squaredNorm();
      e_val += 0.5 * m.tau * (ri * m.trans + ti - tj).squaredNorm();
    } else {
      const Matrix& big_p = anchors.P.at(e);
      const Vector& small_p = anchors.p.at(e);
      e_val += m.kappa * (ri * m.rot - big_p).squaredNorm();
      e_val += m.tau * (ri * m.trans + ti - small_p).squaredNorm();
      e_val += m.kappa * (rj - big_p).squaredNorm();
      e_val += m.tau * (tj - small_p).squaredNorm();
    }
  }
  return e_val;
}

inline double surrogate_E_edges(const PoseGraph& g, const PoseEstimate& x,
                                const PoseEstimate& xk) {
  return surrogate_E_edges(g, x, compute_anchors(g, xk));
}

// Quadratic route: 1/2 <Omega dX, dX> + <grad F(Xk), dX> + F(Xk).
inline double surrogate_E_quadratic(const PoseGraph& g, const MajorantBlocks& maj,
                                    const PoseEstimate& x, const PoseEstimate& xk,
                                    const Matrix& grad_f_xk, double f_xk) {
  double val = f_xk;
  const BlockLayout layout(g);
  for (int r = 0; r < g.num_robots(); ++r) {
    const Matrix dx = x.blocks[r].flat() - xk.blocks[r].flat();
    val += 0.5 * quadratic_form(dx, maj.omega[r]);
    val += grad_f_xk.middleCols(layout.robot_col[r], layout.robot_cols[r])
               .cwiseProduct(dx)
               .sum();
  }
  return val;
}

// --- per-node surrogate G --------------------------------------------------

// Gbar^{a(k)}: robot a's share of F(X^(k)) under the surrogate split (full
// weight on intra terms, quarter weight on inter terms in both directions).
inline double gbar_node(const PoseGraph& g, int alpha, const PoseBlock& xa,
                        const SeparatorView& remote) {
  double val = 0.0;
  for (int e : g.incident_edges(alpha)) {
    const Measurement& m = g.edges()[e];
    const bool src_local = m.src.robot == alpha;
    const Matrix ri = src_local ? Matrix(xa.rot.block(m.src.pose)) : remote.rot(m.src);
    const Matrix rj = m.dst.robot == alpha ? Matrix(xa.rot.block(m.dst.pose))
                                           : remote.rot(m.dst);
    const Vector ti = src_local ? Vector(xa.t.col(m.src.pose)) : remote.t(m.src);
    const Vector tj = m.dst.robot == alpha ? Vector(xa.t.col(m.dst.pose))
                                           : remote.t(m.dst);
    const double w = m.intra() ? 0.5 : 0.25;
    val += w * m.kappa * (ri * m.rot - rj).squaredNorm();
    val += w * m.tau * (ri * m.trans + ti - tj).squaredNorm();
  }
  return val;
}

// G^a(X^a | anchor) = 1/2 <Gamma^a dX, dX> + <grad_a F(anchor), dX> + gbar.
// `anchor_flat` may be an ambient (extrapolated) point.
inline double surrogate_G_node(const Matrix& xa_flat, const Matrix& anchor_flat,
                               const SparseMatrix& gamma, const Matrix& grad_at_anchor,
                               double gbar) {
  const Matrix dx = xa_flat - anchor_flat;
  return 0.5 * quadratic_form(dx, gamma) + grad_at_anchor.cwiseProduct(dx).sum() + gbar;
}

}  // namespace mmpgo
