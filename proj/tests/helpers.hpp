#pragma once

// Shared fixtures for the test suite: random graph/estimate generators and an
// independently-constructed orthonormal tangent basis used as a projection
// oracle.

#include <mmpgo/graph.hpp>
#include <mmpgo/manifold.hpp>
#include <mmpgo/quadratic.hpp>

#include <random>
#include <vector>

namespace test_util {

using namespace mmpgo;

inline Vector random_vector(int d, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  Vector v(d);
  for (int i = 0; i < d; ++i) v(i) = gauss(rng);
  return v;
}

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = gauss(rng);
  return m;
}

inline Measurement random_measurement(const PoseId& src, const PoseId& dst, int d,
                                      std::mt19937_64& rng) {
  std::uniform_real_distribution<double> weight(0.5, 3.0);
  Measurement m;
  m.src = src;
  m.dst = dst;
  m.rot = random_rotation(d, rng);
  m.trans = random_vector(d, rng);
  m.kappa = weight(rng);
  m.tau = weight(rng);
  return m;
}

// Connected multi-robot graph: a global chain through all poses plus
// `extra` random edges (any pair, either direction).
inline PoseGraph random_graph(int d, const std::vector<int>& sizes, int extra,
                              std::mt19937_64& rng) {
  std::vector<PoseId> all;
  for (int r = 0; r < static_cast<int>(sizes.size()); ++r) {
    for (int p = 0; p < sizes[r]; ++p) all.push_back({r, p});
  }
  std::vector<Measurement> edges;
  for (size_t i = 0; i + 1 < all.size(); ++i) {
    edges.push_back(random_measurement(all[i], all[i + 1], d, rng));
  }
  std::uniform_int_distribution<size_t> pick(0, all.size() - 1);
  for (int e = 0; e < extra; ++e) {
    size_t i = pick(rng), j = pick(rng);
    if (i == j) continue;
    edges.push_back(random_measurement(all[i], all[j], d, rng));
  }
  return PoseGraph(d, sizes, std::move(edges));
}

inline PoseEstimate random_estimate(const PoseGraph& g, std::mt19937_64& rng,
                                    double t_scale = 1.0) {
  PoseEstimate x = PoseEstimate::identity(g);
  for (int r = 0; r < g.num_robots(); ++r) {
    for (int p = 0; p < g.num_poses(r); ++p) {
      x.blocks[r].t.col(p) = random_vector(g.d(), rng, t_scale);
      x.blocks[r].rot.block(p) = random_rotation(g.d(), rng);
    }
  }
  return x;
}

// Ground-truth-consistent graph: measurements computed exactly from a random
// estimate, so that estimate attains objective zero.
inline std::pair<PoseGraph, PoseEstimate> noiseless_graph(int d,
                                                          const std::vector<int>& sizes,
                                                          int extra,
                                                          std::mt19937_64& rng) {
  PoseGraph shape = random_graph(d, sizes, extra, rng);
  PoseEstimate truth = random_estimate(shape, rng);
  std::vector<Measurement> edges = shape.edges();
  for (Measurement& m : edges) {
    const Matrix ri = truth.blocks[m.src.robot].rot.block(m.src.pose);
    const Matrix rj = truth.blocks[m.dst.robot].rot.block(m.dst.pose);
    const Vector ti = truth.blocks[m.src.robot].t.col(m.src.pose);
    const Vector tj = truth.blocks[m.dst.robot].t.col(m.dst.pose);
    m.rot = ri.transpose() * rj;
    m.trans = ri.transpose() * (tj - ti);
  }
  return {PoseGraph(d, sizes, std::move(edges)), std::move(truth)};
}

// Orthonormal basis of the tangent space at a stack of rotations, built from
// first principles: R * S for S ranging over the normalized skew-symmetric
// basis of so(d), one set per block.
inline std::vector<Matrix> so_basis(int d) {
  std::vector<Matrix> out;
  for (int a = 0; a < d; ++a) {
    for (int b = a + 1; b < d; ++b) {
      Matrix s = Matrix::Zero(d, d);
      s(a, b) = 1.0 / std::sqrt(2.0);
      s(b, a) = -1.0 / std::sqrt(2.0);
      out.push_back(s);
    }
  }
  return out;
}

// Projects an ambient rotation-part gradient onto the tangent space via the
// explicit basis; the translation part passes through untouched.
inline Matrix project_rot_gradient_by_basis(const RotationBlock& rot, const Matrix& grad_rot) {
  const int d = rot.d;
  const std::vector<Matrix> basis = so_basis(d);
  Matrix out = Matrix::Zero(grad_rot.rows(), grad_rot.cols());
  for (int i = 0; i < rot.count(); ++i) {
    const Matrix g = grad_rot.block(0, d * i, d, d);
    for (const Matrix& s : basis) {
      const Matrix dir = rot.block(i) * s;  // orthonormal in Frobenius inner product
      out.block(0, d * i, d, d) += g.cwiseProduct(dir).sum() * dir;
    }
  }
  return out;
}

}  // namespace test_util
