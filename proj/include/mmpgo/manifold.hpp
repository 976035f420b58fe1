#pragma once

// Dimension-generic primitives for SO(d)/SE(d) with d in {2, 3}: closest-rotation
// projection, the block-diagonal symmetrization operator, and the conversion of
// Euclidean gradients to Riemannian gradients on R^{d x n} x SO(d)^n.

#include <mmpgo/core.hpp>

#include <cmath>
#include <random>

namespace mmpgo {

// A stack of m rotations stored side by side as a d x (d*m) matrix.
struct RotationBlock {
  int d = 0;
  Matrix entries;  // d x (d*m)

  int count() const { return d > 0 ? static_cast<int>(entries.cols()) / d : 0; }

  Eigen::Block<Matrix> block(int i) { return entries.block(0, d * i, d, d); }
  Eigen::Block<const Matrix> block(int i) const {
    return entries.block(0, d * i, d, d);
  }
};

// Tangent vector at a point of R^{d x n} x SO(d)^n, stored in the same layout
// as the stacked variable it perturbs.
struct TangentBlock {
  Matrix t;    // d x m
  Matrix rot;  // d x (d*m)

  double norm() const { return std::sqrt(t.squaredNorm() + rot.squaredNorm()); }
};

// Closest special-orthogonal factor of M in the Frobenius sense.
// When det(U V^T) < 0 the singular vector of the smallest singular value is
// negated, tie-breaking by lowest index on equal singular values. Inputs of
// rank <= d-2 (both smallest singular values vanish) have no meaningful
// nearest rotation and are rejected.
inline Matrix project_to_rotation(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw DimensionMismatch("project_to_rotation: matrix must be square");
  }
  const int d = static_cast<int>(m.rows());
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix u = svd.matrixU();
  const Matrix& v = svd.matrixV();
  const Vector& sigma = svd.singularValues();
  const double scale = std::max(1.0, sigma(0));
  if (d >= 2 && sigma(d - 2) <= 1e-12 * scale) {
    throw DegenerateProjection(
        "project_to_rotation: two vanishing singular values, projection is "
        "not unique");
  }
  if ((u * v.transpose()).determinant() < 0.0) {
    int j = d - 1;
    while (j > 0 && sigma(j - 1) - sigma(j) <= 1e-12 * scale) --j;
    u.col(j) *= -1.0;
  }
  return u * v.transpose();
}

// SymBlockDiag_d(Z) = 1/2 * BlockDiag_d(Z + Z^T). Off-block-diagonal entries
// of the result are zero.
inline Matrix sym_block_diag(const Matrix& z, int d) {
  if (z.rows() != z.cols() || d <= 0 || z.rows() % d != 0) {
    throw DimensionMismatch("sym_block_diag: size must be a square multiple of d");
  }
  const int m = static_cast<int>(z.rows()) / d;
  Matrix out = Matrix::Zero(z.rows(), z.cols());
  for (int i = 0; i < m; ++i) {
    const Matrix zi = z.block(d * i, d * i, d, d);
    out.block(d * i, d * i, d, d) = 0.5 * (zi + zi.transpose());
  }
  return out;
}

// Euclidean-to-Riemannian gradient conversion at (t, R). The translation part
// passes through; the rotation part is
//   grad_R = nabla_R - R * SymBlockDiag_d(R^T nabla_R),
// evaluated blockwise.
inline TangentBlock riemannian_gradient(const RotationBlock& rotation,
                                        const Matrix& euclid_grad_t,
                                        const Matrix& euclid_grad_rot) {
  const int d = rotation.d;
  const int m = rotation.count();
  if (euclid_grad_rot.rows() != d ||
      euclid_grad_rot.cols() != static_cast<Eigen::Index>(d) * m ||
      euclid_grad_t.rows() != d || euclid_grad_t.cols() != m) {
    throw DimensionMismatch("riemannian_gradient: gradient layout mismatch");
  }
  TangentBlock out;
  out.t = euclid_grad_t;
  out.rot.resize(d, static_cast<Eigen::Index>(d) * m);
  for (int i = 0; i < m; ++i) {
    const auto r = rotation.block(i);
    const Matrix g = euclid_grad_rot.block(0, d * i, d, d);
    const Matrix rtg = r.transpose() * g;
    out.rot.block(0, d * i, d, d) = g - r * (0.5 * (rtg + rtg.transpose()));
  }
  return out;
}

// Projection retraction: translations move linearly, each rotation block is
// re-projected onto SO(d) after the ambient step.
inline void retract_in_place(Matrix& t, RotationBlock& rotation,
                             const TangentBlock& step, double scale) {
  t.noalias() += scale * step.t;
  const int d = rotation.d;
  for (int i = 0; i < rotation.count(); ++i) {
    rotation.block(i) =
        project_to_rotation(rotation.block(i) + scale * step.rot.block(0, d * i, d, d));
  }
}

inline Matrix random_rotation(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  while (true) {
    Matrix m(d, d);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) m(r, c) = gauss(rng);
    try {
      return project_to_rotation(m);
    } catch (const DegenerateProjection&) {
      // resample
    }
  }
}

// Rotation by `angle` about a (unit) axis for d = 3, or in the plane for d = 2.
inline Matrix axis_angle_rotation(int d, const Vector& axis, double angle) {
  if (d == 2) {
    Matrix r(2, 2);
    r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    return r;
  }
  Eigen::Vector3d a = axis;
  const double n = a.norm();
  if (n > 0.0) a /= n;
  return Eigen::AngleAxisd(angle, a).toRotationMatrix();
}

inline double rotation_angle(const Matrix& r) {
  const int d = static_cast<int>(r.rows());
  if (d == 2) return std::atan2(r(1, 0), r(0, 0));
  // atan2 form stays accurate near the identity where acos of the trace
  // loses half the significant digits
  const double c = (r.trace() - 1.0) / 2.0;
  const double s = (r - r.transpose()).norm() / (2.0 * std::sqrt(2.0));
  return std::atan2(s, c);
}

}  // namespace mmpgo
