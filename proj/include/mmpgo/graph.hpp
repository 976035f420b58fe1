#pragma once

// Multi-robot pose graph data model: robots, poses, intra-/inter-node
// measurement edges and the neighbor structure derived from them.

#include <mmpgo/core.hpp>
#include <mmpgo/manifold.hpp>

#include <algorithm>
#include <numeric>
#include <set>
#include <utility>
#include <vector>

namespace mmpgo {

struct PoseId {
  int robot = 0;
  int pose = 0;

  friend bool operator==(const PoseId&, const PoseId&) = default;
  friend auto operator<=>(const PoseId&, const PoseId&) = default;
};

// One relative SE(d) measurement from src to dst with isotropic weights
// kappa (rotation) and tau (translation).
struct Measurement {
  PoseId src;
  PoseId dst;
  Matrix rot;    // d x d, in SO(d)
  Vector trans;  // d
  double kappa = 1.0;
  double tau = 1.0;

  bool intra() const { return src.robot == dst.robot; }
};

// Immutable after construction. Edge order is preserved and used as the
// canonical accumulation order everywhere downstream.
class PoseGraph {
 public:
  PoseGraph(int d, std::vector<int> robot_sizes, std::vector<Measurement> edges)
      : d_(d), robot_sizes_(std::move(robot_sizes)), edges_(std::move(edges)) {
    validate();
    build_indexes();
  }

  int d() const { return d_; }
  int num_robots() const { return static_cast<int>(robot_sizes_.size()); }
  int num_poses(int robot) const { return robot_sizes_[robot]; }
  int total_poses() const {
    return std::accumulate(robot_sizes_.begin(), robot_sizes_.end(), 0);
  }
  const std::vector<int>& robot_sizes() const { return robot_sizes_; }
  const std::vector<Measurement>& edges() const { return edges_; }

  // Global pose index with robots laid out in order.
  int global_pose(const PoseId& id) const { return pose_offset_[id.robot] + id.pose; }
  int pose_offset(int robot) const { return pose_offset_[robot]; }

  const std::set<int>& neighbors_out(int robot) const { return n_minus_[robot]; }
  const std::set<int>& neighbors_in(int robot) const { return n_plus_[robot]; }

  // Indices into edges() of all edges touching the given robot.
  const std::vector<int>& incident_edges(int robot) const { return incident_[robot]; }

  // Poses of `owner` that some inter-node edge shares with `other`.
  std::set<int> separator_poses(int owner, int other) const {
    std::set<int> out;
    for (int e : incident_[owner]) {
      const Measurement& m = edges_[e];
      if (m.intra()) continue;
      if (m.src.robot == owner && m.dst.robot == other) out.insert(m.src.pose);
      if (m.dst.robot == owner && m.src.robot == other) out.insert(m.dst.pose);
    }
    return out;
  }

  // All poses of `owner` incident to any inter-node edge.
  std::set<int> separator_poses(int owner) const {
    std::set<int> out;
    for (int e : incident_[owner]) {
      const Measurement& m = edges_[e];
      if (m.intra()) continue;
      out.insert(m.src.robot == owner ? m.src.pose : m.dst.pose);
    }
    return out;
  }

 private:
  void validate() const {
    if (d_ != 2 && d_ != 3) throw InvalidGraph("PoseGraph: d must be 2 or 3");
    if (robot_sizes_.empty()) throw InvalidGraph("PoseGraph: no robots");
    for (int n : robot_sizes_)
      if (n <= 0) throw InvalidGraph("PoseGraph: robot with no poses");
    const int a = static_cast<int>(robot_sizes_.size());
    for (const Measurement& m : edges_) {
      if (m.src == m.dst) throw InvalidGraph("PoseGraph: self-measurement");
      if (m.src.robot < 0 || m.src.robot >= a || m.dst.robot < 0 || m.dst.robot >= a ||
          m.src.pose < 0 || m.src.pose >= robot_sizes_[m.src.robot] ||
          m.dst.pose < 0 || m.dst.pose >= robot_sizes_[m.dst.robot]) {
        throw InvalidGraph("PoseGraph: edge endpoint out of range");
      }
      if (m.rot.rows() != d_ || m.rot.cols() != d_ || m.trans.size() != d_) {
        throw DimensionMismatch("PoseGraph: measurement dimension mismatch");
      }
      if ((m.rot.transpose() * m.rot - Matrix::Identity(d_, d_)).norm() > 1e-9 ||
          m.rot.determinant() <= 0.0) {
        throw InvalidGraph("PoseGraph: measurement rotation not in SO(d)");
      }
      if (!(m.kappa > 0.0) || !(m.tau > 0.0)) {
        throw InvalidGraph("PoseGraph: weights must be positive");
      }
    }
    check_connectivity();
  }

  void check_connectivity() const {
    const int n = total_poses_raw();
    if (n == 1) return;
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    std::vector<int> offset(robot_sizes_.size(), 0);
    for (size_t r = 1; r < robot_sizes_.size(); ++r)
      offset[r] = offset[r - 1] + robot_sizes_[r - 1];
    for (const Measurement& m : edges_) {
      const int u = find(offset[m.src.robot] + m.src.pose);
      const int v = find(offset[m.dst.robot] + m.dst.pose);
      parent[u] = v;
    }
    const int root = find(0);
    for (int i = 1; i < n; ++i) {
      if (find(i) != root) {
        throw InvalidGraph("PoseGraph: union graph over poses is not connected");
      }
    }
  }

  int total_poses_raw() const {
    return std::accumulate(robot_sizes_.begin(), robot_sizes_.end(), 0);
  }

  void build_indexes() {
    const int a = num_robots();
    pose_offset_.assign(a, 0);
    for (int r = 1; r < a; ++r) pose_offset_[r] = pose_offset_[r - 1] + robot_sizes_[r - 1];
    n_minus_.assign(a, {});
    n_plus_.assign(a, {});
    incident_.assign(a, {});
    for (int e = 0; e < static_cast<int>(edges_.size()); ++e) {
      const Measurement& m = edges_[e];
      incident_[m.src.robot].push_back(e);
      if (!m.intra()) {
        incident_[m.dst.robot].push_back(e);
        n_minus_[m.src.robot].insert(m.dst.robot);
        n_plus_[m.dst.robot].insert(m.src.robot);
      }
    }
  }

  int d_;
  std::vector<int> robot_sizes_;
  std::vector<Measurement> edges_;
  std::vector<int> pose_offset_;
  std::vector<std::set<int>> n_minus_;
  std::vector<std::set<int>> n_plus_;
  std::vector<std::vector<int>> incident_;
};

inline std::pair<std::set<int>, std::set<int>> neighbor_sets(const PoseGraph& g,
                                                             int robot) {
  return {g.neighbors_out(robot), g.neighbors_in(robot)};
}

// One robot's stacked variable X^a = [t R].
struct PoseBlock {
  int robot = 0;
  Matrix t;          // d x n
  RotationBlock rot;  // d x (d*n)

  int num_poses() const { return static_cast<int>(t.cols()); }

  // [t R] as a single d x (d+1)n matrix, translations first.
  Matrix flat() const {
    Matrix out(t.rows(), t.cols() + rot.entries.cols());
    out << t, rot.entries;
    return out;
  }

  void set_flat(const Matrix& x) {
    const int n = num_poses();
    t = x.leftCols(n);
    rot.entries = x.rightCols(static_cast<Eigen::Index>(rot.d) * n);
  }
};

struct PoseEstimate {
  int d = 0;
  std::vector<PoseBlock> blocks;

  static PoseEstimate identity(const PoseGraph& g) {
    PoseEstimate x;
    x.d = g.d();
    for (int r = 0; r < g.num_robots(); ++r) {
      PoseBlock b;
      b.robot = r;
      const int n = g.num_poses(r);
      b.t = Matrix::Zero(g.d(), n);
      b.rot.d = g.d();
      b.rot.entries = Matrix::Identity(g.d(), g.d()).replicate(1, n);
      x.blocks.push_back(std::move(b));
    }
    return x;
  }

  bool conforms(const PoseGraph& g) const {
    if (d != g.d() || static_cast<int>(blocks.size()) != g.num_robots()) return false;
    for (int r = 0; r < g.num_robots(); ++r) {
      if (blocks[r].num_poses() != g.num_poses(r)) return false;
      if (blocks[r].rot.entries.cols() != static_cast<Eigen::Index>(d) * g.num_poses(r))
        return false;
    }
    return true;
  }

  // Global flattened X, robot blocks side by side, translations first within
  // each robot.
  Matrix flat() const {
    Eigen::Index cols = 0;
    for (const PoseBlock& b : blocks) cols += b.flat().cols();
    Matrix out(d, cols);
    Eigen::Index at = 0;
    for (const PoseBlock& b : blocks) {
      const Matrix f = b.flat();
      out.middleCols(at, f.cols()) = f;
      at += f.cols();
    }
    return out;
  }

  void set_flat(const PoseGraph& g, const Matrix& x) {
    Eigen::Index at = 0;
    for (PoseBlock& b : blocks) {
      const Eigen::Index w = static_cast<Eigen::Index>(d + 1) * b.num_poses();
      b.set_flat(x.middleCols(at, w));
      at += w;
    }
    (void)g;
  }

  double distance(const PoseEstimate& other) const {
    double s = 0.0;
    for (size_t r = 0; r < blocks.size(); ++r) {
      s += (blocks[r].t - other.blocks[r].t).squaredNorm();
      s += (blocks[r].rot.entries - other.blocks[r].rot.entries).squaredNorm();
    }
    return std::sqrt(s);
  }
};

// Column offsets of robot blocks inside the flattened X / data-matrix layout:
// each robot occupies (d+1)*n_a columns, translations first then rotations.
struct BlockLayout {
  int d = 0;
  std::vector<int> robot_col;   // first column of each robot block
  std::vector<int> robot_cols;  // width of each robot block
  int total_cols = 0;

  explicit BlockLayout(const PoseGraph& g) : d(g.d()) {
    int at = 0;
    for (int r = 0; r < g.num_robots(); ++r) {
      robot_col.push_back(at);
      robot_cols.push_back((d + 1) * g.num_poses(r));
      at += robot_cols.back();
    }
    total_cols = at;
  }

  int t_col(const PoseGraph& g, const PoseId& id) const {
    (void)g;
    return robot_col[id.robot] + id.pose;
  }
  int rot_col(const PoseGraph& g, const PoseId& id) const {
    return robot_col[id.robot] + g.num_poses(id.robot) + d * id.pose;
  }
  // Offsets local to a robot block.
  int local_t_col(const PoseGraph& g, int robot, int pose) const {
    (void)g;
    (void)robot;
    return pose;
  }
  int local_rot_col(const PoseGraph& g, int robot, int pose) const {
    return g.num_poses(robot) + d * pose;
  }
};

// Regroup a single-robot graph into `parts` robots. The contiguous strategy
// assigns pose k to robot floor(k * parts / n); every edge is preserved and
// reclassified, so the objective of any estimate is unchanged.
inline PoseGraph partition(const PoseGraph& mono, int parts) {
  if (mono.num_robots() != 1) throw InvalidPartition("partition: input must have A=1");
  const int n = mono.num_poses(0);
  if (parts < 1 || parts > n) throw InvalidPartition("partition: parts out of range");
  std::vector<int> owner(n), local(n);
  std::vector<int> sizes(parts, 0);
  for (int k = 0; k < n; ++k) {
    const int r = static_cast<int>((static_cast<long long>(k) * parts) / n);
    owner[k] = r;
    local[k] = sizes[r]++;
  }
  std::vector<Measurement> edges = mono.edges();
  for (Measurement& m : edges) {
    m.src = {owner[m.src.pose], local[m.src.pose]};
    m.dst = {owner[m.dst.pose], local[m.dst.pose]};
  }
  return PoseGraph(mono.d(), std::move(sizes), std::move(edges));
}

// Collapse a multi-robot graph back to A=1 with the same global pose order.
inline PoseGraph merge_to_single(const PoseGraph& g) {
  std::vector<Measurement> edges = g.edges();
  for (Measurement& m : edges) {
    m.src = {0, g.global_pose(m.src)};
    m.dst = {0, g.global_pose(m.dst)};
  }
  return PoseGraph(g.d(), {g.total_poses()}, std::move(edges));
}

// Re-split an estimate to a partitioned graph's block structure (same global
// pose order on both sides).
inline PoseEstimate redistribute(const PoseGraph& from, const PoseEstimate& x,
                                 const PoseGraph& to) {
  if (from.total_poses() != to.total_poses() || from.d() != to.d()) {
    throw DimensionMismatch("redistribute: graphs disagree");
  }
  const int d = from.d();
  Matrix t(d, from.total_poses());
  Matrix rot(d, static_cast<Eigen::Index>(d) * from.total_poses());
  for (int r = 0; r < from.num_robots(); ++r) {
    const int off = from.pose_offset(r);
    const int n = from.num_poses(r);
    t.middleCols(off, n) = x.blocks[r].t;
    rot.middleCols(static_cast<Eigen::Index>(d) * off, static_cast<Eigen::Index>(d) * n) =
        x.blocks[r].rot.entries;
  }
  PoseEstimate out = PoseEstimate::identity(to);
  for (int r = 0; r < to.num_robots(); ++r) {
    const int off = to.pose_offset(r);
    const int n = to.num_poses(r);
    out.blocks[r].t = t.middleCols(off, n);
    out.blocks[r].rot.entries =
        rot.middleCols(static_cast<Eigen::Index>(d) * off, static_cast<Eigen::Index>(d) * n);
  }
  return out;
}

}  // namespace mmpgo
