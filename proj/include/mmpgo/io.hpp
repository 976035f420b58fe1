#pragma once

// Dataset I/O and evaluation helpers: g2o text format (SE2 and SE3:QUAT),
// the synthetic cube dataset, per-iteration CSV traces, and gauge-aligned
// RMSE against ground truth.

#include <mmpgo/core.hpp>
#include <mmpgo/graph.hpp>
#include <mmpgo/manifold.hpp>
#include <mmpgo/mm_solvers.hpp>

#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace mmpgo {

struct ParsedDataset {
  int d = 0;
  std::vector<long long> ids;  // original vertex ids, in block order
  PoseGraph graph;             // single-robot graph
  PoseEstimate initial;        // vertex estimates from the file
  std::vector<std::string> warnings;
};

namespace detail {

inline double parse_double(const std::string& tok, int line_no) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": bad number '" + tok + "'");
  }
  if (used != tok.size()) {
    throw ParseError("line " + std::to_string(line_no) + ": bad number '" + tok + "'");
  }
  return v;
}

inline long long parse_int(const std::string& tok, int line_no) {
  size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(tok, &used);
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": bad integer '" + tok + "'");
  }
  if (used != tok.size()) {
    throw ParseError("line " + std::to_string(line_no) + ": bad integer '" + tok + "'");
  }
  return v;
}

inline Matrix rotation_from_quat(double qx, double qy, double qz, double qw) {
  Eigen::Quaterniond q(qw, qx, qy, qz);
  q.normalize();
  return q.toRotationMatrix();
}

inline Matrix rotation_2d(double theta) {
  Matrix r(2, 2);
  r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return r;
}

// If the file carries both directions of an inter-pose measurement with
// different weights, average them; the solvers assume symmetric weights.
inline void symmetrize_weights(std::vector<Measurement>& edges,
                               std::vector<std::string>& warnings) {
  std::map<std::pair<int, int>, std::vector<size_t>> by_pair;
  for (size_t e = 0; e < edges.size(); ++e) {
    const int u = edges[e].src.pose;
    const int v = edges[e].dst.pose;
    by_pair[{std::min(u, v), std::max(u, v)}].push_back(e);
  }
  for (const auto& [pair, idx] : by_pair) {
    if (idx.size() != 2) continue;
    Measurement& a = edges[idx[0]];
    Measurement& b = edges[idx[1]];
    if (a.src.pose != b.dst.pose || a.dst.pose != b.src.pose) continue;
    if (a.kappa == b.kappa && a.tau == b.tau) continue;
    const double kappa = 0.5 * (a.kappa + b.kappa);
    const double tau = 0.5 * (a.tau + b.tau);
    a.kappa = b.kappa = kappa;
    a.tau = b.tau = tau;
    warnings.push_back("asymmetric weights between poses " + std::to_string(pair.first) +
                       " and " + std::to_string(pair.second) + " averaged");
  }
}

}  // namespace detail

inline ParsedDataset parse_g2o(std::istream& in) {
  struct Vertex {
    Vector t;
    Matrix rot;
  };
  std::map<long long, Vertex> vertices;
  struct RawEdge {
    long long src, dst;
    Matrix rot;
    Vector trans;
    double kappa, tau;
  };
  std::vector<RawEdge> raw;
  std::vector<std::string> warnings;
  int d = 0;

  auto check_dim = [&](int want, int line_no) {
    if (d == 0) d = want;
    if (d != want) {
      throw DimensionMismatch("line " + std::to_string(line_no) +
                              ": mixed 2D/3D entries in g2o file");
    }
  };

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag.empty() || tag[0] == '#') continue;
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    auto want = [&](size_t n) {
      if (tok.size() != n) {
        throw ParseError("line " + std::to_string(line_no) + ": " + tag + " expects " +
                         std::to_string(n) + " fields, got " + std::to_string(tok.size()));
      }
    };

    if (tag == "VERTEX_SE2") {
      check_dim(2, line_no);
      want(4);
      const long long id = detail::parse_int(tok[0], line_no);
      Vertex v;
      v.t = Vector(2);
      v.t << detail::parse_double(tok[1], line_no), detail::parse_double(tok[2], line_no);
      v.rot = detail::rotation_2d(detail::parse_double(tok[3], line_no));
      vertices[id] = std::move(v);
    } else if (tag == "VERTEX_SE3:QUAT") {
      check_dim(3, line_no);
      want(8);
      const long long id = detail::parse_int(tok[0], line_no);
      Vertex v;
      v.t = Vector(3);
      v.t << detail::parse_double(tok[1], line_no), detail::parse_double(tok[2], line_no),
          detail::parse_double(tok[3], line_no);
      v.rot = detail::rotation_from_quat(
          detail::parse_double(tok[4], line_no), detail::parse_double(tok[5], line_no),
          detail::parse_double(tok[6], line_no), detail::parse_double(tok[7], line_no));
      vertices[id] = std::move(v);
    } else if (tag == "EDGE_SE2") {
      check_dim(2, line_no);
      want(11);
      RawEdge e;
      e.src = detail::parse_int(tok[0], line_no);
      e.dst = detail::parse_int(tok[1], line_no);
      e.trans = Vector(2);
      e.trans << detail::parse_double(tok[2], line_no),
          detail::parse_double(tok[3], line_no);
      e.rot = detail::rotation_2d(detail::parse_double(tok[4], line_no));
      // info upper triangle I11 I12 I13 I22 I23 I33
      const double i11 = detail::parse_double(tok[5], line_no);
      const double i22 = detail::parse_double(tok[8], line_no);
      const double i33 = detail::parse_double(tok[10], line_no);
      e.tau = 0.5 * (i11 + i22);
      e.kappa = i33;
      raw.push_back(std::move(e));
    } else if (tag == "EDGE_SE3:QUAT") {
      check_dim(3, line_no);
      want(30);
      RawEdge e;
      e.src = detail::parse_int(tok[0], line_no);
      e.dst = detail::parse_int(tok[1], line_no);
      e.trans = Vector(3);
      e.trans << detail::parse_double(tok[2], line_no),
          detail::parse_double(tok[3], line_no), detail::parse_double(tok[4], line_no);
      e.rot = detail::rotation_from_quat(
          detail::parse_double(tok[5], line_no), detail::parse_double(tok[6], line_no),
          detail::parse_double(tok[7], line_no), detail::parse_double(tok[8], line_no));
      // 6x6 info upper triangle, translation first: diagonal at 0, 6, 11, 15, 18, 20
      const double t0 = detail::parse_double(tok[9 + 0], line_no);
      const double t1 = detail::parse_double(tok[9 + 6], line_no);
      const double t2 = detail::parse_double(tok[9 + 11], line_no);
      const double r0 = detail::parse_double(tok[9 + 15], line_no);
      const double r1 = detail::parse_double(tok[9 + 18], line_no);
      const double r2 = detail::parse_double(tok[9 + 20], line_no);
      e.tau = (t0 + t1 + t2) / 3.0;
      e.kappa = (r0 + r1 + r2) / 3.0;
      raw.push_back(std::move(e));
    } else if (tag == "FIX") {
      continue;  // anchoring is handled by the algorithms, not the file
    } else {
      throw ParseError("line " + std::to_string(line_no) + ": unknown tag '" + tag + "'");
    }
  }

  if (vertices.empty()) throw ParseError("g2o file contains no vertices");

  std::map<long long, int> index;
  std::vector<long long> ids;
  for (const auto& [id, v] : vertices) {
    index[id] = static_cast<int>(ids.size());
    ids.push_back(id);
  }

  std::vector<Measurement> edges;
  edges.reserve(raw.size());
  for (const RawEdge& e : raw) {
    if (!index.count(e.src) || !index.count(e.dst)) {
      throw ParseError("edge references unknown vertex id " +
                       std::to_string(index.count(e.src) ? e.dst : e.src));
    }
    Measurement m;
    m.src = {0, index[e.src]};
    m.dst = {0, index[e.dst]};
    m.rot = e.rot;
    m.trans = e.trans;
    m.kappa = e.kappa;
    m.tau = e.tau;
    edges.push_back(std::move(m));
  }
  detail::symmetrize_weights(edges, warnings);

  const int n = static_cast<int>(ids.size());
  PoseGraph graph(d, {n}, std::move(edges));
  PoseEstimate initial = PoseEstimate::identity(graph);
  for (const auto& [id, v] : vertices) {
    const int i = index[id];
    initial.blocks[0].t.col(i) = v.t;
    initial.blocks[0].rot.block(i) = v.rot;
  }
  return {d, std::move(ids), std::move(graph), std::move(initial), std::move(warnings)};
}

inline ParsedDataset parse_g2o_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open g2o file: " + path);
  return parse_g2o(in);
}

namespace detail {

inline std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Writes a single-robot graph plus vertex estimates. Information matrices are
// emitted as diag(tau,...,kappa,...), which reparses to the same (kappa, tau).
inline void emit_g2o(std::ostream& out, const PoseGraph& g, const PoseEstimate& x,
                     const std::vector<long long>* ids = nullptr) {
  if (g.num_robots() != 1) throw InvalidParameter("emit_g2o: expects a single-robot graph");
  const int d = g.d();
  const int n = g.num_poses(0);
  auto vid = [&](int i) { return ids ? (*ids)[i] : static_cast<long long>(i); };
  for (int i = 0; i < n; ++i) {
    if (d == 2) {
      const Matrix r = x.blocks[0].rot.block(i);
      out << "VERTEX_SE2 " << vid(i) << ' ' << detail::fmt_g(x.blocks[0].t(0, i)) << ' '
          << detail::fmt_g(x.blocks[0].t(1, i)) << ' '
          << detail::fmt_g(std::atan2(r(1, 0), r(0, 0))) << '\n';
    } else {
      const Eigen::Quaterniond q(Eigen::Matrix3d(x.blocks[0].rot.block(i)));
      out << "VERTEX_SE3:QUAT " << vid(i);
      for (int c = 0; c < 3; ++c) out << ' ' << detail::fmt_g(x.blocks[0].t(c, i));
      out << ' ' << detail::fmt_g(q.x()) << ' ' << detail::fmt_g(q.y()) << ' '
          << detail::fmt_g(q.z()) << ' ' << detail::fmt_g(q.w()) << '\n';
    }
  }
  for (const Measurement& m : g.edges()) {
    if (d == 2) {
      out << "EDGE_SE2 " << vid(m.src.pose) << ' ' << vid(m.dst.pose) << ' '
          << detail::fmt_g(m.trans(0)) << ' ' << detail::fmt_g(m.trans(1)) << ' '
          << detail::fmt_g(std::atan2(m.rot(1, 0), m.rot(0, 0)));
      // I11 I12 I13 I22 I23 I33
      out << ' ' << detail::fmt_g(m.tau) << " 0 0 " << detail::fmt_g(m.tau) << " 0 "
          << detail::fmt_g(m.kappa) << '\n';
    } else {
      const Eigen::Quaterniond q((Eigen::Matrix3d(m.rot)));
      out << "EDGE_SE3:QUAT " << vid(m.src.pose) << ' ' << vid(m.dst.pose);
      for (int c = 0; c < 3; ++c) out << ' ' << detail::fmt_g(m.trans(c));
      out << ' ' << detail::fmt_g(q.x()) << ' ' << detail::fmt_g(q.y()) << ' '
          << detail::fmt_g(q.z()) << ' ' << detail::fmt_g(q.w());
      // upper triangle of diag(tau, tau, tau, kappa, kappa, kappa)
      const double diag[6] = {m.tau, m.tau, m.tau, m.kappa, m.kappa, m.kappa};
      for (int r = 0; r < 6; ++r) {
        for (int c = r; c < 6; ++c) {
          out << ' ' << (r == c ? detail::fmt_g(diag[r]) : std::string("0"));
        }
      }
      out << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic cube dataset

struct CubeConfig {
  int grid = 12;             // grid nodes per side
  double side_length = 1.0;  // grid spacing in meters
  double loop_probability = 0.1;
  double sigma_t = 0.02;     // translation noise std dev, meters
  double sigma_r = 0.02;     // rotation noise std dev, radians
  uint64_t seed = 0;
};

struct CubeDataset {
  PoseGraph graph;      // single robot
  PoseEstimate truth;
};

// A path of round(25 g^3 / 12) poses along the edges of a g x g x g grid:
// a seeded random walk that prefers unvisited grid nodes, with odometry
// between consecutive poses and loop closures (probability
// loop_probability) between non-sequential poses within one grid spacing.
// Weights: kappa = 1/sigma_r^2, tau = 1/sigma_t^2 (1.0 when the sigma is 0).
inline CubeDataset generate_cube(const CubeConfig& cfg) {
  if (cfg.grid < 2) throw InvalidParameter("generate_cube: grid must be >= 2");
  if (cfg.sigma_t < 0 || cfg.sigma_r < 0 || cfg.loop_probability < 0 ||
      cfg.loop_probability > 1) {
    throw InvalidParameter("generate_cube: invalid noise or loop parameters");
  }
  const int g = cfg.grid;
  const long long cells = static_cast<long long>(g) * g * g;
  const int n = static_cast<int>(std::llround(25.0 * static_cast<double>(cells) / 12.0));
  std::mt19937_64 rng(cfg.seed);

  // Random walk over grid nodes.
  std::vector<std::array<int, 3>> node(n);
  std::vector<char> visited(cells, 0);
  auto cell_index = [&](const std::array<int, 3>& c) {
    return (static_cast<long long>(c[0]) * g + c[1]) * g + c[2];
  };
  std::array<int, 3> at = {0, 0, 0};
  visited[cell_index(at)] = 1;
  node[0] = at;
  const int dirs[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                          {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (int k = 1; k < n; ++k) {
    std::vector<std::array<int, 3>> fresh, any;
    for (const auto& dmove : dirs) {
      std::array<int, 3> c = {at[0] + dmove[0], at[1] + dmove[1], at[2] + dmove[2]};
      if (c[0] < 0 || c[0] >= g || c[1] < 0 || c[1] >= g || c[2] < 0 || c[2] >= g) continue;
      any.push_back(c);
      if (!visited[cell_index(c)]) fresh.push_back(c);
    }
    auto& pool = fresh.empty() ? any : fresh;
    at = pool[std::uniform_int_distribution<size_t>(0, pool.size() - 1)(rng)];
    visited[cell_index(at)] = 1;
    node[k] = at;
  }

  // Ground truth: positions on the grid, random orientations.
  PoseEstimate truth;
  truth.d = 3;
  PoseBlock b;
  b.robot = 0;
  b.t = Matrix(3, n);
  b.rot.d = 3;
  b.rot.entries = Matrix(3, 3 * static_cast<Eigen::Index>(n));
  for (int k = 0; k < n; ++k) {
    b.t.col(k) = cfg.side_length * Vector(Eigen::Vector3d(node[k][0], node[k][1], node[k][2]));
    b.rot.block(k) = random_rotation(3, rng);
  }
  truth.blocks.push_back(std::move(b));
  const PoseBlock& tb = truth.blocks[0];

  const double kappa = cfg.sigma_r > 0 ? 1.0 / (cfg.sigma_r * cfg.sigma_r) : 1.0;
  const double tau = cfg.sigma_t > 0 ? 1.0 / (cfg.sigma_t * cfg.sigma_t) : 1.0;
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto measure = [&](int i, int j) {
    const Matrix ri = tb.rot.block(i);
    Measurement m;
    m.src = {0, i};
    m.dst = {0, j};
    m.trans = ri.transpose() * (tb.t.col(j) - tb.t.col(i));
    if (cfg.sigma_t > 0) {
      for (int c = 0; c < 3; ++c) m.trans(c) += cfg.sigma_t * gauss(rng);
    }
    Matrix noise = Matrix::Identity(3, 3);
    if (cfg.sigma_r > 0) {
      Vector axis(3);
      do {
        axis << gauss(rng), gauss(rng), gauss(rng);
      } while (axis.norm() < 1e-12);
      axis.normalize();
      noise = axis_angle_rotation(3, axis, cfg.sigma_r * gauss(rng));
    }
    m.rot = ri.transpose() * tb.rot.block(j) * noise;
    m.kappa = kappa;
    m.tau = tau;
    return m;
  };

  std::vector<Measurement> edges;
  for (int k = 0; k + 1 < n; ++k) edges.push_back(measure(k, k + 1));

  // Loop-closure candidates: later poses within one grid spacing, found via
  // a bucket per grid node.
  std::vector<std::vector<int>> at_cell(cells);
  for (int k = 0; k < n; ++k) at_cell[cell_index(node[k])].push_back(k);
  std::bernoulli_distribution accept(cfg.loop_probability);
  for (int i = 0; i < n; ++i) {
    for (const auto& dmove :
         {std::array<int, 3>{0, 0, 0}, std::array<int, 3>{1, 0, 0},
          std::array<int, 3>{-1, 0, 0}, std::array<int, 3>{0, 1, 0},
          std::array<int, 3>{0, -1, 0}, std::array<int, 3>{0, 0, 1},
          std::array<int, 3>{0, 0, -1}}) {
      std::array<int, 3> c = {node[i][0] + dmove[0], node[i][1] + dmove[1],
                              node[i][2] + dmove[2]};
      if (c[0] < 0 || c[0] >= g || c[1] < 0 || c[1] >= g || c[2] < 0 || c[2] >= g) continue;
      for (int j : at_cell[cell_index(c)]) {
        if (j <= i + 1) continue;  // sequential pairs are odometry
        if (accept(rng)) edges.push_back(measure(i, j));
      }
    }
  }

  PoseGraph graph(3, {n}, std::move(edges));
  return {std::move(graph), std::move(truth)};
}

// ---------------------------------------------------------------------------
// Per-iteration trace CSV

inline void emit_csv(std::ostream& out, const std::vector<RunRecord>& records) {
  out << "k,F,grad_norm,wall_ms,bytes\n";
  for (const RunRecord& r : records) {
    out << r.k << ',' << detail::fmt_g(r.f) << ',' << detail::fmt_g(r.grad_norm) << ','
        << detail::fmt_g(r.wall_ms) << ',' << r.bytes << '\n';
  }
}

inline std::vector<RunRecord> parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "k,F,grad_norm,wall_ms,bytes") {
    throw ParseError("trace CSV: bad or missing header");
  }
  std::vector<RunRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; std::getline(ls, t, ',');) tok.push_back(t);
    if (tok.size() != 5) {
      throw ParseError("trace CSV line " + std::to_string(line_no) + ": expected 5 fields");
    }
    RunRecord r;
    r.k = static_cast<int>(detail::parse_int(tok[0], line_no));
    r.f = detail::parse_double(tok[1], line_no);
    r.grad_norm = detail::parse_double(tok[2], line_no);
    r.wall_ms = detail::parse_double(tok[3], line_no);
    r.bytes = static_cast<unsigned long long>(detail::parse_int(tok[4], line_no));
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gauge alignment and RMSE

struct AlignmentError {
  double rot_rmse = 0.0;    // radians
  double trans_rmse = 0.0;  // meters
};

// Finds the global SE(d) transform minimizing position error (orthogonal
// Procrustes on pose positions; rotation averaging as fallback when the
// positions are degenerate), then reports rotation-angle and translation
// RMSE of g * est against truth.
inline AlignmentError align_and_rmse(const PoseEstimate& est, const PoseEstimate& truth) {
  if (est.blocks.size() != truth.blocks.size() || est.d != truth.d) {
    throw DimensionMismatch("align_and_rmse: estimates disagree in layout");
  }
  const int d = est.d;
  int n = 0;
  for (const PoseBlock& b : est.blocks) n += b.num_poses();

  Matrix pe(d, n), pt(d, n);
  {
    int at = 0;
    for (size_t r = 0; r < est.blocks.size(); ++r) {
      const int m = est.blocks[r].num_poses();
      if (truth.blocks[r].num_poses() != m) {
        throw DimensionMismatch("align_and_rmse: estimates disagree in layout");
      }
      pe.middleCols(at, m) = est.blocks[r].t;
      pt.middleCols(at, m) = truth.blocks[r].t;
      at += m;
    }
  }
  const Vector ce = pe.rowwise().mean();
  const Vector ct = pt.rowwise().mean();
  const Matrix cov = (pt.colwise() - ct) * (pe.colwise() - ce).transpose();

  Matrix s;
  if (n >= 2 && cov.norm() > 1e-12) {
    s = project_to_rotation(cov);
  } else {
    Matrix acc = Matrix::Zero(d, d);
    for (size_t r = 0; r < est.blocks.size(); ++r) {
      for (int i = 0; i < est.blocks[r].num_poses(); ++i) {
        acc += truth.blocks[r].rot.block(i) * est.blocks[r].rot.block(i).transpose();
      }
    }
    s = project_to_rotation(acc);
  }
  const Vector u = ct - s * ce;

  double rot_sq = 0.0, trans_sq = 0.0;
  for (size_t r = 0; r < est.blocks.size(); ++r) {
    for (int i = 0; i < est.blocks[r].num_poses(); ++i) {
      const double ang = rotation_angle(
          Matrix(truth.blocks[r].rot.block(i).transpose() * s * est.blocks[r].rot.block(i)));
      rot_sq += ang * ang;
      trans_sq += (s * est.blocks[r].t.col(i) + u - truth.blocks[r].t.col(i)).squaredNorm();
    }
  }
  return {std::sqrt(rot_sq / n), std::sqrt(trans_sq / n)};
}

}  // namespace mmpgo
