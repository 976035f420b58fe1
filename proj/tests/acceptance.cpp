// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criterion 11 is skipped when the public benchmark files are not
// present next to the working directory.

#include <mmpgo/bench.hpp>
#include <mmpgo/chordal.hpp>
#include <mmpgo/io.hpp>
#include <mmpgo/mm_solvers.hpp>
#include <mmpgo/quadratic.hpp>
#include <mmpgo/runtime.hpp>

#include "helpers.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

using namespace mmpgo;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("%s criterion %2d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
  if (!pass) ++g_failures;
}

void skip(int criterion, const std::string& detail) {
  std::printf("SKIP criterion %2d: %s\n", criterion, detail.c_str());
}

// Independent evaluation of the gradient of the surrogate upper bound at its
// own anchor, straight from the per-edge calculus (no shared code with the
// library's gradient routines).
Matrix surrogate_gradient_at_anchor(const PoseGraph& g, const PoseEstimate& xk) {
  const int d = g.d();
  const BlockLayout layout(g);
  Matrix grad = Matrix::Zero(d, layout.total_cols);
  auto tcol = [&](const PoseId& id) { return grad.col(layout.t_col(g, id)); };
  auto rblk = [&](const PoseId& id) {
    return grad.block(0, layout.rot_col(g, id), d, d);
  };
  for (const Measurement& m : g.edges()) {
    const Matrix ri = xk.blocks[m.src.robot].rot.block(m.src.pose);
    const Matrix rj = xk.blocks[m.dst.robot].rot.block(m.dst.pose);
    const Vector ti = xk.blocks[m.src.robot].t.col(m.src.pose);
    const Vector tj = xk.blocks[m.dst.robot].t.col(m.dst.pose);
    if (m.intra()) {
      const Matrix rr = ri * m.rot - rj;
      const Vector rt = ri * m.trans + ti - tj;
      rblk(m.src) += m.kappa * rr * m.rot.transpose() + m.tau * rt * m.trans.transpose();
      tcol(m.src) += m.tau * rt;
      rblk(m.dst) -= m.kappa * rr;
      tcol(m.dst) -= m.tau * rt;
    } else {
      const Matrix big_p = 0.5 * ri * m.rot + 0.5 * rj;
      const Vector small_p = 0.5 * (ri * m.trans + ti + tj);
      const Matrix rr = ri * m.rot - big_p;
      const Vector rt = ri * m.trans + ti - small_p;
      rblk(m.src) +=
          2.0 * m.kappa * rr * m.rot.transpose() + 2.0 * m.tau * rt * m.trans.transpose();
      tcol(m.src) += 2.0 * m.tau * rt;
      rblk(m.dst) += 2.0 * m.kappa * (rj - big_p);
      tcol(m.dst) += 2.0 * m.tau * (tj - small_p);
    }
  }
  return grad;
}

PoseGraph random_multi_graph(std::mt19937_64& rng) {
  const int d = rng() % 2 == 0 ? 2 : 3;
  const int a = 1 + static_cast<int>(rng() % 4);
  const int n = std::max(a, 4 + static_cast<int>(rng() % 27));
  std::vector<int> sizes(a, 0);
  for (int p = 0; p < n; ++p) sizes[(p * a) / n]++;
  return test_util::random_graph(d, sizes, 2 + static_cast<int>(rng() % 12), rng);
}

struct CubeMini {
  PoseGraph mono;
  PoseGraph split5;
  PoseEstimate x0_split5;  // chordal-initialized
};

CubeMini make_cube_mini() {
  CubeConfig cfg;
  cfg.grid = 6;
  cfg.side_length = 1.0;
  cfg.loop_probability = 0.1;
  cfg.sigma_t = 0.05;
  cfg.sigma_r = 0.05;
  cfg.seed = 42;
  CubeDataset ds = generate_cube(cfg);
  PoseGraph split = partition(ds.graph, 5);
  PoseEstimate x0 = chordal_initialize(split, 0.0, 30, 30);
  return {std::move(ds.graph), std::move(split), std::move(x0)};
}

double relative_err(const Matrix& got, const Matrix& want) {
  return (got - want).norm() / (1.0 + want.norm());
}

}  // namespace

// --- criteria 1 and 3 (shared random suite) ---------------------------------
static void criteria_1_and_3() {
  std::mt19937_64 rng(1001);
  bool sandwich_ok = true, anchor_ok = true, grad_anchor_ok = true;
  bool e_routes_ok = true, grad_routes_ok = true;
  for (int gi = 0; gi < 50; ++gi) {
    const PoseGraph g = random_multi_graph(rng);
    const DataMatrix dm = build_data_matrix(g);
    const MajorantBlocks maj = build_majorant(g, 0.001);
    const BlockLayout layout(g);
    for (int t = 0; t < 100; ++t) {
      const PoseEstimate xk = test_util::random_estimate(g, rng);
      const PoseEstimate x = test_util::random_estimate(g, rng);
      const double f_x = objective_edge_sum(g, x);
      const double f_xk = objective_edge_sum(g, xk);
      const double e_val = surrogate_E_edges(g, x, xk);
      const EstimateView view(xk);
      const Matrix grad_xk = euclidean_gradient_edges(g, xk);
      double g_val = 0.0;
      for (int r = 0; r < g.num_robots(); ++r) {
        g_val += surrogate_G_node(
            x.blocks[r].flat(), xk.blocks[r].flat(), maj.gamma[r],
            grad_xk.middleCols(layout.robot_col[r], layout.robot_cols[r]),
            gbar_node(g, r, xk.blocks[r], view));
      }
      if (!(g_val >= e_val - 1e-9 && e_val >= f_x - 1e-9)) sandwich_ok = false;
      if (t == 0) {
        if (std::abs(surrogate_E_edges(g, xk, xk) - f_xk) > 1e-9) anchor_ok = false;
        if ((surrogate_gradient_at_anchor(g, xk) - grad_xk).norm() > 1e-9) {
          grad_anchor_ok = false;
        }
      }
      // criterion 3 on the same suite: quadratic-form route vs edge-sum route
      const double e_quad = surrogate_E_quadratic(g, maj, x, xk, grad_xk, f_xk);
      if (std::abs(e_quad - e_val) > 1e-8 * (1.0 + std::abs(e_val))) e_routes_ok = false;
      if (relative_err(euclidean_gradient_matrix(xk, dm), grad_xk) > 1e-10) {
        grad_routes_ok = false;
      }
    }
  }
  report(1, sandwich_ok && anchor_ok && grad_anchor_ok,
         "surrogate sandwich G >= E >= F with tight anchor and matching gradient "
         "on 50 random graphs x 100 state pairs");
  report(3, e_routes_ok && grad_routes_ok,
         "edge-sum vs quadratic-form E and matrix vs per-edge gradient agree");
}

static void criterion_2() {
  std::mt19937_64 rng(1002);
  bool ok = true;
  for (int gi = 0; gi < 6; ++gi) {
    const int d = gi % 2 == 0 ? 2 : 3;
    const int n = d == 2 ? 60 : 50;  // (d+1)n <= 300 within the dense-eig budget
    std::vector<int> sizes = {n / 3, n / 3, n - 2 * (n / 3)};
    const PoseGraph g = test_util::random_graph(d, sizes, 30, rng);
    const Matrix m = Matrix(build_data_matrix(g).m);
    const MajorantBlocks maj = build_majorant(g, 0.001);
    const Matrix omega = Matrix(assemble_block_diagonal(maj.omega));
    const Matrix gamma = Matrix(assemble_block_diagonal(maj.gamma));
    Eigen::SelfAdjointEigenSolver<Matrix> eo(omega - m);
    Eigen::SelfAdjointEigenSolver<Matrix> eg(gamma - m);
    if (eo.eigenvalues().minCoeff() < -1e-9) ok = false;
    if (eg.eigenvalues().minCoeff() < 0.001 - 1e-9) ok = false;
  }
  report(2, ok, "lambda_min(Omega - M) >= -1e-9 and lambda_min(Gamma - M) >= xi - 1e-9");
}

static void criteria_4_5_7_8(const CubeMini& cube) {
  // toy graphs for the monotonicity sweep
  std::mt19937_64 rng(1004);
  bool monotone_ok = true;
  for (int d : {2, 3}) {
    const PoseGraph toy = test_util::random_graph(d, {6, 5, 5}, 12, rng);
    const PoseEstimate x0 = test_util::random_estimate(toy, rng, 0.4);
    SolverConfig cfg;
    cfg.iters = 1000;
    for (bool accel : {false, true}) {
      const SolverRun run = accel ? amm_pgo(toy, x0, cfg) : mm_pgo(toy, x0, cfg);
      for (size_t k = 1; k < run.records.size(); ++k) {
        if (run.records[k].f > run.records[k - 1].f + 1e-10) monotone_ok = false;
      }
    }
  }

  // cube-mini, 5 robots, shared X0
  SolverConfig cfg;
  cfg.iters = 1000;
  const SolverRun mm_run = mm_pgo(cube.split5, cube.x0_split5, cfg);
  const SolverRun amm_run = amm_pgo(cube.split5, cube.x0_split5, cfg);
  for (const SolverRun* run : {&mm_run, &amm_run}) {
    for (size_t k = 1; k < run->records.size(); ++k) {
      if (run->records[k].f > run->records[k - 1].f + 1e-10) monotone_ok = false;
    }
  }
  report(4, monotone_ok,
         "F non-increasing (tol 1e-10) for MM and AMM over 1000 iterations on toy "
         "graphs and cube-mini");

  // criterion 5: gradient norm < 1e-5 within 2000 iterations, A in {1, 5}
  bool c5_ok = true;
  std::string c5_detail;
  for (int a : {1, 5}) {
    const PoseGraph& g = a == 1 ? cube.mono : cube.split5;
    const PoseEstimate x0 =
        a == 1 ? redistribute(cube.split5, cube.x0_split5, cube.mono) : cube.x0_split5;
    SolverConfig c;
    c.xi = 0.001;
    c.iters = 2000;
    c.grad_stop_tol = 1e-5;
    const SolverRun run = amm_pgo(g, x0, c);
    const bool reached = run.records.back().grad_norm < 1e-5;
    if (!reached) c5_ok = false;
    c5_detail += " A=" + std::to_string(a) + ":k=" +
                 std::to_string(run.records.back().k) +
                 (reached ? "" : " (not reached)");
  }
  report(5, c5_ok,
         "riemannian gradient norm < 1e-5 within 2000 iterations on cube-mini;" +
             c5_detail);

  // criterion 7: acceleration
  SolverConfig ref_cfg;
  ref_cfg.iters = 4000;
  ref_cfg.grad_stop_tol = 1e-9;
  const PoseEstimate x0_mono = redistribute(cube.split5, cube.x0_split5, cube.mono);
  const SolverRun ref = amm_pgo(cube.mono, x0_mono, ref_cfg);
  const double f_star = std::min(
      {ref.records.back().f, mm_run.records.back().f, amm_run.records.back().f});
  auto first_below = [&](const SolverRun& run, double target) {
    for (const RunRecord& r : run.records) {
      if (r.f <= target) return r.k;
    }
    return 1000000;
  };
  const double target = f_star * (1.0 + 1e-3);
  const int k_amm = first_below(amm_run, target);
  const int k_mm = first_below(mm_run, target);
  bool c7_ok = k_amm < k_mm && k_amm < 1000000;
  for (int k : {100, 250, 1000}) {
    if (amm_run.records[k].f > mm_run.records[k].f + 1e-8) c7_ok = false;
  }
  report(7, c7_ok,
         "AMM reaches relative gap 1e-3 at k=" + std::to_string(k_amm) +
             " vs MM at k=" + std::to_string(k_mm) +
             "; AMM trace dominates at k in {100,250,1000}");

  // criterion 8: first iterations coincide
  SolverConfig one;
  one.iters = 1;
  const SolverRun m1 = mm_pgo(cube.split5, cube.x0_split5, one);
  const SolverRun a1 = amm_pgo(cube.split5, cube.x0_split5, one);
  const double diff = std::abs(m1.records[1].f - a1.records[1].f);
  report(8, diff < 1e-8,
         "first AMM iteration equals first MM iteration, |dF| = " + std::to_string(diff));
}

static void criterion_6() {
  std::mt19937_64 rng(1006);
  bool ok = true;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int d = t % 2 == 0 ? 2 : 3;
    const PoseGraph g = test_util::random_graph(d, {4, 4}, 6, rng);
    const PoseEstimate x = test_util::random_estimate(g, rng);
    const Matrix egrad = euclidean_gradient_edges(g, x);
    const BlockLayout layout(g);
    const std::vector<Matrix> basis = test_util::so_basis(d);
    const double h = 1e-6;

    std::vector<double> an, fd;
    for (int r = 0; r < g.num_robots(); ++r) {
      const int n = g.num_poses(r);
      const Matrix ga = egrad.middleCols(layout.robot_col[r], layout.robot_cols[r]);
      const TangentBlock rg = riemannian_gradient(
          x.blocks[r].rot, ga.leftCols(n), ga.rightCols(static_cast<Eigen::Index>(d) * n));
      for (int i = 0; i < n; ++i) {
        // translation directions: coordinate axes
        for (int c = 0; c < d; ++c) {
          an.push_back(rg.t(c, i));
          PoseEstimate plus = x, minus = x;
          plus.blocks[r].t(c, i) += h;
          minus.blocks[r].t(c, i) -= h;
          fd.push_back(
              (objective_edge_sum(g, plus) - objective_edge_sum(g, minus)) / (2 * h));
        }
        // rotation directions: R * S over the skew basis
        for (const Matrix& s : basis) {
          const Matrix dir = x.blocks[r].rot.block(i) * s;
          an.push_back(rg.rot.block(0, d * i, d, d).cwiseProduct(dir).sum());
          TangentBlock step;
          step.t = Matrix::Zero(d, n);
          step.rot = Matrix::Zero(d, static_cast<Eigen::Index>(d) * n);
          step.rot.block(0, d * i, d, d) = dir;
          PoseEstimate plus = x, minus = x;
          retract_in_place(plus.blocks[r].t, plus.blocks[r].rot, step, h);
          retract_in_place(minus.blocks[r].t, minus.blocks[r].rot, step, -h);
          fd.push_back(
              (objective_edge_sum(g, plus) - objective_edge_sum(g, minus)) / (2 * h));
        }
      }
    }
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < an.size(); ++i) {
      num += (an[i] - fd[i]) * (an[i] - fd[i]);
      den += fd[i] * fd[i];
    }
    const double rel = std::sqrt(num) / (1.0 + std::sqrt(den));
    worst = std::max(worst, rel);
    if (rel > 1e-5) ok = false;
  }
  report(6, ok,
         "riemannian gradient matches tangent-basis finite differences, worst "
         "relative error " +
             std::to_string(worst));
}

static void criterion_9() {
  std::mt19937_64 rng(1009);
  const PoseGraph g = partition(test_util::random_graph(3, {120}, 90, rng), 3);

  // direct sparse solve of the anchored normal equations for F_R*
  const int d = 3;
  const int total = d * g.total_poses();
  std::vector<Triplet> trip;
  auto add = [&](int row, int col, const Matrix& b) {
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c)
        if (b(r, c) != 0.0) trip.emplace_back(row + r, col + c, b(r, c));
  };
  for (const Measurement& m : g.edges()) {
    const int i = d * g.global_pose(m.src);
    const int j = d * g.global_pose(m.dst);
    add(i, i, m.kappa * Matrix::Identity(d, d));
    add(j, j, m.kappa * Matrix::Identity(d, d));
    add(i, j, Matrix(-m.kappa * m.rot));
    add(j, i, Matrix(-m.kappa * m.rot.transpose()));
  }
  SparseMatrix l(total, total);
  l.setFromTriplets(trip.begin(), trip.end());
  const Matrix dense = Matrix(l);
  const Matrix lff = dense.block(d, d, total - d, total - d);
  const Matrix sol = lff.ldlt().solve(Matrix(-dense.block(d, 0, total - d, d)));
  Matrix r_opt(d, total);
  r_opt.leftCols(d) = Matrix::Identity(d, d);
  r_opt.rightCols(total - d) = sol.transpose();
  const double f_star = 0.5 * (r_opt * dense).cwiseProduct(r_opt).sum();

  auto [trace, relaxed] = amm_chordal(g, identity_relaxed_rotation(g), 0.0, 200);
  // least-squares slope of log(gap) vs log(k) over k in [10, 200]
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  double last_gap = 0.0;
  for (int k = 10; k <= 200; ++k) {
    const double gap = std::max(trace.objective[k] - f_star, 1e-16);
    last_gap = gap;
    const double lx = std::log(static_cast<double>(k));
    const double ly = std::log(gap);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++count;
  }
  const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  report(9, slope <= -1.8,
         "chordal rotation gap decays with log-log slope " + std::to_string(slope) +
             " (final gap " + std::to_string(last_gap) + ")");
}

static void criterion_10() {
  CubeConfig cfg;
  cfg.grid = 6;
  cfg.sigma_t = 0.05;
  cfg.sigma_r = 0.05;
  cfg.loop_probability = 0.1;
  cfg.seed = 42;
  const CubeDataset ds = generate_cube(cfg);
  const PoseGraph g = partition(ds.graph, 10);
  const PoseEstimate x0 = chordal_initialize(g, 0.0, 30, 30);

  bool ok = true;
  for (Algorithm algo : {Algorithm::mm, Algorithm::amm}) {
    DistributedParams params;
    params.algo = algo;
    params.solver.iters = 30;
    const DistributedRun dist = run_distributed(g, x0, params);
    const SolverRun shared =
        algo == Algorithm::mm ? mm_pgo(g, x0, params.solver) : amm_pgo(g, x0, params.solver);
    for (size_t k = 0; k < shared.records.size(); ++k) {
      if (std::abs(dist.run.records[k].f - shared.records[k].f) >
          1e-9 * (1.0 + std::abs(shared.records[k].f))) {
        ok = false;
      }
    }
    // instrumented hygiene assertion: all remote reads hit separator poses
    for (int r = 0; r < g.num_robots(); ++r) {
      for (const PoseId& id : dist.accessed_by_robot[r]) {
        if (g.separator_poses(id.robot, r).count(id.pose) == 0) ok = false;
      }
    }
  }
  report(10, ok,
         "distributed vs shared-memory F traces agree to 1e-9 on 10-robot "
         "cube-mini; message reads restricted to separator poses");
}

static void criterion_11() {
  auto find_file = [](const std::vector<std::string>& names) -> std::string {
    for (const std::string& n : names) {
      if (std::filesystem::exists(n)) return n;
    }
    return {};
  };
  const std::string csail = find_file(
      {"data/CSAIL.g2o", "CSAIL.g2o", "datasets/CSAIL.g2o", "data/csail.g2o"});
  const std::string sphere =
      find_file({"data/sphere2500.g2o", "sphere2500.g2o", "data/sphere.g2o",
                 "sphere.g2o", "datasets/sphere2500.g2o"});
  if (csail.empty() && sphere.empty()) {
    skip(11, "benchmark g2o files not present; criteria 1-10 constitute acceptance");
    return;
  }
  bool ok = true;
  std::string detail;
  if (!csail.empty()) {
    const ParsedDataset ds = parse_g2o_file(csail);
    const PoseGraph g = partition(ds.graph, 10);
    const PoseEstimate x0 = chordal_initialize(g, 0.0, 100, 100);
    SolverConfig cfg;
    cfg.iters = 1000;
    const SolverRun run = mm_pgo(g, x0, cfg);
    const double f1000 = run.records[1000].f;
    const bool hit = std::abs(f1000 - 31.70) <= 0.01 * 31.70;
    ok = ok && hit;
    detail += " CSAIL F(1000)=" + std::to_string(f1000);
  }
  if (!sphere.empty()) {
    const ParsedDataset ds = parse_g2o_file(sphere);
    const PoseGraph g = partition(ds.graph, 10);
    const PoseEstimate x0 = chordal_initialize(g, 0.0, 100, 100);
    SolverConfig cfg;
    cfg.iters = 250;
    const SolverRun run = amm_pgo(g, x0, cfg);
    const double f250 = run.records[250].f;
    const bool hit = std::abs(f250 - 1687.0) <= 0.01 * 1687.0;
    ok = ok && hit;
    detail += " sphere F(250)=" + std::to_string(f250);
  }
  report(11, ok, "benchmark objective values within 1% of the published table;" + detail);
}

int main() {
  criteria_1_and_3();
  criterion_2();
  const CubeMini cube = make_cube_mini();
  criteria_4_5_7_8(cube);
  criterion_6();
  criterion_9();
  criterion_10();
  criterion_11();
  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all evaluated criteria passed\n");
  return 0;
}
