#pragma once

// Simulated multi-robot execution. One thread per robot, synchronous rounds
// with a barrier, and per-round exchange of exactly the separator poses the
// algorithms need. Messages travel as serialized bytes so communication
// volume is accounted exactly.
//
// Wire format (little-endian): header {sender: u32, round: u64, count: u32},
// then per entry {pose: u32, t: d f64, R: d*d f64 column-major}.

#include <mmpgo/chordal.hpp>
#include <mmpgo/core.hpp>
#include <mmpgo/graph.hpp>
#include <mmpgo/mm_solvers.hpp>
#include <mmpgo/quadratic.hpp>

#include <barrier>
#include <cstdint>
#include <cstring>
#include <map>
#include <set>
#include <thread>
#include <vector>

namespace mmpgo {

struct SeparatorMessage {
  struct Entry {
    uint32_t pose = 0;
    Vector t;
    Matrix rot;
  };
  uint32_t sender = 0;
  uint64_t round = 0;
  std::vector<Entry> entries;

  static constexpr size_t kHeaderBytes = 16;

  static size_t serialized_size(int d, size_t count) {
    return kHeaderBytes + count * (4 + 8 * (static_cast<size_t>(d) + d * d));
  }

  std::vector<uint8_t> serialize(int d) const {
    std::vector<uint8_t> out(serialized_size(d, entries.size()));
    uint8_t* p = out.data();
    auto put = [&p](const void* src, size_t n) {
      std::memcpy(p, src, n);
      p += n;
    };
    const uint32_t count = static_cast<uint32_t>(entries.size());
    put(&sender, 4);
    put(&round, 8);
    put(&count, 4);
    for (const Entry& e : entries) {
      put(&e.pose, 4);
      put(e.t.data(), 8 * static_cast<size_t>(d));
      put(e.rot.data(), 8 * static_cast<size_t>(d) * d);
    }
    return out;
  }

  static SeparatorMessage deserialize(const std::vector<uint8_t>& buf, int d) {
    SeparatorMessage msg;
    const uint8_t* p = buf.data();
    auto get = [&p](void* dst, size_t n) {
      std::memcpy(dst, p, n);
      p += n;
    };
    uint32_t count = 0;
    get(&msg.sender, 4);
    get(&msg.round, 8);
    get(&count, 4);
    if (buf.size() != serialized_size(d, count)) {
      throw ProtocolViolation("SeparatorMessage: truncated message");
    }
    msg.entries.resize(count);
    for (Entry& e : msg.entries) {
      get(&e.pose, 4);
      e.t.resize(d);
      get(e.t.data(), 8 * static_cast<size_t>(d));
      e.rot.resize(d, d);
      get(e.rot.data(), 8 * static_cast<size_t>(d) * d);
    }
    return msg;
  }
};

// Received separator poses for one round. Rejects both out-of-contract
// deliveries and out-of-contract reads, and logs every read for the
// information-hygiene checks.
class MessageStore final : public SeparatorView {
 public:
  MessageStore(const PoseGraph& g, int receiver) : receiver_(receiver) {
    for (int beta = 0; beta < g.num_robots(); ++beta) {
      if (beta == receiver) continue;
      for (int pose : g.separator_poses(beta, receiver)) {
        allowed_.insert({beta, pose});
      }
    }
  }

  void deliver(const SeparatorMessage& msg) {
    for (const SeparatorMessage::Entry& e : msg.entries) {
      const PoseId id{static_cast<int>(msg.sender), static_cast<int>(e.pose)};
      if (!allowed_.count(id)) {
        throw ProtocolViolation("robot " + std::to_string(receiver_) +
                                ": message carries non-separator pose");
      }
      poses_[id] = {e.t, e.rot};
    }
  }

  Vector t(const PoseId& id) const override { return find(id).first; }
  Matrix rot(const PoseId& id) const override { return find(id).second; }

  const std::set<PoseId>& accessed() const { return accessed_; }
  void clear_round() { poses_.clear(); }

 private:
  const std::pair<Vector, Matrix>& find(const PoseId& id) const {
    auto it = poses_.find(id);
    if (it == poses_.end()) {
      throw ProtocolViolation("robot " + std::to_string(receiver_) +
                              ": read of pose outside received separator set");
    }
    accessed_.insert(id);
    return it->second;
  }

  int receiver_;
  std::set<PoseId> allowed_;
  std::map<PoseId, std::pair<Vector, Matrix>> poses_;
  mutable std::set<PoseId> accessed_;
};

struct DistributedParams {
  Algorithm algo = Algorithm::mm;
  SolverConfig solver;      // for mm / amm
  double chordal_xi = 0.0;  // for chordal
  int chordal_rot_iters = 100;
  int chordal_trans_iters = 100;
};

struct DistributedRun {
  SolverRun run;
  // Union over rounds and robots of remote poses actually read.
  std::vector<std::set<PoseId>> accessed_by_robot;
};

namespace detail {

// mailbox[receiver][sender][round] -> serialized message
using Mailbox = std::vector<std::vector<std::vector<std::vector<uint8_t>>>>;

inline std::vector<std::vector<SeparatorMessage::Entry>> separator_payloads(
    const PoseGraph& g, int sender, const PoseBlock& x) {
  std::vector<std::vector<SeparatorMessage::Entry>> out(g.num_robots());
  for (int beta = 0; beta < g.num_robots(); ++beta) {
    if (beta == sender) continue;
    for (int pose : g.separator_poses(sender, beta)) {
      out[beta].push_back({static_cast<uint32_t>(pose), x.t.col(pose),
                           Matrix(x.rot.block(pose))});
    }
  }
  return out;
}

}  // namespace detail

inline DistributedRun run_distributed_pgo(const PoseGraph& g, const PoseEstimate& x0,
                                          const DistributedParams& params) {
  const int a = g.num_robots();
  const int d = g.d();
  const int iters = params.solver.iters;
  const bool accelerated = params.algo == Algorithm::amm;
  const auto t_start = std::chrono::steady_clock::now();

  std::vector<NodeWorker> workers = make_workers(g, x0, params.solver);
  std::vector<MessageStore> stores;
  stores.reserve(a);
  for (int r = 0; r < a; ++r) stores.emplace_back(g, r);

  detail::Mailbox mailbox(a);
  for (auto& per_sender : mailbox) {
    per_sender.assign(a, std::vector<std::vector<uint8_t>>(iters + 1));
  }

  // metrics[round][robot]
  std::vector<std::vector<double>> gbar(iters + 1, std::vector<double>(a, 0.0));
  std::vector<std::vector<double>> grad_sq = gbar;
  std::vector<std::vector<unsigned long long>> sent(
      iters + 1, std::vector<unsigned long long>(a, 0));
  std::vector<std::string> failure(a);

  std::barrier barrier(a);
  auto robot_main = [&](int alpha) {
    try {
      auto send_round = [&](uint64_t round) {
        auto payloads = detail::separator_payloads(g, alpha, workers[alpha].x());
        for (int beta = 0; beta < a; ++beta) {
          if (payloads[beta].empty()) continue;
          SeparatorMessage msg;
          msg.sender = static_cast<uint32_t>(alpha);
          msg.round = round;
          msg.entries = std::move(payloads[beta]);
          auto bytes = msg.serialize(d);
          sent[round][alpha] += bytes.size();
          mailbox[beta][alpha][round] = std::move(bytes);
        }
      };
      auto receive_round = [&](uint64_t round) {
        stores[alpha].clear_round();
        for (int beta = 0; beta < a; ++beta) {
          const auto& buf = mailbox[alpha][beta][round];
          if (!buf.empty()) {
            stores[alpha].deliver(SeparatorMessage::deserialize(buf, d));
          }
        }
      };

      send_round(0);
      barrier.arrive_and_wait();
      receive_round(0);
      workers[alpha].refresh(stores[alpha]);
      gbar[0][alpha] = workers[alpha].gbar();
      grad_sq[0][alpha] = workers[alpha].squared_grad_norm();

      for (int k = 1; k <= iters; ++k) {
        if (accelerated) {
          workers[alpha].amm_step();
        } else {
          workers[alpha].mm_step();
        }
        send_round(static_cast<uint64_t>(k));
        barrier.arrive_and_wait();
        receive_round(static_cast<uint64_t>(k));
        workers[alpha].refresh(stores[alpha]);
        gbar[k][alpha] = workers[alpha].gbar();
        grad_sq[k][alpha] = workers[alpha].squared_grad_norm();
      }
    } catch (const std::exception& e) {
      failure[alpha] = e.what();
      // Release peers waiting at the barrier for the remaining rounds.
      barrier.arrive_and_drop();
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(a);
  for (int r = 0; r < a; ++r) threads.emplace_back(robot_main, r);
  for (auto& th : threads) th.join();
  for (int r = 0; r < a; ++r) {
    if (!failure[r].empty()) {
      throw NumericalFailure("distributed robot " + std::to_string(r) + ": " + failure[r]);
    }
  }

  DistributedRun out;
  out.run.termination = "iteration budget";
  const double wall =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
          .count();
  for (int k = 0; k <= iters; ++k) {
    double f = 0.0, gsq = 0.0;
    unsigned long long bytes = 0;
    for (int r = 0; r < a; ++r) {
      f += gbar[k][r];
      gsq += grad_sq[k][r];
      bytes += sent[k][r];
    }
    out.run.records.push_back({k, f, std::sqrt(gsq), wall, bytes});
  }
  out.run.x = x0;
  for (int r = 0; r < a; ++r) out.run.x.blocks[r] = workers[r].x();
  for (int r = 0; r < a; ++r) out.accessed_by_robot.push_back(stores[r].accessed());
  return out;
}

// Distributed chordal pipeline: rotation relaxation rounds, local projection,
// one exchange of projected separator rotations, then translation rounds.
// Records hold F_R for rounds 0..rot_iters followed by F_t for the
// translation rounds.
inline DistributedRun run_distributed_chordal(const PoseGraph& g,
                                              const DistributedParams& params) {
  const int a = g.num_robots();
  const int d = g.d();
  const int rot_iters = params.chordal_rot_iters;
  const int trans_iters = params.chordal_trans_iters;
  // rounds 0..rot_iters, one projection exchange, rounds 0..trans_iters
  const int total_rounds = rot_iters + trans_iters + 3;
  const auto t_start = std::chrono::steady_clock::now();

  const detail::ConvexBlockEngine rot_engine(g, d, detail::rotation_edges(g),
                                             params.chordal_xi,
                                             Matrix::Identity(d, d));

  // Per-robot state shared only through the mailbox.
  std::vector<Matrix> rot_state(a), trans_state(a);
  std::vector<RotationBlock> projected(a);
  for (int r = 0; r < a; ++r) rot_state[r] = rot_engine.initial_state(r);

  detail::Mailbox mailbox(a);
  for (auto& per_sender : mailbox) {
    per_sender.assign(a, std::vector<std::vector<uint8_t>>(total_rounds));
  }
  std::vector<MessageStore> stores;
  stores.reserve(a);
  for (int r = 0; r < a; ++r) stores.emplace_back(g, r);

  std::vector<std::vector<double>> share(total_rounds, std::vector<double>(a, 0.0));
  std::vector<std::vector<unsigned long long>> sent(
      total_rounds, std::vector<unsigned long long>(a, 0));
  std::vector<std::string> failure(a);

  // The translation engine needs every robot's projected rotations for the
  // per-edge constants; each robot contributes its own block after the
  // projection exchange.
  std::vector<std::unique_ptr<detail::ConvexBlockEngine>> trans_engines(a);

  std::barrier barrier(a);
  auto robot_main = [&](int alpha) {
    try {
      auto send = [&](int round, const Matrix& t_part, const Matrix& rot_part) {
        for (int beta = 0; beta < a; ++beta) {
          if (beta == alpha) continue;
          SeparatorMessage msg;
          msg.sender = static_cast<uint32_t>(alpha);
          msg.round = static_cast<uint64_t>(round);
          for (int pose : g.separator_poses(alpha, beta)) {
            msg.entries.push_back({static_cast<uint32_t>(pose),
                                   t_part.size() > 0 ? Vector(t_part.col(pose))
                                                     : Vector(Vector::Zero(d)),
                                   Matrix(rot_part.middleCols(
                                       static_cast<Eigen::Index>(d) * pose, d))});
          }
          if (msg.entries.empty()) continue;
          auto bytes = msg.serialize(d);
          sent[round][alpha] += bytes.size();
          mailbox[beta][alpha][round] = std::move(bytes);
        }
      };
      auto receive = [&](int round) {
        stores[alpha].clear_round();
        for (int beta = 0; beta < a; ++beta) {
          const auto& buf = mailbox[alpha][beta][round];
          if (!buf.empty()) stores[alpha].deliver(SeparatorMessage::deserialize(buf, d));
        }
      };
      const BlockLookup rot_lookup = [&](const PoseId& id) {
        return stores[alpha].rot(id);
      };
      const BlockLookup trans_lookup = [&](const PoseId& id) {
        return Matrix(stores[alpha].t(id));
      };

      // --- rotation phase ---
      Matrix prev = rot_state[alpha];
      Matrix grad, grad_prev;
      double s = 1.0;
      send(0, Matrix(), rot_state[alpha]);
      barrier.arrive_and_wait();
      receive(0);
      grad = rot_engine.node_gradient(alpha, rot_state[alpha], rot_lookup);
      grad_prev = grad;
      share[0][alpha] =
          rot_engine.node_objective_share(alpha, rot_state[alpha], rot_lookup);
      for (int k = 1; k <= rot_iters; ++k) {
        const double s_next = (std::sqrt(4.0 * s * s + 1.0) + 1.0) / 2.0;
        const double gamma_k = (s - 1.0) / s_next;
        const Matrix y = rot_state[alpha] + gamma_k * (rot_state[alpha] - prev);
        const Matrix grad_y = grad + gamma_k * (grad - grad_prev);
        Matrix next = rot_engine.exact_node_solve(alpha, y, grad_y);
        prev = std::move(rot_state[alpha]);
        rot_state[alpha] = std::move(next);
        s = s_next;
        send(k, Matrix(), rot_state[alpha]);
        barrier.arrive_and_wait();
        receive(k);
        grad_prev = std::move(grad);
        grad = rot_engine.node_gradient(alpha, rot_state[alpha], rot_lookup);
        share[k][alpha] =
            rot_engine.node_objective_share(alpha, rot_state[alpha], rot_lookup);
      }

      // --- projection + exchange of projected separator rotations ---
      projected[alpha].d = d;
      projected[alpha].entries.resize(d, rot_state[alpha].cols());
      for (int i = 0; i < g.num_poses(alpha); ++i) {
        projected[alpha].block(i) =
            project_to_rotation(rot_state[alpha].middleCols(static_cast<Eigen::Index>(d) * i, d));
      }
      const int proj_round = rot_iters + 1;
      send(proj_round, Matrix(), projected[alpha].entries);
      barrier.arrive_and_wait();
      receive(proj_round);
      // Every robot now assembles the translation constants it needs: its own
      // projected rotations plus received separator rotations.
      {
        std::vector<RotationBlock> r0(a);
        for (int beta = 0; beta < a; ++beta) {
          r0[beta].d = d;
          r0[beta].entries =
              Matrix::Zero(d, static_cast<Eigen::Index>(d) * g.num_poses(beta));
        }
        r0[alpha] = projected[alpha];
        for (int beta = 0; beta < a; ++beta) {
          if (beta == alpha) continue;
          for (int pose : g.separator_poses(beta, alpha)) {
            r0[beta].block(pose) = stores[alpha].rot({beta, pose});
          }
        }
        trans_engines[alpha] = std::make_unique<detail::ConvexBlockEngine>(
            g, 1, detail::translation_edges(g, r0), params.chordal_xi,
            Matrix::Zero(d, 1));
      }

      // --- translation phase ---
      const detail::ConvexBlockEngine& te = *trans_engines[alpha];
      trans_state[alpha] = Matrix::Zero(d, g.num_poses(alpha));
      Matrix tprev = trans_state[alpha];
      s = 1.0;
      const int base = rot_iters + 2;  // first translation round
      send(base, trans_state[alpha], projected[alpha].entries);
      barrier.arrive_and_wait();
      receive(base);
      grad = te.node_gradient(alpha, trans_state[alpha], trans_lookup);
      grad_prev = grad;
      share[base][alpha] =
          te.node_objective_share(alpha, trans_state[alpha], trans_lookup);
      for (int k = 1; k <= trans_iters; ++k) {
        const double s_next = (std::sqrt(4.0 * s * s + 1.0) + 1.0) / 2.0;
        const double gamma_k = (s - 1.0) / s_next;
        const Matrix y = trans_state[alpha] + gamma_k * (trans_state[alpha] - tprev);
        const Matrix grad_y = grad + gamma_k * (grad - grad_prev);
        Matrix next = te.exact_node_solve(alpha, y, grad_y);
        tprev = std::move(trans_state[alpha]);
        trans_state[alpha] = std::move(next);
        s = s_next;
        send(base + k, trans_state[alpha], projected[alpha].entries);
        barrier.arrive_and_wait();
        receive(base + k);
        grad_prev = std::move(grad);
        grad = te.node_gradient(alpha, trans_state[alpha], trans_lookup);
        share[base + k][alpha] =
            te.node_objective_share(alpha, trans_state[alpha], trans_lookup);
      }
    } catch (const std::exception& e) {
      failure[alpha] = e.what();
      barrier.arrive_and_drop();
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(a);
  for (int r = 0; r < a; ++r) threads.emplace_back(robot_main, r);
  for (auto& th : threads) th.join();
  for (int r = 0; r < a; ++r) {
    if (!failure[r].empty()) {
      throw NumericalFailure("distributed robot " + std::to_string(r) + ": " + failure[r]);
    }
  }

  DistributedRun out;
  out.run.termination = "iteration budget";
  const double wall =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
          .count();
  for (int k = 0; k < total_rounds; ++k) {
    if (k == rot_iters + 1) continue;  // projection exchange carries no objective
    double f = 0.0;
    unsigned long long bytes = 0;
    for (int r = 0; r < a; ++r) {
      f += share[k][r];
      bytes += sent[k][r];
    }
    out.run.records.push_back({k, f, 0.0, wall, bytes});
  }
  out.run.x = PoseEstimate::identity(g);
  for (int r = 0; r < a; ++r) {
    out.run.x.blocks[r].rot = projected[r];
    out.run.x.blocks[r].t = trans_state[r];
  }
  for (int r = 0; r < a; ++r) out.accessed_by_robot.push_back(stores[r].accessed());
  return out;
}

inline DistributedRun run_distributed(const PoseGraph& g, const PoseEstimate& x0,
                                      const DistributedParams& params) {
  if (params.algo == Algorithm::chordal) return run_distributed_chordal(g, params);
  return run_distributed_pgo(g, x0, params);
}

}  // namespace mmpgo
