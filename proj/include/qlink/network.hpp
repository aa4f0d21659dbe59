#pragma once

// Aggregates over independent elementary links: parallel links on an edge,
// sets of edges, and their steady-state limits.

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <unsupported/Eigen/KroneckerProduct>

#include "qlink/cutoff.hpp"
#include "qlink/engine.hpp"
#include "qlink/simulate.hpp"

namespace qlink {

struct ParallelLinkSpec {
  LinkParams link;
  Cutoff tstar;

  double p() const { return link.success_prob; }
};

inline ParallelLinkSpec parallel_link(double p, Cutoff tstar,
                                      quantum::FidelityCurve f = quantum::constant_curve(1.0)) {
  return ParallelLinkSpec{LinkParams::symbolic(p, std::move(f)), tstar};
}

struct EdgeConfig {
  std::string id;
  std::vector<ParallelLinkSpec> links;
};

struct NetworkConfig {
  std::vector<EdgeConfig> edges;
};

// A finite time step, or the t -> infinity limit.
class TimePoint {
 public:
  static TimePoint at(int t) {
    if (t < 1) throw ParameterError("time step must be at least 1");
    return TimePoint(t);
  }
  static TimePoint limit() { return TimePoint(0); }

  bool is_limit() const { return t_ == 0; }
  int time() const {
    if (is_limit()) throw ParameterError("the limit point has no finite time");
    return t_;
  }

 private:
  explicit TimePoint(int t) : t_(t) {}
  int t_;
};

inline void validate(const EdgeConfig& edge) {
  if (edge.links.empty()) throw ParameterError("edge '" + edge.id + "' has no parallel links");
  for (const auto& l : edge.links) detail::require_probability(l.p(), "success probability");
}

inline void validate(const NetworkConfig& net) {
  std::set<std::string> seen;
  for (const auto& e : net.edges) {
    validate(e);
    if (!seen.insert(e.id).second) throw ParameterError("duplicate edge id '" + e.id + "'");
  }
}

inline double link_activity(const ParallelLinkSpec& l, TimePoint tp) {
  if (tp.is_limit()) return steady_state(l.tstar, l.p()).prob_active;
  return prob_active(tp.time(), l.tstar, l.p());
}

// Pr[N_e(t) = n] for n = 0..N^max by convolution over the links.
inline std::vector<double> flow_distribution(const EdgeConfig& edge, TimePoint tp) {
  validate(edge);
  std::vector<double> dist{1.0};
  for (const auto& l : edge.links) {
    const double q = link_activity(l, tp);
    std::vector<double> next(dist.size() + 1, 0.0);
    for (std::size_t n = 0; n < dist.size(); ++n) {
      next[n] += dist[n] * (1.0 - q);
      next[n + 1] += dist[n] * q;
    }
    dist = std::move(next);
  }
  return dist;
}

inline double prob_at_least_one(const EdgeConfig& edge, TimePoint tp) {
  validate(edge);
  double none = 1.0;
  for (const auto& l : edge.links) none *= 1.0 - link_activity(l, tp);
  return 1.0 - none;
}

inline double expected_flow(const EdgeConfig& edge, TimePoint tp) {
  validate(edge);
  double s = 0.0;
  for (const auto& l : edge.links) s += link_activity(l, tp);
  return s;
}

inline double expected_rate_limit(const EdgeConfig& edge) {
  return expected_flow(edge, TimePoint::limit());
}

// (1/t) sum_{j<=t} E[N(j)]
inline double expected_rate(const EdgeConfig& edge, int t) {
  if (t < 1) throw ParameterError("time step must be at least 1");
  double s = 0.0;
  for (int j = 1; j <= t; ++j) s += expected_flow(edge, TimePoint::at(j));
  return s / t;
}

inline double expected_total_links(const NetworkConfig& net, TimePoint tp) {
  validate(net);
  double s = 0.0;
  for (const auto& e : net.edges) s += expected_flow(e, tp);
  return s;
}

// prod_e Pr[N_e(t) >= 1]; with one link per edge this is E[X_tot(t)].
inline double collective_status(const NetworkConfig& net, TimePoint tp) {
  validate(net);
  double s = 1.0;
  for (const auto& e : net.edges) s *= prob_at_least_one(e, tp);
  return s;
}

inline constexpr long kMaxJointDim = 1L << 12;

struct JointStateDescriptor {
  struct Entry {
    std::size_t edge;
    std::size_t link;
    LinkStateMixture mixture;
  };
  std::vector<Entry> links;

  // Weight of the all-failed component.
  double joint_failure() const {
    double w = 1.0;
    for (const auto& e : links) w *= e.mixture.failure;
    return w;
  }
  double joint_active() const {
    double w = 1.0;
    for (const auto& e : links) w *= e.mixture.active();
    return w;
  }
};

inline LinkStateMixture link_mixture(const ParallelLinkSpec& l, TimePoint tp) {
  if (tp.is_limit()) return steady_mixture(l.tstar, l.p());
  return cutoff_mixture(tp.time(), l.tstar, l.p());
}

inline JointStateDescriptor joint_state_descriptor(const NetworkConfig& net, TimePoint tp) {
  validate(net);
  JointStateDescriptor out;
  for (std::size_t e = 0; e < net.edges.size(); ++e)
    for (std::size_t j = 0; j < net.edges[e].links.size(); ++j)
      out.links.push_back({e, j, link_mixture(net.edges[e].links[j], tp)});
  return out;
}

// Tensor product of the per-link average states, in descriptor order.
inline quantum::DensityOperator materialize_joint_state(const NetworkConfig& net,
                                                        const JointStateDescriptor& desc) {
  long dim = 1;
  for (const auto& e : desc.links) {
    const auto& l = net.edges.at(e.edge).links.at(e.link);
    if (!l.link.quantum) throw ParameterError("materialization needs links with explicit matrices");
    dim *= l.link.quantum->initial_state.dim() + 1;
    if (dim > kMaxJointDim) {
      throw LimitError("joint state dimension exceeds " + std::to_string(kMaxJointDim));
    }
  }
  quantum::Matrix rho = quantum::Matrix::Identity(1, 1);
  for (const auto& e : desc.links) {
    const auto& l = net.edges[e.edge].links[e.link];
    rho = Eigen::kroneckerProduct(rho, materialize_average_state(e.mixture, l.link).matrix()).eval();
  }
  return quantum::DensityOperator::trusted(std::move(rho));
}

inline quantum::PureState joint_target(const NetworkConfig& net) {
  quantum::Vector psi = quantum::Vector::Ones(1);
  for (const auto& e : net.edges)
    for (const auto& l : e.links) {
      if (!l.link.quantum) throw ParameterError("joint target needs links with explicit matrices");
      psi = Eigen::kroneckerProduct(psi, padded_target(l.link.quantum->target).amplitudes()).eval();
    }
  return quantum::PureState(std::move(psi));
}

struct NetworkSimulation {
  std::size_t trials = 0;
  std::vector<Estimate> at_least_one;  // per edge
  std::vector<Estimate> flow;          // per edge
  Estimate total_links;
  Estimate collective;
};

// Each link runs the cutoff policy on its own random stream, so links are
// independent by construction.
inline NetworkSimulation simulate_network(const NetworkConfig& net, int t, std::size_t trials,
                                          std::uint64_t seed, unsigned threads = 1) {
  validate(net);
  if (t < 1) throw ParameterError("time step must be at least 1");
  if (trials < 1) throw ParameterError("at least one trial is required");

  std::vector<Policy> policies;
  std::vector<std::pair<std::size_t, double>> flat;  // edge index, p
  for (std::size_t e = 0; e < net.edges.size(); ++e)
    for (const auto& l : net.edges[e].links) {
      policies.push_back(cutoff_policy(l.tstar));
      flat.emplace_back(e, l.p());
    }
  const std::size_t E = net.edges.size();

  struct Block {
    std::vector<detail::Moments> any, flow;
    detail::Moments total, collective;
  };
  const std::size_t nblocks = (trials + detail::kTrialBlock - 1) / detail::kTrialBlock;
  std::vector<Block> blocks(nblocks);

  detail::for_each_block(trials, threads, [&](std::size_t b, std::size_t begin, std::size_t end) {
    Block acc{std::vector<detail::Moments>(E), std::vector<detail::Moments>(E), {}, {}};
    std::vector<int> active(E);
    History h;
    for (std::size_t trial = begin; trial < end; ++trial) {
      std::fill(active.begin(), active.end(), 0);
      for (std::size_t k = 0; k < flat.size(); ++k) {
        Rng rng(stream_seed(seed, k + 1), trial);
        const double p = flat[k].second;
        h = History();
        h.start(rng.bernoulli(p));
        for (int j = 1; j < t; ++j) step_trajectory(h, p, policies[k], rng);
        active[flat[k].first] += h.current_observation();
      }
      int total = 0, all = 1;
      for (std::size_t e = 0; e < E; ++e) {
        acc.any[e].add(active[e] > 0 ? 1.0 : 0.0);
        acc.flow[e].add(active[e]);
        total += active[e];
        all &= active[e] > 0 ? 1 : 0;
      }
      acc.total.add(total);
      acc.collective.add(all);
    }
    blocks[b] = std::move(acc);
  });

  NetworkSimulation out;
  out.trials = trials;
  for (std::size_t e = 0; e < E; ++e) {
    detail::Moments any, flow;
    for (const auto& b : blocks) {
      any.merge(b.any[e]);
      flow.merge(b.flow[e]);
    }
    out.at_least_one.push_back(any.estimate());
    out.flow.push_back(flow.estimate());
  }
  detail::Moments total, collective;
  for (const auto& b : blocks) {
    total.merge(b.total);
    collective.merge(b.collective);
  }
  out.total_links = total.estimate();
  out.collective = collective.estimate();
  return out;
}

}  // namespace qlink
