#pragma once

// Finite-horizon policy optimization for a single elementary link.
//
// Horizon T counts decision epochs: actions a_1..a_T are taken at times
// 1..T and the reward F~ is collected at time T+1.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qlink/cutoff.hpp"
#include "qlink/engine.hpp"
#include "qlink/simulate.hpp"

namespace qlink {

inline constexpr int kMaxFullTreeHorizon = 14;
inline constexpr int kMaxReducedHorizon = 10'000;
inline constexpr int kMaxExhaustiveSearchHorizon = 6;
// Reduced tables above this horizon keep decisions only.
inline constexpr int kReducedValueCap = 2048;
// Action values closer than this count as tied; ties go to wait.
inline constexpr double kTieTolerance = 1e-14;

inline int argmax_action(double q_wait, double q_request) {
  return q_request > q_wait + kTieTolerance ? kRequest : kWait;
}

enum class Objective { Ftilde, Active, Fidelity };

inline std::string to_string(Objective o) {
  switch (o) {
    case Objective::Ftilde: return "ftilde";
    case Objective::Active: return "active";
    case Objective::Fidelity: return "fidelity";
  }
  return "?";
}

// Wait after a success iff f_{M+1} >= p f_0; always request when inactive.
inline Policy forward_greedy(const LinkParams& params) {
  const double p = params.success_prob;
  const auto f = params.fidelity;
  const double f0 = f(0);
  return state_feedback_policy(
      [p, f, f0](int, int x, int m) { return x == 0 ? 1 : (f(m + 1) >= p * f0 ? 0 : 1); },
      "forward-greedy");
}

// ---------------------------------------------------------------------------
// Full history tree.

// Node index at depth j: x_1 followed by one base-3 digit per step,
// 0 = wait, 1 = request failed, 2 = request succeeded.
struct FullValueTable {
  int horizon = 0;
  std::vector<std::vector<std::array<double, 2>>> q;  // q[j-1][index][a]

  int decision(int j, std::size_t index) const {
    const auto& v = q.at(static_cast<std::size_t>(j - 1)).at(index);
    return argmax_action(v[0], v[1]);
  }
  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& level : q) n += level.size();
    return n;
  }
};

inline std::optional<std::size_t> full_tree_index(const History& h) {
  if (h.empty()) return std::nullopt;
  std::size_t idx = static_cast<std::size_t>(h.observation(1));
  for (std::size_t j = 1; j < h.length(); ++j) {
    const int a = h.action(static_cast<int>(j));
    const int x = h.observation(static_cast<int>(j) + 1);
    if (a == kWait && x != h.observation(static_cast<int>(j))) return std::nullopt;
    idx = idx * 3 + static_cast<std::size_t>(a == kWait ? 0 : 1 + x);
  }
  return idx;
}

inline History full_tree_history(int j, std::size_t index) {
  std::vector<int> digits;
  for (int k = 1; k < j; ++k) {
    digits.push_back(static_cast<int>(index % 3));
    index /= 3;
  }
  History h;
  h.start(static_cast<int>(index));
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
    if (*it == 0) {
      h.extend(kWait, h.current_observation());
    } else {
      h.extend(kRequest, *it - 1);
    }
  }
  return h;
}

namespace detail {

inline double terminal_q(int x, int m, int a, double p, const std::vector<double>& f) {
  if (a == kRequest) return p * f[0];
  return x == 1 ? f[static_cast<std::size_t>(m + 1)] : 0.0;
}

}  // namespace detail

struct ReducedValueTable;

struct OptimizationResult {
  enum class Mode { FullTree, Reduced };

  double optimal_value = 0.0;
  Policy policy;
  Mode mode;
  std::shared_ptr<const FullValueTable> full;
  std::shared_ptr<const ReducedValueTable> reduced;
};

inline OptimizationResult backward_recursion_full(const LinkParams& params, int T) {
  if (T < 0) throw ParameterError("horizon must be non-negative");
  if (T > kMaxFullTreeHorizon) {
    throw LimitError("full-tree recursion supports horizons up to " + std::to_string(kMaxFullTreeHorizon));
  }
  const double p = params.success_prob;
  const auto f = params.fidelity.tabulate(T);
  auto table = std::make_shared<FullValueTable>();
  table->horizon = T;
  std::size_t width = 2;
  for (int j = 1; j <= T; ++j, width *= 3) table->q.emplace_back(width);

  History h;
  std::function<double(int, std::size_t)> solve = [&](int j, std::size_t idx) {
    const int x = h.current_observation();
    const int m = h.memory_time();
    std::array<double, 2> q{};
    if (j == T) {
      q[0] = detail::terminal_q(x, m, kWait, p, f);
      q[1] = detail::terminal_q(x, m, kRequest, p, f);
    } else {
      h.extend(kWait, x);
      q[0] = solve(j + 1, idx * 3);
      h.pop();
      h.extend(kRequest, 1);
      const double succ = solve(j + 1, idx * 3 + 2);
      h.pop();
      h.extend(kRequest, 0);
      const double fail = solve(j + 1, idx * 3 + 1);
      h.pop();
      q[1] = p * succ + (1.0 - p) * fail;
    }
    table->q[static_cast<std::size_t>(j - 1)][idx] = q;
    return std::max(q[0], q[1]);
  };

  double value = p * f[0];
  if (T > 0) {
    h.start(1);
    const double v1 = solve(1, 1);
    h = History();
    h.start(0);
    const double v0 = solve(1, 0);
    value = p * v1 + (1.0 - p) * v0;
  }

  std::shared_ptr<const FullValueTable> shared = table;
  Policy pi(
      [shared](const History& hist) -> double {
        if (static_cast<int>(hist.length()) > shared->horizon) return 1.0;
        const auto idx = full_tree_index(hist);
        if (!idx) return 1.0;
        return shared->decision(static_cast<int>(hist.length()), *idx);
      },
      Policy::Kind::Deterministic, "optimal-full-" + std::to_string(T));
  return OptimizationResult{value, std::move(pi), OptimizationResult::Mode::FullTree, shared, nullptr};
}

// Largest violation of the backward recursion over all stored keys.
inline double bellman_residual(const FullValueTable& table, const LinkParams& params) {
  const double p = params.success_prob;
  const int T = table.horizon;
  const auto f = params.fidelity.tabulate(T);
  auto vmax = [&](int j, std::size_t idx) {
    const auto& v = table.q[static_cast<std::size_t>(j - 1)][idx];
    return std::max(v[0], v[1]);
  };
  double worst = 0.0;
  for (int j = 1; j <= T; ++j) {
    const auto& level = table.q[static_cast<std::size_t>(j - 1)];
    for (std::size_t idx = 0; idx < level.size(); ++idx) {
      std::array<double, 2> expect{};
      if (j == T) {
        const auto h = full_tree_history(j, idx);
        for (int a : {kWait, kRequest}) expect[a] = detail::terminal_q(h.current_observation(), h.memory_time(), a, p, f);
      } else {
        expect[0] = vmax(j + 1, idx * 3);
        expect[1] = p * vmax(j + 1, idx * 3 + 2) + (1.0 - p) * vmax(j + 1, idx * 3 + 1);
      }
      for (int a : {0, 1}) {
        if (level[idx][a] < 0.0) return INFINITY;
        worst = std::max(worst, std::abs(level[idx][a] - expect[a]));
      }
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Reduced dynamic program on (x, m).

// State index s = 0 for x = 0, s = m + 1 for x = 1.
struct ReducedValueTable {
  int horizon = 0;
  bool has_values = false;
  std::vector<std::vector<std::array<double, 2>>> q;  // q[j-1][s][a], when has_values
  std::vector<std::vector<bool>> request;             // request[j-1][s]

  int decision(int j, int x, int m) const {
    const std::size_t s = x == 0 ? 0 : static_cast<std::size_t>(m + 1);
    return request.at(static_cast<std::size_t>(j - 1)).at(s) ? kRequest : kWait;
  }
};

inline OptimizationResult backward_recursion_reduced(const LinkParams& params, int T) {
  if (T < 0) throw ParameterError("horizon must be non-negative");
  if (T > kMaxReducedHorizon) {
    throw LimitError("reduced recursion supports horizons up to " + std::to_string(kMaxReducedHorizon));
  }
  const double p = params.success_prob;
  const auto f = params.fidelity.tabulate(T);
  auto table = std::make_shared<ReducedValueTable>();
  table->horizon = T;
  table->has_values = T <= kReducedValueCap;
  table->request.resize(static_cast<std::size_t>(T));
  if (table->has_values) table->q.resize(static_cast<std::size_t>(T));

  std::vector<double> next(static_cast<std::size_t>(T) + 2);
  next[0] = 0.0;
  for (int m = 0; m <= T; ++m) next[static_cast<std::size_t>(m) + 1] = f[static_cast<std::size_t>(m)];
  std::vector<double> cur;
  for (int j = T; j >= 1; --j) {
    const auto J = static_cast<std::size_t>(j);
    cur.assign(J + 1, 0.0);
    auto& req = table->request[J - 1];
    req.assign(J + 1, false);
    if (table->has_values) table->q[J - 1].resize(J + 1);
    const double q_req = p * next[1] + (1.0 - p) * next[0];
    for (std::size_t s = 0; s <= J; ++s) {
      const double q_wait = s == 0 ? next[0] : next[s + 1];
      req[s] = argmax_action(q_wait, q_req) == kRequest;
      cur[s] = std::max(q_wait, q_req);
      if (table->has_values) table->q[J - 1][s] = {q_wait, q_req};
    }
    next.swap(cur);
  }
  const double value = p * next[1] + (1.0 - p) * next[0];

  std::shared_ptr<const ReducedValueTable> shared = table;
  Policy pi = state_feedback_policy(
      [shared](int t, int x, int m) { return t > shared->horizon ? kRequest : shared->decision(t, x, m); },
      "optimal-reduced-" + std::to_string(T));
  return OptimizationResult{value, std::move(pi), OptimizationResult::Mode::Reduced, nullptr, shared};
}

inline double bellman_residual(const ReducedValueTable& table, const LinkParams& params) {
  if (!table.has_values) throw ParameterError("table holds decisions only");
  const double p = params.success_prob;
  const int T = table.horizon;
  const auto f = params.fidelity.tabulate(T);
  auto vnext = [&](int j, std::size_t s) {
    if (j == T) return s == 0 ? 0.0 : f[s - 1];
    const auto& v = table.q[static_cast<std::size_t>(j)][s];
    return std::max(v[0], v[1]);
  };
  double worst = 0.0;
  for (int j = 1; j <= T; ++j)
    for (std::size_t s = 0; s <= static_cast<std::size_t>(j); ++s) {
      const auto& v = table.q[static_cast<std::size_t>(j - 1)][s];
      if (v[0] < 0.0 || v[1] < 0.0) return INFINITY;
      worst = std::max(worst, std::abs(v[0] - vnext(j, s == 0 ? 0 : s + 1)));
      worst = std::max(worst, std::abs(v[1] - (p * vnext(j, 1) + (1.0 - p) * vnext(j, 0))));
      if (table.request[static_cast<std::size_t>(j - 1)][s] != (argmax_action(v[0], v[1]) == kRequest)) return INFINITY;
    }
  return worst;
}

// ---------------------------------------------------------------------------
// Evaluation.

struct PolicyValue {
  double e_ftilde = 0.0;
  double e_active = 0.0;
  std::optional<double> e_f;
  bool exact = true;
  // Standard errors of the Monte Carlo fallback.
  std::optional<double> se_ftilde, se_active, se_f;

  std::optional<double> get(Objective o) const {
    switch (o) {
      case Objective::Ftilde: return e_ftilde;
      case Objective::Active: return e_active;
      case Objective::Fidelity: return e_f;
    }
    return std::nullopt;
  }
};

struct MonteCarloOptions {
  std::size_t trials = 100'000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

// Quantities at time T+1 after T decisions of pi.
inline PolicyValue evaluate_policy(const LinkParams& params, const Policy& pi, int T,
                                   const MonteCarloOptions& mc = {}) {
  if (T < 0) throw ParameterError("horizon must be non-negative");
  PolicyValue out;
  if (T + 1 <= kExhaustiveWarnHorizon) {
    const auto mix = evolve_exhaustive(params.success_prob, pi, T + 1);
    const auto e = expected_quantities(mix.back(), params.fidelity);
    out.e_ftilde = e.e_ftilde;
    out.e_active = e.prob_active;
    out.e_f = e.e_f;
    return out;
  }
  const auto sim = simulate_trajectories(params, pi, T + 1, mc.trials, mc.seed, mc.threads);
  const auto t = static_cast<std::size_t>(T);
  out.exact = false;
  out.e_ftilde = sim.e_ftilde[t].mean;
  out.e_active = sim.prob_active[t].mean;
  out.se_ftilde = sim.e_ftilde[t].std_error;
  out.se_active = sim.prob_active[t].std_error;
  if (sim.e_f[t].samples > 0) {
    out.e_f = sim.e_f[t].mean;
    out.se_f = sim.e_f[t].std_error;
  }
  return out;
}

using FeedbackRule = std::function<int(int t, int x, int m)>;

// Exact value of an (x, m)-feedback rule by propagating the state
// distribution; O(T^2) and usable for any horizon.
inline PolicyValue evaluate_feedback(const LinkParams& params, const FeedbackRule& rule, int T) {
  if (T < 0) throw ParameterError("horizon must be non-negative");
  const double p = params.success_prob;
  const auto f = params.fidelity.tabulate(T);
  std::vector<double> dist{1.0 - p, p}, next;
  for (int t = 1; t <= T; ++t) {
    next.assign(dist.size() + 1, 0.0);
    for (std::size_t s = 0; s < dist.size(); ++s) {
      if (dist[s] == 0.0) continue;
      const int a = rule(t, s == 0 ? 0 : 1, static_cast<int>(s) - 1);
      if (a == kRequest) {
        next[1] += p * dist[s];
        next[0] += (1.0 - p) * dist[s];
      } else {
        next[s == 0 ? 0 : s + 1] += dist[s];
      }
    }
    dist.swap(next);
  }
  PolicyValue out;
  for (std::size_t s = 1; s < dist.size(); ++s) {
    out.e_ftilde += dist[s] * f[s - 1];
    out.e_active += dist[s];
  }
  if (out.e_active > 0.0) out.e_f = out.e_ftilde / out.e_active;
  return out;
}

inline FeedbackRule greedy_rule(const LinkParams& params) {
  const double p = params.success_prob;
  const auto f = params.fidelity;
  const double f0 = f(0);
  return [p, f, f0](int, int x, int m) { return x == 0 ? kRequest : (f(m + 1) >= p * f0 ? kWait : kRequest); };
}

inline FeedbackRule reduced_rule(std::shared_ptr<const ReducedValueTable> table) {
  return [table](int t, int x, int m) { return t > table->horizon ? kRequest : table->decision(t, x, m); };
}

// ---------------------------------------------------------------------------
// Exhaustive search over deterministic (t, x, m) feedback policies.

struct SearchResult {
  std::optional<double> best_value;
  // best_rule[t-1][s] under the state index of ReducedValueTable; states
  // never reached are left at wait.
  std::vector<std::vector<int>> best_rule;
  std::size_t policies_evaluated = 0;
};

// Policies that differ only on unreachable states are counted once; each is
// scored by propagating the exact (x, m) distribution to time T+1.
inline SearchResult exhaustive_policy_search(const LinkParams& params, int T,
                                             Objective objective = Objective::Ftilde) {
  if (T < 0) throw ParameterError("horizon must be non-negative");
  if (T > kMaxExhaustiveSearchHorizon) {
    throw LimitError("exhaustive search supports horizons up to " + std::to_string(kMaxExhaustiveSearchHorizon));
  }
  const double p = params.success_prob;
  const auto f = params.fidelity.tabulate(T);
  SearchResult out;
  std::vector<std::vector<int>> rule(static_cast<std::size_t>(T));

  auto score = [&](const std::vector<double>& dist) -> std::optional<double> {
    double ft = 0.0, x = 0.0;
    for (std::size_t s = 1; s < dist.size(); ++s) {
      ft += dist[s] * f[s - 1];
      x += dist[s];
    }
    switch (objective) {
      case Objective::Ftilde: return ft;
      case Objective::Active: return x;
      case Objective::Fidelity: return x > 0.0 ? std::optional<double>(ft / x) : std::nullopt;
    }
    return std::nullopt;
  };

  std::function<void(int, const std::vector<double>&)> rec = [&](int t, const std::vector<double>& dist) {
    if (t == T + 1) {
      ++out.policies_evaluated;
      const auto v = score(dist);
      if (v && (!out.best_value || *v > *out.best_value)) {
        out.best_value = v;
        out.best_rule = rule;
      }
      return;
    }
    std::vector<std::size_t> live;
    for (std::size_t s = 0; s < dist.size(); ++s)
      if (dist[s] > 0.0) live.push_back(s);
    auto& r = rule[static_cast<std::size_t>(t - 1)];
    std::vector<double> next(dist.size() + 1);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << live.size()); ++mask) {
      r.assign(dist.size(), kWait);
      for (std::size_t k = 0; k < live.size(); ++k) r[live[k]] = static_cast<int>((mask >> k) & 1);
      std::fill(next.begin(), next.end(), 0.0);
      for (std::size_t s : live) {
        if (r[s] == kRequest) {
          next[1] += p * dist[s];
          next[0] += (1.0 - p) * dist[s];
        } else {
          next[s == 0 ? 0 : s + 1] += dist[s];
        }
      }
      rec(t + 1, next);
    }
  };
  rec(1, std::vector<double>{1.0 - p, p});
  return out;
}

inline Policy feedback_policy(std::vector<std::vector<int>> rule, std::string name) {
  auto shared = std::make_shared<const std::vector<std::vector<int>>>(std::move(rule));
  return state_feedback_policy(
      [shared](int t, int x, int m) {
        if (t > static_cast<int>(shared->size())) return kRequest;
        return (*shared)[static_cast<std::size_t>(t - 1)][x == 0 ? 0 : static_cast<std::size_t>(m + 1)];
      },
      std::move(name));
}

}  // namespace qlink
