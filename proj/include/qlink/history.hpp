#pragma once

// Link histories h^t = (x1, a1, x2, ..., a_{t-1}, x_t) and decision policies.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qlink/errors.hpp"

namespace qlink {

inline constexpr int kWait = 0;
inline constexpr int kRequest = 1;

// Observations and actions are stored densely. Memory time and request
// counters are maintained incrementally so that extending or truncating a
// history is O(1).
//
// Memory time M(t) uses -1 for an unloaded memory:
//   M(t) = M(t-1) + X(t)  if A(t-1) = 0
//   M(t) = X(t) - 1       if A(t-1) = 1,   with A(0) = 1.
class History {
 public:
  History() = default;

  History(std::span<const int> observations, std::span<const int> actions) {
    if (observations.empty()) {
      if (!actions.empty()) throw ParameterError("actions given for an empty history");
      return;
    }
    if (actions.size() + 1 != observations.size()) {
      throw ParameterError("a history of length t needs t-1 actions");
    }
    start(check_bit(observations[0]));
    for (std::size_t j = 1; j < observations.size(); ++j) {
      extend(check_bit(actions[j - 1]), check_bit(observations[j]));
    }
  }

  History(std::initializer_list<int> observations, std::initializer_list<int> actions)
      : History(std::span<const int>(observations.begin(), observations.size()),
                std::span<const int>(actions.begin(), actions.size())) {}

  void start(int x1) {
    if (!xs_.empty()) throw ParameterError("history already started");
    xs_.push_back(static_cast<std::uint8_t>(x1));
    mem_.push_back(x1 - 1);
    req_.push_back(1);
    succ_.push_back(x1);
  }

  void extend(int action, int x) {
    if (xs_.empty()) throw ParameterError("extend() called on an empty history");
    as_.push_back(static_cast<std::uint8_t>(action));
    xs_.push_back(static_cast<std::uint8_t>(x));
    mem_.push_back(action == kWait ? mem_.back() + x : x - 1);
    req_.push_back(req_.back() + action);
    succ_.push_back(succ_.back() + action * x);
  }

  void pop() {
    if (xs_.empty()) return;
    xs_.pop_back();
    mem_.pop_back();
    req_.pop_back();
    succ_.pop_back();
    if (!as_.empty()) as_.pop_back();
  }

  std::size_t length() const { return xs_.size(); }
  bool empty() const { return xs_.empty(); }

  // 1-based, as in x_1..x_t.
  int observation(std::size_t j) const { return xs_.at(j - 1); }
  // a_0 = 1 by convention; a_1..a_{t-1} stored.
  int action(std::size_t j) const { return j == 0 ? kRequest : as_.at(j - 1); }

  int current_observation() const { return xs_.back(); }
  int memory_time() const { return mem_.back(); }
  int memory_time_at(std::size_t j) const { return mem_.at(j - 1); }
  int requests() const { return req_.back(); }
  int successes() const { return succ_.back(); }

  std::span<const std::uint8_t> observations() const { return xs_; }
  std::span<const std::uint8_t> actions() const { return as_; }

  // a_j = 0 forces x_{j+1} = x_j.
  bool in_transition_support() const {
    for (std::size_t j = 0; j < as_.size(); ++j) {
      if (as_[j] == kWait && xs_[j + 1] != xs_[j]) return false;
    }
    return true;
  }

  friend bool operator==(const History& a, const History& b) {
    return a.xs_ == b.xs_ && a.as_ == b.as_;
  }

 private:
  static int check_bit(int b) {
    if (b != 0 && b != 1) throw ParameterError("history entries must be bits");
    return b;
  }

  std::vector<std::uint8_t> xs_;
  std::vector<std::uint8_t> as_;
  std::vector<int> mem_;
  std::vector<int> req_;
  std::vector<int> succ_;
};

inline int memory_time(const History& h) {
  if (h.empty()) throw ParameterError("memory time of an empty history");
  return h.memory_time();
}

// Closed expression for M(t):
//   sum_j A(j-1) (sum_{l>=j} X(l) - 1) prod_{k=j}^{t-1} (1 - A(k))
inline int memory_time_explicit(const History& h) {
  if (h.empty()) throw ParameterError("memory time of an empty history");
  const auto t = h.length();
  long total = 0;
  for (std::size_t j = 1; j <= t; ++j) {
    if (h.action(j - 1) == 0) continue;
    bool all_wait = true;
    for (std::size_t k = j; k + 1 <= t; ++k) {
      if (h.action(k) != 0) {
        all_wait = false;
        break;
      }
    }
    if (!all_wait) continue;
    long ones = 0;
    for (std::size_t l = j; l <= t; ++l) ones += h.observation(l);
    total += ones - 1;
  }
  return static_cast<int>(total);
}

// A policy maps the history h^t (t = h.length()) to the probability of
// requesting at step t.
class Policy {
 public:
  enum class Kind { Deterministic, Stochastic };

  Policy(std::function<double(const History&)> request_probability, Kind kind, std::string name)
      : fn_(std::move(request_probability)), kind_(kind), name_(std::move(name)) {}

  double request_probability(const History& h) const {
    const double q = fn_(h);
    if (!(q >= 0.0 && q <= 1.0)) throw ParameterError("policy returned a probability outside [0,1]");
    if (kind_ == Kind::Deterministic && q != 0.0 && q != 1.0) {
      throw ParameterError("deterministic policy '" + name_ + "' returned a fractional action");
    }
    return q;
  }

  // d_t(h^t)(a)
  double action_probability(const History& h, int action) const {
    const double q = request_probability(h);
    return action == kRequest ? q : 1.0 - q;
  }

  Kind kind() const { return kind_; }
  bool deterministic() const { return kind_ == Kind::Deterministic; }
  const std::string& name() const { return name_; }

 private:
  std::function<double(const History&)> fn_;
  Kind kind_;
  std::string name_;
};

// Deterministic policy driven by the sufficient statistic (t, X(t), M(t)).
inline Policy state_feedback_policy(std::function<int(int t, int x, int m)> rule, std::string name) {
  return Policy(
      [rule = std::move(rule)](const History& h) {
        return static_cast<double>(rule(static_cast<int>(h.length()), h.current_observation(),
                                        h.memory_time()));
      },
      Policy::Kind::Deterministic, std::move(name));
}

inline Policy always_request_policy() {
  return Policy([](const History&) { return 1.0; }, Policy::Kind::Deterministic, "always-request");
}

// Keeps an active link with probability keep, requests otherwise; always
// requests when inactive.
inline Policy randomized_keep_policy(double keep) {
  detail::require_probability(keep, "keep probability");
  return Policy(
      [keep](const History& h) { return h.current_observation() == 1 ? 1.0 - keep : 1.0; },
      Policy::Kind::Stochastic, "randomized-keep");
}

// Pr[H(t) = h^t] = prod_j d_j(h^j)(a_j) * p^Nsucc (1-p)^(Nreq - Nsucc),
// zero outside the transition support.
inline double history_prob(const History& h, const Policy& pi, double p) {
  detail::require_probability(p, "success probability");
  if (h.empty()) throw ParameterError("probability of an empty history");
  if (!h.in_transition_support()) return 0.0;
  double decisions = 1.0;
  History prefix;
  prefix.start(h.observation(1));
  for (std::size_t j = 1; j < h.length(); ++j) {
    decisions *= pi.action_probability(prefix, h.action(j));
    if (decisions == 0.0) return 0.0;
    prefix.extend(h.action(j), h.observation(j + 1));
  }
  const int succ = h.successes();
  const int fail = h.requests() - succ;
  auto ipow = [](double base, int e) { return e == 0 ? 1.0 : std::pow(base, e); };
  return decisions * ipow(p, succ) * ipow(1.0 - p, fail);
}

}  // namespace qlink
