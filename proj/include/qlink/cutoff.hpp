#pragma once

// Closed-form analysis of the memory cutoff policy.
//
// Memory times in this header follow the mod-(t*+1) convention
//   M_t*(t) = (sum_j X(j) - 1) mod (t*+1),
// which equals the general M(t) when the memory is loaded and t* otherwise.
// For t* = infinity the general convention (-1 = unloaded) is used.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qlink/engine.hpp"
#include "qlink/errors.hpp"
#include "qlink/history.hpp"
#include "qlink/quantum.hpp"

namespace qlink {

class Cutoff {
 public:
  static Cutoff finite(int value) {
    if (value < 0) throw ParameterError("cutoff must be non-negative");
    return Cutoff(value);
  }
  static Cutoff infinite() { return Cutoff(-1); }

  bool is_infinite() const { return value_ < 0; }
  bool is_finite() const { return value_ >= 0; }

  int value() const {
    if (is_infinite()) throw ParameterError("infinite cutoff has no integer value");
    return value_;
  }

  std::string to_string() const { return is_infinite() ? "inf" : std::to_string(value_); }

  friend bool operator==(Cutoff a, Cutoff b) { return a.value_ == b.value_; }

 private:
  explicit Cutoff(int v) : value_(v) {}
  int value_;
};

// Finite t*: request iff the memory is unloaded or has been held t* steps.
// Infinite t*: request iff the link is inactive.
inline Policy cutoff_policy(Cutoff tstar) {
  if (tstar.is_infinite()) {
    return state_feedback_policy([](int, int x, int) { return x == 0 ? kRequest : kWait; },
                                 "cutoff-inf");
  }
  const int c = tstar.value();
  return state_feedback_policy(
      [c](int, int, int m) { return (m == -1 || m == c) ? kRequest : kWait; },
      "cutoff-" + std::to_string(c));
}

inline int memory_time_cutoff(const History& h, Cutoff tstar) {
  if (h.empty()) throw ParameterError("memory time of an empty history");
  const int c = tstar.value();
  int ones = 0;
  for (auto x : h.observations()) ones += x;
  const int r = (ones - 1) % (c + 1);
  return r < 0 ? r + c + 1 : r;
}

struct SequenceStats {
  int y1 = 0;  // full (t*+1)-blocks of ones before the trailing run
  int y2 = 0;  // trailing ones, at most t*+1

  friend bool operator==(const SequenceStats&, const SequenceStats&) = default;
};

// The observation sequence of the cutoff policy determines its actions, so
// a sequence is either in the support or not. Returns nullopt for sequences
// the policy cannot produce.
inline std::optional<SequenceStats> sequence_stats(std::span<const std::uint8_t> xs,
                                                   Cutoff tstar) {
  if (xs.empty()) throw ParameterError("empty link value sequence");
  const auto t = xs.size();
  if (tstar.is_infinite()) {
    std::size_t first_one = t;
    for (std::size_t j = 0; j < t; ++j) {
      if (xs[j]) {
        first_one = j;
        break;
      }
    }
    for (std::size_t j = first_one; j < t; ++j) {
      if (!xs[j]) return std::nullopt;
    }
    return SequenceStats{0, static_cast<int>(t - first_one)};
  }
  const int block = tstar.value() + 1;
  SequenceStats s;
  int run = 0;
  for (std::size_t j = 0; j < t; ++j) {
    if (xs[j]) {
      ++run;
      continue;
    }
    if (run % block != 0) return std::nullopt;
    s.y1 += run / block;
    run = 0;
  }
  if (run > 0) {
    const int trailing = (run - 1) % block + 1;
    s.y1 += (run - trailing) / block;
    s.y2 = trailing;
  }
  return s;
}

inline std::optional<SequenceStats> sequence_stats(const History& h, Cutoff tstar) {
  return sequence_stats(h.observations(), tstar);
}

namespace detail {

inline double pow_or_one(double base, long e) {
  if (e == 0) return 1.0;
  return std::pow(base, static_cast<double>(e));
}

inline bool realizable(const SequenceStats& s, int t, Cutoff tstar) {
  if (s.y1 < 0 || s.y2 < 0) return false;
  if (tstar.is_infinite()) return s.y1 == 0 && s.y2 <= t;
  const int c = tstar.value();
  if (s.y2 > c + 1) return false;
  if (s.y2 == 0) return static_cast<long>(c + 1) * s.y1 <= t - 1;
  return static_cast<long>(c + 1) * s.y1 + s.y2 <= t;
}

// sum over x with n - x(t*+1) >= 0 of
//   C(n - x t*, x) p^(x + shift) (1-p)^(n - x(t*+1)) * weight(x),
// accumulating log C through its ratio in x so that no factorials appear.
template <class Weight>
double block_sum(int n, int tstar, double p, int shift, Weight&& weight) {
  if (n < 0) return 0.0;
  const double lp = p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
  const double lq = p < 1.0 ? std::log1p(-p) : -std::numeric_limits<double>::infinity();
  const long c = tstar;
  double sum = 0.0;
  double log_binom = 0.0;  // log C(n, 0)
  for (long x = 0;; ++x) {
    const long top = n - x * c;
    const long zeros = n - x * (c + 1);
    if (zeros < 0) break;
    const long pe = x + shift;
    const bool dead = (pe > 0 && p == 0.0) || (zeros > 0 && p == 1.0);
    if (!dead) {
      double lw = log_binom;
      if (pe > 0) lw += static_cast<double>(pe) * lp;
      if (zeros > 0) lw += static_cast<double>(zeros) * lq;
      sum += std::exp(lw) * weight(x);
    }
    // C(top - t*, x + 1) / C(top, x)
    //   = prod_{j<=t*} (top - x - j) / (prod_{j<t*} (top - j) * (x + 1))
    if (zeros - (c + 1) < 0) break;
    for (long j = 0; j <= c; ++j) log_binom += std::log(static_cast<double>(top - x - j));
    for (long j = 0; j < c; ++j) log_binom -= std::log(static_cast<double>(top - j));
    log_binom -= std::log(static_cast<double>(x + 1));
  }
  return sum;
}

inline void require_time(int t) {
  if (t < 1) throw ParameterError("time step must be at least 1");
}

}  // namespace detail

inline double history_prob_cutoff(const SequenceStats& s, int t, Cutoff tstar, double p) {
  detail::require_probability(p, "success probability");
  detail::require_time(t);
  if (!detail::realizable(s, t, tstar)) {
    throw ParameterError("sequence statistics not realizable at this (t, t*)");
  }
  if (tstar.is_infinite()) {
    return s.y2 == 0 ? detail::pow_or_one(1.0 - p, t)
                     : p * detail::pow_or_one(1.0 - p, t - s.y2);
  }
  const long c1 = tstar.value() + 1;
  if (s.y2 == 0) {
    return detail::pow_or_one(p, s.y1) * detail::pow_or_one(1.0 - p, t - c1 * s.y1);
  }
  return detail::pow_or_one(p, s.y1 + 1) * detail::pow_or_one(1.0 - p, t - s.y2 - c1 * s.y1);
}

namespace detail {

inline std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  if (a > std::numeric_limits<std::uint64_t>::max() - b) {
    throw LimitError("sequence count exceeds 64 bits");
  }
  return a + b;
}

inline std::uint64_t binomial_u64(long n, long k) {
  if (k < 0 || n < k) return 0;
  k = std::min(k, n - k);
  unsigned __int128 r = 1;
  for (long i = 1; i <= k; ++i) {
    r = r * static_cast<unsigned __int128>(n - k + i) / static_cast<unsigned __int128>(i);
    if (r > std::numeric_limits<std::uint64_t>::max()) {
      throw LimitError("binomial coefficient exceeds 64 bits");
    }
  }
  return static_cast<std::uint64_t>(r);
}

}  // namespace detail

inline std::uint64_t count_sequences(int t, Cutoff tstar) {
  detail::require_time(t);
  if (tstar.is_infinite()) return static_cast<std::uint64_t>(t) + 1;
  const long c = tstar.value();
  std::uint64_t total = 0;
  for (long x = 0; x <= (t - 1) / (c + 1); ++x) {
    total = detail::checked_add(total, detail::binomial_u64(t - 1 - x * c, x));
    for (long k = 1; k <= c + 1; ++k) {
      if (t - k - x * (c + 1) < 0) break;
      total = detail::checked_add(total, detail::binomial_u64(t - k - x * c, x));
    }
  }
  return total;
}

// Pr[M(t) = m, X(t) = x]. Finite t* takes m in 0..t*; infinite t* takes m
// in -1..t-1.
inline double joint_prob(int t, Cutoff tstar, double p, int m, int x) {
  detail::require_probability(p, "success probability");
  detail::require_time(t);
  if (x != 0 && x != 1) throw ParameterError("link value must be 0 or 1");
  if (tstar.is_infinite()) {
    if (m < -1 || m > t - 1) throw ParameterError("memory time out of range");
    if (x == 0) return m == -1 ? detail::pow_or_one(1.0 - p, t) : 0.0;
    if (m == -1) return 0.0;
    return p * detail::pow_or_one(1.0 - p, t - m - 1);
  }
  const int c = tstar.value();
  if (m < 0 || m > c) throw ParameterError("memory time out of range");
  if (x == 0) {
    if (m != c) return 0.0;
    if (t <= c + 1) return detail::pow_or_one(1.0 - p, t);
    return (1.0 - p) * detail::block_sum(t - 1, c, p, 0, [](long) { return 1.0; });
  }
  if (t <= c + 1) return m <= t - 1 ? p * detail::pow_or_one(1.0 - p, t - m - 1) : 0.0;
  return detail::block_sum(t - (m + 1), c, p, 1, [](long) { return 1.0; });
}

inline double prob_active(int t, Cutoff tstar, double p) {
  detail::require_probability(p, "success probability");
  detail::require_time(t);
  if (tstar.is_infinite() || t <= tstar.value() + 1) return 1.0 - detail::pow_or_one(1.0 - p, t);
  if (p == 1.0) return 1.0;
  const int c = tstar.value();
  double s = 0.0;
  for (int k = 1; k <= c + 1; ++k) s += detail::block_sum(t - k, c, p, 1, [](long) { return 1.0; });
  return s;
}

// Average link state under the cutoff policy; age[m] uses the cutoff memory
// convention and failure is Pr[X(t)=0] from its own closed form.
inline LinkStateMixture cutoff_mixture(int t, Cutoff tstar, double p) {
  LinkStateMixture mix;
  mix.time = t;
  if (tstar.is_infinite()) {
    mix.failure = joint_prob(t, tstar, p, -1, 0);
    for (int m = 0; m < t; ++m) mix.age.push_back(joint_prob(t, tstar, p, m, 1));
    return mix;
  }
  const int c = tstar.value();
  mix.failure = joint_prob(t, tstar, p, c, 0);
  const int ages = std::min(t, c + 1);
  for (int m = 0; m < ages; ++m) mix.age.push_back(joint_prob(t, tstar, p, m, 1));
  return mix;
}

struct SteadyState {
  double prob_active = 0.0;
  // Finite t* only: Pr[M=m, X=1] for m = 0..t*, and Pr[M=t*, X=0].
  std::vector<double> joint_active;
  double joint_inactive = 0.0;
  // Pr[M=m | X=1]; empty when the link is never active.
  std::optional<double> conditional_age;
};

inline SteadyState steady_state(Cutoff tstar, double p) {
  detail::require_probability(p, "success probability");
  SteadyState s;
  if (tstar.is_infinite()) {
    s.prob_active = p > 0.0 ? 1.0 : 0.0;
    s.joint_inactive = 1.0 - s.prob_active;
    return s;
  }
  const int c = tstar.value();
  const double denom = 1.0 + c * p;
  s.prob_active = (c + 1) * p / denom;
  s.joint_active.assign(static_cast<std::size_t>(c + 1), p / denom);
  s.joint_inactive = (1.0 - p) / denom;
  if (p > 0.0) s.conditional_age = 1.0 / (c + 1);
  return s;
}

inline LinkStateMixture steady_mixture(Cutoff tstar, double p) {
  if (tstar.is_infinite()) {
    throw ParameterError("no limiting age distribution for an infinite cutoff");
  }
  const auto s = steady_state(tstar, p);
  LinkStateMixture mix;
  mix.time = 0;
  mix.failure = s.joint_inactive;
  mix.age = s.joint_active;
  return mix;
}

inline LinkExpectations expected_fidelity_cutoff(int t, Cutoff tstar, double p,
                                                 const quantum::FidelityCurve& fcurve) {
  return expected_quantities(cutoff_mixture(t, tstar, p), fcurve);
}

inline LinkExpectations expected_fidelity_steady(Cutoff tstar, double p,
                                                 const quantum::FidelityCurve& fcurve) {
  return expected_quantities(steady_mixture(tstar, p), fcurve);
}

// E[S(t)], S = successful requests / requests up to time t.
inline double expected_success_rate(int t, Cutoff tstar, double p) {
  detail::require_probability(p, "success probability");
  detail::require_time(t);
  if (p == 1.0) return 1.0;
  if (tstar.is_infinite() || t <= tstar.value() + 1) {
    double s = 0.0;
    double q = 1.0;
    for (int j = 0; j < t; ++j) {
      s += p * q / (j + 1);
      q *= 1.0 - p;
    }
    return s;
  }
  const long c = tstar.value();
  double s = (1.0 - p) * detail::block_sum(t - 1, tstar.value(), p, 0, [&](long x) {
    return static_cast<double>(x) / static_cast<double>(t - c * x);
  });
  for (long k = 1; k <= c + 1; ++k) {
    s += detail::block_sum(t - static_cast<int>(k), tstar.value(), p, 1, [&](long x) {
      return static_cast<double>(x + 1) / static_cast<double>(t - k - c * x + 1);
    });
  }
  return s;
}

inline constexpr std::size_t kHyp2f1MaxTerms = 1'000'000;

// Gauss series sum_n (a)_n (b)_n / ((c)_n n!) z^n.
inline double hyp2f1_series(double a, double b, double c, double z) {
  if (!(std::abs(z) < 1.0)) throw ParameterError("hypergeometric series needs |z| < 1");
  if (c <= 0.0 && c == std::floor(c)) {
    throw ParameterError("hypergeometric c must not be a non-positive integer");
  }
  double term = 1.0;
  double sum = 1.0;
  for (std::size_t n = 0; n < kHyp2f1MaxTerms; ++n) {
    term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z;
    sum += term;
    if (term == 0.0 || std::abs(term) < 1e-14 * std::abs(sum)) return sum;
  }
  throw NumericError("hypergeometric series did not converge");
}

// lim_{t->inf} E[S(t)]: -p ln p / (1-p) for t* = inf, p for finite t*.
// p = 0 and p = 1 take their limiting values 0 and 1.
inline double success_rate_limit(Cutoff tstar, double p) {
  detail::require_probability(p, "success probability");
  if (tstar.is_finite()) return p;
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  return -p * std::log(p) / (1.0 - p);
}

// Plateau level after x full blocks: p * 2F1(1, 1, 2+x, 1-p).
inline double success_rate_plateau(int x, double p) {
  detail::require_probability(p, "success probability");
  if (x < 0) throw ParameterError("block count must be non-negative");
  if (p == 0.0) return 0.0;
  return p * hyp2f1_series(1.0, 1.0, 2.0 + x, 1.0 - p);
}

// Pr[A(t_req) = 1]: probability that the generator issues a fresh request
// at the moment the end user asks for the link.
inline double request_prob_at(int t_req, Cutoff tstar, double p) {
  detail::require_probability(p, "success probability");
  if (t_req < 0) throw ParameterError("request time must be non-negative");
  if (t_req == 0) return 1.0;
  if (tstar.is_infinite()) return detail::pow_or_one(1.0 - p, t_req);
  const int c = tstar.value();
  return joint_prob(t_req, tstar, p, c, 0) + joint_prob(t_req, tstar, p, c, 1);
}

// Pr[W(t_req) = w]. A held link is delivered at once (w = 0); otherwise the
// wait is geometric from the fresh request.
inline double waiting_time_pmf(int t_req, Cutoff tstar, double p, int w) {
  if (w < 0) throw ParameterError("waiting time must be non-negative");
  const double r = request_prob_at(t_req, tstar, p);
  if (w == 0) return 1.0 - r;
  return r * p * detail::pow_or_one(1.0 - p, w - 1);
}

inline double waiting_time_expectation(int t_req, Cutoff tstar, double p) {
  const double r = request_prob_at(t_req, tstar, p);
  if (p == 0.0) throw NumericError("expected waiting time is infinite when p = 0");
  return r / p;
}

inline double waiting_time_limit(Cutoff tstar, double p) {
  detail::require_probability(p, "success probability");
  if (p == 0.0) throw NumericError("expected waiting time is infinite when p = 0");
  if (tstar.is_infinite()) return 0.0;
  return 1.0 / (p * (1.0 + tstar.value() * p));
}

// Column-stochastic: entry (i, j) = Pr[state i at t+1 | state j at t].
// Finite t*: state (x, m) has index x (t*+1) + m. Infinite: index x.
struct TransitionMatrix {
  Cutoff tstar = Cutoff::infinite();
  Eigen::MatrixXd matrix;

  int index(int x, int m) const {
    if (tstar.is_infinite()) return x;
    return x * (tstar.value() + 1) + m;
  }
  int states() const { return static_cast<int>(matrix.rows()); }
};

inline TransitionMatrix transition_matrix(Cutoff tstar, double p) {
  detail::require_probability(p, "success probability");
  TransitionMatrix tm;
  tm.tstar = tstar;
  if (tstar.is_infinite()) {
    tm.matrix.resize(2, 2);
    tm.matrix << 1.0 - p, 0.0, p, 1.0;
    return tm;
  }
  const int c = tstar.value();
  const int n = 2 * (c + 1);
  tm.matrix = Eigen::MatrixXd::Zero(n, n);
  for (int m = 0; m <= c; ++m) {
    tm.matrix(tm.index(1, 0), tm.index(0, m)) = p;
    tm.matrix(tm.index(0, c), tm.index(0, m)) = 1.0 - p;
  }
  tm.matrix(tm.index(1, 0), tm.index(1, c)) += p;
  tm.matrix(tm.index(0, c), tm.index(1, c)) += 1.0 - p;
  for (int m = 0; m < c; ++m) tm.matrix(tm.index(1, m + 1), tm.index(1, m)) = 1.0;
  return tm;
}

inline Eigen::VectorXd initial_distribution(const TransitionMatrix& tm, double p) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(tm.states());
  if (tm.tstar.is_infinite()) {
    v << 1.0 - p, p;
  } else {
    v(tm.index(1, 0)) = p;
    v(tm.index(0, tm.tstar.value())) = 1.0 - p;
  }
  return v;
}

// Distribution of (X(t), M(t)) obtained from T^(t-1) applied to the t = 1
// distribution.
inline Eigen::VectorXd markov_distribution(Cutoff tstar, double p, int t) {
  detail::require_time(t);
  const auto tm = transition_matrix(tstar, p);
  Eigen::VectorXd v = initial_distribution(tm, p);
  for (int j = 1; j < t; ++j) v = tm.matrix * v;
  return v;
}

}  // namespace qlink
