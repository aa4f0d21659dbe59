#pragma once

// Monte Carlo trajectories of the link decision process.
//
// Every trial draws from its own mt19937_64 stream seeded from
// (seed, trial index), and partial sums are formed over fixed-size blocks of
// trials that are combined in block order. Results are therefore identical
// for any thread count.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include "qlink/engine.hpp"
#include "qlink/errors.hpp"
#include "qlink/history.hpp"

namespace qlink {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : engine_(stream_seed(seed, stream)) {}

  // 53-bit uniform on [0,1); engine output is fixed by the standard, unlike
  // std::uniform_real_distribution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Inverse CDF on one uniform draw: 1 with probability q.
  int bernoulli(double q) { return uniform() < q ? 1 : 0; }

 private:
  std::mt19937_64 engine_;
};

// Pr[X(t+1)=1 | A(t)=1] = p, and A(t)=0 keeps X(t+1)=X(t).
inline void step_trajectory(History& h, double p, const Policy& pi, Rng& rng) {
  const int a = rng.bernoulli(pi.request_probability(h));
  const int x = a == kRequest ? rng.bernoulli(p) : h.current_observation();
  h.extend(a, x);
}

struct TrajectorySample {
  History history;
  int memory_time = -1;
  int status = 0;
  double ftilde = 0.0;  // X(T) f_{M(T)}
};

inline TrajectorySample sample_trajectory(double p, const Policy& pi, int horizon,
                                          const quantum::FidelityCurve& fcurve, Rng& rng) {
  if (horizon < 1) throw ParameterError("horizon must be at least 1");
  TrajectorySample s;
  s.history.start(rng.bernoulli(p));
  while (static_cast<int>(s.history.length()) < horizon) step_trajectory(s.history, p, pi, rng);
  s.status = s.history.current_observation();
  s.memory_time = s.history.memory_time();
  s.ftilde = s.status ? fcurve(s.memory_time) : 0.0;
  return s;
}

struct Estimate {
  double mean = 0.0;
  std::optional<double> std_error;  // empty with fewer than two samples
  std::size_t samples = 0;
};

namespace detail {

struct Moments {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;

  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  void merge(const Moments& o) {
    sum += o.sum;
    sum_sq += o.sum_sq;
    n += o.n;
  }
  Estimate estimate() const {
    Estimate e;
    e.samples = n;
    if (n == 0) return e;
    e.mean = sum / static_cast<double>(n);
    if (n >= 2) {
      const double var =
          std::max(0.0, (sum_sq - sum * e.mean) / static_cast<double>(n - 1));
      e.std_error = std::sqrt(var / static_cast<double>(n));
    }
    return e;
  }
};

inline constexpr std::size_t kTrialBlock = 2048;

// Runs body(block_index, begin, end) for fixed blocks of trials across
// threads; callers merge per-block results in block order.
template <class Body>
void for_each_block(std::size_t trials, unsigned threads, Body&& body) {
  const std::size_t blocks = (trials + kTrialBlock - 1) / kTrialBlock;
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(blocks, 1))));
  auto run = [&](unsigned worker) {
    for (std::size_t b = worker; b < blocks; b += threads) {
      body(b, b * kTrialBlock, std::min(trials, (b + 1) * kTrialBlock));
    }
  };
  if (threads == 1) {
    run(0);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) pool.emplace_back(run, w);
  for (auto& th : pool) th.join();
}

}  // namespace detail

struct SimulationResult {
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  // Index t-1 for t = 1..horizon.
  std::vector<Estimate> prob_active;
  std::vector<Estimate> e_ftilde;
  std::vector<Estimate> e_f;  // over active trials; samples == 0 means undefined
  std::vector<Estimate> e_s;
  std::vector<std::size_t> active_count;
};

inline SimulationResult simulate_trajectories(const LinkParams& params, const Policy& pi,
                                              int horizon, std::size_t trials,
                                              std::uint64_t seed, unsigned threads = 1) {
  if (trials < 1) throw ParameterError("at least one trial is required");
  if (horizon < 1) throw ParameterError("horizon must be at least 1");
  const double p = params.success_prob;
  const auto T = static_cast<std::size_t>(horizon);
  const auto fvals = params.fidelity.tabulate(horizon - 1);

  struct Block {
    std::vector<detail::Moments> x, ft, f, s;
  };
  const std::size_t nblocks = (trials + detail::kTrialBlock - 1) / detail::kTrialBlock;
  std::vector<Block> blocks(nblocks);

  detail::for_each_block(trials, threads, [&](std::size_t b, std::size_t begin, std::size_t end) {
    Block acc{std::vector<detail::Moments>(T), std::vector<detail::Moments>(T),
              std::vector<detail::Moments>(T), std::vector<detail::Moments>(T)};
    History h;
    for (std::size_t trial = begin; trial < end; ++trial) {
      Rng rng(seed, trial);
      h = History();
      h.start(rng.bernoulli(p));
      for (std::size_t t = 1;; ++t) {
        const int x = h.current_observation();
        const double ft = x ? fvals[static_cast<std::size_t>(h.memory_time())] : 0.0;
        acc.x[t - 1].add(x);
        acc.ft[t - 1].add(ft);
        if (x) acc.f[t - 1].add(ft);
        acc.s[t - 1].add(static_cast<double>(h.successes()) / h.requests());
        if (t == T) break;
        step_trajectory(h, p, pi, rng);
      }
    }
    blocks[b] = std::move(acc);
  });

  SimulationResult out;
  out.trials = trials;
  out.seed = seed;
  for (std::size_t t = 0; t < T; ++t) {
    detail::Moments x, ft, f, s;
    for (const auto& b : blocks) {
      x.merge(b.x[t]);
      ft.merge(b.ft[t]);
      f.merge(b.f[t]);
      s.merge(b.s[t]);
    }
    out.prob_active.push_back(x.estimate());
    out.e_ftilde.push_back(ft.estimate());
    out.e_f.push_back(f.estimate());
    out.e_s.push_back(s.estimate());
    out.active_count.push_back(x.n == 0 ? 0 : static_cast<std::size_t>(std::llround(x.sum)));
  }
  return out;
}

// Always-on generation with an end-user request at t_req. The wait is zero
// when the policy keeps a held link at t_req (A(t_req) = 0); otherwise it is
// the number of steps until the link is next active.
inline Estimate simulate_waiting_time(double p, const Policy& pi, int t_req, std::size_t trials,
                                      std::uint64_t seed, unsigned threads = 1) {
  detail::require_probability(p, "success probability");
  if (p == 0.0) throw NumericError("waiting time is infinite when p = 0");
  if (t_req < 0) throw ParameterError("request time must be non-negative");
  if (trials < 1) throw ParameterError("at least one trial is required");
  const std::size_t nblocks = (trials + detail::kTrialBlock - 1) / detail::kTrialBlock;
  std::vector<detail::Moments> blocks(nblocks);
  detail::for_each_block(trials, threads, [&](std::size_t b, std::size_t begin, std::size_t end) {
    detail::Moments acc;
    for (std::size_t trial = begin; trial < end; ++trial) {
      Rng rng(seed, trial);
      History h;
      int wait = 0;
      bool requesting = true;
      if (t_req > 0) {
        h.start(rng.bernoulli(p));
        while (static_cast<int>(h.length()) < t_req) step_trajectory(h, p, pi, rng);
        requesting = rng.bernoulli(pi.request_probability(h)) == kRequest;
      }
      if (requesting) {
        do {
          ++wait;
        } while (rng.bernoulli(p) == 0);
      }
      acc.add(wait);
    }
    blocks[b] = acc;
  });
  detail::Moments all;
  for (const auto& b : blocks) all.merge(b);
  return all.estimate();
}

}  // namespace qlink
