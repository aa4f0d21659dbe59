#pragma once

// Exact evolution of the classical-quantum link state under an arbitrary
// policy, by walking the support of the history distribution.

#include <cmath>
#include <cstddef>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qlink/errors.hpp"
#include "qlink/history.hpp"
#include "qlink/quantum.hpp"

namespace qlink {

// Matrices behind a link, used when average states must be materialized.
struct MaterializedLink {
  quantum::DensityOperator initial_state;
  quantum::KrausChannel memory_channel;
  quantum::PureState target;
};

// The engine itself only needs p and the fidelity curve; the quantum
// description is an optional backend.
struct LinkParams {
  double success_prob = 0.0;
  quantum::FidelityCurve fidelity;
  std::optional<MaterializedLink> quantum;

  static LinkParams symbolic(double p, quantum::FidelityCurve curve) {
    detail::require_probability(p, "success probability");
    return LinkParams{p, std::move(curve), std::nullopt};
  }

  static LinkParams materialized(double p, quantum::DensityOperator rho0,
                                 quantum::KrausChannel channel, quantum::PureState target) {
    detail::require_probability(p, "success probability");
    auto curve = quantum::channel_powered_curve(rho0, channel, target);
    return LinkParams{p, std::move(curve),
                      MaterializedLink{std::move(rho0), std::move(channel), std::move(target)}};
  }
};

// Average link state at time t:
//   failure * tau + sum_m age[m] * rho(m)
// with failure = 1 - Pr[X(t)=1] and age[m] = Pr[X(t)=1, M(t)=m].
// time == 0 marks a t -> infinity limit.
struct LinkStateMixture {
  int time = 0;
  double failure = 1.0;
  std::vector<double> age;

  double active() const {
    double s = 0.0;
    for (double w : age) s += w;
    return s;
  }

  double total() const { return failure + active(); }
};

struct LinkExpectations {
  double prob_active = 0.0;
  double e_ftilde = 0.0;
  // Empty when the link is never active.
  std::optional<double> e_f;
  std::vector<double> conditional_age;
};

inline LinkExpectations expected_quantities(const LinkStateMixture& mix,
                                            const quantum::FidelityCurve& fcurve) {
  LinkExpectations out;
  for (std::size_t m = 0; m < mix.age.size(); ++m) {
    out.prob_active += mix.age[m];
    if (mix.age[m] != 0.0) out.e_ftilde += fcurve(static_cast<int>(m)) * mix.age[m];
  }
  if (out.prob_active > 0.0) {
    out.e_f = out.e_ftilde / out.prob_active;
    out.conditional_age.reserve(mix.age.size());
    for (double w : mix.age) out.conditional_age.push_back(w / out.prob_active);
  }
  return out;
}

inline constexpr int kExhaustiveWarnHorizon = 20;
inline constexpr int kMaxExhaustiveHorizon = 26;
inline constexpr std::size_t kMaxExhaustiveNodes = 100'000'000;

// Depth-first walk over every history of length 1..horizon with non-zero
// probability. visit(history, probability) is called once per node. Branches
// on the action only where the policy randomizes; a wait never forks x.
template <class Visitor>
std::size_t enumerate_support(double p, const Policy& pi, int horizon, Visitor&& visit) {
  detail::require_probability(p, "success probability");
  if (horizon < 1) throw ParameterError("horizon must be at least 1");
  if (horizon > kMaxExhaustiveHorizon) {
    throw LimitError("horizon " + std::to_string(horizon) + " exceeds the exhaustive limit of " +
                     std::to_string(kMaxExhaustiveHorizon));
  }
  std::size_t nodes = 0;
  History h;
  auto recurse = [&](auto&& self, double prob) -> void {
    if (++nodes > kMaxExhaustiveNodes) {
      throw LimitError("history support too large for exhaustive evaluation");
    }
    visit(static_cast<const History&>(h), prob);
    if (static_cast<int>(h.length()) == horizon) return;
    const double q = pi.request_probability(h);
    if (q < 1.0) {
      h.extend(kWait, h.current_observation());
      self(self, prob * (1.0 - q));
      h.pop();
    }
    if (q > 0.0) {
      if (p < 1.0) {
        h.extend(kRequest, 0);
        self(self, prob * q * (1.0 - p));
        h.pop();
      }
      if (p > 0.0) {
        h.extend(kRequest, 1);
        self(self, prob * q * p);
        h.pop();
      }
    }
  };
  if (p < 1.0) {
    h.start(0);
    recurse(recurse, 1.0 - p);
    h.pop();
  }
  if (p > 0.0) {
    h.start(1);
    recurse(recurse, p);
    h.pop();
  }
  return nodes;
}

// Mixture at every t = 1..horizon.
inline std::vector<LinkStateMixture> evolve_exhaustive(double p, const Policy& pi, int horizon) {
  if (horizon > kExhaustiveWarnHorizon) {
    std::clog << "qlink: exhaustive evolution with horizon " << horizon
              << " may enumerate up to 2^" << horizon << " histories\n";
  }
  std::vector<LinkStateMixture> out;
  if (horizon >= 1) {
    out.resize(static_cast<std::size_t>(horizon));
    for (int t = 1; t <= horizon; ++t) {
      out[t - 1].time = t;
      out[t - 1].failure = 0.0;
      out[t - 1].age.assign(static_cast<std::size_t>(t), 0.0);
    }
  }
  enumerate_support(p, pi, horizon, [&](const History& h, double prob) {
    auto& mix = out[h.length() - 1];
    if (h.current_observation() == 1) {
      mix.age[static_cast<std::size_t>(h.memory_time())] += prob;
    } else {
      mix.failure += prob;
    }
  });
  return out;
}

inline std::vector<LinkStateMixture> evolve_exhaustive(const LinkParams& params, const Policy& pi,
                                                       int horizon) {
  return evolve_exhaustive(params.success_prob, pi, horizon);
}

// Pads psi with a zero amplitude on the appended vacuum basis vector.
inline quantum::PureState padded_target(const quantum::PureState& psi) {
  quantum::Vector v = quantum::Vector::Zero(psi.dim() + 1);
  v.head(psi.dim()) = psi.amplitudes();
  return quantum::PureState(std::move(v));
}

// Failure weight sits on one extra basis vector |vac> orthogonal to the
// link space, so the result lives on C^(d+1).
inline quantum::DensityOperator materialize_average_state(const LinkStateMixture& mix,
                                                          const LinkParams& params) {
  if (!params.quantum) {
    throw ParameterError("materialization needs a link with explicit matrices");
  }
  const auto& q = *params.quantum;
  const int d = q.initial_state.dim();
  quantum::Matrix out = quantum::Matrix::Zero(d + 1, d + 1);
  quantum::Matrix rho = q.initial_state.matrix();
  for (std::size_t m = 0; m < mix.age.size(); ++m) {
    if (m > 0) rho = quantum::apply_kraus(q.memory_channel, rho);
    out.topLeftCorner(d, d) += mix.age[m] * rho;
  }
  out(d, d) = mix.failure;
  return quantum::DensityOperator(std::move(out));
}

}  // namespace qlink
