#include <gtest/gtest.h>

#include <cmath>

#include "oracles/brute_force.hpp"
#include "qlink/cutoff.hpp"
#include "qlink/engine.hpp"

using namespace qlink;

namespace {

double total_weight(const LinkStateMixture& m) { return m.total(); }

}  // namespace

TEST(Evolve, SingleStep) {
  const auto mix = evolve_exhaustive(0.3, always_request_policy(), 1);
  ASSERT_EQ(mix.size(), 1u);
  EXPECT_DOUBLE_EQ(mix[0].failure, 0.7);
  ASSERT_EQ(mix[0].age.size(), 1u);
  EXPECT_DOUBLE_EQ(mix[0].age[0], 0.3);
}

TEST(Evolve, InfiniteCutoffTwoSteps) {
  const double p = 0.4;
  const auto mix = evolve_exhaustive(p, cutoff_policy(Cutoff::infinite()), 2);
  EXPECT_NEAR(mix[1].failure, (1 - p) * (1 - p), 1e-15);
  EXPECT_NEAR(mix[1].age[0], p * (1 - p), 1e-15);
  EXPECT_NEAR(mix[1].age[1], p, 1e-15);
}

TEST(Evolve, ZeroCutoffIsStationary) {
  const double p = 0.35;
  const auto mix = evolve_exhaustive(p, cutoff_policy(Cutoff::finite(0)), 9);
  for (const auto& m : mix) {
    EXPECT_NEAR(m.failure, 1 - p, 1e-14);
    EXPECT_NEAR(m.age[0], p, 1e-14);
    for (std::size_t k = 1; k < m.age.size(); ++k) EXPECT_EQ(m.age[k], 0.0);
  }
}

TEST(Evolve, WeightsNormalizedForAllPolicies) {
  const std::vector<Policy> policies = {always_request_policy(), cutoff_policy(Cutoff::finite(1)),
                                        cutoff_policy(Cutoff::finite(4)), cutoff_policy(Cutoff::infinite()),
                                        randomized_keep_policy(0.3)};
  for (const auto& pi : policies)
    for (double p : {0.0, 0.2, 0.7, 1.0}) {
      const auto mix = evolve_exhaustive(p, pi, 12);
      for (const auto& m : mix) {
        EXPECT_NEAR(total_weight(m), 1.0, 1e-12);
        EXPECT_GE(m.failure, 0.0);
        for (double w : m.age) EXPECT_GE(w, 0.0);
      }
    }
}

TEST(Evolve, MatchesBruteForceOnCutoffPolicies) {
  for (int c : {-1, 0, 1, 3})
    for (double p : {0.1, 0.5, 0.9}) {
      const auto tstar = c < 0 ? Cutoff::infinite() : Cutoff::finite(c);
      const auto mix = evolve_exhaustive(p, cutoff_policy(tstar), 11);
      for (int t = 1; t <= 11; ++t) {
        const auto bf = oracle::moments(t, c, p, [](int) { return 1.0; });
        EXPECT_NEAR(mix[t - 1].active(), bf.prob_active, 1e-12);
        // general memory time agrees with the cutoff convention while loaded
        for (std::size_t m = 0; m < mix[t - 1].age.size(); ++m)
          EXPECT_NEAR(mix[t - 1].age[m], bf.joint_active[m], 1e-12);
      }
    }
}

TEST(Evolve, SupportCountMatchesCountingLemma) {
  for (int c : {0, 1, 2, 3, 5})
    for (int t = 1; t <= 14; ++t) {
      std::uint64_t nodes = 0;
      enumerate_support(0.5, cutoff_policy(Cutoff::finite(c)), t, [&](const History& h, double) {
        if (static_cast<int>(h.length()) == t) ++nodes;
      });
      EXPECT_EQ(nodes, count_sequences(t, Cutoff::finite(c))) << "t*=" << c << " t=" << t;
    }
}

TEST(Evolve, Limits) {
  EXPECT_THROW(evolve_exhaustive(0.5, always_request_policy(), kMaxExhaustiveHorizon + 1), LimitError);
  EXPECT_THROW(evolve_exhaustive(1.5, always_request_policy(), 3), ParameterError);
  EXPECT_THROW(evolve_exhaustive(0.5, always_request_policy(), 0), ParameterError);
}

TEST(Expectations, SingleStepAndPerfectMemory) {
  const double p = 0.3;
  const auto f = quantum::depolarizing_curve(0.9, 0.8, 4);
  const auto one = evolve_exhaustive(p, always_request_policy(), 1)[0];
  const auto e = expected_quantities(one, f);
  EXPECT_NEAR(e.e_ftilde, p * f(0), 1e-15);
  ASSERT_TRUE(e.e_f.has_value());
  EXPECT_NEAR(*e.e_f, f(0), 1e-15);

  const auto two = evolve_exhaustive(p, cutoff_policy(Cutoff::infinite()), 2)[1];
  EXPECT_NEAR(expected_quantities(two, f).e_ftilde, p * f(1) + p * (1 - p) * f(0), 1e-15);

  const auto perfect = quantum::constant_curve(1.0);
  for (const auto& m : evolve_exhaustive(0.2, cutoff_policy(Cutoff::finite(2)), 8)) {
    const auto ex = expected_quantities(m, perfect);
    EXPECT_NEAR(*ex.e_f, 1.0, 1e-12);
    double s = 0.0;
    for (double c : ex.conditional_age) s += c;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Expectations, NeverActiveIsUndefined) {
  const auto mix = evolve_exhaustive(0.0, always_request_policy(), 4)[3];
  const auto e = expected_quantities(mix, quantum::constant_curve(1.0));
  EXPECT_EQ(e.prob_active, 0.0);
  EXPECT_FALSE(e.e_f.has_value());
}

TEST(Materialize, BlockStructure) {
  const auto phi = quantum::bell_phi_plus();
  const auto params = LinkParams::materialized(0.5, quantum::DensityOperator::from_pure(phi),
                                               quantum::depolarizing_channel(0.9, 4), phi);
  LinkStateMixture mix{1, 0.5, {0.5}};
  const auto rho = materialize_average_state(mix, params);
  ASSERT_EQ(rho.dim(), 5);
  EXPECT_NEAR(rho.matrix()(4, 4).real(), 0.5, 1e-15);
  EXPECT_NEAR(quantum::fidelity(rho, padded_target(phi)), 0.5, 1e-14);

  LinkStateMixture vac{1, 1.0, {0.0}};
  const auto v = materialize_average_state(vac, params);
  EXPECT_NEAR(v.matrix()(4, 4).real(), 1.0, 1e-15);
  EXPECT_NEAR(v.matrix().trace().real(), 1.0, 1e-15);

  LinkStateMixture full{2, 0.0, {0.25, 0.75}};
  const auto r = materialize_average_state(full, params);
  const quantum::Matrix expect =
      0.25 * phi.projector() + 0.75 * quantum::apply_kraus(params.quantum->memory_channel, phi.projector());
  EXPECT_LT((r.matrix().topLeftCorner(4, 4) - expect).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(r.matrix()(4, 4).real(), 0.0);
}

TEST(Materialize, FidelityMatchesExpectation) {
  const auto phi = quantum::bell_phi_plus();
  const auto params = LinkParams::materialized(0.4, quantum::werner(0.92),
                                               quantum::depolarizing_channel(0.85, 4), phi);
  const auto mix = evolve_exhaustive(params, cutoff_policy(Cutoff::finite(3)), 9);
  for (const auto& m : mix) {
    const auto rho = materialize_average_state(m, params);
    EXPECT_NEAR(quantum::fidelity(rho, padded_target(phi)),
                expected_quantities(m, params.fidelity).e_ftilde, 1e-12);
  }
}

TEST(Materialize, SymbolicParamsRejected) {
  const auto params = LinkParams::symbolic(0.5, quantum::constant_curve(1.0));
  EXPECT_THROW(materialize_average_state(LinkStateMixture{1, 0.5, {0.5}}, params), ParameterError);
}
