#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "qlink/io/commands.hpp"
#include "qlink/io/config.hpp"
#include "qlink/io/csv.hpp"

using namespace qlink;
using namespace qlink::io;

namespace {

ConfigDocument doc(const std::string& text) { return ConfigDocument::parse(text, "test.json"); }

std::string csv(const ResultTable& t) {
  std::ostringstream ss;
  write_csv(ss, t);
  return ss.str();
}

ResultTable reparse(const ResultTable& t) {
  std::istringstream in(csv(t));
  return read_csv(in);
}

std::size_t error_line(const std::string& text, const std::function<void(const ConfigDocument&)>& run = {}) {
  try {
    const auto d = doc(text);
    if (run) run(d);
  } catch (const ConfigError& e) {
    return e.line();
  }
  ADD_FAILURE() << "no ConfigError for:\n" << text;
  return 0;
}

std::string hash_of(const ResultTable& t) { return *t.meta("config_hash"); }

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

const char* kLinkConfig = R"({
  "schema_version": 1,
  "link": {"p": 0.3, "tstar": 3},
  "time": {"from": 1, "to": 10}
})";

}  // namespace

TEST(Csv, NumbersRoundTripBitExactly) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ResultTable t({"x", "y", "label"});
  std::vector<double> xs;
  for (int i = 0; i < 2000; ++i) {
    const double x = u(gen) * std::pow(10.0, static_cast<int>(gen() % 40) - 20);
    xs.push_back(x);
    t.add_row({x, static_cast<long long>(i) - 1000, std::string(i % 2 ? "a,b" : "say \"hi\"")});
  }
  for (double special : {0.0, 1.0, 0.1, 1e-300, 5e-324, 1.7976931348623157e308, 1.0 / 3.0}) {
    xs.push_back(special);
    t.add_row({special, 0LL, std::string("s")});
  }
  const auto back = reparse(t);
  ASSERT_EQ(back.rows().size(), t.rows().size());
  ASSERT_EQ(back.columns(), t.columns());
  for (std::size_t r = 0; r < xs.size(); ++r) {
    EXPECT_TRUE(same_bits(*back.number(r, "x"), xs[r])) << r;
    EXPECT_EQ(back.rows()[r][2], t.rows()[r][2]);
  }
}

TEST(Csv, MetadataAndMissingValues) {
  ResultTable t({"t", "v"});
  t.set_meta("seed", "12");
  t.add_row({1LL, NA{}});
  t.add_row({std::string("inf"), 2.5});
  const auto back = reparse(t);
  EXPECT_EQ(*back.meta("seed"), "12");
  EXPECT_FALSE(back.number(0, "v").has_value());
  EXPECT_EQ(std::get<std::string>(back.rows()[1][0]), "inf");
  EXPECT_THROW(t.add_row({1LL}), ParameterError);
}

TEST(Csv, CommandOutputsRoundTrip) {
  const auto d = doc(R"({"schema_version": 1,
    "link": {"p": [0.2, 0.7], "tstar": [0, 4, "inf"],
             "fidelity": {"model": "depolarizing", "f0": 0.9, "lambda": 0.95}},
    "time": {"from": 1, "to": 30, "limit": true}})");
  const auto t = run_analytic(d).table;
  const auto back = reparse(t);
  ASSERT_EQ(back.rows().size(), t.rows().size());
  for (std::size_t r = 0; r < t.rows().size(); ++r)
    for (std::size_t c = 0; c < t.columns().size(); ++c) {
      const auto& a = t.rows()[r][c];
      const auto& b = back.rows()[r][c];
      if (const auto* x = std::get_if<double>(&a)) {
        const auto y = back.number(r, t.columns()[c]);
        ASSERT_TRUE(y.has_value());
        EXPECT_TRUE(same_bits(*x, *y));
      } else {
        EXPECT_EQ(a, b);
      }
    }
  EXPECT_EQ(back.metadata(), t.metadata());
}

TEST(Config, ErrorsCarryLineNumbers) {
  auto run = [](const ConfigDocument& d) { run_analytic(d); };
  EXPECT_EQ(error_line("{\n \"schema_version\": 1,\n \"link\": {\"p\": 1.5, \"tstar\": 3},\n \"time\": [1]\n}", run), 3u);
  EXPECT_EQ(error_line("{\n \"schema_version\": 1,\n \"link\": {\"p\": 0.3,\n   \"tstar\": \"never\"},\n \"time\": [1]\n}", run), 4u);
  EXPECT_EQ(error_line("{\n \"schema_version\": 1,\n \"link\": {\"p\": 0.3, \"tstar\": 3},\n\n \"time\": []\n}", run), 5u);
  EXPECT_EQ(error_line("{\n \"schema_version\": 1,\n \"link\": {\"p\": 0.3, \"tstar\": 3},\n \"time\": [1],\n \"extra\": 0\n}", run), 5u);
  EXPECT_EQ(error_line("{\n \"schema_version\": 2,\n \"link\": {\"p\": 0.3, \"tstar\": 3},\n \"time\": [1]\n}", run), 2u);
  // Syntax errors: trailing comma, unterminated object, duplicate key.
  EXPECT_EQ(error_line("{\n \"schema_version\": 1,\n \"time\": [1,],\n}"), 3u);
  EXPECT_EQ(error_line("{\n \"schema_version\": 1,\n \"link\": {\"p\": 0.3\n"), 3u);
  EXPECT_EQ(error_line("{\n \"a\": 1,\n\n \"a\": 2\n}"), 4u);
  EXPECT_EQ(error_line("[1, 2]"), 1u);
}

TEST(Config, MissingKeysAndTypes) {
  auto run = [](const ConfigDocument& d) { run_analytic(d); };
  EXPECT_EQ(error_line("{\n \"schema_version\": 1,\n \"link\": {\n  \"tstar\": 3\n },\n \"time\": [1]\n}", run), 3u);
  EXPECT_EQ(error_line("{\n \"schema_version\": 1,\n \"link\": {\"p\": 0.3, \"tstar\": 3},\n \"time\": [1.5]\n}", run), 4u);
  EXPECT_EQ(error_line("{\n \"schema_version\": 1,\n \"link\": {\"p\": 0.3, \"tstar\": 3},\n \"time\": [0]\n}", run), 4u);
  EXPECT_EQ(error_line("{\"schema_version\": 1, \"time\": [1]}", run), 1u);
}

TEST(Config, HashTracksSemanticsOnly) {
  const auto base = hash_of(run_analytic(doc(kLinkConfig)).table);
  // Formatting, key order, and equivalent spellings do not matter.
  const std::vector<std::string> same{
      R"({"time": {"to": 10, "from": 1}, "link": {"tstar": 3, "p": 0.3}, "schema_version": 1})",
      R"({"schema_version": 1, "link": {"p": 0.3, "tstar": [3]}, "time": [1,2,3,4,5,6,7,8,9,10]})",
      R"({"schema_version": 1, "link": {"p": 0.3, "tstar": 3, "fidelity": {"model": "constant"}},
          "time": {"from": 1, "to": 10, "step": 1, "limit": false},
          "quantities": ["e_w", "e_s", "e_f", "e_ftilde", "prob_active"]})",
      R"({"schema_version": 1, "link": {"p": 0.3, "tstar": 3}, "time": {"from": 1, "to": 10}, "threads": 8})",
  };
  for (const auto& s : same) EXPECT_EQ(hash_of(run_analytic(doc(s)).table), base) << s;
  const std::vector<std::string> different{
      R"({"schema_version": 1, "link": {"p": 0.31, "tstar": 3}, "time": {"from": 1, "to": 10}})",
      R"({"schema_version": 1, "link": {"p": 0.3, "tstar": 4}, "time": {"from": 1, "to": 10}})",
      R"({"schema_version": 1, "link": {"p": 0.3, "tstar": 3}, "time": {"from": 1, "to": 11}})",
      R"({"schema_version": 1, "link": {"p": 0.3, "tstar": 3}, "time": {"from": 1, "to": 10, "limit": true}})",
      R"({"schema_version": 1, "link": {"p": 0.3, "tstar": 3}, "time": {"from": 1, "to": 10}, "quantities": ["e_s"]})",
      R"({"schema_version": 1, "link": {"p": 0.3, "tstar": 3, "fidelity": {"model": "constant", "f": 0.9}},
          "time": {"from": 1, "to": 10}})",
  };
  for (const auto& s : different) EXPECT_NE(hash_of(run_analytic(doc(s)).table), base) << s;
  EXPECT_NE(hash_of(run_sweep(doc(kLinkConfig)).table), base);

  const char* sim = R"({"schema_version": 1, "link": {"p": 0.3, "tstar": 3}, "time": [1, 2],
                        "simulation": {"trials": 10, "seed": 1}})";
  const auto h1 = hash_of(run_simulate(doc(sim)).table);
  EXPECT_EQ(hash_of(run_simulate(doc(sim), RunOptions{1, 4}).table), h1);
  EXPECT_NE(hash_of(run_simulate(doc(sim), RunOptions{2, 1}).table), h1);
}

TEST(Analytic, LinkRows) {
  const auto t = run_analytic(doc(kLinkConfig)).table;
  ASSERT_EQ(t.rows().size(), 10u);
  EXPECT_EQ(t.columns(), (std::vector<std::string>{"p", "tstar", "t", "prob_active", "e_ftilde", "e_f", "e_s", "e_w"}));
  EXPECT_NEAR(*t.number(3, "prob_active"), 1 - std::pow(0.7, 4), 1e-15);
  EXPECT_EQ(*t.number(3, "t"), 4.0);
  for (std::size_t r = 0; r < 10; ++r) {
    const int time = static_cast<int>(*t.number(r, "t"));
    const auto c = Cutoff::finite(3);
    EXPECT_EQ(*t.number(r, "prob_active"), prob_active(time, c, 0.3));
    EXPECT_EQ(*t.number(r, "e_s"), expected_success_rate(time, c, 0.3));
    EXPECT_EQ(*t.number(r, "e_w"), waiting_time_expectation(time, c, 0.3));
    EXPECT_EQ(*t.number(r, "e_f"), 1.0);
  }
}

TEST(Analytic, CutoffListAndLimit) {
  const auto t = run_analytic(doc(R"({"schema_version": 1,
    "link": {"p": 0.3, "tstar": [0, 5, 10, 35, "inf"]},
    "time": {"from": 1, "to": 60, "limit": true}, "quantities": ["prob_active", "e_ftilde", "e_w"]})"))
                     .table;
  ASSERT_EQ(t.rows().size(), 5u * 61u);
  // Rows of one cutoff are contiguous, time-ordered, limit last.
  const auto last = t.rows()[60];
  EXPECT_EQ(std::get<std::string>(last[2]), "inf");
  EXPECT_NEAR(*t.number(60, "prob_active"), 0.3, 1e-15);
  EXPECT_NEAR(*t.number(60, "e_w"), 1 / 0.3, 1e-12);
  const auto inf_limit = t.rows().back();
  EXPECT_EQ(std::get<std::string>(inf_limit[1]), "inf");
  EXPECT_EQ(*t.number(t.rows().size() - 1, "prob_active"), 1.0);
  EXPECT_FALSE(t.number(t.rows().size() - 1, "e_ftilde").has_value());
  for (int k = 1; k <= 60; ++k)
    EXPECT_EQ(*t.number(4 * 61 + k - 1, "prob_active"), prob_active(k, Cutoff::infinite(), 0.3));
}

TEST(Analytic, RequestTimeZeroAndEmptyGrid) {
  const auto t = run_analytic(doc(R"({"schema_version": 1, "link": {"p": 0.25, "tstar": [0, 2]},
    "time": {"from": 0, "to": 3}, "quantities": ["e_w"]})"))
                     .table;
  EXPECT_EQ(*t.number(0, "e_w"), 4.0);
  EXPECT_EQ(*t.number(4, "e_w"), 4.0);
  EXPECT_THROW(run_analytic(doc(R"({"schema_version": 1, "link": {"p": 0.25, "tstar": 1}, "time": [0]})")),
               ConfigError);
  EXPECT_THROW(run_analytic(doc(R"({"schema_version": 1, "link": {"p": 0.25, "tstar": 1}, "time": []})")),
               ConfigError);
  EXPECT_THROW(run_analytic(doc(R"({"schema_version": 1, "link": {"p": 0.25, "tstar": 1},
    "time": {"from": 5, "to": 4}})")),
               ConfigError);
}

TEST(Analytic, Network) {
  const auto t = run_analytic(doc(R"({"schema_version": 1,
    "network": {"edges": [{"id": "a", "links": [{"p": 0.3, "tstar": 5}, {"p": 0.3, "tstar": 5}]},
                          {"id": "b", "links": [{"p": 0.5, "tstar": 2}]}]},
    "time": {"from": 1, "to": 5, "limit": true}})"))
                     .table;
  ASSERT_EQ(t.rows().size(), 6u);
  EXPECT_NEAR(*t.number(5, "p_any_a"), 1 - 0.28 * 0.28, 1e-15);
  EXPECT_NEAR(*t.number(5, "p_any_b"), 0.75, 1e-15);
  EXPECT_NEAR(*t.number(5, "collective_status"), (1 - 0.28 * 0.28) * 0.75, 1e-15);
  EXPECT_NEAR(*t.number(0, "e_total_links"), 1.1, 1e-15);
  EXPECT_THROW(run_analytic(doc(R"({"schema_version": 1,
    "network": {"edges": [{"id": "a", "links": [{"p": 0.3, "tstar": 5}]}, {"id": "a", "links": [{"p": 0.3, "tstar": 1}]}]},
    "time": [1]})")),
               ConfigError);
}

TEST(Sweep, OrderAndThreadInvariance) {
  const char* cfg = R"({"schema_version": 1,
    "link": {"p": {"from": 0.1, "to": 0.9, "step": 0.2}, "tstar": [0, 3, "inf"],
             "fidelity": {"model": "depolarizing", "f0": 0.95, "lambda": [0.9, 0.99]}},
    "time": {"from": 1, "to": 40, "limit": true}})";
  const auto one = run_sweep(doc(cfg), RunOptions{std::nullopt, 1}).table;
  const auto many = run_sweep(doc(cfg), RunOptions{std::nullopt, 7}).table;
  EXPECT_EQ(csv(one), csv(many));
  ASSERT_EQ(one.rows().size(), 5u * 3u * 2u * 41u);
  EXPECT_EQ(one.columns()[2], "lambda");
  EXPECT_EQ(*one.number(0, "p"), 0.1);
  EXPECT_EQ(*one.number(41, "lambda"), 0.99);
  EXPECT_EQ(*one.number(5 * 3 * 2 * 41 - 1, "p"), 0.9);
  EXPECT_NEAR(*one.number(1, "e_f"), 0.95, 1e-15);  // t*=0 holds only fresh links
  double mean = 0;  // t*=3 in the limit: ages uniform on 0..3
  for (int m = 0; m <= 3; ++m) mean += (std::pow(0.9, m) * 0.95 + (1 - std::pow(0.9, m)) / 4) / 4;
  EXPECT_EQ(std::get<std::string>(one.rows()[2 * 246 + 82 + 40][3]), "inf");
  EXPECT_NEAR(*one.number(2 * 246 + 82 + 40, "e_f"), mean, 1e-15);
}

TEST(Simulate, MatchesAnalyticWithinFourSigma) {
  const auto t = run_simulate(doc(R"({"schema_version": 1, "link": {"p": 0.3, "tstar": 3},
    "time": {"from": 1, "to": 10}, "simulation": {"trials": 100000, "seed": 99}})"))
                     .table;
  ASSERT_EQ(t.rows().size(), 10u);
  EXPECT_EQ(*t.meta("seed"), "99");
  for (std::size_t r = 0; r < 10; ++r) {
    const double exact = prob_active(static_cast<int>(r) + 1, Cutoff::finite(3), 0.3);
    EXPECT_LE(std::abs(*t.number(r, "prob_active") - exact), 4 * *t.number(r, "prob_active_se"));
    const double es = expected_success_rate(static_cast<int>(r) + 1, Cutoff::finite(3), 0.3);
    EXPECT_LE(std::abs(*t.number(r, "e_s") - es), 4 * *t.number(r, "e_s_se"));
  }
}

TEST(Simulate, SeedHandling) {
  const char* noseed = R"({"schema_version": 1, "link": {"p": 0.3, "tstar": 3}, "time": [1, 5]})";
  EXPECT_THROW(run_simulate(doc(noseed)), ConfigError);
  EXPECT_NO_THROW(run_simulate(doc(noseed), RunOptions{3, 1}));
  const auto lax = run_simulate(doc(R"({"schema_version": 1, "link": {"p": 0.3, "tstar": 3}, "time": [1],
    "simulation": {"strict": false, "trials": 50}})"))
                       .table;
  EXPECT_EQ(*lax.meta("seed"), "0");
}

TEST(Simulate, DegenerateStandardError) {
  const auto t = run_simulate(doc(R"({"schema_version": 1, "link": {"p": 0.3, "tstar": 3}, "time": [1, 2, 3],
    "simulation": {"trials": 1, "seed": 4}})"))
                     .table;
  ASSERT_NE(t.meta("warning"), nullptr);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_TRUE(t.number(r, "prob_active").has_value());
    EXPECT_FALSE(t.number(r, "prob_active_se").has_value());
  }
}

TEST(Simulate, Deterministic) {
  const char* cfg = R"({"schema_version": 1,
    "link": {"p": 0.4, "tstar": 2, "fidelity": {"model": "dephasing", "lambda": 0.9}},
    "time": {"from": 1, "to": 25}, "simulation": {"trials": 20000, "seed": 5}})";
  const auto a = csv(run_simulate(doc(cfg)).table);
  EXPECT_EQ(a, csv(run_simulate(doc(cfg)).table));
  EXPECT_EQ(a, csv(run_simulate(doc(cfg), RunOptions{std::nullopt, 6}).table));
  EXPECT_NE(a, csv(run_simulate(doc(cfg), RunOptions{6, 1}).table));
}

TEST(Simulate, Network) {
  const auto t = run_simulate(doc(R"({"schema_version": 1,
    "network": {"edges": [{"id": "a", "links": [{"p": 0.3, "tstar": 5}]}, {"id": "b", "links": [{"p": 0.5, "tstar": 2}]}]},
    "time": [50], "simulation": {"trials": 100000, "seed": 8}})"))
                     .table;
  NetworkConfig net{{EdgeConfig{"a", {parallel_link(0.3, Cutoff::finite(5))}},
                     EdgeConfig{"b", {parallel_link(0.5, Cutoff::finite(2))}}}};
  const double exact = collective_status(net, TimePoint::at(50));
  EXPECT_LE(std::abs(*t.number(0, "collective_status") - exact), 4 * *t.number(0, "collective_status_se"));
}

TEST(Optimize, DominatesCutoffsAndGreedy) {
  const auto out = run_optimize(doc(R"({"schema_version": 1,
    "link": {"p": 0.5, "fidelity": {"model": "depolarizing", "f0": 1.0, "lambda": 0.9}},
    "optimization": {"horizon": 5}})"));
  const auto& t = out.table;
  ASSERT_EQ(t.rows().size(), 2u + 6u + 1u);
  EXPECT_EQ(std::get<std::string>(t.rows()[0][0]), "optimal");
  EXPECT_EQ(std::get<std::string>(t.rows()[1][0]), "forward-greedy");
  EXPECT_EQ(std::get<std::string>(t.rows().back()[0]), "cutoff-inf");
  const double best = *t.number(0, "e_ftilde");
  for (std::size_t r = 1; r < t.rows().size(); ++r) {
    EXPECT_LE(*t.number(r, "e_ftilde"), best + 1e-12);
    EXPECT_GE(*t.number(r, "gap"), -1e-12);
  }
  const auto full = run_optimize(doc(R"({"schema_version": 1,
    "link": {"p": 0.5, "fidelity": {"model": "depolarizing", "f0": 1.0, "lambda": 0.9}},
    "optimization": {"horizon": 5, "mode": "full"}})"));
  EXPECT_NEAR(*full.table.number(0, "e_ftilde"), best, 1e-12);
  EXPECT_NEAR(*full.table.number(0, "e_active"), *t.number(0, "e_active"), 1e-12);
}

TEST(Optimize, PerfectMemoryPolicyTable) {
  const auto out = run_optimize(doc(R"({"schema_version": 1, "link": {"p": 0.3, "fidelity": {"model": "constant", "f": 0.9}},
    "optimization": {"horizon": 12}})"));
  EXPECT_NEAR(*out.table.number(0, "e_ftilde"), (1 - std::pow(0.7, 13)) * 0.9, 1e-12);
  ASSERT_TRUE(out.policy.has_value());
  const auto& dump = *out.policy;
  // One x=0 row and one x=1 run per step: request iff inactive.
  ASSERT_EQ(dump.rows().size(), 24u);
  for (std::size_t r = 0; r < dump.rows().size(); ++r) {
    const auto x = *dump.number(r, "x");
    EXPECT_EQ(std::get<std::string>(dump.rows()[r][4]), x == 0 ? "request" : "wait");
    if (x == 1) {
      EXPECT_EQ(*dump.number(r, "m_from"), 0.0);
      EXPECT_EQ(*dump.number(r, "m_to"), *dump.number(r, "t") - 1);
    }
  }
}

TEST(Optimize, HorizonLimits) {
  EXPECT_THROW(run_optimize(doc(R"({"schema_version": 1, "link": {"p": 0.5},
    "optimization": {"horizon": 20, "mode": "full"}})")),
               LimitError);
  EXPECT_THROW(run_optimize(doc(R"({"schema_version": 1, "link": {"p": 0.5},
    "optimization": {"horizon": 20000}})")),
               LimitError);
  EXPECT_THROW(run_optimize(doc(R"({"schema_version": 1, "link": {"p": 0.5, "tstar": 3},
    "optimization": {"horizon": 3}})")),
               ConfigError);
}

TEST(Reproduce, FigureChecks) {
  const auto fig7 = reproduce_figure(nullptr, "fig7").table;
  for (std::size_t r = 0; r < fig7.rows().size(); ++r)
    if (*fig7.number(r, "t_req") == 0.0) {
      EXPECT_NEAR(*fig7.number(r, "e_w"), 1 / 0.3, 1e-15);
    }
  const auto fig5 = reproduce_figure(nullptr, "fig5").table;
  for (std::size_t r = 0; r < fig5.rows().size(); ++r) {
    if (*fig5.number(r, "t") != 200.0) continue;
    const bool finite = std::holds_alternative<long long>(fig5.rows()[r][0]);
    EXPECT_NEAR(*fig5.number(r, "e_s"), finite ? 0.3 : 0.515988, finite ? 0.05 : 2e-3);
  }
  const auto d = doc(R"({"schema_version": 1, "figure": "fig4-left",
    "curves": [{"t": 1, "tstar": 0}, {"t": 1, "tstar": 7}, {"t": 1, "tstar": "inf"}], "p": [0.1, 0.35, 0.8]})");
  const auto left = reproduce_figure(&d, std::nullopt).table;
  ASSERT_EQ(left.rows().size(), 9u);
  for (std::size_t r = 0; r < 9; ++r) EXPECT_NEAR(*left.number(r, "prob_active"), *left.number(r, "p"), 1e-15);
  EXPECT_EQ(reproduce_figure(nullptr, "fig4-left").table.rows().size(), 8u * 101u);
}

TEST(Reproduce, NetworkPanels) {
  const auto fig9 = reproduce_figure(nullptr, "fig9").table;
  ASSERT_EQ(fig9.rows().size(), 2u * 21u * 21u);
  for (std::size_t r = 0; r < fig9.rows().size(); ++r) {
    const double p1 = *fig9.number(r, "p1"), p2 = *fig9.number(r, "p2");
    if (std::get<std::string>(fig9.rows()[r][0]) == "left") {
      EXPECT_NEAR(*fig9.number(r, "collective_status"), 6 * p1 / (1 + 5 * p1) * (3 * p2 / (1 + 2 * p2)), 1e-15);
    } else {
      double expect = 1;
      for (auto [p, c] : {std::pair{p1, 5}, {p1, 15}, {p2, 10}, {p2, 20}}) expect *= prob_active(50, Cutoff::finite(c), p);
      EXPECT_NEAR(*fig9.number(r, "collective_status"), expect, 1e-15);
    }
  }
  const auto fig8 = reproduce_figure(nullptr, "fig8").table;
  EXPECT_EQ(fig8.columns().back(), "e_total_links");
}

TEST(Reproduce, Errors) {
  EXPECT_THROW(reproduce_figure(nullptr, "fig6"), ParameterError);
  EXPECT_THROW(reproduce_figure(nullptr, std::nullopt), ParameterError);
  const auto bad = doc(R"({"schema_version": 1,
    "figure": "fig12"})");
  try {
    reproduce_figure(&bad, std::nullopt);
    ADD_FAILURE();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  const auto extra = doc(R"({"schema_version": 1, "figure": "fig5", "p": [0.2]})");
  EXPECT_THROW(reproduce_figure(&extra, std::nullopt), ConfigError);
}

TEST(Reproduce, Deterministic) {
  for (const auto& name : figure_names())
    EXPECT_EQ(csv(reproduce_figure(nullptr, name).table), csv(reproduce_figure(nullptr, name).table));
}
