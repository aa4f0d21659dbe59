#pragma once

// Command implementations behind the qlink CLI. Each command validates its
// configuration into typed settings, then produces a ResultTable. The
// metadata hash is taken over a normalized form of the settings, so
// spelling the same run differently (a range vs. its expansion, omitted vs.
// explicit defaults) yields the same hash.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "qlink/cutoff.hpp"
#include "qlink/engine.hpp"
#include "qlink/errors.hpp"
#include "qlink/io/config.hpp"
#include "qlink/io/csv.hpp"
#include "qlink/network.hpp"
#include "qlink/optimizer.hpp"
#include "qlink/quantum.hpp"
#include "qlink/simulate.hpp"

namespace qlink::io {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kSchemaVersion = 1;
inline constexpr std::size_t kMaxGridPoints = 10'000'000;

struct RunOptions {
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
};

struct RunOutput {
  ResultTable table;
  std::optional<ResultTable> policy;  // optimize only
};

// ---------------------------------------------------------------------------
// Typed settings.

struct FidelityModel {
  std::string model = "constant";
  double f = 1.0;  // constant
  double f0 = 1.0;
  double lambda = 1.0;
  int dim = 4;
  std::string channel;
  std::vector<double> table;

  bool uses_lambda() const { return model == "depolarizing" || model == "dephasing" || model == "channel"; }

  LinkParams link(double p) const {
    if (model == "constant") return LinkParams::symbolic(p, quantum::constant_curve(f));
    if (model == "depolarizing") return LinkParams::symbolic(p, quantum::depolarizing_curve(f0, lambda, dim));
    if (model == "dephasing") return LinkParams::symbolic(p, quantum::dephasing_bell_curve(lambda));
    if (model == "tabulated") return LinkParams::symbolic(p, quantum::tabulated_curve(table));
    return LinkParams::materialized(p, quantum::werner(f0), quantum::preset_channel(channel, lambda, 4),
                                    quantum::bell_phi_plus());
  }

  Json normalized() const {
    Json j{{"model", model}};
    if (model == "constant") j["f"] = f;
    if (model == "depolarizing") j.update({{"f0", f0}, {"lambda", lambda}, {"dim", dim}});
    if (model == "dephasing") j["lambda"] = lambda;
    if (model == "tabulated") j["values"] = table;
    if (model == "channel") j.update({{"f0", f0}, {"lambda", lambda}, {"channel", channel}});
    return j;
  }
};

struct TimeGrid {
  std::vector<int> t;
  bool limit = false;

  int max() const { return t.empty() ? 0 : *std::max_element(t.begin(), t.end()); }
  Json normalized() const { return Json{{"t", t}, {"limit", limit}}; }
};

struct LinkGrid {
  std::vector<double> p;
  std::vector<Cutoff> tstar;
  FidelityModel fidelity;
  std::vector<double> lambdas;  // nonempty when lambda is swept
};

inline Json cutoff_json(Cutoff c) { return c.is_infinite() ? Json("inf") : Json(c.value()); }

inline Json cutoffs_json(const std::vector<Cutoff>& cs) {
  Json a = Json::array();
  for (auto c : cs) a.push_back(cutoff_json(c));
  return a;
}

inline Cell cutoff_cell(Cutoff c) {
  if (c.is_infinite()) return std::string("inf");
  return static_cast<long long>(c.value());
}

// ---------------------------------------------------------------------------
// Parsing.

namespace detail {

inline void check_schema(const Node& root) {
  const Node v = root.at("schema_version");
  if (v.as_int() != kSchemaVersion) v.fail("unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
}

inline Cutoff parse_cutoff(const Node& n) {
  if (n.is_string()) {
    if (n.as_string() != "inf") n.fail("cutoff must be a non-negative integer or \"inf\"");
    return Cutoff::infinite();
  }
  return Cutoff::finite(n.as_int_in(0, 1'000'000));
}

inline std::vector<Cutoff> parse_cutoffs(const Node& n) {
  std::vector<Cutoff> out;
  if (!n.is_array()) {
    out.push_back(parse_cutoff(n));
    return out;
  }
  for (const auto& e : n.elements()) out.push_back(parse_cutoff(e));
  if (out.empty()) n.fail("cutoff list must be nonempty");
  return out;
}

// A number, a list of numbers, or {"from", "to", "step"}.
inline std::vector<double> parse_axis(const Node& n, bool probability) {
  auto value = [&](const Node& e) { return probability ? e.as_probability() : e.as_double(); };
  std::vector<double> out;
  if (n.is_number()) {
    out.push_back(value(n));
  } else if (n.is_array()) {
    for (const auto& e : n.elements()) out.push_back(value(e));
  } else if (n.is_object()) {
    n.allow_keys({"from", "to", "step"});
    const double from = value(n.at("from"));
    const double to = value(n.at("to"));
    const Node sn = n.at("step");
    const double step = sn.as_double();
    if (!(step > 0.0)) sn.fail("step must be positive");
    if (to < from) n.fail("range has to < from");
    const double count = std::floor((to - from) / step + 1e-9);
    if (count + 1 > static_cast<double>(kMaxGridPoints)) n.fail("range has too many points");
    const auto k = static_cast<long>(count);
    for (long i = 0; i <= k; ++i) out.push_back(k == 0 ? from : from + (std::min(to, from + k * step) - from) * i / k);
  } else {
    n.fail("expected a number, a list, or a range object");
  }
  if (out.empty()) n.fail("list must be nonempty");
  return out;
}

inline FidelityModel parse_fidelity(const Node& n, std::vector<double>* lambdas) {
  FidelityModel fm;
  fm.model = n.at("model").as_string();
  auto lambda = [&](const Node& node) {
    const Node ln = node.at("lambda");
    if (lambdas && !ln.is_number()) {
      *lambdas = parse_axis(ln, true);
      fm.lambda = lambdas->front();
    } else {
      fm.lambda = ln.as_probability();
    }
  };
  if (fm.model == "constant") {
    n.allow_keys({"model", "f"});
    if (auto f = n.get("f")) fm.f = f->as_probability();
  } else if (fm.model == "depolarizing") {
    n.allow_keys({"model", "f0", "lambda", "dim"});
    fm.f0 = n.at("f0").as_probability();
    lambda(n);
    if (auto d = n.get("dim")) fm.dim = d->as_int_in(2, quantum::kMaxChannelDim);
  } else if (fm.model == "dephasing") {
    n.allow_keys({"model", "lambda"});
    lambda(n);
  } else if (fm.model == "tabulated") {
    n.allow_keys({"model", "values"});
    const Node vn = n.at("values");
    for (const auto& e : vn.elements()) fm.table.push_back(e.as_probability());
    if (fm.table.empty()) vn.fail("fidelity table must be nonempty");
  } else if (fm.model == "channel") {
    n.allow_keys({"model", "f0", "lambda", "channel"});
    fm.f0 = n.at("f0").as_probability();
    const Node cn = n.at("channel");
    fm.channel = cn.as_string();
    if (fm.channel != "identity" && fm.channel != "depolarizing" && fm.channel != "dephasing")
      cn.fail("channel must be identity, depolarizing or dephasing");
    lambda(n);
  } else {
    n.at("model").fail("unknown fidelity model '" + fm.model + "'");
  }
  return fm;
}

inline LinkGrid parse_link(const Node& n, bool axes, bool with_tstar) {
  if (with_tstar) {
    n.allow_keys({"p", "tstar", "fidelity"});
  } else {
    n.allow_keys({"p", "fidelity"});
  }
  LinkGrid g;
  const Node pn = n.at("p");
  if (!axes && !pn.is_number()) pn.fail("expected a single probability");
  g.p = parse_axis(pn, true);
  if (with_tstar) {
    const Node tn = n.at("tstar");
    if (!axes && tn.is_array()) tn.fail("expected a single cutoff");
    g.tstar = parse_cutoffs(tn);
  }
  if (auto f = n.get("fidelity")) g.fidelity = parse_fidelity(*f, axes ? &g.lambdas : nullptr);
  return g;
}

inline int parse_time_value(const Node& e, int min_t, bool allow_limit, bool& limit) {
  if (e.is_string()) {
    if (e.as_string() != "inf" || !allow_limit) e.fail(allow_limit ? "time must be an integer or \"inf\"" : "time must be an integer");
    limit = true;
    return -1;
  }
  return e.as_int_in(min_t, 100'000'000);
}

// A list of steps (with "inf" for the limit) or {"from", "to", "step", "limit"}.
inline TimeGrid parse_time(const Node& n, int min_t, bool allow_limit) {
  TimeGrid g;
  if (n.is_array()) {
    for (const auto& e : n.elements()) {
      const int t = parse_time_value(e, min_t, allow_limit, g.limit);
      if (t >= 0) g.t.push_back(t);
    }
  } else if (n.is_object()) {
    if (allow_limit) {
      n.allow_keys({"from", "to", "step", "limit"});
    } else {
      n.allow_keys({"from", "to", "step"});
    }
    const int from = n.at("from").as_int_in(min_t, 100'000'000);
    const int to = n.at("to").as_int_in(min_t, 100'000'000);
    int step = 1;
    if (auto s = n.get("step")) step = s->as_int_in(1, 100'000'000);
    for (long t = from; t <= to; t += step) g.t.push_back(static_cast<int>(t));
    if (auto l = n.get("limit")) g.limit = l->as_bool();
  } else {
    n.fail("time grid must be a list or a range object");
  }
  if (g.t.empty() && !g.limit) n.fail("time grid is empty");
  return g;
}

inline const std::vector<std::string>& all_quantities() {
  static const std::vector<std::string> q{"prob_active", "e_ftilde", "e_f", "e_s", "e_w"};
  return q;
}

inline std::vector<std::string> parse_quantities(const std::optional<Node>& n) {
  if (!n) return all_quantities();
  std::vector<bool> want(all_quantities().size(), false);
  for (const auto& e : n->elements()) {
    const auto name = e.as_string();
    const auto it = std::find(all_quantities().begin(), all_quantities().end(), name);
    if (it == all_quantities().end()) e.fail("unknown quantity '" + name + "'");
    want[static_cast<std::size_t>(it - all_quantities().begin())] = true;
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < want.size(); ++i)
    if (want[i]) out.push_back(all_quantities()[i]);
  if (out.empty()) n->fail("quantity list must be nonempty");
  return out;
}

inline NetworkConfig parse_network(const Node& n) {
  n.allow_keys({"edges"});
  static const std::regex id_re("[A-Za-z0-9_.-]+");
  NetworkConfig net;
  std::set<std::string> ids;
  const Node en = n.at("edges");
  for (const auto& e : en.elements()) {
    e.allow_keys({"id", "links"});
    EdgeConfig edge;
    const Node idn = e.at("id");
    edge.id = idn.as_string();
    if (!std::regex_match(edge.id, id_re)) idn.fail("edge id may only contain letters, digits, '_', '.', '-'");
    if (!ids.insert(edge.id).second) idn.fail("duplicate edge id '" + edge.id + "'");
    const Node ln = e.at("links");
    for (const auto& l : ln.elements()) {
      l.allow_keys({"p", "tstar"});
      edge.links.push_back(parallel_link(l.at("p").as_probability(), parse_cutoff(l.at("tstar"))));
    }
    if (edge.links.empty()) ln.fail("edge needs at least one link");
    net.edges.push_back(std::move(edge));
  }
  if (net.edges.empty()) en.fail("network needs at least one edge");
  return net;
}

inline Json network_json(const NetworkConfig& net) {
  Json edges = Json::array();
  for (const auto& e : net.edges) {
    Json links = Json::array();
    for (const auto& l : e.links) links.push_back({{"p", l.p()}, {"tstar", cutoff_json(l.tstar)}});
    edges.push_back({{"id", e.id}, {"links", links}});
  }
  return Json{{"edges", edges}};
}

inline void set_common_meta(ResultTable& t, const std::string& command, const Json& normalized,
                            const std::string& seed) {
  t.set_meta("qlink_version", kVersion);
  t.set_meta("schema_version", std::to_string(kSchemaVersion));
  t.set_meta("command", command);
  t.set_meta("config_hash", hex64(config_hash(normalized)));
  t.set_meta("seed", seed);
}

inline Cell opt_cell(const std::optional<double>& v) {
  if (v) return *v;
  return NA{};
}

// Runs job(i) for i in [0, n) on up to `threads` workers; the first
// exception in index order is rethrown.
template <class Job>
void parallel_for(std::size_t n, unsigned threads, Job&& job) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::vector<Cell> link_quantities(const LinkParams& params, Cutoff tstar, std::optional<int> t,
                                         const std::vector<std::string>& qs) {
  const double p = params.success_prob;
  std::vector<Cell> row;
  std::optional<LinkExpectations> e;
  auto expectations = [&]() -> const LinkExpectations& {
    if (!e) e = expected_fidelity_cutoff(*t, tstar, p, params.fidelity);
    return *e;
  };
  for (const auto& q : qs) {
    if (q == "e_w") {
      if (p == 0.0) {
        row.push_back(NA{});
      } else {
        row.push_back(t ? waiting_time_expectation(*t, tstar, p) : waiting_time_limit(tstar, p));
      }
      continue;
    }
    if (t && *t == 0) {
      row.push_back(NA{});
      continue;
    }
    if (q == "prob_active") {
      row.push_back(t ? prob_active(*t, tstar, p) : steady_state(tstar, p).prob_active);
    } else if (q == "e_s") {
      row.push_back(t ? expected_success_rate(*t, tstar, p) : success_rate_limit(tstar, p));
    } else if (!t && tstar.is_infinite()) {
      row.push_back(NA{});
    } else {
      const auto& ex = t ? expectations() : (e = expected_fidelity_steady(tstar, p, params.fidelity), *e);
      row.push_back(q == "e_ftilde" ? Cell(ex.e_ftilde) : opt_cell(ex.e_f));
    }
  }
  return row;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// analytic / sweep

namespace detail {

inline ResultTable run_link_grid(const Node& root, bool sweep, const RunOptions& opt) {
  root.allow_keys({"schema_version", "link", "time", "quantities", "threads"});
  const LinkGrid g = parse_link(root.at("link"), true, true);
  const TimeGrid time = parse_time(root.at("time"), 0, true);
  const auto qs = parse_quantities(root.get("quantities"));
  const bool zero_time = std::find(time.t.begin(), time.t.end(), 0) != time.t.end();
  if (zero_time && !(qs.size() == 1 && qs[0] == "e_w")) {
    root.at("time").fail("t = 0 is only defined for e_w");
  }

  const std::vector<double> lambdas = g.lambdas.empty() ? std::vector<double>{g.fidelity.lambda} : g.lambdas;
  const bool lambda_col = sweep ? g.fidelity.uses_lambda() : !g.lambdas.empty();

  struct Point {
    double p;
    Cutoff tstar;
    double lambda;
  };
  std::vector<Point> points;
  for (double p : g.p)
    for (auto c : g.tstar)
      for (double l : lambdas) points.push_back(Point{p, c, l});
  if (points.size() * (time.t.size() + (time.limit ? 1 : 0)) > kMaxGridPoints) {
    root.fail("grid has more than " + std::to_string(kMaxGridPoints) + " rows");
  }

  std::vector<std::string> cols{"p", "tstar"};
  if (lambda_col) cols.push_back("lambda");
  cols.push_back("t");
  for (const auto& q : qs) cols.push_back(q);
  ResultTable table(cols);

  std::vector<std::vector<std::vector<Cell>>> blocks(points.size());
  parallel_for(points.size(), opt.threads, [&](std::size_t i) {
    const Point& pt = points[i];
    FidelityModel fm = g.fidelity;
    fm.lambda = pt.lambda;
    const LinkParams params = fm.link(pt.p);
    auto emit = [&](std::optional<int> t) {
      std::vector<Cell> row{pt.p, cutoff_cell(pt.tstar)};
      if (lambda_col) row.push_back(pt.lambda);
      row.push_back(t ? Cell(static_cast<long long>(*t)) : Cell(std::string("inf")));
      for (auto& c : link_quantities(params, pt.tstar, t, qs)) row.push_back(std::move(c));
      blocks[i].push_back(std::move(row));
    };
    for (int t : time.t) emit(t);
    if (time.limit) emit(std::nullopt);
  });
  for (auto& b : blocks)
    for (auto& row : b) table.add_row(std::move(row));

  Json link{{"p", g.p}, {"tstar", cutoffs_json(g.tstar)}};
  Json fid = g.fidelity.normalized();
  if (g.fidelity.uses_lambda()) fid["lambda"] = lambdas;
  link["fidelity"] = fid;
  const Json norm{{"command", sweep ? "sweep" : "analytic"}, {"link", link}, {"time", time.normalized()}, {"quantities", qs}};
  set_common_meta(table, sweep ? "sweep" : "analytic", norm, "none");
  table.set_meta("points", std::to_string(points.size()));
  return table;
}

inline ResultTable run_network_grid(const Node& root, bool sweep, const RunOptions& opt) {
  root.allow_keys({"schema_version", "network", "time", "threads"});
  const NetworkConfig net = parse_network(root.at("network"));
  const TimeGrid time = parse_time(root.at("time"), 1, true);

  std::vector<std::string> cols{"t", "e_total_links", "collective_status"};
  for (const auto& e : net.edges) {
    cols.push_back("e_flow_" + e.id);
    cols.push_back("p_any_" + e.id);
  }
  ResultTable table(cols);
  std::vector<std::optional<int>> steps(time.t.begin(), time.t.end());
  if (time.limit) steps.push_back(std::nullopt);
  std::vector<std::vector<Cell>> rows(steps.size());
  parallel_for(steps.size(), opt.threads, [&](std::size_t i) {
    const TimePoint tp = steps[i] ? TimePoint::at(*steps[i]) : TimePoint::limit();
    std::vector<Cell> row{steps[i] ? Cell(static_cast<long long>(*steps[i])) : Cell(std::string("inf")),
                          expected_total_links(net, tp), collective_status(net, tp)};
    for (const auto& e : net.edges) {
      row.push_back(expected_flow(e, tp));
      row.push_back(prob_at_least_one(e, tp));
    }
    rows[i] = std::move(row);
  });
  for (auto& r : rows) table.add_row(std::move(r));

  const Json norm{{"command", sweep ? "sweep" : "analytic"}, {"network", network_json(net)}, {"time", time.normalized()}};
  set_common_meta(table, sweep ? "sweep" : "analytic", norm, "none");
  return table;
}

}  // namespace detail

inline RunOutput run_analytic(const ConfigDocument& doc, const RunOptions& opt = {}, bool sweep = false) {
  const Node root = doc.root();
  detail::check_schema(root);
  if (root.has("link") == root.has("network")) root.fail("exactly one of 'link' or 'network' is required");
  if (root.has("network")) return RunOutput{detail::run_network_grid(root, sweep, opt), std::nullopt};
  return RunOutput{detail::run_link_grid(root, sweep, opt), std::nullopt};
}

inline RunOutput run_sweep(const ConfigDocument& doc, const RunOptions& opt = {}) {
  return run_analytic(doc, opt, true);
}

// ---------------------------------------------------------------------------
// simulate

namespace detail {

inline void push_estimate(std::vector<Cell>& row, const Estimate& e) {
  row.push_back(e.samples == 0 ? Cell(NA{}) : Cell(e.mean));
  row.push_back(opt_cell(e.std_error));
}

}  // namespace detail

inline RunOutput run_simulate(const ConfigDocument& doc, const RunOptions& opt = {}) {
  using namespace detail;
  const Node root = doc.root();
  check_schema(root);
  root.allow_keys({"schema_version", "link", "network", "time", "simulation", "threads"});
  if (root.has("link") == root.has("network")) root.fail("exactly one of 'link' or 'network' is required");
  const TimeGrid time = parse_time(root.at("time"), 1, false);

  std::size_t trials = 100'000;
  std::optional<std::uint64_t> seed = opt.seed;
  bool strict = true;
  const auto sim = root.get("simulation");
  if (sim) {
    sim->allow_keys({"trials", "seed", "strict"});
    if (auto n = sim->get("trials")) trials = static_cast<std::size_t>(n->as_int_in(1, 1'000'000'000));
    if (auto n = sim->get("strict")) strict = n->as_bool();
    if (auto n = sim->get("seed"); n && !seed) {
      const long long s = n->as_int();
      if (s < 0) n->fail("seed must be non-negative");
      seed = static_cast<std::uint64_t>(s);
    }
  }
  if (!seed) {
    if (strict) (sim ? *sim : root).fail("a seed is required (simulation.seed or --seed)");
    seed = 0;
  }

  ResultTable table;
  Json norm{{"command", "simulate"}, {"time", time.normalized()}, {"trials", trials}, {"seed", *seed}};
  if (root.has("link")) {
    const LinkGrid g = parse_link(root.at("link"), false, true);
    const LinkParams params = g.fidelity.link(g.p[0]);
    const Cutoff tstar = g.tstar[0];
    const auto res = simulate_trajectories(params, cutoff_policy(tstar), time.max(), trials, *seed, opt.threads);
    table = ResultTable({"t", "prob_active", "prob_active_se", "e_ftilde", "e_ftilde_se", "e_f", "e_f_se", "e_s",
                         "e_s_se", "active_trials"});
    for (int t : time.t) {
      const auto k = static_cast<std::size_t>(t - 1);
      std::vector<Cell> row{static_cast<long long>(t)};
      push_estimate(row, res.prob_active[k]);
      push_estimate(row, res.e_ftilde[k]);
      push_estimate(row, res.e_f[k]);
      push_estimate(row, res.e_s[k]);
      row.push_back(static_cast<long long>(res.active_count[k]));
      table.add_row(std::move(row));
    }
    norm["link"] = Json{{"p", g.p[0]}, {"tstar", cutoff_json(tstar)}, {"fidelity", g.fidelity.normalized()}};
  } else {
    const NetworkConfig net = parse_network(root.at("network"));
    std::vector<std::string> cols{"t", "e_total_links", "e_total_links_se", "collective_status", "collective_status_se"};
    for (const auto& e : net.edges) {
      for (const std::string q : {"e_flow_", "p_any_"}) {
        cols.push_back(q + e.id);
        cols.push_back(q + e.id + "_se");
      }
    }
    table = ResultTable(cols);
    for (int t : time.t) {
      const auto res = simulate_network(net, t, trials, *seed, opt.threads);
      std::vector<Cell> row{static_cast<long long>(t)};
      push_estimate(row, res.total_links);
      push_estimate(row, res.collective);
      for (std::size_t e = 0; e < net.edges.size(); ++e) {
        push_estimate(row, res.flow[e]);
        push_estimate(row, res.at_least_one[e]);
      }
      table.add_row(std::move(row));
    }
    norm["network"] = network_json(net);
  }
  set_common_meta(table, "simulate", norm, std::to_string(*seed));
  table.set_meta("trials", std::to_string(trials));
  if (trials < 2) table.set_meta("warning", "standard errors undefined with fewer than two trials");
  return RunOutput{std::move(table), std::nullopt};
}

// ---------------------------------------------------------------------------
// optimize

namespace detail {

inline std::string action_name(int a) { return a == kRequest ? "request" : "wait"; }

// Run-length encodes per-(t, x, m) actions: x = 0 rows carry no memory time.
inline ResultTable policy_dump(int T, const std::function<std::string(int t, int x, int m)>& action) {
  ResultTable dump({"t", "x", "m_from", "m_to", "action"});
  for (int t = 1; t <= T; ++t) {
    dump.add_row({static_cast<long long>(t), 0LL, NA{}, NA{}, action(t, 0, -1)});
    int from = 0;
    std::string cur = action(t, 1, 0);
    for (int m = 1; m <= t; ++m) {
      const std::string a = m < t ? action(t, 1, m) : std::string();
      if (a == cur) continue;
      dump.add_row({static_cast<long long>(t), 1LL, static_cast<long long>(from), static_cast<long long>(m - 1), cur});
      from = m;
      cur = a;
    }
  }
  return dump;
}

}  // namespace detail

inline RunOutput run_optimize(const ConfigDocument& doc, const RunOptions& = {}) {
  using namespace detail;
  const Node root = doc.root();
  check_schema(root);
  root.allow_keys({"schema_version", "link", "optimization", "threads"});
  const LinkGrid g = parse_link(root.at("link"), false, false);
  const Node on = root.at("optimization");
  on.allow_keys({"horizon", "mode"});
  const int T = on.at("horizon").as_int_in(0, 100'000'000);
  std::string mode = "reduced";
  if (auto m = on.get("mode")) {
    mode = m->as_string();
    if (mode != "reduced" && mode != "full") m->fail("mode must be 'reduced' or 'full'");
  }
  const LinkParams params = g.fidelity.link(g.p[0]);

  ResultTable table({"policy", "e_ftilde", "e_active", "e_f", "gap"});
  RunOutput out;
  double best = 0.0;
  PolicyValue optimal;
  if (mode == "full") {
    const auto res = backward_recursion_full(params, T);
    best = res.optimal_value;
    optimal = evaluate_policy(params, res.policy, T);
    const auto& q = *res.full;
    std::map<std::pair<int, int>, std::map<int, int>> acts;  // (t, x) -> m -> action mask
    for (int j = 1; j <= T; ++j) {
      const auto& level = q.q[static_cast<std::size_t>(j - 1)];
      for (std::size_t idx = 0; idx < level.size(); ++idx) {
        const History h = full_tree_history(j, idx);
        const int x = h.current_observation();
        const int m = x ? memory_time(h) : -1;
        acts[{j, x}][m] |= 1 << q.decision(j, idx);
      }
    }
    out.policy = policy_dump(T, [&](int t, int x, int m) -> std::string {
      const auto it = acts.find({t, x});
      if (it == acts.end()) return "unreachable";
      const auto jt = it->second.find(m);
      if (jt == it->second.end()) return "unreachable";
      return jt->second == 3 ? "mixed" : action_name(jt->second == 2 ? kRequest : kWait);
    });
  } else {
    const auto res = backward_recursion_reduced(params, T);
    best = res.optimal_value;
    optimal = evaluate_feedback(params, reduced_rule(res.reduced), T);
    const auto table_ptr = res.reduced;
    out.policy = policy_dump(T, [&](int t, int x, int m) { return action_name(table_ptr->decision(t, x, m)); });
  }
  auto add = [&](const std::string& name, double ft, double act, const std::optional<double>& f) {
    table.add_row({name, ft, act, opt_cell(f), best - ft});
  };
  add("optimal", best, optimal.e_active, optimal.e_f);
  const auto greedy = evaluate_feedback(params, greedy_rule(params), T);
  add("forward-greedy", greedy.e_ftilde, greedy.e_active, greedy.e_f);
  auto cutoff_row = [&](Cutoff c) {
    const auto e = expected_fidelity_cutoff(T + 1, c, params.success_prob, params.fidelity);
    add("cutoff-" + c.to_string(), e.e_ftilde, e.prob_active, e.e_f);
  };
  for (int c = 0; c <= T; ++c) cutoff_row(Cutoff::finite(c));
  cutoff_row(Cutoff::infinite());

  const Json norm{{"command", "optimize"},
                  {"link", {{"p", g.p[0]}, {"fidelity", g.fidelity.normalized()}}},
                  {"optimization", {{"horizon", T}, {"mode", mode}}}};
  set_common_meta(table, "optimize", norm, "none");
  table.set_meta("horizon", std::to_string(T));
  table.set_meta("mode", mode);
  table.set_meta("objective", "expected fidelity-weighted link value at T+1");
  out.policy->set_meta("qlink_version", kVersion);
  out.policy->set_meta("config_hash", *table.meta("config_hash"));
  out.policy->set_meta("mode", mode);
  out.table = std::move(table);
  return out;
}

// ---------------------------------------------------------------------------
// reproduce

inline const std::vector<std::string>& figure_names() {
  static const std::vector<std::string> names{"fig4-left", "fig4-right", "fig5", "fig7", "fig8", "fig9"};
  return names;
}

namespace detail {

inline std::vector<Cutoff> figure_cutoffs() {
  return {Cutoff::finite(0), Cutoff::finite(5), Cutoff::finite(10), Cutoff::finite(35), Cutoff::infinite()};
}

struct CurveSpec {
  int t;
  Cutoff tstar;
};

inline std::vector<CurveSpec> default_fig4_left_curves() {
  std::vector<CurveSpec> out;
  for (int t : {10, 50})
    for (auto c : {Cutoff::finite(0), Cutoff::finite(2), Cutoff::finite(5), Cutoff::infinite()}) out.push_back({t, c});
  return out;
}

inline std::vector<double> twentieths() {
  std::vector<double> out;
  for (int k = 0; k <= 20; ++k) out.push_back(k / 20.0);
  return out;
}

inline void pair_figure(ResultTable& t, bool collective) {
  const auto grid = twentieths();
  auto value = [&](const NetworkConfig& net, TimePoint tp) {
    return collective ? collective_status(net, tp) : expected_total_links(net, tp);
  };
  auto edge = [](std::string id, double p, int c) { return EdgeConfig{std::move(id), {parallel_link(p, Cutoff::finite(c))}}; };
  for (double p1 : grid)
    for (double p2 : grid) {
      const NetworkConfig net{{edge("e1", p1, 5), edge("e2", p2, 2)}};
      t.add_row({std::string("left"), p1, p2, value(net, TimePoint::limit())});
    }
  for (double p1 : grid)
    for (double p2 : grid) {
      const NetworkConfig net{{edge("e1", p1, 5), edge("e2", p1, 15), edge("e3", p2, 10), edge("e4", p2, 20)}};
      t.add_row({std::string("right"), p1, p2, value(net, TimePoint::at(50))});
    }
}

}  // namespace detail

// `doc` may be null, in which case `figure` names the figure with defaults.
inline RunOutput reproduce_figure(const ConfigDocument* doc, std::optional<std::string> figure) {
  using namespace detail;
  std::optional<Node> root;
  if (doc) {
    root = doc->root();
    check_schema(*root);
    root->allow_keys({"schema_version", "figure", "curves", "p", "threads"});
    const Node fn = root->at("figure");
    const auto name = fn.as_string();
    if (figure && *figure != name) fn.fail("figure '" + name + "' conflicts with --figure " + *figure);
    figure = name;
    if (std::find(figure_names().begin(), figure_names().end(), name) == figure_names().end())
      fn.fail("unknown figure '" + name + "'");
    if (name != "fig4-left" && (root->has("curves") || root->has("p")))
      root->fail("only fig4-left accepts 'curves' and 'p' overrides");
  }
  if (!figure) throw ParameterError("no figure given");
  if (std::find(figure_names().begin(), figure_names().end(), *figure) == figure_names().end())
    throw ParameterError("unknown figure '" + *figure + "'");
  const std::string& name = *figure;
  Json norm{{"command", "reproduce"}, {"figure", name}};
  auto make = [&](std::vector<std::string> cols) {
    ResultTable t(std::move(cols));
    set_common_meta(t, "reproduce", norm, "none");
    t.set_meta("figure", name);
    return t;
  };
  const double p = 0.3;
  ResultTable t;

  if (name == "fig4-left") {
    auto curves = default_fig4_left_curves();
    std::vector<double> ps;
    for (int k = 0; k <= 100; ++k) ps.push_back(k / 100.0);
    if (root) {
      if (auto cn = root->get("curves")) {
        curves.clear();
        for (const auto& c : cn->elements()) {
          c.allow_keys({"t", "tstar"});
          curves.push_back({c.at("t").as_int_in(1, 100'000'000), parse_cutoff(c.at("tstar"))});
        }
        if (curves.empty()) cn->fail("curve list must be nonempty");
      }
      if (auto pn = root->get("p")) ps = parse_axis(*pn, true);
    }
    Json cj = Json::array();
    for (const auto& c : curves) cj.push_back({{"t", c.t}, {"tstar", cutoff_json(c.tstar)}});
    norm["curves"] = cj;
    norm["p"] = ps;
    t = make({"t", "tstar", "p", "prob_active"});
    for (const auto& c : curves)
      for (double pv : ps) t.add_row({static_cast<long long>(c.t), cutoff_cell(c.tstar), pv, prob_active(c.t, c.tstar, pv)});
  } else if (name == "fig4-right" || name == "fig5" || name == "fig7") {
    const bool wait = name == "fig7";
    t = make({"tstar", wait ? "t_req" : "t", name == "fig4-right" ? "prob_active" : wait ? "e_w" : "e_s"});
    t.set_meta("p", format_number(p));
    const int from = wait ? 0 : 1;
    const int to = name == "fig4-right" ? 60 : name == "fig5" ? 200 : 100;
    for (auto c : figure_cutoffs())
      for (int s = from; s <= to; ++s) {
        const double v = name == "fig4-right" ? prob_active(s, c, p)
                         : name == "fig5"     ? expected_success_rate(s, c, p)
                                              : waiting_time_expectation(s, c, p);
        t.add_row({cutoff_cell(c), static_cast<long long>(s), v});
      }
  } else {
    const bool collective = name == "fig9";
    t = make({"panel", "p1", "p2", collective ? "collective_status" : "e_total_links"});
    t.set_meta("left", "t = inf; e1 t*=5 at p1; e2 t*=2 at p2");
    t.set_meta("right", "t = 50; e1 t*=5 and e2 t*=15 at p1; e3 t*=10 and e4 t*=20 at p2");
    pair_figure(t, collective);
  }
  return RunOutput{std::move(t), std::nullopt};
}

}  // namespace qlink::io
