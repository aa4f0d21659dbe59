#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "qlink/errors.hpp"
#include "qlink/io/commands.hpp"
#include "qlink/io/config.hpp"
#include "qlink/io/csv.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 2, kNumeric = 3, kIo = 4 };

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading " + path);
  return ss.str();
}

void write_table(const std::string& path, const qlink::io::ResultTable& t) {
  if (path == "-") {
    qlink::io::write_csv(std::cout, t);
    std::cout.flush();
    if (!std::cout) throw IoError("error writing to stdout");
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  qlink::io::write_csv(out, t);
  out.close();
  if (!out) throw IoError("error writing " + path);
}

unsigned resolve_threads(std::optional<unsigned> flag, const std::optional<qlink::io::ConfigDocument>& doc) {
  if (flag) return std::max(1u, *flag);
  if (const char* env = std::getenv("QLINK_THREADS"); env && *env) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (*end != '\0' || v == 0) throw qlink::ParameterError("QLINK_THREADS must be a positive integer");
    return static_cast<unsigned>(v);
  }
  if (doc) {
    if (auto n = doc->root().get("threads")) return static_cast<unsigned>(n->as_int_in(1, 1024));
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Elementary link policy analysis for quantum networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", qlink::io::kVersion);

  std::string config_path, out_path, figure;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", config_path, "JSON run configuration");
    if (config_required) c->required();
    sub->add_option("--out", out_path, "output CSV path ('-' for stdout)")->required();
    sub->add_option("--seed", seed, "random seed (overrides the configuration)");
    sub->add_option("--threads", threads, "worker threads (fallback: QLINK_THREADS)")->check(CLI::PositiveNumber);
  };
  auto* analytic = app.add_subcommand("analytic", "closed-form link or network quantities");
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo estimates with standard errors");
  auto* optimize = app.add_subcommand("optimize", "finite-horizon optimal policy and comparison rows");
  auto* sweep = app.add_subcommand("sweep", "parallel parameter sweep of closed-form quantities");
  auto* reproduce = app.add_subcommand("reproduce", "data grids behind the standard figures");
  for (auto* sub : {analytic, simulate, optimize, sweep}) add_common(sub, true);
  add_common(reproduce, false);
  reproduce->add_option("--figure", figure, "figure name")
      ->check(CLI::IsMember(qlink::io::figure_names()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    std::optional<qlink::io::ConfigDocument> doc;
    if (!config_path.empty()) doc = qlink::io::ConfigDocument::parse(read_file(config_path), config_path);
    qlink::io::RunOptions opt;
    opt.seed = seed;
    opt.threads = resolve_threads(threads, doc);

    qlink::io::RunOutput out;
    if (analytic->parsed()) {
      out = qlink::io::run_analytic(*doc, opt);
    } else if (sweep->parsed()) {
      out = qlink::io::run_sweep(*doc, opt);
    } else if (simulate->parsed()) {
      out = qlink::io::run_simulate(*doc, opt);
    } else if (optimize->parsed()) {
      out = qlink::io::run_optimize(*doc, opt);
    } else {
      if (!doc && figure.empty()) throw qlink::ParameterError("reproduce needs --config or --figure");
      out = qlink::io::reproduce_figure(doc ? &*doc : nullptr,
                                        figure.empty() ? std::nullopt : std::optional<std::string>(figure));
    }
    write_table(out_path, out.table);
    if (out.policy) {
      if (out_path == "-") {
        std::cout << '\n';
        qlink::io::write_csv(std::cout, *out.policy);
      } else {
        write_table(out_path + ".policy.csv", *out.policy);
      }
    }
    return kOk;
  } catch (const qlink::io::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const qlink::LimitError& e) {
    std::cerr << "limit error: " << e.what() << '\n';
    return kNumeric;
  } catch (const qlink::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const qlink::ParameterError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const qlink::DimensionError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  }
}
