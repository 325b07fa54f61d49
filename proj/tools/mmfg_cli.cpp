// Command-line front end. Each subcommand reads an optional JSON config,
// runs, prints a human summary to stdout and writes <stem>.json (+ .csv).

#include "mmfg/cli/run.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

namespace {

using mmfg::cli::json;

json read_json(const std::string& path) {
  if (path.empty()) return json{{"schema_version", mmfg::cli::kSchemaVersion}};
  std::ifstream in(path);
  if (!in) throw mmfg::Error("cannot read config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw mmfg::cli::ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
}

struct Args {
  std::string config, output_dir;
  std::int64_t seed = -1;
  bool flip_divergence = false;
};

int execute(const std::string& sub, const Args& a) {
  using namespace mmfg::cli;
  RunConfig cfg;
  try {
    json j = read_json(a.config);
    if (!j.is_object()) throw ConfigError("<root>", "config must be a JSON object");
    if (sub != "run") j["command"] = sub;
    if (a.seed >= 0) j["seed"] = a.seed;
    cfg = parse_config(j);
  } catch (const mmfg::ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kValidation;
  } catch (const mmfg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }

  mmfg::test_hooks::flip_divergence_sign = a.flip_divergence;
  auto t0 = std::chrono::steady_clock::now();
  RunOutcome out;
  try {
    out = run_command(cfg, cfg.command, std::cout);
  } catch (const mmfg::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kValidation;
  } catch (const mmfg::DomainError& e) {
    std::cerr << "domain failure: " << e.what() << "\n";
    return kDomain;
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  try {
    auto files = emit_report(out.bundle, resolve_output_dir(cfg, a.output_dir), cfg.output.stem);
    std::cout << "report: " << files.report << "\n";
    if (!files.table.empty()) std::cout << "table:  " << files.table << "\n";
  } catch (const mmfg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  std::cerr << cfg.command << " finished in " << secs << " s, exit code " << out.exit_code << "\n";
  return out.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical lab for monotone mean-field games on the periodic torus"};
  app.require_subcommand(1);
  Args args;
  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"solve-stationary", "regularized stationary solve at config.epsilon"},
      {"sweep", "stationary solves along config.schedule with Minty diagnostics"},
      {"solve-linear", "linear advection model, every configured method"},
      {"solve-timedep", "time-dependent problem along timedep.schedule"},
      {"verify", "self-check suite; exit 1 if any check fails"},
      {"run", "run the command named in the config"},
  };
  std::string chosen;
  for (const auto& s : subs) {
    auto* sc = app.add_subcommand(s.name, s.help);
    sc->add_option("-c,--config", args.config, "JSON config file (defaults apply when omitted)")
        ->check(CLI::ExistingFile);
    sc->add_option("-o,--output-dir", args.output_dir,
                   "output directory (overrides config output.dir and MMFG_OUTPUT_DIR)");
    sc->add_option("--seed", args.seed, "override the config seed")->check(CLI::NonNegativeNumber);
    if (std::string(s.name) == "verify")
      sc->add_flag("--inject-divergence-flip", args.flip_divergence, "mutation check: negate the divergence")
          ->group("");
    sc->callback([&chosen, name = std::string(s.name)] { chosen = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : mmfg::cli::kValidation;
  }
  return execute(chosen, args);
}
