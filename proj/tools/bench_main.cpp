// Scenario runner: secure GRU inference with oracle cross-check and traffic report.

#include <iostream>

#include "CLI11.hpp"
#include "gru2pc/bench.hpp"
#include "gru2pc/errors.hpp"

using namespace gru2pc;

namespace {
constexpr int kExitMismatch = 2;
constexpr int kExitProtocol = 3;
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-party GRU inference benchmark"};
  BenchConfig cfg;
  std::string scenario = "baseline", mode = "local", report = "table", backend = "bfv";
  int act_bits = 0;
  bool no_refresh = false;
  app.add_option("--scenario", scenario, "baseline | cg1 | cg2")->check(CLI::IsMember({"baseline", "cg1", "cg2"}, CLI::ignore_case));
  app.add_option("--input-size", cfg.m, "input dimension m")->check(CLI::PositiveNumber);
  app.add_option("--hidden-size", cfg.n, "hidden dimension n")->check(CLI::PositiveNumber);
  app.add_option("--steps", cfg.T, "time steps T")->check(CLI::PositiveNumber);
  app.add_option("--classes", cfg.k, "output classes k")->check(CLI::PositiveNumber);
  app.add_option("--trials", cfg.trials, "runs per configuration; latencies are medians");
  app.add_option("--mode", mode, "local | server | client")->check(CLI::IsMember({"local", "server", "client"}));
  app.add_option("--endpoint", cfg.endpoint, "host:port for server/client modes");
  app.add_option("--act-bits", act_bits, "activation bit-width (default: the scenario's)")->check(CLI::Range(4, 20));
  app.add_option("--seed", cfg.seed, "seed for the synthetic model, inputs and protocol randomness");
  app.add_option("--report", report, "table | json")->check(CLI::IsMember({"table", "json"}));
  app.add_flag("--secure-ot", cfg.secure_ot, "Chou-Orlandi base OT instead of the trusted dealer");
  app.add_option("--model", cfg.model_path, "model file; overrides the shape options");
  app.add_option("--backend", backend, "bfv | debug (clear-text PAHE with the same slot semantics)")
      ->check(CLI::IsMember({"bfv", "debug"}));
  app.add_flag("--no-refresh", no_refresh, "skip the per-step interactive refresh of h_t");
  app.add_flag("--loopback", cfg.loopback_tcp, "local mode over a loopback TCP socket");
  app.footer("Environment: GRU2PC_LOG=quiet|info|debug sets log verbosity (default info, on stderr).\n"
             "Exit codes: 0 success and match, 2 mismatch, 3 protocol error.");
  CLI11_PARSE(app, argc, argv);

  try {
    cfg.scenario = parse_scenario(scenario);
    cfg.mode = parse_run_mode(mode);
    cfg.format = report == "json" ? ReportFormat::Json : ReportFormat::Table;
    cfg.backend = backend == "debug" ? Backend::Debug : Backend::Bfv;
    cfg.refresh = !no_refresh;
    if (act_bits) cfg.act_bits = act_bits;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  std::vector<BenchReport> reports;
  try {
    if (auto r = run_scenario(cfg)) reports.push_back(std::move(*r));
  } catch (const SchemaError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return 1;
  } catch (const ParamError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "protocol error: " << e.what() << '\n';
    return kExitProtocol;
  }

  std::cout << (cfg.format == ReportFormat::Json ? emit_json(reports) + "\n" : emit_table(reports));
  for (const auto& r : reports)
    if (r.verdict == "mismatch") return kExitMismatch;
  return 0;
}
