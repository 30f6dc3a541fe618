#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gru2pc/gru.hpp"
#include "gru2pc/protocol.hpp"

namespace gru2pc {

enum class RunMode : uint8_t { Local, Server, Client };
enum class ReportFormat : uint8_t { Table, Json };

std::string to_string(RunMode m);
RunMode parse_run_mode(const std::string& s);

struct BenchConfig {
  Scenario scenario = Scenario::BASELINE;
  /// Overrides the scenario's activation width.
  std::optional<int> act_bits;
  std::size_t m = 10, n = 128, T = 30, k = 2;
  std::size_t trials = 1;
  RunMode mode = RunMode::Local;
  std::string endpoint = "127.0.0.1:7070";
  uint64_t seed = 1;
  ReportFormat format = ReportFormat::Table;
  bool secure_ot = false;
  std::string model_path;  // empty: synthetic model from the seed
  Backend backend = Backend::Bfv;
  bool refresh = true;
  /// Local mode over a loopback socket instead of the in-process pipe.
  bool loopback_tcp = false;
};

struct PhaseTraffic {
  uint64_t c2s_bytes = 0, s2c_bytes = 0, frames = 0;
  bool operator==(const PhaseTraffic&) const = default;
};

struct BenchReport {
  std::string scenario;  // "baseline", "cg1", "cg2" or "custom"
  ActivationKind activation_kind = ActivationKind::TANH;
  int activation_bits = 0;
  std::size_t m = 0, n = 0, T = 0, k = 0;
  std::string backend, ot, mode;
  bool refresh = true;
  std::size_t trials = 0;
  uint64_t seed = 0;
  std::string verdict;  // "match", "mismatch" or "unchecked"

  // Medians over trials, milliseconds.
  double setup_ms = 0, offline_ms = 0, online_ms = 0, total_ms = 0;
  /// Server view of the online phase (absent in client mode).
  struct Breakdown {
    double gc_ms = 0, linear_ms = 0, refresh_ms = 0, output_ms = 0, gc_fraction = 0;
  };
  std::optional<Breakdown> breakdown;

  std::array<PhaseTraffic, 3> phases{};
  std::array<uint64_t, 7> bytes_by_type{};  // index = msg_type; [0] unused
  uint64_t total_bytes = 0;

  std::size_t gc_instances = 0, gc_non_xor = 0, gc_table_bytes = 0, gc_material_bytes = 0;
  /// Garbled-material traffic two ways: GC_TABLES frames, and those plus all OT traffic.
  uint64_t gc_msg_bytes = 0, gc_msg_bytes_with_ot = 0;
  std::size_t ot_transfers = 0;

  std::optional<OpCensus> census;             // server only
  std::optional<double> min_noise_budget_bits;  // server with the BFV backend only
};

/// Model for a config: loaded from model_path or synthesized from the seed.
Model bench_model(const BenchConfig& cfg);
/// Seeded input sequence matching the model.
std::vector<std::vector<uint64_t>> bench_inputs(const Model& model, uint64_t seed);

/// Runs `trials` secure inferences and cross-checks each against oracle_infer_fixed.
/// Empty when trials == 0. Protocol errors propagate with their type; the bench
/// tool maps them to its exit codes.
std::optional<BenchReport> run_scenario(const BenchConfig& cfg);

/// Fixed column order; an empty list prints the header only.
std::string emit_table(const std::vector<BenchReport>& reports);
std::string emit_json(const std::vector<BenchReport>& reports);
/// Inverse of emit_json; SchemaError on anything the schema does not allow.
std::vector<BenchReport> parse_json_reports(const std::string& text);

/// Log verbosity from GRU2PC_LOG: "quiet", "info" (default) or "debug".
int log_level();
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace gru2pc
