#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "gru2pc/gru.hpp"
#include "gru2pc/ot.hpp"
#include "gru2pc/pahe.hpp"
#include "gru2pc/transport.hpp"

namespace gru2pc {

enum class Backend : uint8_t { Bfv, Debug };
std::string to_string(Backend b);

struct ProtocolOptions {
  Backend backend = Backend::Bfv;
  OtMode ot = OtMode::Dealer;
  /// Interactive refresh of h_t after every step.
  bool refresh = true;
  PaheParams params{};
  /// Server keeps every h_t ciphertext (tests decrypt them with the client key).
  bool keep_hidden_trace = false;
};

/// Totals of the garbled material one session produced.
struct GcTotals {
  std::size_t instances = 0;
  std::size_t non_xor = 0;
  std::size_t table_bytes = 0;     // 32 per non-XOR gate
  std::size_t material_bytes = 0;  // GC_TABLES payload: tables, constants, decode tags, garbler labels
  std::size_t ot_transfers = 0;
  std::size_t ot_offline_bytes = 0;
  std::size_t ot_online_bytes = 0;
};

/// Server view of a session. Phase times are server wall clock; the online
/// breakdown splits the server's online time into its parts.
struct ServerReport {
  std::array<double, 3> phase_seconds{};
  double garble_seconds = 0;
  double online_linear_seconds = 0;   // mult_pc, add_cc, negate
  double online_gc_seconds = 0;       // mask, OT answer, waiting on client evaluation, unmask
  double online_refresh_seconds = 0;
  double online_output_seconds = 0;
  GcTotals gc;
  std::vector<OpCensus> census;       // per step, measured from the PAHE counters
  std::size_t negations_per_step = 0; // the subtraction h_prev - Gate_new, counted inside add_cc
  double min_noise_budget = 0;        // lowest tracked budget seen before masking
  std::vector<Ciphertext> hidden_trace;
  TrafficCounters sent, received;
  std::optional<bool> client_verdict;
};

struct ClientReport {
  std::array<double, 3> phase_seconds{};
  double online_decrypt_seconds = 0;
  double online_ot_seconds = 0;
  double online_evaluate_seconds = 0;
  double online_encrypt_seconds = 0;
  ModelConfig config;                 // as announced by the server (no weights)
  GcTotals gc;                        // as received
  std::vector<uint64_t> scores;       // at scale w+a
  TrafficCounters sent, received;
};

/// The server: holds the model, garbles, runs the linear layers under encryption.
class ServerSession {
 public:
  ServerSession(Channel& ch, const Model& model, ProtocolOptions options, uint64_t seed);
  /// Runs setup, offline and online to completion and waits for the client's verdict.
  /// Errors keep their type; the message gains the party and phase.
  ServerReport run();
  /// Phase the session was in when it stopped (for error context).
  Phase phase() const { return phase_; }

 private:
  ServerReport run_impl();

  Channel& ch_;
  const Model& model_;
  ProtocolOptions opt_;
  uint64_t seed_;
  Phase phase_ = Phase::SETUP;
};

/// The client: holds the key pair and the input sequence, evaluates the garbled blocks.
class ClientSession {
 public:
  /// x: T vectors of m field elements at the activation scale.
  ClientSession(Channel& ch, std::vector<std::vector<uint64_t>> x, uint64_t seed);
  ClientReport run();
  /// Tells the server whether the scores matched the caller's reference (or that none was checked).
  void send_verdict(std::optional<bool> match);
  /// Available after run(): the client's PAHE instance (holds the secret key).
  const Pahe& pahe() const { return *pahe_; }
  Phase phase() const { return phase_; }

 private:
  ClientReport run_impl();

  Channel& ch_;
  std::vector<std::vector<uint64_t>> x_;
  uint64_t seed_;
  std::shared_ptr<const KeyPair> keys_;
  std::unique_ptr<Pahe> pahe_;
  Phase phase_ = Phase::SETUP;
};

struct LocalRun {
  ServerReport server;
  ClientReport client;
  /// h_t per step decrypted with the client key (only with keep_hidden_trace).
  std::vector<std::vector<uint64_t>> hidden;
};

/// Decides the verdict the client reports back; empty means "not checked".
using VerdictFn = std::function<std::optional<bool>(const ClientReport&)>;

/// Both parties in one process over an in-process channel pair (server on a thread).
/// Errors of either party are rethrown here; a peer's ChannelClosed never masks the cause.
LocalRun run_local(const Model& model, const std::vector<std::vector<uint64_t>>& x, const ProtocolOptions& options,
                   uint64_t seed, const VerdictFn& verdict = {});
/// Same over a loopback TCP connection.
LocalRun run_local_tcp(const Model& model, const std::vector<std::vector<uint64_t>>& x, const ProtocolOptions& options,
                       uint64_t seed, const VerdictFn& verdict = {});

}  // namespace gru2pc
