#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gru2pc {

using Wire = uint32_t;
/// Wires 0 and 1 carry the constants false and true in every circuit.
inline constexpr Wire kFalse = 0;
inline constexpr Wire kTrue = 1;

enum class GateKind : uint8_t { XOR, AND, INV };

struct Gate {
  GateKind kind;
  Wire a, b;  // b unused for INV
  Wire out;
};

enum class Party : uint8_t { Garbler, Evaluator };

/// A named little-endian bit group.
struct WireGroup {
  std::string name;
  Party party = Party::Evaluator;
  std::vector<Wire> wires;
  bool is_signed = false;  // output groups only: sign-extend when decoding
};

struct CircuitStats {
  std::size_t total_gates = 0, xor_count = 0, non_xor_count = 0, inv_count = 0, depth = 0, and_depth = 0;
};

/// Boolean circuit in single static assignment form over XOR/AND/INV gates.
struct BoolCircuit {
  uint32_t num_wires = 2;
  std::vector<Gate> gates;
  std::vector<WireGroup> inputs;
  std::vector<WireGroup> outputs;

  const WireGroup& input(const std::string& name) const;
  const WireGroup& output(const std::string& name) const;
  std::size_t input_bits(Party party) const;
  std::size_t output_bits() const;
  /// Throws SpecError unless gates are topologically ordered and every wire is written once.
  void validate() const;
};

CircuitStats stats(const BoolCircuit& c);

/// Textual netlist, one gate per line ("AND w3 w7 -> w12"), preceded by group headers.
std::string dump(const BoolCircuit& c);

using Bus = std::vector<Wire>;  // little-endian

/// Incremental builder with constant propagation and trivial-identity folding.
class CircuitBuilder {
 public:
  CircuitBuilder();

  Bus input(const std::string& name, std::size_t bits, Party party);
  void output(const std::string& name, const Bus& bus, bool is_signed = false);
  /// Prunes gates no output depends on, validates, and resets the builder.
  BoolCircuit finish();

  Wire xor_(Wire a, Wire b);
  Wire and_(Wire a, Wire b);
  Wire not_(Wire a);
  Wire or_(Wire a, Wire b);
  /// s ? b : a
  Wire mux(Wire s, Wire a, Wire b);

  static Bus constant(uint64_t value, std::size_t bits);
  Bus xor_bus(const Bus& a, const Bus& b);
  Bus not_bus(const Bus& a);
  Bus and_bit(const Bus& a, Wire s);
  /// s ? b : a, bitwise.
  Bus mux_bus(Wire s, const Bus& a, const Bus& b);

  /// a + b + cin truncated to a.size() bits (b is resized to match); carry out optional.
  Bus add(const Bus& a, const Bus& b, Wire cin = kFalse, Wire* carry_out = nullptr);
  /// a - b truncated to a.size() bits; *borrow set to 1 when a < b (unsigned).
  Bus sub(const Bus& a, const Bus& b, Wire* borrow = nullptr);
  /// Adds a compile-time constant (mod 2^width).
  Bus add_const(const Bus& a, uint64_t k);
  /// 1 iff a >= b, unsigned.
  Wire ge_unsigned(const Bus& a, const Bus& b);
  /// 1 iff a >= b, two's complement.
  Wire ge_signed(const Bus& a, const Bus& b);
  Wire or_reduce(const Bus& a);

  static Bus sign_extend(const Bus& a, std::size_t bits);
  static Bus zero_extend(const Bus& a, std::size_t bits);
  static Bus slice(const Bus& a, std::size_t lo, std::size_t hi);
  static Bus shift_left(const Bus& a, std::size_t k);

  /// Signed a (two's complement) times unsigned b, truncated to `bits`.
  Bus mul_signed_unsigned(const Bus& a, const Bus& b, std::size_t bits);
  /// Unsigned product truncated to `bits`.
  Bus mul_unsigned(const Bus& a, const Bus& b, std::size_t bits);

  /// Arithmetic right shift by k with round-half-to-even (signed input, same width out).
  Bus round_shift_even(const Bus& a, std::size_t k);
  /// Clamps a signed bus to the signed range of `bits` bits and narrows it.
  Bus saturate(const Bus& a, std::size_t bits);
  /// Table lookup: out = table[index] via a mux tree over constant leaves.
  Bus lookup(const Bus& index, const std::vector<uint64_t>& table, std::size_t bits);

 private:
  Wire fresh();
  Wire emit(GateKind k, Wire a, Wire b);

  BoolCircuit c_;
  std::vector<Wire> neg_;  // known negation of each wire, if any
};

/// b-bit primitives, each with inputs "a"/"b" (and "s" for mux) and output "out".
BoolCircuit build_add(std::size_t bits);
BoolCircuit build_sub(std::size_t bits);
BoolCircuit build_mux(std::size_t bits);
/// out = (a >= b) on two's-complement words.
BoolCircuit build_ge(std::size_t bits);
/// Bare ReLU on a two's-complement b-bit input "x".
BoolCircuit build_relu(std::size_t bits);

/// Plain evaluation on 64 independent instances at once: one uint64 lane word per wire bit.
std::vector<uint64_t> eval_lanes(const BoolCircuit& c, const std::vector<uint64_t>& input_lanes);

using NamedValues = std::map<std::string, uint64_t>;
/// Evaluates one instance; group values are little-endian integers (signed outputs sign-extended into uint64).
NamedValues eval_plain(const BoolCircuit& c, const NamedValues& inputs);
/// Evaluates many instances; inputs[name][k] is instance k's value.
std::map<std::string, std::vector<uint64_t>> eval_plain_batch(const BoolCircuit& c,
                                                             const std::map<std::string, std::vector<uint64_t>>& inputs);

/// Order in which input wires are listed by garbler/evaluator (group order, then bit order).
std::vector<Wire> input_wires(const BoolCircuit& c, Party party);
std::vector<Wire> output_wires(const BoolCircuit& c);

}  // namespace gru2pc
