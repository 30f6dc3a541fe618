#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gru2pc/circuit.hpp"
#include "gru2pc/fixedpoint.hpp"

namespace gru2pc {

enum class ActivationKind : uint8_t { RELU, SIGMOID, TANH };

std::string to_string(ActivationKind k);
/// Accepts "relu", "sigmoid", "tanh" in any case; throws SpecError otherwise.
ActivationKind parse_activation_kind(const std::string& s);

/// Segment count meaning "one segment per input code", i.e. an exact lookup table.
inline constexpr int kExactTable = 0;

struct ActivationSpec {
  ActivationKind kind = ActivationKind::RELU;
  int bits = 20;
  /// Multiply the activation by a second masked operand inside the block (SIGMOID only).
  bool fused_product = false;
  /// SIGMOID/TANH: power of two, or kExactTable.
  int segments = 8;
  /// Scales of the masked inputs and of the fused output; -1 picks the default
  /// (inputs at the product scale w+a, fused output at the activation scale a).
  int input_scale_log2 = -1;
  int operand_scale_log2 = -1;
  int output_scale_log2 = -1;
};

/// Integer semantics of a bounded activation on a b-bit word at scale a.
///
/// Inputs are clamped to [-2^domain_log2, 2^domain_log2). In piecewise-linear
/// mode segment s evaluates round_even((slope[s]*x + intercept[s]) / 2^frac_bits)
/// with each chord anchored at the segment's left end; the result is clamped
/// to [out_min, out_max]. In exact-table mode values[x + 2^domain_log2] is returned.
struct ActivationTable {
  ActivationKind kind = ActivationKind::SIGMOID;
  int bits = 0;
  int scale_log2 = 0;
  int segments = 0;  // resolved: 2^(domain_log2+1) in exact-table mode
  int domain_log2 = 0;
  int frac_bits = 0;
  bool exact_table = false;
  std::vector<int64_t> slope, intercept, values;
  int64_t out_min = 0, out_max = 0;

  int64_t eval(int64_t x) const;
  /// Published worst-case |table(x) - f(x)| in real units over every b-bit code.
  double error_bound() const;
};

ActivationTable make_activation_table(ActivationKind kind, int bits, int scale_log2, int segments);

/// Activation on a b-bit word at scale a (ReLU needs no table).
int64_t activation_reference(ActivationKind kind, int bits, int scale_log2, int segments, int64_t x);

/// Bare activation circuits: input "x" (bits, two's complement, scale a), output "out" (signed).
BoolCircuit build_sigmoid(int bits, int scale_log2, int segments = 8);
BoolCircuit build_tanh(int bits, int scale_log2, int segments = 8);

/// Resolved layout of a block's output word and remask construction.
struct BlockShape {
  int plaintext_bits = 0;
  int input_shift = 0;    // requantization of the masked sum
  int operand_shift = 0;  // requantization of the operand (fused only)
  int product_shift = 0;  // > 0: round right, < 0: shift left
  int out_bits = 0;
  bool out_signed = false;
  /// Remask by comparing the output word against the low bits of p - s
  /// (cheaper for narrow outputs) instead of a full-width subtraction of p.
  bool compact_remask = false;
};

BlockShape block_shape(const ActivationSpec& spec, const FixedPointConfig& cfg);

/// Full garbled activation block for one element.
///
/// Evaluator inputs: "masked_sum" = X + r mod p and, when fused,
/// "masked_operand" = O + r' mod p. Garbler inputs are derived from the masks by
/// block_garbler_inputs. Output "masked_out" = F(X, O) + s mod p, where F is
/// block_reference. Inside: unmask mod p, round-half-even requantize to the
/// activation scale, saturate to b bits, activation, optional fused product with
/// rescale, remask mod p.
BoolCircuit build_activation_block(const ActivationSpec& spec, const FixedPointConfig& cfg);

struct BlockMasks {
  uint64_t input_mask = 0;    // r, added to the sum in the HE domain
  uint64_t operand_mask = 0;  // r'
  uint64_t output_mask = 0;   // s, subtracted by the server after re-encryption
};

NamedValues block_garbler_inputs(const ActivationSpec& spec, const FixedPointConfig& cfg, const BlockMasks& masks);
NamedValues block_evaluator_inputs(const ActivationSpec& spec, uint64_t masked_sum, uint64_t masked_operand = 0);

/// What the block computes on unmasked field elements (result in [0, p)).
uint64_t block_reference(const ActivationSpec& spec, const FixedPointConfig& cfg, uint64_t sum, uint64_t operand = 0);

}  // namespace gru2pc
