#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "gru2pc/aes.hpp"
#include "gru2pc/circuit.hpp"

namespace gru2pc {

inline constexpr std::size_t kLabelBytes = 16;
/// Half-gates: two 16-byte rows per AND gate, nothing for XOR/INV.
inline constexpr std::size_t kTableBytesPerAnd = 2 * kLabelBytes;

/// Everything the evaluator receives for one circuit instance except its input labels.
struct GarbledCircuit {
  uint64_t circuit_id = 0;
  uint32_t non_xor_count = 0;
  std::vector<uint8_t> tables;  // kTableBytesPerAnd per AND, in gate order
  /// Active labels of the constant wires 0 (false) and 1 (true).
  std::array<Block, 2> constant_labels;
  /// Two 64-bit tags per output bit: tag of the 0-label, tag of the 1-label.
  std::vector<uint64_t> decode_tags;

  std::size_t table_bytes() const { return tables.size(); }
  /// Serialized length: header + tables + constants + decode tags.
  std::size_t wire_bytes() const;
  std::vector<uint8_t> serialize() const;
  void serialize_into(std::vector<uint8_t>& out) const;
  /// Parses one circuit starting at `offset`, advancing it. Throws DecodeError on malformed input.
  static GarbledCircuit deserialize(std::span<const uint8_t> bytes, std::size_t& offset);
};

/// Garbler-side secrets for one instance: global offset and every input wire's 0-label.
struct GarblerSecrets {
  Block delta;
  /// 0-labels of the circuit's input wires in input-group order, both parties.
  std::vector<Block> input_zero_labels;
};

struct GarbleResult {
  GarbledCircuit gc;
  GarblerSecrets secrets;
};

/// Free-XOR + point-and-permute + half-gates garbling; deterministic in `seed`.
GarbleResult garble(const BoolCircuit& c, Block seed, uint64_t circuit_id = 0);

/// Active labels encoding `values` for every input wire of `party` (input_wires order).
std::vector<Block> encode_inputs(const BoolCircuit& c, const GarblerSecrets& s, const NamedValues& values, Party party);
/// (label0, label1) for every input wire of `party`; what the OT sender transfers.
std::vector<std::array<Block, 2>> input_label_pairs(const BoolCircuit& c, const GarblerSecrets& s, Party party);
/// Packs named input values into the per-wire bit list of `party` (input_wires order).
std::vector<uint8_t> input_bits(const BoolCircuit& c, const NamedValues& values, Party party);

/// Evaluates with one label per input wire of each party; returns the output labels.
std::vector<Block> evaluate(const BoolCircuit& c, const GarbledCircuit& gc, const std::vector<Block>& garbler_labels,
                            const std::vector<Block>& evaluator_labels);
/// Maps output labels to bits; DecodeError if a label matches neither tag.
std::vector<uint8_t> decode_bits(const GarbledCircuit& gc, const std::vector<Block>& output_labels);
NamedValues decode_outputs(const BoolCircuit& c, const GarbledCircuit& gc, const std::vector<Block>& output_labels);

}  // namespace gru2pc
