#pragma once

// Shared fixtures for the protocol-level suites.

#include <memory>

#include "gru2pc/activation.hpp"
#include "gru2pc/garble.hpp"
#include "gru2pc/pahe.hpp"

namespace gru2pc::testing {

struct BfvFixture {
  PaheParams params{};
  std::shared_ptr<const KeyPair> keys;
  std::unique_ptr<Pahe> client, server, debug;
  BfvFixture() {
    keys = std::make_shared<const KeyPair>(keygen(params, Block::from_u64(11, 12)));
    client = make_bfv_client(params, keys);
    server = make_bfv_server(params, std::shared_ptr<const PublicKeys>(keys, &keys->pub));
    debug = make_debug_pahe(params);
  }
};

inline const BfvFixture& bfv() {
  static const BfvFixture f;
  return f;
}

/// One garbled activation block for one element, both parties local: returns masked_out.
inline uint64_t garbled_block(const BoolCircuit& c, const ActivationSpec& spec, const FixedPointConfig& cfg,
                              const BlockMasks& masks, uint64_t masked_sum, uint64_t masked_operand, uint64_t seed) {
  const auto g = garble(c, Block::from_u64(seed, 0x77));
  const auto gl = encode_inputs(c, g.secrets, block_garbler_inputs(spec, cfg, masks), Party::Garbler);
  const auto el = encode_inputs(c, g.secrets, block_evaluator_inputs(spec, masked_sum, masked_operand), Party::Evaluator);
  return decode_outputs(c, g.gc, evaluate(c, g.gc, gl, el)).at("masked_out");
}

}  // namespace gru2pc::testing
