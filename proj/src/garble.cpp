#include "gru2pc/garble.hpp"

#include <cstring>

#include "gru2pc/errors.hpp"

namespace gru2pc {

namespace {

const FixedKeyHash& hasher() {
  static const FixedKeyHash h;
  return h;
}

// Decode tags use tweaks disjoint from gate tweaks (bit 63 set).
constexpr uint64_t kTagTweak = uint64_t{1} << 63;

uint64_t label_tag(Block label, std::size_t out_index) {
  return hasher().hash(label, kTagTweak | out_index).lo();
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
uint64_t get_le(std::span<const uint8_t> b, std::size_t& off, int n) {
  if (off + static_cast<std::size_t>(n) > b.size()) throw DecodeError("garbled material truncated");
  uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= uint64_t{b[off + i]} << (8 * i);
  off += n;
  return v;
}

// Position of each input wire inside GarblerSecrets::input_zero_labels.
std::vector<std::size_t> party_positions(const BoolCircuit& c, Party party) {
  std::vector<std::size_t> pos;
  std::size_t k = 0;
  for (const auto& g : c.inputs) {
    for (std::size_t i = 0; i < g.wires.size(); ++i, ++k)
      if (g.party == party) pos.push_back(k);
  }
  return pos;
}

}  // namespace

std::size_t GarbledCircuit::wire_bytes() const {
  return 8 + 4 + tables.size() + 2 * kLabelBytes + 4 + 8 * decode_tags.size();
}

void GarbledCircuit::serialize_into(std::vector<uint8_t>& out) const {
  out.reserve(out.size() + wire_bytes());
  put_u64(out, circuit_id);
  put_u32(out, non_xor_count);
  out.insert(out.end(), tables.begin(), tables.end());
  for (const auto& l : constant_labels) {
    uint8_t buf[kLabelBytes];
    l.store(buf);
    out.insert(out.end(), buf, buf + kLabelBytes);
  }
  put_u32(out, static_cast<uint32_t>(decode_tags.size() / 2));
  for (uint64_t t : decode_tags) put_u64(out, t);
}

std::vector<uint8_t> GarbledCircuit::serialize() const {
  std::vector<uint8_t> out;
  serialize_into(out);
  return out;
}

GarbledCircuit GarbledCircuit::deserialize(std::span<const uint8_t> bytes, std::size_t& offset) {
  GarbledCircuit gc;
  gc.circuit_id = get_le(bytes, offset, 8);
  gc.non_xor_count = static_cast<uint32_t>(get_le(bytes, offset, 4));
  const std::size_t tbytes = std::size_t{gc.non_xor_count} * kTableBytesPerAnd;
  if (offset + tbytes + 2 * kLabelBytes > bytes.size()) throw DecodeError("garbled material truncated");
  gc.tables.assign(bytes.begin() + offset, bytes.begin() + offset + tbytes);
  offset += tbytes;
  for (auto& l : gc.constant_labels) {
    l = Block::load(bytes.data() + offset);
    offset += kLabelBytes;
  }
  const std::size_t nout = get_le(bytes, offset, 4);
  if (offset + 16 * nout > bytes.size()) throw DecodeError("garbled material truncated");
  gc.decode_tags.resize(2 * nout);
  for (auto& t : gc.decode_tags) t = get_le(bytes, offset, 8);
  return gc;
}

GarbleResult garble(const BoolCircuit& c, Block seed, uint64_t circuit_id) {
  Prg prg(seed);
  GarbleResult r;
  Block d = prg.next_block();
  if (!d.lsb()) d = d ^ Block::from_u64(0, 1);  // point-and-permute needs lsb(delta) = 1
  r.secrets.delta = d;

  std::vector<Block> zero(c.num_wires);
  zero[kFalse] = prg.next_block();
  zero[kTrue] = prg.next_block();
  for (const auto& g : c.inputs)
    for (Wire w : g.wires) {
      zero[w] = prg.next_block();
      r.secrets.input_zero_labels.push_back(zero[w]);
    }

  auto& gc = r.gc;
  gc.circuit_id = circuit_id;
  gc.constant_labels = {zero[kFalse], zero[kTrue] ^ d};
  std::size_t n_and = 0;
  for (const auto& g : c.gates) n_and += g.kind == GateKind::AND;
  gc.non_xor_count = static_cast<uint32_t>(n_and);
  gc.tables.resize(n_and * kTableBytesPerAnd);

  const auto& H = hasher();
  uint8_t* row = gc.tables.data();
  uint64_t j = 0;
  for (const auto& g : c.gates) {
    switch (g.kind) {
      case GateKind::XOR: zero[g.out] = zero[g.a] ^ zero[g.b]; break;
      case GateKind::INV: zero[g.out] = zero[g.a] ^ d; break;
      case GateKind::AND: {
        const Block a0 = zero[g.a], b0 = zero[g.b];
        const bool pa = a0.lsb(), pb = b0.lsb();
        const Block in[4] = {a0, a0 ^ d, b0, b0 ^ d};
        const uint64_t tw[4] = {2 * j, 2 * j, 2 * j + 1, 2 * j + 1};
        Block h[4];
        H.hash4(in, tw, h);
        // Garbler half-gate: knows pb.
        const Block tg = h[0] ^ h[1] ^ (d & select_block(pb));
        const Block wg = h[0] ^ (tg & select_block(pa));
        // Evaluator half-gate: evaluator knows b ^ pb.
        const Block te = h[2] ^ h[3] ^ a0;
        const Block we = h[2] ^ ((te ^ a0) & select_block(pb));
        zero[g.out] = wg ^ we;
        tg.store(row);
        te.store(row + kLabelBytes);
        row += kTableBytesPerAnd;
        ++j;
        break;
      }
    }
  }

  std::size_t k = 0;
  for (const auto& g : c.outputs)
    for (Wire w : g.wires) {
      gc.decode_tags.push_back(label_tag(zero[w], k));
      gc.decode_tags.push_back(label_tag(zero[w] ^ d, k));
      ++k;
    }
  return r;
}

std::vector<uint8_t> input_bits(const BoolCircuit& c, const NamedValues& values, Party party) {
  std::vector<uint8_t> bits;
  for (const auto& g : c.inputs) {
    if (g.party != party) continue;
    const auto it = values.find(g.name);
    if (it == values.end()) throw SpecError("missing input '" + g.name + "'");
    for (std::size_t i = 0; i < g.wires.size(); ++i) bits.push_back(i < 64 ? (it->second >> i) & 1 : 0);
  }
  return bits;
}

std::vector<std::array<Block, 2>> input_label_pairs(const BoolCircuit& c, const GarblerSecrets& s, Party party) {
  std::vector<std::array<Block, 2>> pairs;
  for (std::size_t p : party_positions(c, party)) {
    const Block z = s.input_zero_labels.at(p);
    pairs.push_back({z, z ^ s.delta});
  }
  return pairs;
}

std::vector<Block> encode_inputs(const BoolCircuit& c, const GarblerSecrets& s, const NamedValues& values, Party party) {
  const auto bits = input_bits(c, values, party);
  const auto pos = party_positions(c, party);
  std::vector<Block> labels(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i)
    labels[i] = s.input_zero_labels.at(pos[i]) ^ (s.delta & select_block(bits[i]));
  return labels;
}

std::vector<Block> evaluate(const BoolCircuit& c, const GarbledCircuit& gc, const std::vector<Block>& garbler_labels,
                            const std::vector<Block>& evaluator_labels) {
  std::size_t n_and = 0;
  for (const auto& g : c.gates) n_and += g.kind == GateKind::AND;
  if (gc.non_xor_count != n_and || gc.tables.size() != n_and * kTableBytesPerAnd)
    throw DecodeError("garbled tables do not match the circuit");

  std::vector<Block> lab(c.num_wires);
  lab[kFalse] = gc.constant_labels[0];
  lab[kTrue] = gc.constant_labels[1];
  std::size_t gi = 0, ei = 0;
  for (const auto& g : c.inputs) {
    const auto& src = g.party == Party::Garbler ? garbler_labels : evaluator_labels;
    std::size_t& idx = g.party == Party::Garbler ? gi : ei;
    for (Wire w : g.wires) {
      if (idx >= src.size()) throw SpecError("too few input labels");
      lab[w] = src[idx++];
    }
  }
  if (gi != garbler_labels.size() || ei != evaluator_labels.size()) throw SpecError("too many input labels");

  const auto& H = hasher();
  const uint8_t* row = gc.tables.data();
  uint64_t j = 0;
  for (const auto& g : c.gates) {
    switch (g.kind) {
      case GateKind::XOR: lab[g.out] = lab[g.a] ^ lab[g.b]; break;
      case GateKind::INV: lab[g.out] = lab[g.a]; break;
      case GateKind::AND: {
        const Block a = lab[g.a], b = lab[g.b];
        const Block in[2] = {a, b};
        const uint64_t tw[2] = {2 * j, 2 * j + 1};
        Block h[2];
        H.hash2(in, tw, h);
        const Block tg = Block::load(row), te = Block::load(row + kLabelBytes);
        const Block wg = h[0] ^ (tg & select_block(a.lsb()));
        const Block we = h[1] ^ ((te ^ a) & select_block(b.lsb()));
        lab[g.out] = wg ^ we;
        row += kTableBytesPerAnd;
        ++j;
        break;
      }
    }
  }

  std::vector<Block> out;
  for (const auto& g : c.outputs)
    for (Wire w : g.wires) out.push_back(lab[w]);
  return out;
}

std::vector<uint8_t> decode_bits(const GarbledCircuit& gc, const std::vector<Block>& output_labels) {
  if (gc.decode_tags.size() != 2 * output_labels.size()) throw DecodeError("output count mismatch");
  std::vector<uint8_t> bits(output_labels.size());
  for (std::size_t k = 0; k < output_labels.size(); ++k) {
    const uint64_t t = label_tag(output_labels[k], k);
    if (t == gc.decode_tags[2 * k]) bits[k] = 0;
    else if (t == gc.decode_tags[2 * k + 1]) bits[k] = 1;
    else throw DecodeError("output label " + std::to_string(k) + " matches neither decode tag");
  }
  return bits;
}

NamedValues decode_outputs(const BoolCircuit& c, const GarbledCircuit& gc, const std::vector<Block>& output_labels) {
  const auto bits = decode_bits(gc, output_labels);
  NamedValues out;
  std::size_t k = 0;
  for (const auto& g : c.outputs) {
    uint64_t v = 0;
    const std::size_t n = g.wires.size();
    for (std::size_t i = 0; i < n; ++i, ++k)
      if (bits[k] && i < 64) v |= uint64_t{1} << i;
    if (g.is_signed && n > 0 && n < 64 && ((v >> (n - 1)) & 1)) v |= ~uint64_t{0} << n;
    out[g.name] = v;
  }
  return out;
}

}  // namespace gru2pc
