#include "gru2pc/circuit.hpp"

#include <algorithm>
#include <sstream>

#include "gru2pc/errors.hpp"

namespace gru2pc {

namespace {
constexpr Wire kNone = 0xffffffffu;
}

const WireGroup& BoolCircuit::input(const std::string& name) const {
  for (const auto& g : inputs)
    if (g.name == name) return g;
  throw SpecError("no input group named " + name);
}

const WireGroup& BoolCircuit::output(const std::string& name) const {
  for (const auto& g : outputs)
    if (g.name == name) return g;
  throw SpecError("no output group named " + name);
}

std::size_t BoolCircuit::input_bits(Party party) const {
  std::size_t n = 0;
  for (const auto& g : inputs)
    if (g.party == party) n += g.wires.size();
  return n;
}

std::size_t BoolCircuit::output_bits() const {
  std::size_t n = 0;
  for (const auto& g : outputs) n += g.wires.size();
  return n;
}

void BoolCircuit::validate() const {
  std::vector<uint8_t> written(num_wires, 0);
  written[kFalse] = written[kTrue] = 1;
  for (const auto& g : inputs)
    for (Wire w : g.wires) {
      if (w >= num_wires || written[w]) throw SpecError("input wire reused or out of range");
      written[w] = 1;
    }
  for (const auto& g : gates) {
    if (g.a >= num_wires || !written[g.a]) throw SpecError("gate reads an unwritten wire");
    if (g.kind != GateKind::INV && (g.b >= num_wires || !written[g.b]))
      throw SpecError("gate reads an unwritten wire");
    if (g.out >= num_wires || written[g.out]) throw SpecError("wire written twice");
    written[g.out] = 1;
  }
  for (const auto& g : outputs)
    for (Wire w : g.wires)
      if (w >= num_wires || !written[w]) throw SpecError("output wire never written");
}

CircuitStats stats(const BoolCircuit& c) {
  CircuitStats s;
  std::vector<uint32_t> depth(c.num_wires, 0), and_depth(c.num_wires, 0);
  for (const auto& g : c.gates) {
    ++s.total_gates;
    const Wire b = g.kind == GateKind::INV ? g.a : g.b;
    depth[g.out] = std::max(depth[g.a], depth[b]) + 1;
    and_depth[g.out] = std::max(and_depth[g.a], and_depth[b]) + (g.kind == GateKind::AND ? 1 : 0);
    s.depth = std::max<std::size_t>(s.depth, depth[g.out]);
    s.and_depth = std::max<std::size_t>(s.and_depth, and_depth[g.out]);
    switch (g.kind) {
      case GateKind::XOR: ++s.xor_count; break;
      case GateKind::AND: ++s.non_xor_count; break;
      case GateKind::INV: ++s.inv_count; break;
    }
  }
  return s;
}

std::string dump(const BoolCircuit& c) {
  std::ostringstream os;
  auto group = [&](const char* what, const WireGroup& g) {
    os << "# " << what << ' ' << g.name << ' ' << (g.party == Party::Garbler ? "garbler" : "evaluator") << ' '
       << g.wires.size();
    for (Wire w : g.wires) os << " w" << w;
    os << '\n';
  };
  for (const auto& g : c.inputs) group("input", g);
  for (const auto& g : c.gates) {
    switch (g.kind) {
      case GateKind::XOR: os << "XOR w" << g.a << " w" << g.b << " -> w" << g.out << '\n'; break;
      case GateKind::AND: os << "AND w" << g.a << " w" << g.b << " -> w" << g.out << '\n'; break;
      case GateKind::INV: os << "INV w" << g.a << " -> w" << g.out << '\n'; break;
    }
  }
  for (const auto& g : c.outputs) group("output", g);
  return os.str();
}

CircuitBuilder::CircuitBuilder() { neg_.assign(2, kNone); }

Wire CircuitBuilder::fresh() {
  neg_.push_back(kNone);
  return c_.num_wires++;
}

Wire CircuitBuilder::emit(GateKind k, Wire a, Wire b) {
  const Wire out = fresh();
  c_.gates.push_back(Gate{k, a, b, out});
  return out;
}

Bus CircuitBuilder::input(const std::string& name, std::size_t bits, Party party) {
  for (const auto& g : c_.inputs)
    if (g.name == name) throw SpecError("duplicate input group " + name);
  WireGroup g{name, party, {}, false};
  for (std::size_t i = 0; i < bits; ++i) g.wires.push_back(fresh());
  c_.inputs.push_back(g);
  return g.wires;
}

void CircuitBuilder::output(const std::string& name, const Bus& bus, bool is_signed) {
  c_.outputs.push_back(WireGroup{name, Party::Evaluator, bus, is_signed});
}

BoolCircuit CircuitBuilder::finish() {
  // Drop gates that no output depends on.
  std::vector<uint8_t> live(c_.num_wires, 0);
  for (const auto& g : c_.outputs)
    for (Wire w : g.wires) live[w] = 1;
  std::vector<Gate> kept;
  kept.reserve(c_.gates.size());
  for (auto it = c_.gates.rbegin(); it != c_.gates.rend(); ++it) {
    if (!live[it->out]) continue;
    live[it->a] = 1;
    if (it->kind != GateKind::INV) live[it->b] = 1;
    kept.push_back(*it);
  }
  std::reverse(kept.begin(), kept.end());
  c_.gates = std::move(kept);
  c_.validate();
  BoolCircuit out = std::move(c_);
  c_ = BoolCircuit{};
  neg_.assign(2, kNone);
  return out;
}

Wire CircuitBuilder::not_(Wire a) {
  if (a == kFalse) return kTrue;
  if (a == kTrue) return kFalse;
  if (neg_[a] != kNone) return neg_[a];
  const Wire out = emit(GateKind::INV, a, a);
  neg_[out] = a;
  neg_[a] = out;
  return out;
}

Wire CircuitBuilder::xor_(Wire a, Wire b) {
  if (a == kFalse) return b;
  if (b == kFalse) return a;
  if (a == b) return kFalse;
  if (a == kTrue) return not_(b);
  if (b == kTrue) return not_(a);
  if (neg_[a] == b) return kTrue;
  return emit(GateKind::XOR, a, b);
}

Wire CircuitBuilder::and_(Wire a, Wire b) {
  if (a == kFalse || b == kFalse) return kFalse;
  if (a == kTrue) return b;
  if (b == kTrue) return a;
  if (a == b) return a;
  return emit(GateKind::AND, a, b);
}

Wire CircuitBuilder::or_(Wire a, Wire b) {
  if (a == kTrue || b == kTrue) return kTrue;
  if (a == kFalse) return b;
  if (b == kFalse) return a;
  if (a == b) return a;
  return xor_(xor_(a, b), and_(a, b));
}

Wire CircuitBuilder::mux(Wire s, Wire a, Wire b) {
  if (a == b) return a;
  if (s == kFalse) return a;
  if (s == kTrue) return b;
  return xor_(a, and_(s, xor_(a, b)));
}

Bus CircuitBuilder::constant(uint64_t value, std::size_t bits) {
  Bus out(bits);
  for (std::size_t i = 0; i < bits; ++i) out[i] = (i < 64 && (value >> i) & 1) ? kTrue : kFalse;
  return out;
}

Bus CircuitBuilder::xor_bus(const Bus& a, const Bus& b) {
  Bus out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = xor_(a[i], i < b.size() ? b[i] : kFalse);
  return out;
}

Bus CircuitBuilder::not_bus(const Bus& a) {
  Bus out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = not_(a[i]);
  return out;
}

Bus CircuitBuilder::and_bit(const Bus& a, Wire s) {
  Bus out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = and_(a[i], s);
  return out;
}

Bus CircuitBuilder::mux_bus(Wire s, const Bus& a, const Bus& b) {
  Bus out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = mux(s, a[i], b[i]);
  return out;
}

Bus CircuitBuilder::add(const Bus& a, const Bus& b_in, Wire cin, Wire* carry_out) {
  const std::size_t n = a.size();
  const Bus b = zero_extend(b_in, n);
  Bus out(n);
  Wire c = cin;
  for (std::size_t i = 0; i < n; ++i) {
    const Wire ac = xor_(a[i], c), bc = xor_(b[i], c);
    out[i] = xor_(ac, b[i]);
    if (i + 1 < n || carry_out) c = xor_(and_(ac, bc), c);
  }
  if (carry_out) *carry_out = c;
  return out;
}

Bus CircuitBuilder::sub(const Bus& a, const Bus& b, Wire* borrow) {
  Wire carry = kFalse;
  Bus out = add(a, not_bus(zero_extend(b, a.size())), kTrue, borrow ? &carry : nullptr);
  if (borrow) *borrow = not_(carry);
  return out;
}

Bus CircuitBuilder::add_const(const Bus& a, uint64_t k) { return add(a, constant(k, a.size())); }

Wire CircuitBuilder::ge_unsigned(const Bus& a, const Bus& b_in) {
  const Bus b = zero_extend(b_in, a.size());
  Wire c = kTrue;  // carry of a + ~b + 1
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Wire nb = not_(b[i]);
    c = xor_(and_(xor_(a[i], c), xor_(nb, c)), c);
  }
  return c;
}

Wire CircuitBuilder::ge_signed(const Bus& a, const Bus& b) {
  Bus x = a, y = zero_extend(b, a.size());
  x.back() = not_(x.back());
  y.back() = not_(y.back());
  return ge_unsigned(x, y);
}

Wire CircuitBuilder::or_reduce(const Bus& a) {
  Wire acc = kFalse;
  for (Wire w : a) acc = or_(acc, w);
  return acc;
}

Bus CircuitBuilder::sign_extend(const Bus& a, std::size_t bits) {
  Bus out(a.begin(), a.begin() + static_cast<long>(std::min(bits, a.size())));
  while (out.size() < bits) out.push_back(a.empty() ? kFalse : a.back());
  return out;
}

Bus CircuitBuilder::zero_extend(const Bus& a, std::size_t bits) {
  Bus out(a.begin(), a.begin() + static_cast<long>(std::min(bits, a.size())));
  out.resize(bits, kFalse);
  return out;
}

Bus CircuitBuilder::slice(const Bus& a, std::size_t lo, std::size_t hi) {
  return Bus(a.begin() + static_cast<long>(lo), a.begin() + static_cast<long>(hi));
}

Bus CircuitBuilder::shift_left(const Bus& a, std::size_t k) {
  Bus out(k, kFalse);
  out.insert(out.end(), a.begin(), a.end());
  return out;
}

Bus CircuitBuilder::mul_unsigned(const Bus& a, const Bus& b, std::size_t bits) {
  Bus acc(bits, kFalse);
  std::size_t acc_width = 0;  // bits of acc that may be non-zero
  for (std::size_t j = 0; j < b.size() && j < bits; ++j) {
    if (b[j] == kFalse) continue;
    const std::size_t top = std::min(bits, std::max(acc_width, j + a.size()) + 1);
    Bus row(top - j, kFalse);
    for (std::size_t i = 0; i < a.size() && j + i < top; ++i) row[i] = and_(a[i], b[j]);
    const Bus sum = add(slice(acc, j, top), row);
    std::copy(sum.begin(), sum.end(), acc.begin() + static_cast<long>(j));
    acc_width = top;
  }
  return acc;
}

Bus CircuitBuilder::mul_signed_unsigned(const Bus& a, const Bus& b, std::size_t bits) {
  const Bus ax = sign_extend(a, bits);
  Bus acc(bits, kFalse);
  bool first = true;
  for (std::size_t j = 0; j < b.size() && j < bits; ++j) {
    if (b[j] == kFalse) continue;
    Bus row(bits - j);
    for (std::size_t i = 0; i + j < bits; ++i) row[i] = and_(ax[i], b[j]);
    if (first) {
      std::copy(row.begin(), row.end(), acc.begin() + static_cast<long>(j));
      first = false;
      continue;
    }
    const Bus sum = add(slice(acc, j, bits), row);
    std::copy(sum.begin(), sum.end(), acc.begin() + static_cast<long>(j));
  }
  return acc;
}

Bus CircuitBuilder::round_shift_even(const Bus& a, std::size_t k) {
  if (k == 0) return a;
  if (k >= a.size()) throw SpecError("shift wider than the bus");
  Bus q = sign_extend(slice(a, k, a.size()), a.size() - k + 1);
  const Wire half = a[k - 1];
  const Wire sticky = or_reduce(slice(a, 0, k - 1));
  const Wire inc = and_(half, or_(sticky, q[0]));
  return add(q, Bus{}, inc);
}

Bus CircuitBuilder::saturate(const Bus& a, std::size_t bits) {
  if (a.size() <= bits) return sign_extend(a, bits);
  const Wire sign = a.back();
  Bus diff;
  for (std::size_t i = bits - 1; i + 1 < a.size(); ++i) diff.push_back(xor_(a[i], sign));
  const Wire overflow = or_reduce(diff);
  Bus out(bits);
  const Wire nsign = not_(sign);
  for (std::size_t i = 0; i + 1 < bits; ++i) out[i] = mux(overflow, a[i], nsign);
  out[bits - 1] = sign;
  return out;
}

Bus CircuitBuilder::lookup(const Bus& index, const std::vector<uint64_t>& table, std::size_t bits) {
  if (index.size() >= 32 || table.size() != (std::size_t{1} << index.size()))
    throw SpecError("lookup table size must be 2^index bits");
  std::vector<Bus> level;
  level.reserve(table.size());
  for (uint64_t v : table) level.push_back(constant(v, bits));
  for (Wire s : index) {
    std::vector<Bus> next;
    next.reserve(level.size() / 2);
    for (std::size_t m = 0; m + 1 < level.size(); m += 2) next.push_back(mux_bus(s, level[m], level[m + 1]));
    level.swap(next);
  }
  return level.front();
}

namespace {

BoolCircuit binary_primitive(std::size_t bits, int which) {
  if (bits < 1) throw SpecError("bit width must be >= 1");
  CircuitBuilder cb;
  if (which == 2) {
    const Bus s = cb.input("s", 1, Party::Evaluator);
    const Bus a = cb.input("a", bits, Party::Evaluator);
    const Bus b = cb.input("b", bits, Party::Garbler);
    cb.output("out", cb.mux_bus(s[0], a, b));
    return cb.finish();
  }
  const Bus a = cb.input("a", bits, Party::Evaluator);
  const Bus b = cb.input("b", bits, Party::Garbler);
  switch (which) {
    case 0: cb.output("out", cb.add(a, b)); break;
    case 1: cb.output("out", cb.sub(a, b)); break;
    default: cb.output("out", Bus{cb.ge_signed(a, b)}); break;
  }
  return cb.finish();
}

}  // namespace

BoolCircuit build_add(std::size_t bits) { return binary_primitive(bits, 0); }
BoolCircuit build_sub(std::size_t bits) { return binary_primitive(bits, 1); }
BoolCircuit build_mux(std::size_t bits) { return binary_primitive(bits, 2); }
BoolCircuit build_ge(std::size_t bits) { return binary_primitive(bits, 3); }

BoolCircuit build_relu(std::size_t bits) {
  if (bits < 2) throw SpecError("relu needs at least 2 bits");
  CircuitBuilder cb;
  const Bus x = cb.input("x", bits, Party::Evaluator);
  const Wire keep = cb.not_(x.back());
  cb.output("out", cb.and_bit(x, keep), true);
  return cb.finish();
}

std::vector<Wire> input_wires(const BoolCircuit& c, Party party) {
  std::vector<Wire> out;
  for (const auto& g : c.inputs)
    if (g.party == party) out.insert(out.end(), g.wires.begin(), g.wires.end());
  return out;
}

std::vector<Wire> output_wires(const BoolCircuit& c) {
  std::vector<Wire> out;
  for (const auto& g : c.outputs) out.insert(out.end(), g.wires.begin(), g.wires.end());
  return out;
}

std::vector<uint64_t> eval_lanes(const BoolCircuit& c, const std::vector<uint64_t>& input_lanes) {
  std::vector<uint64_t> w(c.num_wires, 0);
  w[kTrue] = ~uint64_t{0};
  std::size_t k = 0;
  for (const auto& g : c.inputs)
    for (Wire x : g.wires) {
      if (k >= input_lanes.size()) throw SpecError("not enough input lanes");
      w[x] = input_lanes[k++];
    }
  for (const auto& g : c.gates) {
    switch (g.kind) {
      case GateKind::XOR: w[g.out] = w[g.a] ^ w[g.b]; break;
      case GateKind::AND: w[g.out] = w[g.a] & w[g.b]; break;
      case GateKind::INV: w[g.out] = ~w[g.a]; break;
    }
  }
  std::vector<uint64_t> out;
  for (const auto& g : c.outputs)
    for (Wire x : g.wires) out.push_back(w[x]);
  return out;
}

std::map<std::string, std::vector<uint64_t>> eval_plain_batch(
    const BoolCircuit& c, const std::map<std::string, std::vector<uint64_t>>& inputs) {
  std::size_t count = 0;
  for (const auto& g : c.inputs) {
    auto it = inputs.find(g.name);
    if (it == inputs.end()) throw SpecError("missing input group " + g.name);
    if (count != 0 && it->second.size() != count) throw SpecError("input groups have different instance counts");
    count = it->second.size();
  }
  std::map<std::string, std::vector<uint64_t>> out;
  for (const auto& g : c.outputs) out[g.name].assign(count, 0);
  for (std::size_t base = 0; base < count; base += 64) {
    const std::size_t lanes = std::min<std::size_t>(64, count - base);
    std::vector<uint64_t> in;
    for (const auto& g : c.inputs) {
      const auto& vals = inputs.at(g.name);
      for (std::size_t bit = 0; bit < g.wires.size(); ++bit) {
        uint64_t word = 0;
        for (std::size_t l = 0; l < lanes; ++l) word |= ((vals[base + l] >> bit) & 1) << l;
        in.push_back(word);
      }
    }
    const auto res = eval_lanes(c, in);
    std::size_t k = 0;
    for (const auto& g : c.outputs) {
      auto& dst = out[g.name];
      for (std::size_t bit = 0; bit < g.wires.size(); ++bit, ++k)
        for (std::size_t l = 0; l < lanes; ++l) dst[base + l] |= ((res[k] >> l) & 1) << bit;
      if (g.is_signed && !g.wires.empty() && g.wires.size() < 64)
        for (std::size_t l = 0; l < lanes; ++l)
          if ((dst[base + l] >> (g.wires.size() - 1)) & 1) dst[base + l] |= ~uint64_t{0} << g.wires.size();
    }
  }
  return out;
}

NamedValues eval_plain(const BoolCircuit& c, const NamedValues& inputs) {
  std::map<std::string, std::vector<uint64_t>> batch;
  for (const auto& [k, v] : inputs) batch[k] = {v};
  NamedValues out;
  for (const auto& [k, v] : eval_plain_batch(c, batch)) out[k] = v.front();
  return out;
}

}  // namespace gru2pc
