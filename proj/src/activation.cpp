#include "gru2pc/activation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "gru2pc/errors.hpp"

namespace gru2pc {

namespace {

uint64_t low_mask(int bits) { return bits >= 64 ? ~uint64_t{0} : (uint64_t{1} << bits) - 1; }

// Smallest two's-complement width holding [lo, hi].
int signed_width(int64_t lo, int64_t hi) {
  int n = 1;
  while (lo < -(int64_t{1} << (n - 1)) || hi > (int64_t{1} << (n - 1)) - 1) ++n;
  return n;
}

int unsigned_width(uint64_t hi) {
  int n = 1;
  while (n < 64 && (hi >> n) != 0) ++n;
  return n;
}

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

int log2_exact(int v) {
  int k = 0;
  while ((1 << k) < v) ++k;
  return k;
}

double real_fn(ActivationKind k, double x) { return k == ActivationKind::SIGMOID ? 1.0 / (1.0 + std::exp(-x)) : std::tanh(x); }

int64_t round_even(double v) { return static_cast<int64_t>(std::nearbyint(v)); }

int64_t saturate_word(int64_t v, int bits) {
  const int64_t hi = (int64_t{1} << (bits - 1)) - 1;
  return std::clamp(v, -hi - 1, hi);
}

Bus signed_const(int64_t v, int bits) { return CircuitBuilder::constant(static_cast<uint64_t>(v) & low_mask(bits), bits); }

struct Word {
  Bus bus;
  bool is_signed = true;
};

Word emit_table(CircuitBuilder& cb, const ActivationTable& t, const Bus& x) {
  const int dl1 = t.domain_log2 + 1;
  const int64_t lc = int64_t{1} << t.domain_log2;
  Bus xs = static_cast<int>(x.size()) > dl1 ? cb.saturate(x, dl1) : x;
  // xs + 2^domain_log2 only flips the sign bit.
  Bus idx = xs;
  idx.back() = cb.not_(idx.back());
  const int ow = signed_width(t.out_min, t.out_max);
  Bus out;
  if (t.exact_table) {
    std::vector<uint64_t> table;
    for (int64_t v : t.values) table.push_back(static_cast<uint64_t>(v) & low_mask(ow));
    out = cb.lookup(idx, table, ow);
  } else {
    const int seg_bits = log2_exact(t.segments);
    const Bus sel = CircuitBuilder::slice(idx, dl1 - seg_bits, dl1);
    const int64_t m_max = *std::max_element(t.slope.begin(), t.slope.end());
    const int mbits = unsigned_width(static_cast<uint64_t>(m_max));
    const int64_t c_lo = *std::min_element(t.intercept.begin(), t.intercept.end());
    const int64_t c_hi = *std::max_element(t.intercept.begin(), t.intercept.end());
    const int cw = signed_width(c_lo, c_hi);
    std::vector<uint64_t> mt, ct;
    for (int s = 0; s < t.segments; ++s) {
      mt.push_back(static_cast<uint64_t>(t.slope[s]));
      ct.push_back(static_cast<uint64_t>(t.intercept[s]) & low_mask(cw));
    }
    const Bus m = cb.lookup(sel, mt, mbits);
    const Bus c = cb.lookup(sel, ct, cw);

    // Exact ranges: within a segment the chord is monotone in x.
    const int64_t wc = (int64_t{2} << t.domain_log2) / t.segments;
    int64_t y_lo = INT64_MAX, y_hi = INT64_MIN, g_lo = INT64_MAX, g_hi = INT64_MIN;
    for (int s = 0; s < t.segments; ++s) {
      for (int64_t xe : {-lc + s * wc, -lc + (s + 1) * wc - 1}) {
        const int64_t y = t.slope[s] * xe + t.intercept[s];
        y_lo = std::min(y_lo, y);
        y_hi = std::max(y_hi, y);
        const int64_t g = round_shift_even(y, t.frac_bits);
        g_lo = std::min(g_lo, g);
        g_hi = std::max(g_hi, g);
      }
    }
    const int pw = signed_width(-m_max * lc, m_max * (lc - 1));
    const Bus prod = cb.mul_signed_unsigned(xs, m, pw);
    const int yw = std::max(signed_width(y_lo, y_hi), std::max(pw, cw));
    const Bus y = cb.add(CircuitBuilder::sign_extend(prod, yw), CircuitBuilder::sign_extend(c, yw));
    const int gw = signed_width(std::min(g_lo, t.out_min), std::max(g_hi, t.out_max + 1));
    Bus g = CircuitBuilder::sign_extend(
        CircuitBuilder::slice(cb.round_shift_even(y, t.frac_bits), 0, signed_width(g_lo, g_hi)), gw);
    if (g_lo < t.out_min) {
      const Wire below = cb.not_(cb.ge_signed(g, signed_const(t.out_min, gw)));
      g = cb.mux_bus(below, g, signed_const(t.out_min, gw));
    }
    if (g_hi > t.out_max) {
      const Wire above = cb.ge_signed(g, signed_const(t.out_max + 1, gw));
      g = cb.mux_bus(above, g, signed_const(t.out_max, gw));
    }
    out = CircuitBuilder::slice(g, 0, ow);
  }
  if (t.out_min >= 0) return {CircuitBuilder::slice(out, 0, unsigned_width(static_cast<uint64_t>(t.out_max))), false};
  return {out, true};
}

// x = (u - rt) mod p, minus h, as a P-bit two's-complement word in [-h, h].
// rt carries r - h, so the result is the centered value hidden under mask r.
Bus emit_unmask(CircuitBuilder& cb, const Bus& u, const Bus& rt, uint64_t p) {
  const int P = static_cast<int>(u.size());
  const uint64_t h = (p - 1) / 2;
  Wire borrow = kFalse;
  const Bus z = cb.sub(u, rt, &borrow);
  const uint64_t k0 = ((uint64_t{1} << P) - h) & low_mask(P), k1 = h + 1;
  Bus k(P);
  for (int i = 0; i < P; ++i) {
    const bool b0 = (k0 >> i) & 1, b1 = (k1 >> i) & 1;
    k[i] = b0 == b1 ? (b0 ? kTrue : kFalse) : (b1 ? borrow : cb.not_(borrow));
  }
  return cb.add(z, k);
}

// Requantize by `shift`, then saturate or sign-extend to a `bits`-wide word.
Bus emit_to_word(CircuitBuilder& cb, const Bus& x, int shift, int bits, uint64_t h) {
  const int64_t r = round_shift_even(static_cast<int64_t>(h), shift);
  const Bus q = CircuitBuilder::slice(cb.round_shift_even(x, static_cast<std::size_t>(shift)), 0, signed_width(-r, r));
  return static_cast<int>(q.size()) > bits ? cb.saturate(q, bits) : CircuitBuilder::sign_extend(q, bits);
}

int64_t to_word(int64_t x, int shift, int bits) { return saturate_word(round_shift_even(x, shift), bits); }

struct OutputRange {
  int64_t lo = 0, hi = 0;
};

OutputRange activation_range(const ActivationSpec& spec, const FixedPointConfig& cfg) {
  if (spec.kind == ActivationKind::RELU) return {0, (int64_t{1} << (spec.bits - 1)) - 1};
  const auto t = make_activation_table(spec.kind, spec.bits, cfg.activation_scale_log2, spec.segments);
  return {t.out_min, t.out_max};
}

}  // namespace

std::string to_string(ActivationKind k) {
  switch (k) {
    case ActivationKind::RELU: return "relu";
    case ActivationKind::SIGMOID: return "sigmoid";
    case ActivationKind::TANH: return "tanh";
  }
  return "?";
}

ActivationKind parse_activation_kind(const std::string& s) {
  std::string l;
  for (char c : s) l.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (l == "relu") return ActivationKind::RELU;
  if (l == "sigmoid") return ActivationKind::SIGMOID;
  if (l == "tanh") return ActivationKind::TANH;
  throw SpecError("unknown activation kind: " + s);
}

ActivationTable make_activation_table(ActivationKind kind, int bits, int scale_log2, int segments) {
  if (kind == ActivationKind::RELU) throw SpecError("relu has no table");
  if (bits < 2 || bits > 30 || scale_log2 < 0 || scale_log2 > bits - 2)
    throw SpecError("activation needs 2 <= bits <= 30 and 0 <= scale <= bits-2");
  ActivationTable t;
  t.kind = kind;
  t.bits = bits;
  t.scale_log2 = scale_log2;
  const int domain_int = kind == ActivationKind::SIGMOID ? 3 : 2;  // [-8,8) and [-4,4)
  t.domain_log2 = scale_log2 + std::min(domain_int, bits - 1 - scale_log2);
  const int codes = 2 << t.domain_log2;
  const double unit = std::ldexp(1.0, scale_log2);
  t.out_max = int64_t{1} << scale_log2;
  t.out_min = kind == ActivationKind::SIGMOID ? 0 : -t.out_max;
  const int64_t lc = int64_t{1} << t.domain_log2;
  if (segments == kExactTable) {
    t.exact_table = true;
    t.segments = codes;
    for (int i = 0; i < codes; ++i)
      t.values.push_back(std::clamp(round_even(real_fn(kind, static_cast<double>(i - lc) / unit) * unit), t.out_min, t.out_max));
    return t;
  }
  if (!is_pow2(segments) || segments > codes) throw SpecError("segments must be a power of two no larger than the domain");
  t.segments = segments;
  t.frac_bits = scale_log2 + 2;
  const double fscale = std::ldexp(1.0, t.frac_bits);
  const int64_t wc = codes / segments;
  for (int s = 0; s < segments; ++s) {
    const int64_t x0 = -lc + s * wc;
    const double f0 = real_fn(kind, static_cast<double>(x0) / unit);
    const double f1 = real_fn(kind, static_cast<double>(x0 + wc) / unit);
    const int64_t m = round_even((f1 - f0) / (static_cast<double>(wc) / unit) * fscale);
    t.slope.push_back(m);
    t.intercept.push_back(round_even(f0 * unit * fscale) - m * x0);
  }
  return t;
}

int64_t ActivationTable::eval(int64_t x) const {
  const int64_t lc = int64_t{1} << domain_log2;
  const int64_t xc = std::clamp(x, -lc, lc - 1);
  if (exact_table) return values[static_cast<std::size_t>(xc + lc)];
  const int64_t wc = (2 * lc) / segments;
  const auto s = static_cast<std::size_t>((xc + lc) / wc);
  return std::clamp(round_shift_even(slope[s] * xc + intercept[s], frac_bits), out_min, out_max);
}

double ActivationTable::error_bound() const {
  const double lsb = std::ldexp(1.0, -scale_log2);
  const double fpp = kind == ActivationKind::SIGMOID ? 1.0 / (6.0 * std::sqrt(3.0)) : 4.0 / (3.0 * std::sqrt(3.0));
  double bound = 0.5 * lsb;
  if (!exact_table) {
    const double w = std::ldexp(2.0, domain_log2 - scale_log2) / segments;  // segment width, real units
    const double flsb = std::ldexp(1.0, -frac_bits);
    bound += 0.5 * lsb * flsb + 0.5 * flsb * w + fpp * w * w / 8.0;
  }
  if (domain_log2 < bits - 1) {
    const double edge = static_cast<double>((int64_t{1} << domain_log2) - 1) * lsb;
    bound += 1.0 - real_fn(kind, edge);
  }
  return bound;
}

int64_t activation_reference(ActivationKind kind, int bits, int scale_log2, int segments, int64_t x) {
  if (kind == ActivationKind::RELU) return std::max<int64_t>(0, x);
  return make_activation_table(kind, bits, scale_log2, segments).eval(x);
}

BoolCircuit build_sigmoid(int bits, int scale_log2, int segments) {
  const auto t = make_activation_table(ActivationKind::SIGMOID, bits, scale_log2, segments);
  CircuitBuilder cb;
  const Bus x = cb.input("x", static_cast<std::size_t>(bits), Party::Evaluator);
  const Word y = emit_table(cb, t, x);
  cb.output("out", y.bus, y.is_signed);
  return cb.finish();
}

BoolCircuit build_tanh(int bits, int scale_log2, int segments) {
  const auto t = make_activation_table(ActivationKind::TANH, bits, scale_log2, segments);
  CircuitBuilder cb;
  const Bus x = cb.input("x", static_cast<std::size_t>(bits), Party::Evaluator);
  const Word y = emit_table(cb, t, x);
  cb.output("out", y.bus, y.is_signed);
  return cb.finish();
}

BlockShape block_shape(const ActivationSpec& spec, const FixedPointConfig& cfg) {
  cfg.validate();
  if (spec.bits != cfg.activation_bits) throw SpecError("block bit-width differs from the fixed-point config");
  if (spec.fused_product && spec.kind != ActivationKind::SIGMOID)
    throw SpecError("fused product is only defined for sigmoid gates");
  const int a = cfg.activation_scale_log2, b = spec.bits, P = cfg.plaintext_bits;
  const uint64_t h = (cfg.modulus_p - 1) / 2;
  BlockShape s;
  s.plaintext_bits = P;
  const int in_scale = spec.input_scale_log2 < 0 ? cfg.product_scale_log2() : spec.input_scale_log2;
  s.input_shift = in_scale - a;
  if (s.input_shift < 0) throw SpecError("input scale below the activation scale");

  OutputRange out = activation_range(spec, cfg);
  if (spec.fused_product) {
    const int op_scale = spec.operand_scale_log2 < 0 ? cfg.product_scale_log2() : spec.operand_scale_log2;
    const int out_scale = spec.output_scale_log2 < 0 ? a : spec.output_scale_log2;
    s.operand_shift = op_scale - a;
    if (s.operand_shift < 0 || out_scale < a) throw SpecError("operand/output scale below the activation scale");
    s.product_shift = 2 * a - out_scale;
    const int64_t r = round_shift_even(static_cast<int64_t>(h), s.operand_shift);
    const int64_t op_lo = std::max(-(int64_t{1} << (b - 1)), -r), op_hi = std::min((int64_t{1} << (b - 1)) - 1, r);
    const int64_t p_lo = out.hi * op_lo, p_hi = out.hi * op_hi;  // gate in [0, 2^a]
    if (s.product_shift >= 0)
      out = {round_shift_even(p_lo, s.product_shift), round_shift_even(p_hi, s.product_shift)};
    else
      out = {p_lo * (int64_t{1} << -s.product_shift), p_hi * (int64_t{1} << -s.product_shift)};
  }
  s.out_signed = out.lo < 0;
  s.out_bits = s.out_signed ? signed_width(out.lo, out.hi) : unsigned_width(static_cast<uint64_t>(out.hi));
  if (s.out_bits > P || (s.out_bits == P && (out.lo < -static_cast<int64_t>(h) || out.hi > static_cast<int64_t>(h))))
    throw SpecError("block output does not fit the plaintext field");
  if (!s.out_signed && s.out_bits >= P) throw SpecError("block output does not fit the plaintext field");
  s.compact_remask = 2 * s.out_bits - 1 < P;
  return s;
}

namespace {

// Offset that maps the output word into [0, p): a sign-bit flip, or +h for full-width words.
uint64_t output_offset(const BlockShape& s, uint64_t p) {
  if (!s.out_signed) return 0;
  return s.out_bits < s.plaintext_bits ? uint64_t{1} << (s.out_bits - 1) : (p - 1) / 2;
}

}  // namespace

BoolCircuit build_activation_block(const ActivationSpec& spec, const FixedPointConfig& cfg) {
  const BlockShape shape = block_shape(spec, cfg);
  const auto P = static_cast<std::size_t>(cfg.plaintext_bits);
  const uint64_t p = cfg.modulus_p, h = (p - 1) / 2;
  const int b = spec.bits, a = cfg.activation_scale_log2;
  const auto ow = static_cast<std::size_t>(shape.out_bits);

  CircuitBuilder cb;
  const Bus u = cb.input("masked_sum", P, Party::Evaluator);
  const Bus rt = cb.input("input_mask", P, Party::Garbler);
  Bus uo, ro;
  if (spec.fused_product) {
    uo = cb.input("masked_operand", P, Party::Evaluator);
    ro = cb.input("operand_mask", P, Party::Garbler);
  }
  const Bus s = cb.input("output_mask", P, Party::Garbler);
  Bus gap_low, gap_small;
  if (shape.compact_remask) {
    gap_low = cb.input("output_gap_low", ow, Party::Garbler);
    gap_small = cb.input("output_gap_small", 1, Party::Garbler);
  }

  const Bus xq = emit_to_word(cb, emit_unmask(cb, u, rt, p), shape.input_shift, b, h);
  Word y;
  if (spec.kind == ActivationKind::RELU) {
    y = {cb.and_bit(CircuitBuilder::slice(xq, 0, xq.size() - 1), cb.not_(xq.back())), false};
  } else {
    y = emit_table(cb, make_activation_table(spec.kind, b, a, spec.segments), xq);
  }

  if (spec.fused_product) {
    const Bus oq = emit_to_word(cb, emit_unmask(cb, uo, ro, p), shape.operand_shift, b, h);
    if (shape.product_shift >= 0) {
      const int64_t gmax = int64_t{1} << a;
      const int pw = signed_width(-gmax * (int64_t{1} << (b - 1)), gmax * ((int64_t{1} << (b - 1)) - 1));
      const Bus prod = cb.mul_signed_unsigned(oq, y.bus, static_cast<std::size_t>(pw));
      y.bus = CircuitBuilder::slice(cb.round_shift_even(prod, static_cast<std::size_t>(shape.product_shift)), 0, ow);
    } else {
      const auto lsh = static_cast<std::size_t>(-shape.product_shift);
      const Bus prod = cb.mul_signed_unsigned(oq, y.bus, ow - lsh);
      y.bus = CircuitBuilder::shift_left(prod, lsh);
    }
    y.is_signed = true;
  }

  // Output word y' = y + offset, unsigned, in [0, p).
  Bus yp = CircuitBuilder::zero_extend(y.bus, ow);
  if (shape.out_signed) {
    if (ow < P) yp.back() = cb.not_(yp.back());
    else yp = cb.add_const(yp, h);
  }

  Bus out;
  if (shape.compact_remask) {
    // Wrap iff y' >= p - s'; only possible when p - s' < 2^ow.
    const Wire wrap = cb.and_(gap_small[0], cb.ge_unsigned(yp, gap_low));
    const Bus t = cb.add(CircuitBuilder::zero_extend(yp, P), s);
    const Bus alt = cb.sub(yp, gap_low);
    const Wire keep = cb.not_(wrap);
    out.resize(P);
    for (std::size_t i = 0; i < P; ++i) out[i] = i < ow ? cb.mux(wrap, t[i], alt[i]) : cb.and_(keep, t[i]);
  } else {
    const Bus t0 = cb.add(CircuitBuilder::zero_extend(yp, P + 1), CircuitBuilder::zero_extend(s, P + 1));
    const Bus t1 = cb.add_const(t0, ((uint64_t{1} << (P + 1)) - p));
    const Wire ge = cb.not_(t1.back());
    out = cb.mux_bus(ge, CircuitBuilder::slice(t0, 0, P), CircuitBuilder::slice(t1, 0, P));
  }
  cb.output("masked_out", out);
  return cb.finish();
}

NamedValues block_garbler_inputs(const ActivationSpec& spec, const FixedPointConfig& cfg, const BlockMasks& masks) {
  const BlockShape shape = block_shape(spec, cfg);
  const uint64_t p = cfg.modulus_p, h = (p - 1) / 2;
  NamedValues v;
  v["input_mask"] = (masks.input_mask % p + p - h) % p;
  if (spec.fused_product) v["operand_mask"] = (masks.operand_mask % p + p - h) % p;
  const uint64_t sp = (masks.output_mask % p + p - output_offset(shape, p)) % p;
  v["output_mask"] = sp;
  if (shape.compact_remask) {
    const uint64_t gap = p - sp;
    v["output_gap_low"] = gap & low_mask(shape.out_bits);
    v["output_gap_small"] = gap < (uint64_t{1} << shape.out_bits) ? 1 : 0;
  }
  return v;
}

NamedValues block_evaluator_inputs(const ActivationSpec& spec, uint64_t masked_sum, uint64_t masked_operand) {
  NamedValues v{{"masked_sum", masked_sum}};
  if (spec.fused_product) v["masked_operand"] = masked_operand;
  return v;
}

uint64_t block_reference(const ActivationSpec& spec, const FixedPointConfig& cfg, uint64_t sum, uint64_t operand) {
  const BlockShape shape = block_shape(spec, cfg);
  const uint64_t p = cfg.modulus_p;
  const int b = spec.bits, a = cfg.activation_scale_log2;
  const int64_t xq = to_word(lift_signed(sum % p, p), shape.input_shift, b);
  int64_t y = activation_reference(spec.kind, b, a, spec.segments, xq);
  if (spec.fused_product) {
    const int64_t oq = to_word(lift_signed(operand % p, p), shape.operand_shift, b);
    const int64_t prod = y * oq;
    y = shape.product_shift >= 0 ? round_shift_even(prod, shape.product_shift) : prod * (int64_t{1} << -shape.product_shift);
  }
  return embed_signed(y, p);
}

}  // namespace gru2pc
