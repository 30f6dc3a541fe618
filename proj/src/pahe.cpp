#include "gru2pc/pahe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "gru2pc/errors.hpp"

namespace gru2pc {

namespace {

constexpr double kBoundSigmas = 8.0;

double log2_std_from_var(double var) { return 0.5 * std::log2(std::max(var, 1.0)); }
double var_from_log2_std(double l) { return std::exp2(2.0 * l); }

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
uint32_t get_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
  return v;
}
uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::size_t next_pow2(std::size_t x) { return x <= 1 ? 1 : std::bit_ceil(x); }

void PaheParams::validate() const {
  const std::size_t n = ring_dimension;
  if (n < 16 || !std::has_single_bit(n)) throw ParamError("ring dimension must be a power of two >= 16");
  if (!is_prime_u64(plaintext_modulus) || plaintext_modulus % (2 * n) != 1)
    throw ParamError("plaintext modulus must be a prime = 1 mod 2N");
  if (ciphertext_modulus_bits < 30 || ciphertext_modulus_bits > 62)
    throw ParamError("ciphertext modulus bits out of range");
  if (ciphertext_modulus >> ciphertext_modulus_bits != 0 || !is_prime_u64(ciphertext_modulus))
    throw ParamError("ciphertext modulus must be a prime below 2^bits");
  if (ciphertext_modulus % (2 * n) != 1) throw ParamError("ciphertext modulus must be = 1 mod 2N");
  if (ciphertext_modulus % plaintext_modulus != 1) throw ParamError("ciphertext modulus must be = 1 mod p");
  if (!(error_stddev > 0.0)) throw ParamError("error stddev must be positive");
  if (decomposition_bits < 1 || decomposition_bits > 30) throw ParamError("decomposition bits out of range");
}

uint32_t PaheParams::id() const {
  uint32_t h = 2166136261u;
  auto mix = [&](uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= static_cast<uint8_t>(v >> (8 * i));
      h *= 16777619u;
    }
  };
  mix(ring_dimension);
  mix(plaintext_modulus);
  mix(ciphertext_modulus);
  mix(static_cast<uint64_t>(std::llround(error_stddev * 1000.0)));
  mix(static_cast<uint64_t>(decomposition_bits));
  return h;
}

uint64_t find_ciphertext_modulus(std::size_t n, uint64_t p, int bits) {
  if (bits < 2 || bits > 62) throw ParamError("modulus bits out of range");
  const unsigned __int128 step = static_cast<unsigned __int128>(2 * n) * p;
  const unsigned __int128 top = (static_cast<unsigned __int128>(1) << bits) - 1;
  for (unsigned __int128 k = (top - 1) / step; k > 0; --k) {
    const auto cand = static_cast<uint64_t>(k * step + 1);
    if (is_prime_u64(cand)) return cand;
  }
  throw ParamError("no ciphertext modulus found");
}

std::vector<uint64_t> replicate_slots(std::span<const uint64_t> values, std::size_t period,
                                      std::size_t slot_count) {
  const std::size_t row = slot_count / 2;
  if (period == 0 || !std::has_single_bit(period) || period > row)
    throw DimensionError("replication period must be a power of two <= row size");
  if (values.size() > period) throw DimensionError("vector longer than replication period");
  std::vector<uint64_t> out(slot_count, 0);
  for (std::size_t i = 0; i < row; ++i) {
    const std::size_t j = i % period;
    if (j < values.size()) out[i] = values[j];
  }
  return out;
}

Pahe::Pahe(PaheParams params) : params_(params) { params_.validate(); }

double Pahe::var_rotation() const {
  const double n = static_cast<double>(params_.ring_dimension);
  const double digit = std::exp2(2.0 * params_.decomposition_bits) / 3.0;
  return params_.decomposition_count() * n * digit * params_.error_stddev * params_.error_stddev;
}

double Pahe::var_plain_product(double var_in) const {
  const double n = static_cast<double>(params_.ring_dimension);
  const double p = static_cast<double>(params_.plaintext_modulus);
  return var_in * n * p * p / 12.0 + n * p * p / 144.0;
}

double Pahe::noise_budget(const Ciphertext& ct) const {
  if (is_debug()) return std::numeric_limits<double>::infinity();
  const double half_delta = std::log2(static_cast<double>(params_.delta()) / 2.0);
  return half_delta - std::log2(kBoundSigmas) - ct.noise_log2_std;
}

double Pahe::fresh_budget() const {
  if (is_debug()) return std::numeric_limits<double>::infinity();
  Ciphertext probe;
  probe.noise_log2_std = std::log2(params_.error_stddev);
  return noise_budget(probe);
}

Ciphertext Pahe::encrypt_replicated(std::span<const uint64_t> values, std::size_t period, int scale_log2,
                                    Prg& rng) const {
  QuantizedVector v{replicate_slots(values, period, params_.slot_count()), scale_log2, true};
  Ciphertext ct = encrypt(v, rng);
  ct.period = period;
  ct.extent = params_.row_size();
  return ct;
}

namespace {
void check_same_params(const Ciphertext& a, uint32_t id) {
  if (a.params_id != id) throw ParamError("ciphertext belongs to a different parameter set");
}
}  // namespace

Ciphertext Pahe::add_cc(const Ciphertext& a, const Ciphertext& b) const {
  check_same_params(a, params_.id());
  check_same_params(b, params_.id());
  if (a.scale_log2 != b.scale_log2) throw ScaleMismatch("add_cc operands at different scales");
  Ciphertext out = a;
  add_raw(out, b);
  out.period = a.period == b.period ? a.period : 0;
  out.extent = std::max(a.extent, b.extent);
  // Operands may share noise (x + x), so standard deviations add rather than variances.
  if (!is_debug()) out.noise_log2_std = std::log2(std::exp2(a.noise_log2_std) + std::exp2(b.noise_log2_std) + 1.0);
  ++counters_.add_cc;
  return out;
}

Ciphertext Pahe::add_cp(const Ciphertext& a, const QuantizedVector& b) const {
  check_same_params(a, params_.id());
  if (a.scale_log2 != b.scale_log2) throw ScaleMismatch("add_cp operands at different scales");
  const std::size_t n = params_.slot_count();
  if (b.values.size() > n) throw DimensionError("plaintext longer than slot count");
  std::vector<uint64_t> slots(n, 0);
  for (std::size_t i = 0; i < b.values.size(); ++i) {
    if (b.values[i] >= params_.plaintext_modulus) throw RangeError("plaintext value not reduced mod p");
    slots[i] = b.values[i];
  }
  Ciphertext out = a;
  add_plain_raw(out, slots);
  std::size_t b_extent = n;
  while (b_extent > 0 && slots[b_extent - 1] == 0) --b_extent;
  out.extent = std::max(a.extent, b_extent);
  if (a.period != 0) {
    const std::size_t row = params_.row_size();
    bool keeps = true;
    for (std::size_t i = 0; i < n && keeps; ++i)
      keeps = i < row ? slots[i] == slots[i % a.period] : slots[i] == 0;
    if (!keeps) out.period = 0;
  }
  if (!is_debug()) out.noise_log2_std = log2_std_from_var(var_from_log2_std(a.noise_log2_std) + 1.0);
  ++counters_.add_cp;
  return out;
}

Ciphertext Pahe::negate(const Ciphertext& a) const {
  check_same_params(a, params_.id());
  Ciphertext out = a;
  negate_raw(out);
  ++counters_.negate;
  return out;
}

std::vector<long> Pahe::rotation_plan(long steps) const {
  const long row = static_cast<long>(params_.row_size());
  long s = steps % row;
  if (s < 0) s += row;
  std::vector<long> plan;
  if (s == 0) return plan;
  const long r = row - s;
  if (std::popcount(static_cast<unsigned long>(s)) <= std::popcount(static_cast<unsigned long>(r))) {
    for (long b = 1; b < row; b <<= 1)
      if (s & b) plan.push_back(b);
  } else {
    for (long b = 1; b < row; b <<= 1)
      if (r & b) plan.push_back(-b);
  }
  return plan;
}

void Pahe::rotate_steps(Ciphertext& a, long steps) const {
  const auto plan = rotation_plan(steps);
  for (long st : plan) {
    rotate_raw(a, st);
    ++counters_.rotations;
  }
  if (!is_debug() && !plan.empty())
    a.noise_log2_std = log2_std_from_var(var_from_log2_std(a.noise_log2_std) +
                                         static_cast<double>(plan.size()) * var_rotation());
  if (!plan.empty()) a.extent = params_.slot_count();
  const long row = static_cast<long>(params_.row_size());
  if (a.period != 0 && ((steps % row) + row) % static_cast<long>(a.period) != 0) a.period = 0;
}

Ciphertext Pahe::rotate(const Ciphertext& a, long steps) const {
  check_same_params(a, params_.id());
  Ciphertext out = a;
  rotate_steps(out, steps);
  return out;
}

PlainMatrix Pahe::encode_matrix(std::span<const uint64_t> w, std::size_t rows, std::size_t cols,
                                int scale_log2) const {
  const std::size_t row = params_.row_size();
  if (rows == 0 || cols == 0 || rows > row || cols > row)
    throw DimensionError("matrix dimensions exceed the slot row");
  if (w.size() != rows * cols) throw DimensionError("matrix data size does not match rows x cols");
  for (uint64_t v : w)
    if (v >= params_.plaintext_modulus) throw RangeError("matrix entry not reduced mod p");
  PlainMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.period = next_pow2(cols);
  m.scale_log2 = scale_log2;

  // Entry (i, j) reaches output slot i through the diagonal with offset l = j - i: it is
  // multiplied into slot i + l of x and the product is rotated left by l afterwards.
  auto build = [&](DiagonalSet& set, std::size_t count, auto offset_of) {
    std::vector<std::vector<uint64_t>> diags(count, std::vector<uint64_t>(params_.slot_count(), 0));
    set.nonzero.assign(count, false);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) {
        const uint64_t v = w[i * cols + j];
        if (v == 0) continue;
        const auto [k, slot] = offset_of(i, j);
        diags[k][slot % row] = v;
        set.nonzero[k] = true;
      }
    encode_diagonals(set, diags);
  };
  const std::size_t c = m.period;
  build(m.replicated, c, [&](std::size_t i, std::size_t j) {
    const std::size_t l = (j + c - i % c) % c;
    return std::pair<std::size_t, std::size_t>{l, i + l};
  });
  if (rows + cols - 1 <= row) {
    m.compact.final_rotation = -static_cast<long>(rows - 1);
    build(m.compact, rows + cols - 1, [&](std::size_t i, std::size_t j) {
      return std::pair<std::size_t, std::size_t>{j + rows - 1 - i, j};
    });
  }
  return m;
}

void Pahe::replicate_in_place(Ciphertext& x, std::size_t period) const {
  double var = is_debug() ? 0.0 : var_from_log2_std(x.noise_log2_std);
  const std::size_t row = params_.row_size();
  for (std::size_t d = period; d < row; d *= 2) {
    Ciphertext r = x;
    rotate_raw(r, -static_cast<long>(d));
    ++counters_.rotations;
    add_raw(x, r);
    var = 2.0 * var + var_rotation();
  }
  if (!is_debug()) x.noise_log2_std = log2_std_from_var(var);
  x.period = period;
  x.extent = params_.slot_count();
}

Ciphertext Pahe::mult_pc(const PlainMatrix& w, const Ciphertext& x, const QuantizedVector& bias) const {
  check_same_params(x, params_.id());
  if (w.period == 0) throw DimensionError("matrix not encoded");
  const int out_scale = x.scale_log2 + w.scale_log2;
  if (!bias.values.empty() && bias.scale_log2 != out_scale)
    throw ScaleMismatch("bias scale must equal input scale + weight scale");
  if (bias.values.size() > w.rows) throw DimensionError("bias longer than matrix rows");
  Ciphertext acc = x;
  const DiagonalSet* set = &w.replicated;
  if (acc.period != w.period) {
    if (acc.extent > w.cols) {
      // Unknown slots past cols: clear them with a plaintext mask first.
      std::vector<uint64_t> mask(params_.slot_count(), 0);
      std::fill(mask.begin(), mask.begin() + static_cast<long>(w.cols), 1);
      mul_plain_raw(acc, mask);
      if (!is_debug()) acc.noise_log2_std = log2_std_from_var(var_plain_product(var_from_log2_std(acc.noise_log2_std)));
      acc.extent = w.cols;
    }
    if (w.compact.available()) {
      set = &w.compact;
    } else {
      replicate_in_place(acc, w.period);
    }
  }
  const double var_in = var_from_log2_std(acc.noise_log2_std);
  matvec_raw(*set, acc);
  if (!is_debug()) {
    std::size_t used = 0;
    for (bool nz : set->nonzero) used += nz ? 1 : 0;
    const double var = static_cast<double>(used) * var_plain_product(var_in) +
                       static_cast<double>(set->nonzero.size() - 1) * var_rotation();
    acc.noise_log2_std = log2_std_from_var(var);
  }
  acc.period = 0;
  rotate_steps(acc, set->final_rotation);
  acc.extent = params_.slot_count();
  acc.scale_log2 = out_scale;
  if (!bias.values.empty()) {
    std::vector<uint64_t> slots(params_.slot_count(), 0);
    for (std::size_t i = 0; i < bias.values.size(); ++i) {
      if (bias.values[i] >= params_.plaintext_modulus) throw RangeError("bias value not reduced mod p");
      slots[i] = bias.values[i];
    }
    add_plain_raw(acc, slots);
  }
  ++counters_.mult_pc;
  return acc;
}

Ciphertext Pahe::mult_pc(std::span<const uint64_t> w, std::size_t rows, std::size_t cols, const Ciphertext& x,
                         const QuantizedVector& bias, int w_scale_log2) const {
  return mult_pc(encode_matrix(w, rows, cols, w_scale_log2), x, bias);
}

std::array<Ciphertext, 3> Pahe::mult_pc_thirds(const PlainMatrix& w, const Ciphertext& x,
                                               const QuantizedVector& bias) const {
  if (w.rows % 3 != 0) throw DimensionError("mult_pc_thirds needs a row count divisible by 3");
  const long n = static_cast<long>(w.rows / 3);
  Ciphertext y = mult_pc(w, x, bias);
  std::array<Ciphertext, 3> out{y, y, y};
  rotate_steps(out[1], n);
  rotate_steps(out[2], 2 * n);
  return out;
}

std::vector<uint8_t> Pahe::serialize(const Ciphertext& ct) const {
  check_same_params(ct, params_.id());
  const std::size_t n = params_.ring_dimension;
  if (ct.c0.size() != n || ct.c1.size() != n) throw DimensionError("ciphertext has wrong length");
  std::vector<uint8_t> out;
  out.reserve(ciphertext_bytes());
  put_u32(out, ct.params_id);
  for (uint64_t v : ct.c0) put_u64(out, v);
  for (uint64_t v : ct.c1) put_u64(out, v);
  return out;
}

Ciphertext Pahe::deserialize(std::span<const uint8_t> bytes, int scale_log2, std::size_t period,
                             std::size_t extent) const {
  if (bytes.size() != ciphertext_bytes()) throw DecodeError("ciphertext blob has wrong size");
  const std::size_t n = params_.ring_dimension;
  Ciphertext ct;
  ct.params_id = get_u32(bytes.data());
  if (ct.params_id != params_.id()) throw ParamError("ciphertext parameter id mismatch");
  const uint64_t bound = is_debug() ? params_.plaintext_modulus : params_.ciphertext_modulus;
  ct.c0.resize(n);
  ct.c1.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ct.c0[i] = get_u64(bytes.data() + 4 + 8 * i);
    ct.c1[i] = get_u64(bytes.data() + 4 + 8 * (n + i));
    if (ct.c0[i] >= bound || ct.c1[i] >= bound) throw DecodeError("ciphertext coefficient out of range");
  }
  ct.scale_log2 = scale_log2;
  ct.period = period;
  ct.extent = std::min(extent, n);
  // The receiver cannot see the sender's history; assume a fresh encryption.
  ct.noise_log2_std = is_debug() ? -std::numeric_limits<double>::infinity() : std::log2(params_.error_stddev);
  return ct;
}

namespace {

/// Clear-slot backend. c0 holds slot values mod p, c1 stays zero.
class DebugPahe final : public Pahe {
 public:
  explicit DebugPahe(const PaheParams& params) : Pahe(params) {}

  bool is_debug() const override { return true; }
  bool has_secret_key() const override { return true; }

  Ciphertext encrypt(const QuantizedVector& m, Prg&) const override {
    const std::size_t n = params_.slot_count();
    if (m.values.size() > n) throw DimensionError("plaintext longer than slot count");
    Ciphertext ct;
    ct.c0.assign(n, 0);
    ct.c1.assign(n, 0);
    for (std::size_t i = 0; i < m.values.size(); ++i) {
      if (m.values[i] >= params_.plaintext_modulus) throw RangeError("plaintext value not reduced mod p");
      ct.c0[i] = m.values[i];
    }
    ct.params_id = params_.id();
    ct.scale_log2 = m.scale_log2;
    ct.extent = m.values.size();
    ct.noise_log2_std = -std::numeric_limits<double>::infinity();
    ++counters_.encryptions;
    return ct;
  }
  Ciphertext encrypt_public(const QuantizedVector& m, Prg& rng) const override { return encrypt(m, rng); }

  QuantizedVector decrypt(const Ciphertext& ct) const override {
    check_same_params(ct, params_.id());
    ++counters_.decryptions;
    return QuantizedVector{ct.c0, ct.scale_log2, true};
  }

 protected:
  uint64_t p() const { return params_.plaintext_modulus; }

  void add_raw(Ciphertext& a, const Ciphertext& b) const override {
    for (std::size_t i = 0; i < a.c0.size(); ++i) a.c0[i] = add_mod(a.c0[i], b.c0[i], p());
  }
  void add_plain_raw(Ciphertext& a, std::span<const uint64_t> slots) const override {
    for (std::size_t i = 0; i < a.c0.size(); ++i) a.c0[i] = add_mod(a.c0[i], slots[i], p());
  }
  void negate_raw(Ciphertext& a) const override {
    for (auto& v : a.c0) v = neg_mod(v, p());
  }
  void mul_plain_raw(Ciphertext& a, std::span<const uint64_t> slots) const override {
    for (std::size_t i = 0; i < a.c0.size(); ++i) a.c0[i] = mul_mod(a.c0[i], slots[i], p());
  }
  void rotate_raw(Ciphertext& a, long steps) const override { rotate_slots(a.c0, steps); }
  void rotate_slots(std::vector<uint64_t>& v, long steps) const {
    const long row = static_cast<long>(params_.row_size());
    long s = steps % row;
    if (s < 0) s += row;
    std::vector<uint64_t> out(v.size());
    for (long r = 0; r < 2; ++r)
      for (long j = 0; j < row; ++j) out[r * row + j] = v[r * row + (j + s) % row];
    v.swap(out);
  }
  void encode_diagonals(DiagonalSet& set, const std::vector<std::vector<uint64_t>>& diags) const override {
    set.slot = diags;
  }
  void matvec_raw(const DiagonalSet& set, Ciphertext& x) const override {
    const std::size_t n = params_.slot_count();
    std::vector<uint64_t> acc(n, 0);
    for (std::size_t l = set.nonzero.size(); l-- > 0;) {
      if (l + 1 < set.nonzero.size()) rotate_slots(acc, 1);
      if (!set.nonzero[l]) continue;
      const auto& d = set.slot[l];
      for (std::size_t i = 0; i < n; ++i) acc[i] = add_mod(acc[i], mul_mod(d[i], x.c0[i], p()), p());
    }
    x.c0.swap(acc);
  }
};

}  // namespace

std::unique_ptr<Pahe> make_debug_pahe(const PaheParams& params) { return std::make_unique<DebugPahe>(params); }

}  // namespace gru2pc
