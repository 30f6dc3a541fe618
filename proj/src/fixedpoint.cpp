#include "gru2pc/fixedpoint.hpp"

#include <cmath>
#include <string>

#include "gru2pc/errors.hpp"

namespace gru2pc {

namespace {

uint64_t mulmod(uint64_t a, uint64_t b, uint64_t m) {
  return static_cast<uint64_t>(static_cast<unsigned __int128>(a) * b % m);
}

uint64_t powmod(uint64_t base, uint64_t exp, uint64_t m) {
  uint64_t result = 1 % m;
  base %= m;
  while (exp) {
    if (exp & 1) result = mulmod(result, base, m);
    base = mulmod(base, base, m);
    exp >>= 1;
  }
  return result;
}

}  // namespace

bool is_prime_u64(uint64_t n) {
  if (n < 2) return false;
  for (uint64_t small : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
    if (n % small == 0) return n == small;
  }
  uint64_t d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  // Deterministic for all 64-bit inputs.
  for (uint64_t a : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
    uint64_t x = powmod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int r = 1; r < s; ++r) {
      x = mulmod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

int FixedPointConfig::default_activation_scale(int activation_bits) {
  return activation_bits - 2 < 8 ? activation_bits - 2 : 8;
}

FixedPointConfig FixedPointConfig::for_bits(int activation_bits) {
  FixedPointConfig cfg;
  cfg.activation_bits = activation_bits;
  cfg.activation_scale_log2 = default_activation_scale(activation_bits);
  return cfg;
}

void FixedPointConfig::validate() const {
  if (plaintext_bits < 2 || plaintext_bits > 62)
    throw ParamError("plaintext_bits out of range: " + std::to_string(plaintext_bits));
  if (modulus_p >= (uint64_t{1} << plaintext_bits) || !is_prime_u64(modulus_p))
    throw ParamError("modulus_p must be a prime below 2^plaintext_bits");
  if (activation_bits < 2 || activation_bits > plaintext_bits)
    throw ParamError("activation_bits must lie in [2, plaintext_bits]");
  if (activation_scale_log2 < 0 || activation_scale_log2 > activation_bits - 2)
    throw ParamError("activation scale leaves no integer bit");
  if (weight_scale_log2 < 0 || product_scale_log2() >= plaintext_bits - 1)
    throw ParamError("product scale does not fit the plaintext field");
}

uint64_t embed_signed(int64_t v, uint64_t p) {
  int64_t r = v % static_cast<int64_t>(p);
  if (r < 0) r += static_cast<int64_t>(p);
  return static_cast<uint64_t>(r);
}

int64_t lift_signed(uint64_t x, uint64_t p) {
  return x > p / 2 ? static_cast<int64_t>(x) - static_cast<int64_t>(p) : static_cast<int64_t>(x);
}

int64_t round_shift_even(int64_t v, int shift) {
  if (shift <= 0) return v * (int64_t{1} << -shift);
  const int64_t floor_q = v >> shift;  // arithmetic shift is floor division
  const int64_t rem = v - (floor_q << shift);
  const int64_t half = int64_t{1} << (shift - 1);
  if (rem > half || (rem == half && (floor_q & 1))) return floor_q + 1;
  return floor_q;
}

uint64_t quantize(double value, int scale_log2, const FixedPointConfig& cfg) {
  const double limit = std::ldexp(1.0, cfg.plaintext_bits - scale_log2 - 1);
  if (!(std::fabs(value) < limit))
    throw RangeError("value " + std::to_string(value) + " outside +-" + std::to_string(limit));
  // nearbyint honours the default rounding mode: nearest, ties to even.
  const auto code = static_cast<int64_t>(std::nearbyint(std::ldexp(value, scale_log2)));
  return embed_signed(code, cfg.modulus_p);
}

double dequantize(uint64_t x, int scale_log2, const FixedPointConfig& cfg) {
  return std::ldexp(static_cast<double>(lift_signed(x, cfg.modulus_p)), -scale_log2);
}

uint64_t requantize(uint64_t x, int scale_log2, const FixedPointConfig& cfg) {
  return embed_signed(round_shift_even(lift_signed(x, cfg.modulus_p), scale_log2), cfg.modulus_p);
}

QuantizedVector quantize_vector(std::span<const double> values, int scale_log2,
                                const FixedPointConfig& cfg) {
  QuantizedVector out;
  out.scale_log2 = scale_log2;
  out.values.reserve(values.size());
  for (double v : values) out.values.push_back(quantize(v, scale_log2, cfg));
  return out;
}

std::vector<double> dequantize_vector(const QuantizedVector& v, const FixedPointConfig& cfg) {
  std::vector<double> out;
  out.reserve(v.values.size());
  for (uint64_t x : v.values) out.push_back(dequantize(x, v.scale_log2, cfg));
  return out;
}

}  // namespace gru2pc
