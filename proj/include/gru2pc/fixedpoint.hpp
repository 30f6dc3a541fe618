#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gru2pc {

/// Largest prime below 2^20 with p = 1 (mod 4096), so a ring of dimension 2048
/// can batch slots modulo p.
inline constexpr uint64_t kDefaultPlaintextModulus = 1032193;

/// Fixed-point encoding of reals into Z_p.
///
/// Weights live at scale 2^weight_scale_log2. Activations are quantized to
/// activation_bits two's-complement bits at scale 2^activation_scale_log2.
/// A product of a weight and an activation therefore sits at scale
/// 2^(weight_scale_log2 + activation_scale_log2) and is brought back down
/// inside the garbled activation blocks.
struct FixedPointConfig {
  int plaintext_bits = 20;
  uint64_t modulus_p = kDefaultPlaintextModulus;
  int weight_scale_log2 = 8;
  int activation_bits = 20;
  int activation_scale_log2 = 8;

  /// Default activation scale for a bit-width: b-2 for narrow activations,
  /// capped at 8 fractional bits.
  static int default_activation_scale(int activation_bits);
  static FixedPointConfig for_bits(int activation_bits);

  int product_scale_log2() const { return weight_scale_log2 + activation_scale_log2; }

  /// Throws ParamError if any invariant is violated.
  void validate() const;

  bool operator==(const FixedPointConfig&) const = default;
};

/// A vector of field elements together with the scale they encode.
struct QuantizedVector {
  std::vector<uint64_t> values;
  int scale_log2 = 0;
  bool is_signed = true;
};

bool is_prime_u64(uint64_t n);

/// Embeds a signed integer into [0, p).
uint64_t embed_signed(int64_t v, uint64_t p);
/// Centered lift of x in [0, p) to (-p/2, p/2].
int64_t lift_signed(uint64_t x, uint64_t p);

/// Round-to-nearest, ties-to-even division by 2^shift.
int64_t round_shift_even(int64_t v, int shift);

uint64_t quantize(double value, int scale_log2, const FixedPointConfig& cfg);
double dequantize(uint64_t x, int scale_log2, const FixedPointConfig& cfg);
/// Brings a value at scale 2*scale_log2 back to scale_log2.
uint64_t requantize(uint64_t x, int scale_log2, const FixedPointConfig& cfg);

QuantizedVector quantize_vector(std::span<const double> values, int scale_log2,
                                const FixedPointConfig& cfg);
std::vector<double> dequantize_vector(const QuantizedVector& v, const FixedPointConfig& cfg);

}  // namespace gru2pc
