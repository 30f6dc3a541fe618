#pragma once

#include <immintrin.h>
#include <wmmintrin.h>

#include <array>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>

namespace gru2pc {

/// 128-bit opaque token used for wire labels, keys and PRG output.
struct Block {
  __m128i v;

  Block() : v(_mm_setzero_si128()) {}
  explicit Block(__m128i x) : v(x) {}
  static Block from_u64(uint64_t hi, uint64_t lo) {
    return Block(_mm_set_epi64x(static_cast<int64_t>(hi), static_cast<int64_t>(lo)));
  }

  uint64_t lo() const { return static_cast<uint64_t>(_mm_cvtsi128_si64(v)); }
  uint64_t hi() const { return static_cast<uint64_t>(_mm_extract_epi64(v, 1)); }
  bool lsb() const { return lo() & 1; }

  Block operator^(const Block& o) const { return Block(_mm_xor_si128(v, o.v)); }
  Block& operator^=(const Block& o) {
    v = _mm_xor_si128(v, o.v);
    return *this;
  }
  Block operator&(const Block& o) const { return Block(_mm_and_si128(v, o.v)); }
  bool operator==(const Block& o) const {
    const __m128i x = _mm_xor_si128(v, o.v);
    return _mm_testz_si128(x, x);
  }

  void store(uint8_t* out) const { _mm_storeu_si128(reinterpret_cast<__m128i*>(out), v); }
  static Block load(const uint8_t* in) {
    return Block(_mm_loadu_si128(reinterpret_cast<const __m128i*>(in)));
  }
};

inline Block zero_block() { return Block(); }
inline Block all_ones_block() { return Block(_mm_set1_epi32(-1)); }
inline Block select_block(bool bit) { return bit ? all_ones_block() : zero_block(); }

/// Multiplication by x in GF(2^128); a linear orthomorphism for the hash below.
Block gf_double(Block x);

/// AES-128 with an expanded key schedule, AES-NI backed.
class Aes128 {
 public:
  explicit Aes128(Block key);
  Block encrypt(Block in) const;
  void encrypt_blocks(Block* blocks, std::size_t n) const;

 private:
  __m128i round_keys_[11];
};

/// Tweakable correlation-robust hash H(x, t) = pi(2x ^ t) ^ 2x ^ t over a fixed-key
/// AES permutation pi.
class FixedKeyHash {
 public:
  FixedKeyHash();
  Block hash(Block x, uint64_t tweak) const;
  void hash2(const Block in[2], const uint64_t tweak[2], Block out[2]) const;
  void hash4(const Block in[4], const uint64_t tweak[4], Block out[4]) const;

 private:
  Aes128 pi_;
};

/// Deterministic AES-CTR pseudorandom generator.
class Prg {
 public:
  explicit Prg(Block seed);
  explicit Prg(uint64_t seed) : Prg(Block::from_u64(0x6772753270630000ull, seed)) {}

  Block next_block();
  uint64_t next_u64();
  bool next_bit();
  /// Uniform in [0, bound) by rejection sampling.
  uint64_t uniform(uint64_t bound);
  double uniform_real();  // in [0, 1)
  double gaussian(double stddev);
  void fill_bytes(std::span<uint8_t> out);

 private:
  void refill();

  Aes128 aes_;
  uint64_t counter_ = 0;
  std::array<Block, 8> buffer_;
  std::size_t used_ = 8;
  uint64_t bit_pool_ = 0;
  int bits_left_ = 0;
};

}  // namespace gru2pc
