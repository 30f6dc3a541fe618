#include "gru2pc/aes.hpp"

#include <cmath>
#include <numbers>

namespace gru2pc {

namespace {

template <int Rcon>
__m128i expand_step(__m128i key) {
  __m128i assist = _mm_aeskeygenassist_si128(key, Rcon);
  assist = _mm_shuffle_epi32(assist, 0xff);
  key = _mm_xor_si128(key, _mm_slli_si128(key, 4));
  key = _mm_xor_si128(key, _mm_slli_si128(key, 4));
  key = _mm_xor_si128(key, _mm_slli_si128(key, 4));
  return _mm_xor_si128(key, assist);
}

}  // namespace

Block gf_double(Block x) {
  const uint64_t lo = x.lo();
  const uint64_t hi = x.hi();
  const uint64_t carry = hi >> 63;
  return Block::from_u64((hi << 1) | (lo >> 63), (lo << 1) ^ (carry * 0x87));
}

Aes128::Aes128(Block key) {
  round_keys_[0] = key.v;
  round_keys_[1] = expand_step<0x01>(round_keys_[0]);
  round_keys_[2] = expand_step<0x02>(round_keys_[1]);
  round_keys_[3] = expand_step<0x04>(round_keys_[2]);
  round_keys_[4] = expand_step<0x08>(round_keys_[3]);
  round_keys_[5] = expand_step<0x10>(round_keys_[4]);
  round_keys_[6] = expand_step<0x20>(round_keys_[5]);
  round_keys_[7] = expand_step<0x40>(round_keys_[6]);
  round_keys_[8] = expand_step<0x80>(round_keys_[7]);
  round_keys_[9] = expand_step<0x1b>(round_keys_[8]);
  round_keys_[10] = expand_step<0x36>(round_keys_[9]);
}

Block Aes128::encrypt(Block in) const {
  __m128i s = _mm_xor_si128(in.v, round_keys_[0]);
  for (int r = 1; r < 10; ++r) s = _mm_aesenc_si128(s, round_keys_[r]);
  return Block(_mm_aesenclast_si128(s, round_keys_[10]));
}

void Aes128::encrypt_blocks(Block* blocks, std::size_t n) const {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m128i s0 = _mm_xor_si128(blocks[i].v, round_keys_[0]);
    __m128i s1 = _mm_xor_si128(blocks[i + 1].v, round_keys_[0]);
    __m128i s2 = _mm_xor_si128(blocks[i + 2].v, round_keys_[0]);
    __m128i s3 = _mm_xor_si128(blocks[i + 3].v, round_keys_[0]);
    for (int r = 1; r < 10; ++r) {
      s0 = _mm_aesenc_si128(s0, round_keys_[r]);
      s1 = _mm_aesenc_si128(s1, round_keys_[r]);
      s2 = _mm_aesenc_si128(s2, round_keys_[r]);
      s3 = _mm_aesenc_si128(s3, round_keys_[r]);
    }
    blocks[i].v = _mm_aesenclast_si128(s0, round_keys_[10]);
    blocks[i + 1].v = _mm_aesenclast_si128(s1, round_keys_[10]);
    blocks[i + 2].v = _mm_aesenclast_si128(s2, round_keys_[10]);
    blocks[i + 3].v = _mm_aesenclast_si128(s3, round_keys_[10]);
  }
  for (; i < n; ++i) blocks[i] = encrypt(blocks[i]);
}

// Public, fixed permutation key (digits of pi).
FixedKeyHash::FixedKeyHash() : pi_(Block::from_u64(0x243f6a8885a308d3ull, 0x13198a2e03707344ull)) {}

Block FixedKeyHash::hash(Block x, uint64_t tweak) const {
  const Block in = gf_double(x) ^ Block::from_u64(0, tweak);
  return pi_.encrypt(in) ^ in;
}

void FixedKeyHash::hash2(const Block in[2], const uint64_t tweak[2], Block out[2]) const {
  Block tmp[2];
  for (int i = 0; i < 2; ++i) tmp[i] = out[i] = gf_double(in[i]) ^ Block::from_u64(0, tweak[i]);
  pi_.encrypt_blocks(out, 2);
  for (int i = 0; i < 2; ++i) out[i] ^= tmp[i];
}

void FixedKeyHash::hash4(const Block in[4], const uint64_t tweak[4], Block out[4]) const {
  Block tmp[4];
  for (int i = 0; i < 4; ++i) tmp[i] = out[i] = gf_double(in[i]) ^ Block::from_u64(0, tweak[i]);
  pi_.encrypt_blocks(out, 4);
  for (int i = 0; i < 4; ++i) out[i] ^= tmp[i];
}

Prg::Prg(Block seed) : aes_(seed) {}

void Prg::refill() {
  for (auto& b : buffer_) b = Block::from_u64(0, counter_++);
  aes_.encrypt_blocks(buffer_.data(), buffer_.size());
  used_ = 0;
}

Block Prg::next_block() {
  if (used_ == buffer_.size()) refill();
  return buffer_[used_++];
}

uint64_t Prg::next_u64() { return next_block().lo(); }

bool Prg::next_bit() {
  if (bits_left_ == 0) {
    bit_pool_ = next_u64();
    bits_left_ = 64;
  }
  const bool bit = bit_pool_ & 1;
  bit_pool_ >>= 1;
  --bits_left_;
  return bit;
}

uint64_t Prg::uniform(uint64_t bound) {
  if (bound <= 1) return 0;
  const uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  for (;;) {
    const uint64_t x = next_u64();
    if (x < limit) return x % bound;
  }
}

double Prg::uniform_real() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Prg::gaussian(double stddev) {
  // Box-Muller; one output per call keeps the stream layout simple.
  double u1 = uniform_real();
  while (u1 <= 0.0) u1 = uniform_real();
  const double u2 = uniform_real();
  return stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void Prg::fill_bytes(std::span<uint8_t> out) {
  std::size_t i = 0;
  while (i < out.size()) {
    uint8_t tmp[16];
    next_block().store(tmp);
    const std::size_t n = std::min<std::size_t>(16, out.size() - i);
    std::memcpy(out.data() + i, tmp, n);
    i += n;
  }
}

}  // namespace gru2pc
