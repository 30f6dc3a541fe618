#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace gru2pc {

inline uint64_t add_mod(uint64_t a, uint64_t b, uint64_t q) {
  const uint64_t s = a + b;
  return s >= q ? s - q : s;
}
inline uint64_t sub_mod(uint64_t a, uint64_t b, uint64_t q) { return a >= b ? a - b : a + q - b; }
inline uint64_t neg_mod(uint64_t a, uint64_t q) { return a == 0 ? 0 : q - a; }
inline uint64_t mul_mod(uint64_t a, uint64_t b, uint64_t q) {
  return static_cast<uint64_t>(static_cast<unsigned __int128>(a) * b % q);
}
uint64_t pow_mod(uint64_t base, uint64_t exp, uint64_t q);
uint64_t inv_mod(uint64_t a, uint64_t q);

/// Companion word for multiplying by a fixed w modulo q < 2^63.
inline uint64_t shoup_precompute(uint64_t w, uint64_t q) {
  return static_cast<uint64_t>((static_cast<unsigned __int128>(w) << 64) / q);
}
inline uint64_t mul_shoup(uint64_t a, uint64_t w, uint64_t w_shoup, uint64_t q) {
  const auto hi = static_cast<uint64_t>((static_cast<unsigned __int128>(a) * w_shoup) >> 64);
  const uint64_t r = a * w - hi * q;
  return r >= q ? r - q : r;
}

/// A fixed polynomial operand stored with its Shoup companions.
struct ShoupPoly {
  std::vector<uint64_t> value;
  std::vector<uint64_t> shoup;

  ShoupPoly() = default;
  ShoupPoly(std::vector<uint64_t> v, uint64_t q);
};

/// Smallest primitive 2n-th root of unity modulo prime q (q = 1 mod 2n).
uint64_t primitive_root_2n(std::size_t n, uint64_t q);

/// Negacyclic number-theoretic transform over Z_q[X]/(X^n + 1).
///
/// forward() leaves evaluations in bit-reversed order: index i holds
/// a(psi^(2*bitrev(i)+1)).
class Ntt {
 public:
  Ntt(std::size_t n, uint64_t q);

  void forward(uint64_t* a) const;
  void inverse(uint64_t* a) const;

  std::size_t size() const { return n_; }
  uint64_t modulus() const { return q_; }
  /// Position in forward() output holding the evaluation at psi^exponent (exponent odd).
  std::size_t position_of_exponent(uint64_t exponent) const;

 private:
  std::size_t n_;
  int log_n_;
  uint64_t q_;
  std::vector<uint64_t> roots_, roots_shoup_;          // psi^bitrev(i)
  std::vector<uint64_t> inv_roots_, inv_roots_shoup_;  // psi^-bitrev(i), GS order
  uint64_t n_inv_, n_inv_shoup_;
};

std::size_t bit_reverse(std::size_t x, int bits);

}  // namespace gru2pc
