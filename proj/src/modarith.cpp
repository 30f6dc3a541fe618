#include "gru2pc/modarith.hpp"

#include <stdexcept>

#include "gru2pc/errors.hpp"

namespace gru2pc {

uint64_t pow_mod(uint64_t base, uint64_t exp, uint64_t q) {
  uint64_t result = 1 % q;
  base %= q;
  while (exp) {
    if (exp & 1) result = mul_mod(result, base, q);
    base = mul_mod(base, base, q);
    exp >>= 1;
  }
  return result;
}

uint64_t inv_mod(uint64_t a, uint64_t q) { return pow_mod(a, q - 2, q); }

ShoupPoly::ShoupPoly(std::vector<uint64_t> v, uint64_t q) : value(std::move(v)), shoup(value.size()) {
  for (std::size_t i = 0; i < value.size(); ++i) shoup[i] = shoup_precompute(value[i], q);
}

std::size_t bit_reverse(std::size_t x, int bits) {
  std::size_t r = 0;
  for (int i = 0; i < bits; ++i) {
    r = (r << 1) | (x & 1);
    x >>= 1;
  }
  return r;
}

uint64_t primitive_root_2n(std::size_t n, uint64_t q) {
  const uint64_t order = 2 * n;
  if ((q - 1) % order != 0) throw ParamError("modulus is not 1 mod 2n");
  for (uint64_t g = 2; g < q; ++g) {
    const uint64_t psi = pow_mod(g, (q - 1) / order, q);
    if (pow_mod(psi, n, q) == q - 1) return psi;
  }
  throw ParamError("no primitive 2n-th root");
}

Ntt::Ntt(std::size_t n, uint64_t q) : n_(n), log_n_(0), q_(q) {
  while ((std::size_t{1} << log_n_) < n) ++log_n_;
  if ((std::size_t{1} << log_n_) != n) throw ParamError("ring dimension must be a power of two");
  const uint64_t psi = primitive_root_2n(n, q);
  const uint64_t psi_inv = inv_mod(psi, q);
  roots_.resize(n);
  inv_roots_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = bit_reverse(i, log_n_);
    roots_[i] = pow_mod(psi, r, q);
    inv_roots_[i] = pow_mod(psi_inv, r, q);
  }
  roots_shoup_.resize(n);
  inv_roots_shoup_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    roots_shoup_[i] = shoup_precompute(roots_[i], q);
    inv_roots_shoup_[i] = shoup_precompute(inv_roots_[i], q);
  }
  n_inv_ = inv_mod(n % q, q);
  n_inv_shoup_ = shoup_precompute(n_inv_, q);
}

void Ntt::forward(uint64_t* a) const {
  std::size_t t = n_;
  for (std::size_t m = 1; m < n_; m <<= 1) {
    t >>= 1;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j1 = 2 * i * t;
      const uint64_t w = roots_[m + i];
      const uint64_t ws = roots_shoup_[m + i];
      for (std::size_t j = j1; j < j1 + t; ++j) {
        const uint64_t u = a[j];
        const uint64_t v = mul_shoup(a[j + t], w, ws, q_);
        a[j] = add_mod(u, v, q_);
        a[j + t] = sub_mod(u, v, q_);
      }
    }
  }
}

void Ntt::inverse(uint64_t* a) const {
  std::size_t t = 1;
  for (std::size_t m = n_ >> 1; m >= 1; m >>= 1) {
    std::size_t j1 = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const uint64_t w = inv_roots_[m + i];
      const uint64_t ws = inv_roots_shoup_[m + i];
      for (std::size_t j = j1; j < j1 + t; ++j) {
        const uint64_t u = a[j];
        const uint64_t v = a[j + t];
        a[j] = add_mod(u, v, q_);
        a[j + t] = mul_shoup(sub_mod(u, v, q_), w, ws, q_);
      }
      j1 += 2 * t;
    }
    t <<= 1;
  }
  for (std::size_t j = 0; j < n_; ++j) a[j] = mul_shoup(a[j], n_inv_, n_inv_shoup_, q_);
}

std::size_t Ntt::position_of_exponent(uint64_t exponent) const {
  return bit_reverse(static_cast<std::size_t>((exponent % (2 * n_) - 1) / 2), log_n_);
}

}  // namespace gru2pc
