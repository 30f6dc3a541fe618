#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "gru2pc/errors.hpp"
#include "gru2pc/fixedpoint.hpp"

using namespace gru2pc;

namespace {
const FixedPointConfig kCfg = FixedPointConfig::for_bits(20);
const uint64_t kP = kDefaultPlaintextModulus;
}  // namespace

TEST_CASE("modulus is the largest prime below 2^20 congruent to 1 mod 4096") {
  CHECK(is_prime_u64(kP));
  CHECK(kP % 4096 == 1);
  for (uint64_t c = kP + 4096; c < (1u << 20); c += 4096) CHECK_FALSE(is_prime_u64(c));
}

TEST_CASE("quantize examples") {
  CHECK(quantize(0.0, 8, kCfg) == 0);
  CHECK(quantize(1.0, 8, kCfg) == 256);
  CHECK(quantize(-0.5, 8, kCfg) == kP - 128);
  CHECK(dequantize(256, 8, kCfg) == 1.0);
  CHECK(dequantize(kP - 128, 8, kCfg) == -0.5);
  CHECK_THROWS_AS(quantize(2048.0, 8, kCfg), RangeError);
  CHECK_THROWS_AS(quantize(NAN, 8, kCfg), RangeError);
}

TEST_CASE("ties go to even") {
  CHECK(quantize(0.5 / 256, 8, kCfg) == 0);
  CHECK(quantize(1.5 / 256, 8, kCfg) == 2);
  CHECK(quantize(-1.5 / 256, 8, kCfg) == kP - 2);
  CHECK(round_shift_even(3, 1) == 2);
  CHECK(round_shift_even(5, 1) == 2);
  CHECK(round_shift_even(-3, 1) == -2);
  CHECK(round_shift_even(-5, 1) == -2);
  CHECK(round_shift_even(7, 2) == 2);
}

TEST_CASE("round_shift_even matches a rational oracle") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20000; ++i) {
    const int64_t v = static_cast<int64_t>(rng() % 2000001) - 1000000;
    const int s = 1 + static_cast<int>(rng() % 12);
    const long double q = static_cast<long double>(v) / std::ldexp(1.0L, s);
    const long double fl = std::floor(q);
    const long double frac = q - fl;
    int64_t want = static_cast<int64_t>(fl);
    if (frac > 0.5L || (frac == 0.5L && (want & 1))) ++want;
    REQUIRE(round_shift_even(v, s) == want);
  }
}

TEST_CASE("dequantize(quantize(v)) error is within half an LSB") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-2000.0, 2000.0);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const double v = dist(rng);
    worst = std::max(worst, std::fabs(dequantize(quantize(v, 8, kCfg), 8, kCfg) - v));
  }
  CHECK(worst <= std::ldexp(1.0, -9));
}

TEST_CASE("requantize examples") {
  const uint64_t one = quantize(1.0, 8, kCfg);
  CHECK(requantize(one * one % kP, 8, kCfg) == one);
  CHECK(requantize(0, 8, kCfg) == 0);
  const uint64_t half = quantize(0.5, 8, kCfg);
  const double got = dequantize(requantize(half * half % kP, 8, kCfg), 8, kCfg);
  CHECK(std::fabs(got - 0.25) <= std::ldexp(1.0, -8));
}

TEST_CASE("product then requantize tracks the real product") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> small(-1.5, 1.5), wide(-3.5, 3.5);
  for (int i = 0; i < 100000; ++i) {
    const double a = small(rng), b = small(rng);
    const uint64_t prod = quantize(a, 8, kCfg) * quantize(b, 8, kCfg) % kP;
    REQUIRE(std::fabs(dequantize(requantize(prod, 8, kCfg), 8, kCfg) - a * b) <= std::ldexp(1.0, 1 - 8));
  }
  // Outside |a|+|b| <= 3 the input rounding dominates: (|a|+|b|+1) half-LSBs.
  for (int i = 0; i < 100000; ++i) {
    const double a = wide(rng), b = std::clamp(wide(rng), -2.0, 2.0);
    const uint64_t prod = quantize(a, 8, kCfg) * quantize(b, 8, kCfg) % kP;
    const double tol = (std::fabs(a) + std::fabs(b) + 1.0 + 1.0 / 512) * std::ldexp(1.0, -9);
    REQUIRE(std::fabs(dequantize(requantize(prod, 8, kCfg), 8, kCfg) - a * b) <= tol);
  }
}

TEST_CASE("signed embedding is additive") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int64_t> dist(-200000, 200000);
  for (int i = 0; i < 20000; ++i) {
    const int64_t a = dist(rng), b = dist(rng);
    const double x = std::ldexp(static_cast<double>(a), -8), y = std::ldexp(static_cast<double>(b), -8);
    REQUIRE((quantize(x, 8, kCfg) + quantize(y, 8, kCfg)) % kP == quantize(x + y, 8, kCfg));
  }
}

TEST_CASE("quantize is deterministic") {
  for (double v : {0.1, -3.7, 1e-3, 1234.5678}) CHECK(quantize(v, 8, kCfg) == quantize(v, 8, kCfg));
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(FixedPointConfig::for_bits(8).validate());
  CHECK_NOTHROW(FixedPointConfig::for_bits(12).validate());
  CHECK_NOTHROW(FixedPointConfig::for_bits(20).validate());
  CHECK(FixedPointConfig::for_bits(8).activation_scale_log2 == 6);
  FixedPointConfig bad = kCfg;
  bad.modulus_p = 1032192;
  CHECK_THROWS_AS(bad.validate(), ParamError);
  bad = kCfg;
  bad.activation_bits = 24;
  CHECK_THROWS_AS(bad.validate(), ParamError);
  bad = kCfg;
  bad.weight_scale_log2 = 12;
  CHECK_THROWS_AS(bad.validate(), ParamError);
}
