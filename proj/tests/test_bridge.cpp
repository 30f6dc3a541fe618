#include "doctest.h"

#include <random>
#include <set>

#include "gru2pc/bridge.hpp"
#include "gru2pc/errors.hpp"
#include "support.hpp"

using namespace gru2pc;
using gru2pc::testing::bfv;
using gru2pc::testing::garbled_block;

namespace {

const uint64_t kP = kDefaultPlaintextModulus;

QuantizedVector signed_vec(const std::vector<int64_t>& v, int scale) {
  QuantizedVector q{{}, scale, true};
  for (int64_t x : v) q.values.push_back(embed_signed(x, kP));
  return q;
}

// he_to_gc -> garbled block per element -> gc_to_he, all in one process.
Ciphertext through_block(const Pahe& server, const Pahe& client, const Ciphertext& ct, std::size_t count,
                         const ActivationSpec& spec, const FixedPointConfig& cfg, MaskSource& masks,
                         TicketBook& tickets, uint64_t instance, Prg& rng) {
  const BoolCircuit c = build_activation_block(spec, cfg);
  const auto share = he_to_gc(server, client, ct, count, masks);
  const auto s = masks.draw(count);
  tickets.issue(instance, s);
  std::vector<uint64_t> out(count);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = garbled_block(c, spec, cfg, BlockMasks{share.server_mask[i], 0, s[i]}, share.client_value[i], 0,
                           instance * 1000 + i);
  const int out_scale = cfg.activation_scale_log2;
  return gc_to_he(server, encrypt_masked_outputs(client, out, out_scale, rng), tickets, instance);
}

}  // namespace

TEST_CASE("zero value: the GC unmask recovers 0 for 10^3 random masks") {
  const auto cfg = FixedPointConfig::for_bits(20);
  const ActivationSpec spec{ActivationKind::RELU, 20, false, 8, cfg.activation_scale_log2};
  const auto c = build_activation_block(spec, cfg);
  const Pahe& he = *bfv().debug;
  MaskSource masks(kP, Block::from_u64(1, 1));
  Prg rng(uint64_t{1});
  const auto ct = he.encrypt(signed_vec(std::vector<int64_t>(1000, 0), cfg.activation_scale_log2), rng);
  const auto share = he_to_gc(he, he, ct, 1000, masks);
  std::size_t bad = 0;
  for (std::size_t i = 0; i < 1000; ++i)
    bad += garbled_block(c, spec, cfg, BlockMasks{share.server_mask[i], 0, 0}, share.client_value[i], 0, i) != 0;
  CHECK(bad == 0);
}

TEST_CASE("random values: the unmasked GC input equals the plaintext value (10^4 trials)") {
  const auto cfg = FixedPointConfig::for_bits(20);
  // ReLU at the activation scale: no requantization, so positive inputs pass through unchanged.
  const ActivationSpec spec{ActivationKind::RELU, 20, false, 8, cfg.activation_scale_log2};
  const auto c = build_activation_block(spec, cfg);
  const Pahe& he = *bfv().debug;
  MaskSource masks(kP, Block::from_u64(2, 2));
  Prg rng(uint64_t{2});
  std::mt19937_64 r(2);
  std::size_t bad = 0;
  for (int batch = 0; batch < 10; ++batch) {
    std::vector<int64_t> v(1000);
    for (auto& x : v) x = static_cast<int64_t>(r() % (1u << 19)) - (1 << 18);
    const auto share = he_to_gc(he, he, he.encrypt(signed_vec(v, 8), rng), v.size(), masks);
    for (std::size_t i = 0; i < v.size(); ++i) {
      CHECK(add_mod(share.client_value[i], kP - share.server_mask[i], kP) == embed_signed(v[i], kP));
      const uint64_t y = garbled_block(c, spec, cfg, BlockMasks{share.server_mask[i], 0, 0}, share.client_value[i], 0,
                                       batch * 1000 + i);
      bad += y != embed_signed(std::max<int64_t>(v[i], 0), kP);
    }
  }
  CHECK(bad == 0);
}

TEST_CASE("conversions draw fresh masks; no mask vector repeats over 10^4 conversions") {
  const Pahe& he = *bfv().debug;
  MaskSource masks(kP, Block::from_u64(3, 3));
  Prg rng(uint64_t{3});
  const auto ct = he.encrypt(signed_vec({1, 2, 3, 4}, 0), rng);
  const auto a = mask_ciphertext(he, ct, masks, 4);
  const auto b = mask_ciphertext(he, ct, masks, 4);
  CHECK(a.mask != b.mask);
  CHECK(he.decrypt(a.ct).values != he.decrypt(b.ct).values);
  std::set<std::vector<uint64_t>> seen;
  for (int i = 0; i < 10000; ++i) CHECK(seen.insert(masks.draw(8)).second);
  CHECK(masks.drawn() == 10002);
}

TEST_CASE("masked values are uniform mod p whatever the value (chi-square)") {
  const Pahe& he = *bfv().debug;
  MaskSource masks(kP, Block::from_u64(4, 4));
  Prg rng(uint64_t{4});
  constexpr int kBins = 64;
  for (int64_t value : {int64_t{0}, int64_t{123456}, int64_t{-77}}) {
    std::vector<int64_t> v(2048, value);
    std::array<double, kBins> hist{};
    for (int rep = 0; rep < 10; ++rep) {
      const auto share = he_to_gc(he, he, he.encrypt(signed_vec(v, 0), rng), v.size(), masks);
      for (uint64_t x : share.client_value) hist[x * kBins / kP] += 1;
    }
    const double expected = 20480.0 / kBins;
    double chi2 = 0;
    for (double h : hist) chi2 += (h - expected) * (h - expected) / expected;
    // 63 degrees of freedom; 0.999 quantile is about 103.4.
    CHECK_MESSAGE(chi2 < 103.4, "value=" << value << " chi2=" << chi2);
  }
}

TEST_CASE("gc_to_he with y = 0 decrypts to 0; tickets are single-use") {
  for (const Pahe* he : {bfv().debug.get(), bfv().client.get()}) {
    MaskSource masks(kP, Block::from_u64(5, 5));
    TicketBook tickets;
    Prg rng(uint64_t{5});
    const auto s = masks.draw(64);
    tickets.issue(7, s);
    CHECK(tickets.outstanding() == 1);
    const auto ct = gc_to_he(*he, encrypt_masked_outputs(*he, s, 8, rng), tickets, 7);
    const auto dec = he->decrypt(ct).values;
    CHECK(std::all_of(dec.begin(), dec.end(), [](uint64_t x) { return x == 0; }));
    CHECK(tickets.outstanding() == 0);
    CHECK_THROWS_AS(gc_to_he(*he, encrypt_masked_outputs(*he, s, 8, rng), tickets, 7), ProtocolError);
    CHECK_THROWS_AS(tickets.redeem(8), ProtocolError);
    CHECK_THROWS_AS(tickets.issue(7, s), ProtocolError);
  }
}

TEST_CASE("end-to-end ReLU: he_to_gc -> block -> gc_to_he equals the plaintext block") {
  const auto cfg = FixedPointConfig::for_bits(20);
  const ActivationSpec spec{ActivationKind::RELU, 20};
  std::mt19937_64 r(6);
  struct Run {
    const Pahe* he;
    int vectors;
  };
  for (const Run& run : {Run{bfv().debug.get(), 1000}, Run{bfv().client.get(), 10}}) {
    MaskSource masks(kP, Block::from_u64(6, 6));
    TicketBook tickets;
    Prg rng(uint64_t{6});
    std::size_t bad = 0;
    for (int t = 0; t < run.vectors; ++t) {
      std::vector<int64_t> v(8);
      for (auto& x : v) x = static_cast<int64_t>(r() % kP) - static_cast<int64_t>(kP / 2);
      const auto ct = run.he->encrypt(signed_vec(v, cfg.product_scale_log2()), rng);
      const auto out = through_block(*run.he, *run.he, ct, v.size(), spec, cfg, masks, tickets, t, rng);
      const auto dec = run.he->decrypt(out).values;
      for (std::size_t i = 0; i < v.size(); ++i) bad += dec[i] != block_reference(spec, cfg, embed_signed(v[i], kP));
    }
    CHECK_MESSAGE(bad == 0, "debug=" << run.he->is_debug());
  }
}

TEST_CASE("returned ciphertexts carry fresh-level noise") {
  const Pahe& he = *bfv().client;
  MaskSource masks(kP, Block::from_u64(7, 7));
  TicketBook tickets;
  Prg rng(uint64_t{7});
  const auto s = masks.draw(16);
  tickets.issue(1, s);
  const auto ct = gc_to_he(he, encrypt_masked_outputs(he, s, 8, rng), tickets, 1);
  CHECK(he.noise_budget(ct) >= he.fresh_budget() - 1.0);
  CHECK(measured_noise_budget(bfv().params, bfv().keys->secret, ct) >= he.noise_budget(ct));
}

TEST_CASE("refresh is the identity on values and restores the budget") {
  std::mt19937_64 r(8);
  for (const Pahe* he : {bfv().debug.get(), bfv().client.get()}) {
    MaskSource masks(kP, Block::from_u64(8, 8));
    Prg rng(uint64_t{8});
    const int reps = he->is_debug() ? 1000 : 20;
    std::size_t bad = 0;
    for (int t = 0; t < reps; ++t) {
      std::vector<uint64_t> v(16);
      for (auto& x : v) x = r() % kP;
      const auto ct = he->encrypt(QuantizedVector{v, 8, false}, rng);
      const auto fresh = refresh(*he, *he, ct, v.size(), 0, masks, rng);
      auto dec = he->decrypt(fresh).values;
      dec.resize(v.size());
      bad += dec != v;
    }
    CHECK(bad == 0);
  }

  const Pahe& he = *bfv().client;
  MaskSource masks(kP, Block::from_u64(9, 9));
  Prg rng(uint64_t{9});
  std::vector<uint64_t> w(64 * 64), x(64);
  for (auto& e : w) e = r() % 5;
  for (auto& e : x) e = r() % 100;
  auto ct = he.encrypt_replicated(x, 64, 0, rng);
  ct = he.mult_pc(w, 64, 64, ct, QuantizedVector{{}, 0, true}, 0);
  const double before = he.noise_budget(ct);
  const auto refreshed = refresh(he, he, ct, 64, 64, masks, rng);
  CHECK(he.noise_budget(refreshed) > before);
  CHECK(he.noise_budget(refreshed) >= he.fresh_budget() - 1.0);
  CHECK(refreshed.period == 64);
  auto a = he.decrypt(ct).values, b = he.decrypt(refreshed).values;
  a.resize(64);
  b.resize(64);
  CHECK(a == b);
}

TEST_CASE("30-step chain with refresh never exhausts; without refresh the second product does") {
  const Pahe& he = *bfv().client;
  MaskSource masks(kP, Block::from_u64(10, 10));
  Prg rng(uint64_t{10});
  std::mt19937_64 r(10);
  constexpr std::size_t n = 64;
  std::vector<uint64_t> w(n * n);
  for (auto& e : w) e = r() % 3;
  const auto pm = he.encode_matrix(w, n, n, 0);
  std::vector<uint64_t> x(n, 1);
  auto ct = he.encrypt_replicated(x, n, 0, rng);
  CHECK_NOTHROW([&] {
    for (int step = 0; step < 30; ++step) {
      ct = he.mult_pc(pm, ct, QuantizedVector{{}, 0, true});
      ct = refresh(he, he, ct, n, n, masks, rng);
    }
  }());
  auto chained = he.encrypt_replicated(x, n, 0, rng);
  chained = he.mult_pc(pm, chained, QuantizedVector{{}, 0, true});
  chained = he.mult_pc(w, n, n, chained, QuantizedVector{{}, 0, true}, 0);
  CHECK_THROWS_AS(he.decrypt(chained), NoiseExhausted);
  // Too late to refresh: the server refuses to convert an exhausted ciphertext.
  CHECK_THROWS_AS(refresh(he, he, chained, n, n, masks, rng), NoiseExhausted);
}

TEST_CASE("magnitude precondition is checked on the debug backend") {
  const Pahe& he = *bfv().debug;
  MaskSource masks(kP, Block::from_u64(11, 11));
  Prg rng(uint64_t{11});
  const auto ct = he.encrypt(signed_vec({5, -300, 2}, 0), rng);
  CHECK_NOTHROW(mask_ciphertext(he, ct, masks, 3, 300));
  CHECK_THROWS_AS(mask_ciphertext(he, ct, masks, 3, 299), RangeViolation);
}
