#include <chrono>

#include "doctest.h"
#include "gru2pc/bridge.hpp"
#include "gru2pc/errors.hpp"
#include "gru2pc/garble.hpp"
#include "gru2pc/protocol.hpp"

using namespace gru2pc;

namespace {

struct Case {
  Model model;
  std::vector<std::vector<uint64_t>> x;
  OracleResult ref;
};

Case make_case(std::size_t m, std::size_t n, std::size_t T, Scenario s, uint64_t seed, std::size_t k = 2) {
  Case c{synthetic_model(m, n, T, k, s, seed), {}, {}};
  c.x = quantize_inputs(c.model.config, synthetic_inputs(m, T, seed + 1000));
  c.ref = oracle_infer_fixed(c.model, c.x);
  return c;
}

ProtocolOptions debug_opts() {
  ProtocolOptions o;
  o.backend = Backend::Debug;
  return o;
}

bool same_traffic(const TrafficCounters& a, const TrafficCounters& b) {
  for (int p = 0; p < 3; ++p)
    for (int t = 1; t <= 6; ++t)
      if (a.bytes[p][t] != b.bytes[p][t] || a.frames[p][t] != b.frames[p][t]) return false;
  return true;
}

}  // namespace

TEST_CASE("secure inference equals the fixed-point oracle (debug backend)") {
  for (Scenario s : {Scenario::BASELINE, Scenario::CG1, Scenario::CG2}) {
    for (uint64_t seed = 0; seed < 6; ++seed) {
      const auto c = make_case(4, 4, 3, s, seed);
      auto o = debug_opts();
      o.keep_hidden_trace = true;
      const auto r = run_local(c.model, c.x, o, seed);
      CAPTURE(to_string(s));
      CAPTURE(seed);
      CHECK(r.client.scores == c.ref.scores);
      REQUIRE(r.hidden.size() == c.ref.steps.size());
      for (std::size_t t = 0; t < r.hidden.size(); ++t) CHECK(r.hidden[t] == c.ref.steps[t].h);
    }
  }
}

TEST_CASE("secure inference equals the fixed-point oracle (BFV, m=n=8, T=4)") {
  for (uint64_t seed = 0; seed < 6; ++seed) {
    const Scenario s = static_cast<Scenario>(seed % 3);
    const auto c = make_case(8, 8, 4, s, seed + 50);
    ProtocolOptions o;
    o.keep_hidden_trace = true;
    const auto r = run_local(c.model, c.x, o, seed);
    CAPTURE(seed);
    CHECK(r.client.scores == c.ref.scores);
    for (std::size_t t = 0; t < r.hidden.size(); ++t) CHECK(r.hidden[t] == c.ref.steps[t].h);
    CHECK(r.server.min_noise_budget > 0);
  }
}

TEST_CASE("zero weights give the output bias") {
  auto c = make_case(3, 5, 1, Scenario::BASELINE, 4, 3);
  auto& w = c.model.weights;
  for (auto* v : {&w.W_i, &w.W_h, &w.b_i, &w.b_h, &w.W_o}) std::fill(v->begin(), v->end(), 0);
  const auto r = run_local(c.model, c.x, ProtocolOptions{}, 1);
  for (std::size_t i = 0; i < 3; ++i) CHECK(lift_signed(r.client.scores[i], c.model.config.fp.modulus_p) == w.b_o[i]);
}

TEST_CASE("small baseline smoke run is fast and correct") {
  const auto c = make_case(4, 4, 2, Scenario::BASELINE, 9);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_local(c.model, c.x, debug_opts(), 9);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 1.0);
  CHECK(r.client.scores == c.ref.scores);
}

TEST_CASE("traffic accounting") {
  const auto c = make_case(5, 6, 3, Scenario::CG1, 3);
  const auto r = run_local(c.model, c.x, debug_opts(), 3);
  const auto& s = r.server;

  SUBCASE("each direction seen identically at both ends") {
    CHECK(same_traffic(s.sent, r.client.received));
    CHECK(same_traffic(r.client.sent, s.received));
    const auto &g = s.gc, &h = r.client.gc;
    CHECK(h.instances == g.instances);
    CHECK(h.non_xor == g.non_xor);
    CHECK(h.table_bytes == g.table_bytes);
    CHECK(h.material_bytes == g.material_bytes);
    CHECK(h.ot_transfers == g.ot_transfers);
    CHECK(h.ot_offline_bytes == g.ot_offline_bytes);
    CHECK(h.ot_online_bytes == g.ot_online_bytes);
  }
  SUBCASE("phase sums and type sums equal the total") {
    for (const auto* tc : {&s.sent, &s.received}) {
      uint64_t by_phase = 0, by_type = 0;
      for (Phase p : {Phase::SETUP, Phase::OFFLINE, Phase::ONLINE}) by_phase += tc->phase_bytes(p);
      for (int t = 1; t <= 6; ++t) by_type += tc->type_bytes(static_cast<MsgType>(t));
      CHECK(by_phase == tc->total_bytes());
      CHECK(by_type == tc->total_bytes());
    }
  }
  SUBCASE("garbled material decomposes exactly") {
    CHECK(s.gc.table_bytes == 32 * s.gc.non_xor);
    // One GC_TABLES frame per step: header plus, per instance, the serialized circuit and garbler labels.
    const ModelConfig& cfg = c.model.config;
    const auto blocks = cell_blocks(cfg);
    std::size_t per_step = 0;
    for (const auto& spec : {blocks.reset, blocks.candidate, blocks.update}) {
      const auto circ = build_activation_block(spec, cfg.fp);
      const auto g = garble(circ, Block::from_u64(1, 2));
      per_step += cfg.hidden_dim * (g.gc.wire_bytes() + kLabelBytes * circ.input_bits(Party::Garbler));
    }
    CHECK(s.gc.material_bytes == cfg.time_steps * per_step);
    CHECK(s.sent.type_bytes(MsgType::GC_TABLES) == s.gc.material_bytes + kFrameHeaderBytes * cfg.time_steps);
    CHECK(s.sent.phase_bytes(Phase::ONLINE) > 0);
    CHECK(s.sent.bytes[static_cast<int>(Phase::ONLINE)][static_cast<int>(MsgType::GC_TABLES)] == 0);
  }
  SUBCASE("OT traffic") {
    CHECK(s.gc.ot_transfers == 6 * 3 * (40 + 20 + 40));
    CHECK(s.gc.ot_offline_bytes == dealer_transcript_bytes(s.gc.ot_transfers));
    // Every block's bit count is a multiple of 8 here, so the packed flips add up exactly.
    CHECK(s.gc.ot_online_bytes == s.gc.ot_transfers / 8 + 32 * s.gc.ot_transfers);
  }
}

TEST_CASE("byte counts are deterministic and transport independent") {
  const auto c = make_case(4, 5, 2, Scenario::CG2, 21);
  ProtocolOptions o;
  const auto a = run_local(c.model, c.x, o, 21);
  const auto b = run_local(c.model, c.x, o, 21);
  const auto t = run_local_tcp(c.model, c.x, o, 21);
  CHECK(same_traffic(a.server.sent, b.server.sent));
  CHECK(same_traffic(a.client.sent, b.client.sent));
  CHECK(same_traffic(a.server.sent, t.server.sent));
  CHECK(same_traffic(a.client.sent, t.client.sent));
  CHECK(a.client.scores == t.client.scores);
  CHECK(t.client.scores == c.ref.scores);
}

TEST_CASE("an HE-only exchange carries no garbled tables") {
  // Refresh round trip over a real channel: mask, client re-encrypts, unmask.
  const PaheParams params{};
  auto [s_end, c_end] = make_inprocess_channel_pair();
  auto he = make_debug_pahe(params);
  Prg rng(4);
  const std::vector<uint64_t> v = {1, 2, 3, 4};
  const Ciphertext ct = he->encrypt_replicated(v, 4, 8, rng);
  c_end->send(MsgType::PK, Phase::SETUP, {});
  c_end->send(MsgType::REMASKED_CT, Phase::ONLINE, he->serialize(ct));
  s_end->expect(MsgType::PK);
  const Ciphertext got = he->deserialize(s_end->expect(MsgType::REMASKED_CT).payload, 8, 4, params.row_size());
  MaskSource masks(params.plaintext_modulus, Block::from_u64(5, 6));
  const auto mk = mask_ciphertext(*he, got, masks, 4);
  s_end->send(MsgType::MASKED_CT, Phase::ONLINE, he->serialize(mk.ct));
  const auto opened = open_masked(*he, he->deserialize(c_end->expect(MsgType::MASKED_CT).payload, 8, 0, 2048), 4);
  c_end->send(MsgType::REMASKED_CT, Phase::ONLINE, he->serialize(encrypt_masked_outputs(*he, opened, 8, rng, 4)));
  const Ciphertext fresh = he->deserialize(s_end->expect(MsgType::REMASKED_CT).payload, 8, 4, params.row_size());
  auto out = he->decrypt(unmask_ciphertext(*he, fresh, std::span<const uint64_t>(mk.mask).first(4), 4)).values;
  out.resize(4);
  CHECK(out == v);
  CHECK(s_end->sent().type_bytes(MsgType::GC_TABLES) == 0);
  CHECK(s_end->received().type_bytes(MsgType::GC_TABLES) == 0);
  CHECK(c_end->sent().total_bytes() > 0);
}

TEST_CASE("narrower activations shrink the garbled material") {
  const auto c1 = make_case(4, 16, 2, Scenario::CG1, 8);
  const auto c2 = make_case(4, 16, 2, Scenario::CG2, 8);
  const auto r1 = run_local(c1.model, c1.x, debug_opts(), 8);
  const auto r2 = run_local(c2.model, c2.x, debug_opts(), 8);
  const auto b1 = r1.server.sent.type_bytes(MsgType::GC_TABLES), b2 = r2.server.sent.type_bytes(MsgType::GC_TABLES);
  CHECK(b2 < b1);
  // Regression constant for this shape (tables-only ratio).
  CHECK(static_cast<double>(r2.server.gc.table_bytes) / static_cast<double>(r1.server.gc.table_bytes) ==
        doctest::Approx(0.632).epsilon(0.01));
}

TEST_CASE("per-step census from the PAHE counters") {
  const auto c = make_case(3, 4, 3, Scenario::BASELINE, 2);
  auto r = run_local(c.model, c.x, debug_opts(), 2);
  REQUIRE(r.server.census.size() == 3);
  for (const auto& cs : r.server.census) {
    CHECK(cs == OpCensus{2, 5, 2, 3, 1});
    CHECK(cs.linear() == 9);
    CHECK(cs == c.ref.census);
  }
  CHECK(r.server.negations_per_step == 1);

  auto o = debug_opts();
  o.refresh = false;
  r = run_local(c.model, c.x, o, 2);
  CHECK(r.server.census.front().refreshes == 0);
  CHECK(r.client.scores == c.ref.scores);
}

TEST_CASE("Chou-Orlandi OT mode") {
  const auto c = make_case(2, 2, 1, Scenario::CG2, 6);
  auto o = debug_opts();
  o.ot = OtMode::ChouOrlandi;
  const auto r = run_local(c.model, c.x, o, 6);
  CHECK(r.client.scores == c.ref.scores);
  CHECK(r.server.gc.ot_offline_bytes == kPointBytes * (1 + r.server.gc.ot_transfers));
}

TEST_CASE("verdict and error propagation") {
  const auto c = make_case(3, 3, 2, Scenario::CG1, 12);
  auto r = run_local(c.model, c.x, debug_opts(), 12, [](const ClientReport&) { return std::optional<bool>(false); });
  REQUIRE(r.server.client_verdict.has_value());
  CHECK_FALSE(*r.server.client_verdict);
  r = run_local(c.model, c.x, debug_opts(), 12);
  CHECK_FALSE(r.server.client_verdict.has_value());

  // Client inputs of the wrong width: the client's ProtocolError wins over the server's ChannelClosed.
  auto bad = c.x;
  bad[0].push_back(0);
  CHECK_THROWS_AS(run_local(c.model, bad, debug_opts(), 12), ProtocolError);
  // Too few steps.
  bad = c.x;
  bad.pop_back();
  CHECK_THROWS_AS(run_local(c.model, bad, debug_opts(), 12), ProtocolError);
  // A model too large for one slot row.
  const auto big = make_case(2, 400, 1, Scenario::CG2, 1);
  CHECK_THROWS_AS(run_local(big.model, big.x, debug_opts(), 1), DimensionError);
}
