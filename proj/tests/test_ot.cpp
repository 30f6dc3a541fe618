#include "doctest.h"

#include <random>

#include "gru2pc/errors.hpp"
#include "gru2pc/ot.hpp"

using namespace gru2pc;

namespace {

struct Case {
  std::vector<std::array<Block, 2>> pairs;
  std::vector<uint8_t> choices;
};

Case random_case(std::size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  Case c;
  for (std::size_t i = 0; i < n; ++i) {
    c.pairs.push_back({Block::from_u64(rng(), rng()), Block::from_u64(rng(), rng())});
    c.choices.push_back(rng() & 1);
  }
  return c;
}

}  // namespace

TEST_CASE("both OT modes deliver exactly the chosen label") {
  for (OtMode mode : {OtMode::Dealer, OtMode::ChouOrlandi}) {
    const auto c = random_case(300, 17);
    const auto got = ot_transfer(mode, c.pairs, c.choices, Block::from_u64(1, 2));
    REQUIRE(got.size() == c.pairs.size());
    std::size_t bad = 0;
    for (std::size_t i = 0; i < got.size(); ++i) {
      bad += !(got[i] == c.pairs[i][c.choices[i]]);
      bad += got[i] == c.pairs[i][1 - c.choices[i]];
    }
    CHECK(bad == 0);
  }
}

TEST_CASE("transcript bytes grow linearly in the number of transfers") {
  for (OtMode mode : {OtMode::Dealer, OtMode::ChouOrlandi}) {
    std::vector<std::size_t> totals;
    for (std::size_t n : {64u, 128u, 256u}) {
      const auto c = random_case(n, n);
      OtTranscript t;
      ot_transfer(mode, c.pairs, c.choices, Block::from_u64(n, 3), &t);
      CHECK(t.transfers == n);
      CHECK(t.online_bytes == n / 8 + 32 * n);
      totals.push_back(t.total());
    }
    // Constant per-transfer increments.
    CHECK(totals[1] - totals[0] == (totals[2] - totals[1]) / 2);
  }
}

TEST_CASE("Chou-Orlandi random OTs are consistent and pads look independent") {
  CoOtSender s(Block::from_u64(4, 4));
  CoOtReceiver r(Block::from_u64(5, 5), 200);
  const auto ro = s.finish(r.respond(s.first_message()));
  const auto& rr = r.result();
  std::size_t ones = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    CHECK(rr.pads[i] == ro.pads[i][rr.choices[i]]);
    CHECK(!(ro.pads[i][0] == ro.pads[i][1]));
    ones += rr.choices[i];
  }
  CHECK(ones > 60);
  CHECK(ones < 140);
}

TEST_CASE("malformed OT messages raise ProtocolError") {
  CoOtSender s(Block::from_u64(1, 1));
  CoOtReceiver r(Block::from_u64(2, 2), 4);
  std::vector<uint8_t> junk(32, 0xff);
  CHECK_THROWS_AS(r.respond(junk), ProtocolError);
  auto m = r.respond(s.first_message());
  m.pop_back();
  CHECK_THROWS_AS(s.finish(m), ProtocolError);

  RandomOtSender ds;
  RandomOtReceiver dr;
  dealer_random_ot(8, Block::from_u64(0, 0), ds, dr);
  const std::vector<uint8_t> bits(9, 0);
  CHECK_THROWS_AS(ot_flip_message(dr, 0, bits), ProtocolError);
  const auto c = random_case(8, 1);
  const auto flips = ot_flip_message(dr, 0, c.choices);
  auto answer = ot_sender_message(ds, 0, c.pairs, flips);
  answer.resize(answer.size() - 1);
  CHECK_THROWS_AS(ot_receive(dr, 0, c.choices, answer), ProtocolError);
}

TEST_CASE("receiver flip bits are uniform regardless of the choice bits") {
  RandomOtSender ds;
  RandomOtReceiver dr;
  dealer_random_ot(4096, Block::from_u64(8, 8), ds, dr);
  const std::vector<uint8_t> zeros(4096, 0);
  const auto msg = ot_flip_message(dr, 0, zeros);
  std::size_t ones = 0;
  for (uint8_t byte : msg) ones += std::popcount(byte);
  CHECK(ones > 1900);
  CHECK(ones < 2196);
}
