#include "doctest.h"

#include <random>

#include "gru2pc/circuit.hpp"
#include "gru2pc/errors.hpp"

using namespace gru2pc;

namespace {

int64_t sext(uint64_t v, std::size_t bits) {
  v &= (bits == 64) ? ~uint64_t{0} : ((uint64_t{1} << bits) - 1);
  if (bits < 64 && (v >> (bits - 1)) & 1) v |= ~uint64_t{0} << bits;
  return static_cast<int64_t>(v);
}

uint64_t mask(std::size_t bits) { return bits >= 64 ? ~uint64_t{0} : (uint64_t{1} << bits) - 1; }

// Round-half-even division by 2^k using exact integer reasoning.
int64_t ref_round_shift(int64_t v, int k) {
  const int64_t d = int64_t{1} << k;
  int64_t q = v >= 0 ? v / d : -((-v + d - 1) / d);  // floor
  const int64_t r = v - q * d;                        // 0 <= r < d
  if (2 * r > d || (2 * r == d && (q & 1))) ++q;
  return q;
}

// All combinations of two b-bit operands, as batch inputs.
std::map<std::string, std::vector<uint64_t>> all_pairs(std::size_t bits) {
  std::map<std::string, std::vector<uint64_t>> in;
  for (uint64_t a = 0; a < (uint64_t{1} << bits); ++a)
    for (uint64_t b = 0; b < (uint64_t{1} << bits); ++b) {
      in["a"].push_back(a);
      in["b"].push_back(b);
    }
  return in;
}

}  // namespace

TEST_CASE("add, sub and signed compare are exhaustively correct for b <= 8") {
  for (std::size_t bits = 1; bits <= 8; ++bits) {
    const auto in = all_pairs(bits);
    const auto add = eval_plain_batch(build_add(bits), in).at("out");
    const auto sub = eval_plain_batch(build_sub(bits), in).at("out");
    const auto ge = eval_plain_batch(build_ge(bits), in).at("out");
    std::size_t bad = 0;
    for (std::size_t i = 0; i < add.size(); ++i) {
      const uint64_t a = in.at("a")[i], b = in.at("b")[i];
      bad += add[i] != ((a + b) & mask(bits));
      bad += sub[i] != ((a - b) & mask(bits));
      bad += ge[i] != (sext(a, bits) >= sext(b, bits) ? 1u : 0u);
    }
    CHECK_MESSAGE(bad == 0, "bits=" << bits);
  }
}

TEST_CASE("mux and relu are exhaustively correct for b <= 8") {
  for (std::size_t bits = 2; bits <= 8; ++bits) {
    auto in = all_pairs(bits);
    const std::size_t n = in["a"].size();
    in["s"].resize(n);
    for (std::size_t i = 0; i < n; ++i) in["s"][i] = i & 1;
    const auto mux = eval_plain_batch(build_mux(bits), in).at("out");
    std::map<std::string, std::vector<uint64_t>> rin;
    for (uint64_t x = 0; x < (uint64_t{1} << bits); ++x) rin["x"].push_back(x);
    const auto relu = eval_plain_batch(build_relu(bits), rin).at("out");
    std::size_t bad = 0;
    for (std::size_t i = 0; i < n; ++i) bad += mux[i] != (in["s"][i] ? in["b"][i] : in["a"][i]);
    for (uint64_t x = 0; x < (uint64_t{1} << bits); ++x)
      bad += static_cast<int64_t>(relu[x]) != std::max<int64_t>(0, sext(x, bits));
    CHECK_MESSAGE(bad == 0, "bits=" << bits);
  }
}

TEST_CASE("primitive AND counts") {
  for (std::size_t bits : {4u, 8u, 12u, 20u}) {
    CHECK(stats(build_add(bits)).non_xor_count == bits - 1);
    CHECK(stats(build_sub(bits)).non_xor_count == bits - 1);
    CHECK(stats(build_mux(bits)).non_xor_count == bits);
    CHECK(stats(build_ge(bits)).non_xor_count == bits);
    CHECK(stats(build_relu(bits)).non_xor_count == bits);
  }
}

TEST_CASE("builder folds constants and XOR-only circuits have no AND") {
  CircuitBuilder cb;
  const Bus a = cb.input("a", 8, Party::Evaluator);
  const Bus b = cb.input("b", 8, Party::Garbler);
  CHECK(cb.and_(a[0], kFalse) == kFalse);
  CHECK(cb.and_(a[0], kTrue) == a[0]);
  CHECK(cb.xor_(a[0], a[0]) == kFalse);
  CHECK(cb.xor_(a[0], cb.not_(a[0])) == kTrue);
  CHECK(cb.not_(cb.not_(a[1])) == a[1]);
  CHECK(cb.mux(a[2], b[0], b[0]) == b[0]);
  cb.output("x", cb.xor_bus(a, b));
  const auto c = cb.finish();
  const auto s = stats(c);
  CHECK(s.non_xor_count == 0);
  CHECK(s.xor_count == 8);
  CHECK(s.total_gates == 8);  // dead INV gates were pruned
  const auto out = eval_plain(c, {{"a", 0xa5}, {"b", 0x3c}});
  CHECK(out.at("x") == (0xa5u ^ 0x3cu));
}

TEST_CASE("passthrough and constant outputs") {
  CircuitBuilder cb;
  const Bus a = cb.input("a", 5, Party::Evaluator);
  cb.output("same", a);
  cb.output("k", CircuitBuilder::constant(0b1011, 4));
  const auto c = cb.finish();
  CHECK(c.gates.empty());
  for (uint64_t v = 0; v < 32; ++v) {
    const auto out = eval_plain(c, {{"a", v}});
    CHECK(out.at("same") == v);
    CHECK(out.at("k") == 0b1011u);
  }
}

TEST_CASE("unsigned and signed-by-unsigned multipliers") {
  CircuitBuilder cb;
  const Bus a = cb.input("a", 6, Party::Evaluator);
  const Bus b = cb.input("b", 5, Party::Garbler);
  cb.output("u", cb.mul_unsigned(a, b, 11));
  cb.output("s", cb.mul_signed_unsigned(a, b, 11), true);
  cb.output("t", cb.mul_unsigned(a, b, 7));
  const auto c = cb.finish();
  std::map<std::string, std::vector<uint64_t>> in;
  for (uint64_t x = 0; x < 64; ++x)
    for (uint64_t y = 0; y < 32; ++y) {
      in["a"].push_back(x);
      in["b"].push_back(y);
    }
  const auto out = eval_plain_batch(c, in);
  std::size_t bad = 0;
  for (std::size_t i = 0; i < in["a"].size(); ++i) {
    const uint64_t x = in["a"][i], y = in["b"][i];
    bad += out.at("u")[i] != x * y;
    bad += static_cast<int64_t>(out.at("s")[i]) != sext(x, 6) * static_cast<int64_t>(y);
    bad += out.at("t")[i] != ((x * y) & mask(7));
  }
  CHECK(bad == 0);
}

TEST_CASE("round_shift_even matches the integer reference for every input") {
  for (std::size_t bits : {6u, 9u}) {
    for (std::size_t k = 1; k < bits; ++k) {
      CircuitBuilder cb;
      const Bus x = cb.input("x", bits, Party::Evaluator);
      cb.output("y", cb.round_shift_even(x, k), true);
      const auto c = cb.finish();
      std::map<std::string, std::vector<uint64_t>> in;
      for (uint64_t v = 0; v < (uint64_t{1} << bits); ++v) in["x"].push_back(v);
      const auto y = eval_plain_batch(c, in).at("y");
      std::size_t bad = 0;
      for (uint64_t v = 0; v < (uint64_t{1} << bits); ++v)
        bad += static_cast<int64_t>(y[v]) != ref_round_shift(sext(v, bits), static_cast<int>(k));
      CHECK_MESSAGE(bad == 0, "bits=" << bits << " k=" << k);
    }
  }
}

TEST_CASE("saturate clamps to the narrower signed range") {
  for (std::size_t out_bits = 2; out_bits <= 8; ++out_bits) {
    CircuitBuilder cb;
    const Bus x = cb.input("x", 9, Party::Evaluator);
    cb.output("y", cb.saturate(x, out_bits), true);
    const auto c = cb.finish();
    std::map<std::string, std::vector<uint64_t>> in;
    for (uint64_t v = 0; v < 512; ++v) in["x"].push_back(v);
    const auto y = eval_plain_batch(c, in).at("y");
    const int64_t hi = (int64_t{1} << (out_bits - 1)) - 1, lo = -hi - 1;
    std::size_t bad = 0;
    for (uint64_t v = 0; v < 512; ++v) bad += static_cast<int64_t>(y[v]) != std::clamp(sext(v, 9), lo, hi);
    CHECK_MESSAGE(bad == 0, "out_bits=" << out_bits);
  }
}

TEST_CASE("lookup returns the table entry and rejects bad sizes") {
  std::mt19937_64 rng(5);
  std::vector<uint64_t> table(64);
  for (auto& t : table) t = rng() & 0x3ff;
  CircuitBuilder cb;
  const Bus i = cb.input("i", 6, Party::Evaluator);
  cb.output("v", cb.lookup(i, table, 10));
  const auto c = cb.finish();
  for (uint64_t k = 0; k < 64; ++k) CHECK(eval_plain(c, {{"i", k}}).at("v") == table[k]);
  CircuitBuilder bad;
  const Bus j = bad.input("i", 3, Party::Evaluator);
  CHECK_THROWS_AS(bad.lookup(j, std::vector<uint64_t>(7, 0), 4), SpecError);
}

TEST_CASE("random circuits: lane evaluation equals single-instance evaluation") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    CircuitBuilder cb;
    Bus pool = cb.input("a", 8, Party::Evaluator);
    const Bus g = cb.input("b", 8, Party::Garbler);
    pool.insert(pool.end(), g.begin(), g.end());
    for (int k = 0; k < 200; ++k) {
      const Wire x = pool[rng() % pool.size()], y = pool[rng() % pool.size()];
      switch (rng() % 3) {
        case 0: pool.push_back(cb.xor_(x, y)); break;
        case 1: pool.push_back(cb.and_(x, y)); break;
        default: pool.push_back(cb.not_(x)); break;
      }
    }
    cb.output("o", Bus(pool.end() - 16, pool.end()));
    const auto c = cb.finish();
    std::map<std::string, std::vector<uint64_t>> in;
    for (int k = 0; k < 100; ++k) {
      in["a"].push_back(rng() & 0xff);
      in["b"].push_back(rng() & 0xff);
    }
    const auto batch = eval_plain_batch(c, in).at("o");
    for (int k = 0; k < 100; ++k)
      REQUIRE(eval_plain(c, {{"a", in["a"][k]}, {"b", in["b"][k]}}).at("o") == batch[k]);
  }
}

TEST_CASE("dump lists groups and gates; validate rejects malformed circuits") {
  const auto c = build_add(2);
  const std::string text = dump(c);
  CHECK(text.find("# input a evaluator 2") != std::string::npos);
  CHECK(text.find("AND w") != std::string::npos);
  CHECK(text.find("# output out") != std::string::npos);
  CHECK(input_wires(c, Party::Garbler).size() == 2);
  CHECK(output_wires(c).size() == 2);
  BoolCircuit broken = c;
  broken.gates.push_back(broken.gates.front());
  CHECK_THROWS_AS(broken.validate(), SpecError);
  BoolCircuit unread = c;
  unread.gates.front().a = unread.num_wires + 5;
  CHECK_THROWS_AS(unread.validate(), SpecError);
  CHECK_THROWS_AS(eval_plain(c, {{"a", 1}}), SpecError);
}
