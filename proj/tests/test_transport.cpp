#include "doctest.h"

#include <random>
#include <thread>

#include "gru2pc/errors.hpp"
#include "gru2pc/transport.hpp"

using namespace gru2pc;

namespace {

std::vector<Frame> random_frames(std::size_t count, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Frame> out;
  for (std::size_t i = 0; i < count; ++i) {
    Frame f;
    f.type = static_cast<MsgType>(1 + rng() % 6);
    f.phase = static_cast<Phase>(rng() % 3);
    f.payload.resize(rng() % 3 == 0 ? 0 : rng() % 5000);
    for (auto& b : f.payload) b = static_cast<uint8_t>(rng());
    out.push_back(std::move(f));
  }
  return out;
}

bool same(const Frame& a, const Frame& b) {
  return a.type == b.type && a.phase == b.phase && a.payload == b.payload;
}

// Sends frames a->b from one thread while b echoes them back, then compares.
void echo_roundtrip(Channel& a, Channel& b, const std::vector<Frame>& frames) {
  std::thread echo([&] {
    for (std::size_t i = 0; i < frames.size(); ++i) b.send(b.recv());
  });
  std::size_t bad = 0;
  std::thread reader([&] {
    for (const auto& f : frames) bad += !same(a.recv(), f);
  });
  for (const auto& f : frames) a.send(f);
  reader.join();
  echo.join();
  CHECK(bad == 0);
}

}  // namespace

TEST_CASE("frame header layout is big-endian length, type, phase") {
  Frame f{MsgType::GC_TABLES, Phase::OFFLINE, {0xde, 0xad, 0xbe, 0xef, 0x01}};
  const auto bytes = encode_frame(f);
  const std::vector<uint8_t> want{0x00, 0x00, 0x00, 0x05, 0x03, 0x01, 0xde, 0xad, 0xbe, 0xef, 0x01};
  CHECK(bytes == want);
  const auto h = decode_frame_header(std::span<const uint8_t, kFrameHeaderBytes>(bytes.data(), kFrameHeaderBytes));
  CHECK(h.length == 5);
  CHECK(h.type == MsgType::GC_TABLES);
  CHECK(h.phase == Phase::OFFLINE);
}

TEST_CASE("unknown type or phase and oversized lengths are rejected") {
  std::array<uint8_t, kFrameHeaderBytes> h{0, 0, 0, 1, 7, 0};
  CHECK_THROWS_AS(decode_frame_header(h), FrameError);
  h = {0, 0, 0, 1, 0, 0};
  CHECK_THROWS_AS(decode_frame_header(h), FrameError);
  h = {0, 0, 0, 1, 1, 3};
  CHECK_THROWS_AS(decode_frame_header(h), FrameError);
  h = {0xff, 0xff, 0xff, 0xff, 1, 0};
  CHECK_THROWS_AS(decode_frame_header(h), FrameError);
}

TEST_CASE("10^3 random frames round-trip over the in-process channel") {
  auto [a, b] = make_inprocess_channel_pair();
  echo_roundtrip(*a, *b, random_frames(1000, 1));
}

TEST_CASE("zero-length payloads are legal") {
  auto [a, b] = make_inprocess_channel_pair();
  a->send(MsgType::CONTROL, Phase::SETUP, {});
  const Frame f = b->recv();
  CHECK(f.payload.empty());
  CHECK(f.type == MsgType::CONTROL);
  CHECK(b->received().total_bytes() == kFrameHeaderBytes);
}

TEST_CASE("a malformed length poisons the connection") {
  auto [a, b] = make_inprocess_channel_pair();
  inject_raw_bytes(*a, {0x7f, 0xff, 0xff, 0xff, 0x01, 0x00});
  CHECK_THROWS_AS(b->recv(), FrameError);
  a->send(MsgType::PK, Phase::SETUP, {1, 2, 3});
  CHECK_THROWS_AS(b->recv(), FrameError);
  CHECK_THROWS_AS(b->send(MsgType::PK, Phase::SETUP, {}), FrameError);
}

TEST_CASE("closing one end surfaces ChannelClosed after buffered frames drain") {
  auto [a, b] = make_inprocess_channel_pair();
  a->send(MsgType::CONTROL, Phase::ONLINE, {9});
  a->close();
  CHECK(b->recv().payload == std::vector<uint8_t>{9});
  CHECK_THROWS_AS(b->recv(), ChannelClosed);
  CHECK_THROWS_AS(b->send(MsgType::CONTROL, Phase::ONLINE, {}), ChannelClosed);
}

TEST_CASE("counters attribute every byte to one (phase, type) cell") {
  auto [a, b] = make_inprocess_channel_pair();
  const auto frames = random_frames(200, 2);
  uint64_t total = 0;
  for (const auto& f : frames) {
    a->send(f);
    total += kFrameHeaderBytes + f.payload.size();
  }
  for (std::size_t i = 0; i < frames.size(); ++i) b->recv();
  const auto s = a->sent(), r = b->received();
  CHECK(s.total_bytes() == total);
  CHECK(r.total_bytes() == total);
  uint64_t by_phase = 0, by_type = 0;
  for (std::size_t p = 0; p < kPhaseCount; ++p) by_phase += s.phase_bytes(static_cast<Phase>(p));
  for (int t = 1; t <= 6; ++t) by_type += s.type_bytes(static_cast<MsgType>(t));
  CHECK(by_phase == total);
  CHECK(by_type == total);
  CHECK(s.bytes == r.bytes);
  CHECK(s.frames == r.frames);
}

TEST_CASE("TCP transport carries the same frames and byte totals") {
  TcpListener listener(0);
  std::unique_ptr<Channel> server;
  std::thread acceptor([&] { server = listener.accept(); });
  auto client = connect_tcp("127.0.0.1", listener.port());
  acceptor.join();
  const auto frames = random_frames(300, 3);
  echo_roundtrip(*client, *server, frames);

  auto [a, b] = make_inprocess_channel_pair();
  echo_roundtrip(*a, *b, frames);
  CHECK(client->sent().bytes == a->sent().bytes);
  CHECK(server->received().bytes == b->received().bytes);
  client->close();
  CHECK_THROWS_AS(server->recv(), ChannelClosed);
}

TEST_CASE("endpoint parsing") {
  CHECK(parse_endpoint("localhost:9000") == std::pair<std::string, uint16_t>{"localhost", 9000});
  CHECK(parse_endpoint(":77").first == "127.0.0.1");
  CHECK_THROWS_AS(parse_endpoint("nohost"), ParamError);
  CHECK_THROWS_AS(parse_endpoint("h:99999"), ParamError);
}
