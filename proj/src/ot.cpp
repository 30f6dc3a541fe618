#include "gru2pc/ot.hpp"

#include <sodium.h>

#include <cstring>

#include "gru2pc/errors.hpp"

namespace gru2pc {

namespace {

void ensure_sodium() {
  static const int rc = sodium_init();
  if (rc < 0) throw ProtocolError("libsodium initialization failed");
}

std::array<uint8_t, 32> scalar_from(Prg& prg) {
  uint8_t wide[64];
  prg.fill_bytes(std::span<uint8_t>(wide, sizeof wide));
  std::array<uint8_t, 32> s{};
  crypto_core_ristretto255_scalar_reduce(s.data(), wide);
  return s;
}

// Pad for OT i derived from the shared point.
Block pad_of(std::size_t i, const uint8_t* point) {
  uint8_t in[8 + 32];
  for (int k = 0; k < 8; ++k) in[k] = static_cast<uint8_t>(static_cast<uint64_t>(i) >> (8 * k));
  std::memcpy(in + 8, point, 32);
  uint8_t out[16];
  crypto_generichash(out, sizeof out, in, sizeof in, nullptr, 0);
  return Block::load(out);
}

}  // namespace

void dealer_random_ot(std::size_t n, Block seed, RandomOtSender& sender, RandomOtReceiver& receiver) {
  Prg prg(seed);
  sender.pads.resize(n);
  receiver.choices.resize(n);
  receiver.pads.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    sender.pads[i] = {prg.next_block(), prg.next_block()};
    receiver.choices[i] = prg.next_bit();
    receiver.pads[i] = sender.pads[i][receiver.choices[i]];
  }
}

std::size_t dealer_transcript_bytes(std::size_t n) { return (n + 7) / 8 + 16 * n; }

CoOtSender::CoOtSender(Block seed) {
  ensure_sodium();
  Prg prg(seed);
  a_ = scalar_from(prg);
  crypto_scalarmult_ristretto255_base(A_.data(), a_.data());
}

std::vector<uint8_t> CoOtSender::first_message() const { return {A_.begin(), A_.end()}; }

RandomOtSender CoOtSender::finish(std::span<const uint8_t> msg) const {
  if (msg.size() % kPointBytes != 0) throw ProtocolError("receiver OT message has a partial point");
  const std::size_t n = msg.size() / kPointBytes;
  RandomOtSender out;
  out.pads.resize(n);
  uint8_t shared[32], diff[32];
  for (std::size_t i = 0; i < n; ++i) {
    const uint8_t* B = msg.data() + i * kPointBytes;
    if (!crypto_core_ristretto255_is_valid_point(B)) throw ProtocolError("invalid point in receiver OT message");
    if (crypto_scalarmult_ristretto255(shared, a_.data(), B) != 0) throw ProtocolError("degenerate OT point");
    out.pads[i][0] = pad_of(i, shared);
    crypto_core_ristretto255_sub(diff, B, A_.data());
    // B - A is the identity only when b_i = 0 and c_i = 1, which happens with negligible probability.
    if (crypto_scalarmult_ristretto255(shared, a_.data(), diff) != 0) throw ProtocolError("degenerate OT point");
    out.pads[i][1] = pad_of(i, shared);
  }
  return out;
}

CoOtReceiver::CoOtReceiver(Block seed, std::size_t n) {
  ensure_sodium();
  Prg prg(seed);
  b_.resize(n);
  out_.choices.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    b_[i] = scalar_from(prg);
    out_.choices[i] = prg.next_bit();
  }
}

std::vector<uint8_t> CoOtReceiver::respond(std::span<const uint8_t> sender_msg) {
  if (sender_msg.size() != kPointBytes || !crypto_core_ristretto255_is_valid_point(sender_msg.data()))
    throw ProtocolError("invalid sender OT message");
  const uint8_t* A = sender_msg.data();
  const std::size_t n = b_.size();
  std::vector<uint8_t> msg(n * kPointBytes);
  out_.pads.resize(n);
  uint8_t bG[32], shared[32];
  for (std::size_t i = 0; i < n; ++i) {
    crypto_scalarmult_ristretto255_base(bG, b_[i].data());
    uint8_t* B = msg.data() + i * kPointBytes;
    if (out_.choices[i]) crypto_core_ristretto255_add(B, A, bG);
    else std::memcpy(B, bG, 32);
    if (crypto_scalarmult_ristretto255(shared, b_[i].data(), A) != 0) throw ProtocolError("degenerate OT point");
    out_.pads[i] = pad_of(i, shared);
  }
  return msg;
}

std::vector<uint8_t> ot_flip_message(const RandomOtReceiver& r, std::size_t offset, std::span<const uint8_t> bits) {
  if (offset + bits.size() > r.choices.size()) throw ProtocolError("random OT pool exhausted");
  std::vector<uint8_t> msg((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i)
    if ((bits[i] & 1) ^ r.choices[offset + i]) msg[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
  return msg;
}

std::vector<uint8_t> ot_sender_message(const RandomOtSender& s, std::size_t offset,
                                       std::span<const std::array<Block, 2>> pairs, std::span<const uint8_t> flips) {
  if (offset + pairs.size() > s.pads.size()) throw ProtocolError("random OT pool exhausted");
  if (flips.size() != (pairs.size() + 7) / 8) throw ProtocolError("OT flip message has the wrong length");
  std::vector<uint8_t> msg(pairs.size() * 32);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const int d = (flips[i / 8] >> (i % 8)) & 1;
    const auto& m = s.pads[offset + i];
    (pairs[i][0] ^ m[d]).store(msg.data() + 32 * i);
    (pairs[i][1] ^ m[1 - d]).store(msg.data() + 32 * i + 16);
  }
  return msg;
}

std::vector<Block> ot_receive(const RandomOtReceiver& r, std::size_t offset, std::span<const uint8_t> bits,
                              std::span<const uint8_t> sender_msg) {
  if (sender_msg.size() != 32 * bits.size()) throw ProtocolError("OT sender message has the wrong length");
  if (offset + bits.size() > r.pads.size()) throw ProtocolError("random OT pool exhausted");
  std::vector<Block> out(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i)
    out[i] = Block::load(sender_msg.data() + 32 * i + 16 * (bits[i] & 1)) ^ r.pads[offset + i];
  return out;
}

std::vector<Block> ot_transfer(OtMode mode, std::span<const std::array<Block, 2>> pairs, std::span<const uint8_t> choices,
                               Block seed, OtTranscript* transcript) {
  if (pairs.size() != choices.size()) throw ProtocolError("OT pair and choice counts differ");
  const std::size_t n = pairs.size();
  RandomOtSender s;
  RandomOtReceiver r;
  std::size_t offline = 0;
  if (mode == OtMode::Dealer) {
    dealer_random_ot(n, seed, s, r);
    offline = dealer_transcript_bytes(n);
  } else {
    CoOtSender snd(seed);
    CoOtReceiver rcv(seed ^ Block::from_u64(0x5f, 0xa0), n);
    const auto m1 = snd.first_message();
    const auto m2 = rcv.respond(m1);
    s = snd.finish(m2);
    r = rcv.result();
    offline = m1.size() + m2.size();
  }
  const auto flips = ot_flip_message(r, 0, choices);
  const auto answer = ot_sender_message(s, 0, pairs, flips);
  auto out = ot_receive(r, 0, choices, answer);
  if (transcript) {
    transcript->transfers += n;
    transcript->offline_bytes += offline;
    transcript->online_bytes += flips.size() + answer.size();
  }
  return out;
}

}  // namespace gru2pc
