#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "gru2pc/aes.hpp"

namespace gru2pc {

/// Oblivious transfer of 16-byte labels.
///
/// Both modes first produce random OTs offline (sender: pad pairs; receiver: a
/// random choice bit and the matching pad). Online, the receiver sends
/// d = b ^ c per transfer (bit-packed) and the sender answers with
/// (x0 ^ m_d, x1 ^ m_{1-d}), 32 bytes per transfer.
enum class OtMode : uint8_t {
  Dealer,       // trusted dealer deals correlated randomness; not secure, zero crypto cost
  ChouOrlandi,  // base OT over ristretto255, one group element per transfer
};

struct RandomOtSender {
  std::vector<std::array<Block, 2>> pads;
};

struct RandomOtReceiver {
  std::vector<uint8_t> choices;
  std::vector<Block> pads;  // pads[i] == sender pads[i][choices[i]]
};

/// Both halves of n random OTs from one seed (the dealer stand-in).
void dealer_random_ot(std::size_t n, Block seed, RandomOtSender& sender, RandomOtReceiver& receiver);
/// Bytes the dealer would ship to the receiver for n random OTs (choice bits and pads).
std::size_t dealer_transcript_bytes(std::size_t n);

inline constexpr std::size_t kPointBytes = 32;

class CoOtSender {
 public:
  explicit CoOtSender(Block seed);
  /// A = a*G.
  std::vector<uint8_t> first_message() const;
  /// Consumes one point B_i per OT; ProtocolError on malformed input.
  RandomOtSender finish(std::span<const uint8_t> receiver_msg) const;

 private:
  std::array<uint8_t, 32> a_{}, A_{};
};

class CoOtReceiver {
 public:
  CoOtReceiver(Block seed, std::size_t n);
  /// B_i = b_i*G + c_i*A for every OT; ProtocolError if A is not a valid point.
  std::vector<uint8_t> respond(std::span<const uint8_t> sender_msg);
  const RandomOtReceiver& result() const { return out_; }

 private:
  std::vector<std::array<uint8_t, 32>> b_;
  RandomOtReceiver out_;
};

/// Receiver's online message for transfers [offset, offset + bits.size()).
std::vector<uint8_t> ot_flip_message(const RandomOtReceiver& r, std::size_t offset, std::span<const uint8_t> bits);
/// Sender's online answer: 32 bytes per pair.
std::vector<uint8_t> ot_sender_message(const RandomOtSender& s, std::size_t offset,
                                       std::span<const std::array<Block, 2>> pairs, std::span<const uint8_t> flips);
/// Receiver recovers x_b for every transfer.
std::vector<Block> ot_receive(const RandomOtReceiver& r, std::size_t offset, std::span<const uint8_t> bits,
                              std::span<const uint8_t> sender_msg);

struct OtTranscript {
  std::size_t transfers = 0;
  std::size_t offline_bytes = 0;
  std::size_t online_bytes = 0;
  std::size_t total() const { return offline_bytes + online_bytes; }
};

/// Runs both roles in-process; returns the receiver's labels and accounts every message.
std::vector<Block> ot_transfer(OtMode mode, std::span<const std::array<Block, 2>> pairs, std::span<const uint8_t> choices,
                               Block seed, OtTranscript* transcript = nullptr);

}  // namespace gru2pc
