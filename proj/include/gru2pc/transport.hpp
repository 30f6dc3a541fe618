#pragma once

#include <array>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace gru2pc {

enum class MsgType : uint8_t { PK = 1, MASKED_CT = 2, GC_TABLES = 3, OT_MSG = 4, REMASKED_CT = 5, CONTROL = 6 };
enum class Phase : uint8_t { SETUP = 0, OFFLINE = 1, ONLINE = 2 };

inline constexpr std::size_t kMsgTypeCount = 7;  // indexable by the enum value
inline constexpr std::size_t kPhaseCount = 3;
/// length (4, big-endian) + msg_type (1) + phase (1).
inline constexpr std::size_t kFrameHeaderBytes = 6;
/// Frames above this are treated as a corrupted length field.
inline constexpr uint32_t kMaxFramePayload = 1u << 30;

std::string to_string(MsgType t);
std::string to_string(Phase p);

struct Frame {
  MsgType type = MsgType::CONTROL;
  Phase phase = Phase::SETUP;
  std::vector<uint8_t> payload;
};

std::array<uint8_t, kFrameHeaderBytes> encode_frame_header(const Frame& f);
/// Full wire image of one frame.
std::vector<uint8_t> encode_frame(const Frame& f);

struct FrameHeader {
  uint32_t length;
  MsgType type;
  Phase phase;
};
/// Throws FrameError on an unknown type or phase, or a length above kMaxFramePayload.
FrameHeader decode_frame_header(std::span<const uint8_t, kFrameHeaderBytes> h);

/// Bytes and frame counts per (phase, msg_type), in one direction.
struct TrafficCounters {
  std::array<std::array<uint64_t, kMsgTypeCount>, kPhaseCount> bytes{};
  std::array<std::array<uint64_t, kMsgTypeCount>, kPhaseCount> frames{};

  void add(Phase p, MsgType t, uint64_t wire_bytes);
  uint64_t phase_bytes(Phase p) const;
  uint64_t phase_frames(Phase p) const;
  uint64_t type_bytes(MsgType t) const;
  uint64_t total_bytes() const;
};

/// Ordered, framed, bidirectional byte stream between two endpoints.
///
/// send and recv may be called from different threads; each direction is
/// serialized internally. Any framing error poisons the channel: later calls
/// throw FrameError.
class Channel {
 public:
  virtual ~Channel() = default;

  void send(const Frame& f);
  void send(MsgType t, Phase p, std::vector<uint8_t> payload);
  Frame recv();
  /// recv that also checks the type; ProtocolError on mismatch.
  Frame expect(MsgType t);
  virtual void close() = 0;

  /// Wire bytes (header + payload) this endpoint sent / received.
  TrafficCounters sent() const;
  TrafficCounters received() const;

 protected:
  virtual void write_bytes(std::span<const uint8_t> header, std::vector<uint8_t>&& payload) = 0;
  /// Reads exactly n bytes or throws ChannelClosed.
  virtual std::vector<uint8_t> read_bytes(std::size_t n) = 0;

 private:
  mutable std::mutex send_mu_, recv_mu_;
  TrafficCounters sent_, received_;
  bool poisoned_ = false;
};

/// Two endpoints of an in-memory byte pipe.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_inprocess_channel_pair();

/// Raw byte injection for tests of the framing layer: writes bytes straight into
/// the pipe feeding `peer`'s reads.
void inject_raw_bytes(Channel& sender_endpoint, std::vector<uint8_t> bytes);

/// Plain TCP. listen_tcp blocks until one peer connects.
std::unique_ptr<Channel> connect_tcp(const std::string& host, uint16_t port, int retries = 50);
std::unique_ptr<Channel> listen_tcp(uint16_t port, uint16_t* bound_port = nullptr);

/// A listening socket whose port is known before accept (port 0 picks a free one).
class TcpListener {
 public:
  explicit TcpListener(uint16_t port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  uint16_t port() const { return port_; }
  std::unique_ptr<Channel> accept();

 private:
  int fd_ = -1;
  uint16_t port_ = 0;
};

/// Parses "host:port".
std::pair<std::string, uint16_t> parse_endpoint(const std::string& s);

}  // namespace gru2pc
