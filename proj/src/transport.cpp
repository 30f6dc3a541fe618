#include "gru2pc/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include "gru2pc/errors.hpp"

namespace gru2pc {

std::string to_string(MsgType t) {
  switch (t) {
    case MsgType::PK: return "PK";
    case MsgType::MASKED_CT: return "MASKED_CT";
    case MsgType::GC_TABLES: return "GC_TABLES";
    case MsgType::OT_MSG: return "OT_MSG";
    case MsgType::REMASKED_CT: return "REMASKED_CT";
    case MsgType::CONTROL: return "CONTROL";
  }
  return "?";
}

std::string to_string(Phase p) {
  switch (p) {
    case Phase::SETUP: return "setup";
    case Phase::OFFLINE: return "offline";
    case Phase::ONLINE: return "online";
  }
  return "?";
}

std::array<uint8_t, kFrameHeaderBytes> encode_frame_header(const Frame& f) {
  if (f.payload.size() > kMaxFramePayload) throw FrameError("payload too large");
  const auto n = static_cast<uint32_t>(f.payload.size());
  return {static_cast<uint8_t>(n >> 24), static_cast<uint8_t>(n >> 16), static_cast<uint8_t>(n >> 8),
          static_cast<uint8_t>(n), static_cast<uint8_t>(f.type), static_cast<uint8_t>(f.phase)};
}

std::vector<uint8_t> encode_frame(const Frame& f) {
  const auto h = encode_frame_header(f);
  std::vector<uint8_t> out(kFrameHeaderBytes + f.payload.size());
  std::copy(h.begin(), h.end(), out.begin());
  std::copy(f.payload.begin(), f.payload.end(), out.begin() + kFrameHeaderBytes);
  return out;
}

FrameHeader decode_frame_header(std::span<const uint8_t, kFrameHeaderBytes> h) {
  FrameHeader fh{};
  fh.length = (uint32_t{h[0]} << 24) | (uint32_t{h[1]} << 16) | (uint32_t{h[2]} << 8) | h[3];
  if (fh.length > kMaxFramePayload) throw FrameError("frame length " + std::to_string(fh.length) + " exceeds limit");
  if (h[4] < 1 || h[4] > 6) throw FrameError("unknown msg_type " + std::to_string(h[4]));
  if (h[5] > 2) throw FrameError("unknown phase " + std::to_string(h[5]));
  fh.type = static_cast<MsgType>(h[4]);
  fh.phase = static_cast<Phase>(h[5]);
  return fh;
}

void TrafficCounters::add(Phase p, MsgType t, uint64_t wire_bytes) {
  bytes[static_cast<std::size_t>(p)][static_cast<std::size_t>(t)] += wire_bytes;
  frames[static_cast<std::size_t>(p)][static_cast<std::size_t>(t)] += 1;
}

uint64_t TrafficCounters::phase_bytes(Phase p) const {
  uint64_t s = 0;
  for (uint64_t b : bytes[static_cast<std::size_t>(p)]) s += b;
  return s;
}

uint64_t TrafficCounters::phase_frames(Phase p) const {
  uint64_t s = 0;
  for (uint64_t b : frames[static_cast<std::size_t>(p)]) s += b;
  return s;
}

uint64_t TrafficCounters::type_bytes(MsgType t) const {
  uint64_t s = 0;
  for (const auto& row : bytes) s += row[static_cast<std::size_t>(t)];
  return s;
}

uint64_t TrafficCounters::total_bytes() const {
  uint64_t s = 0;
  for (std::size_t p = 0; p < kPhaseCount; ++p) s += phase_bytes(static_cast<Phase>(p));
  return s;
}

void Channel::send(const Frame& f) {
  const auto h = encode_frame_header(f);
  std::lock_guard lock(send_mu_);
  if (poisoned_) throw FrameError("channel poisoned by an earlier framing error");
  write_bytes(h, std::vector<uint8_t>(f.payload));
  sent_.add(f.phase, f.type, kFrameHeaderBytes + f.payload.size());
}

void Channel::send(MsgType t, Phase p, std::vector<uint8_t> payload) {
  const std::size_t n = payload.size();
  if (n > kMaxFramePayload) throw FrameError("payload too large");
  // Header computed from the length only, so the payload can be moved.
  const std::array<uint8_t, kFrameHeaderBytes> h = {
      static_cast<uint8_t>(n >> 24), static_cast<uint8_t>(n >> 16), static_cast<uint8_t>(n >> 8),
      static_cast<uint8_t>(n), static_cast<uint8_t>(t), static_cast<uint8_t>(p)};
  std::lock_guard lock(send_mu_);
  if (poisoned_) throw FrameError("channel poisoned by an earlier framing error");
  write_bytes(h, std::move(payload));
  sent_.add(p, t, kFrameHeaderBytes + n);
}

Frame Channel::recv() {
  std::lock_guard lock(recv_mu_);
  if (poisoned_) throw FrameError("channel poisoned by an earlier framing error");
  const auto raw = read_bytes(kFrameHeaderBytes);
  FrameHeader h{};
  try {
    h = decode_frame_header(std::span<const uint8_t, kFrameHeaderBytes>(raw.data(), kFrameHeaderBytes));
  } catch (const FrameError&) {
    poisoned_ = true;
    throw;
  }
  Frame f{h.type, h.phase, read_bytes(h.length)};
  received_.add(h.phase, h.type, kFrameHeaderBytes + h.length);
  return f;
}

Frame Channel::expect(MsgType t) {
  Frame f = recv();
  if (f.type != t) throw ProtocolError("expected " + to_string(t) + " frame, got " + to_string(f.type));
  return f;
}

TrafficCounters Channel::sent() const {
  std::lock_guard lock(send_mu_);
  return sent_;
}

TrafficCounters Channel::received() const {
  std::lock_guard lock(recv_mu_);
  return received_;
}

namespace {

struct Pipe {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::vector<uint8_t>> chunks;
  std::size_t front_offset = 0;
  std::size_t available = 0;
  bool closed = false;

  void push(std::vector<uint8_t>&& bytes) {
    if (bytes.empty()) return;
    std::lock_guard lock(mu);
    if (closed) throw ChannelClosed("write to a closed channel");
    available += bytes.size();
    chunks.push_back(std::move(bytes));
    cv.notify_all();
  }

  std::vector<uint8_t> pop(std::size_t n) {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return available >= n || closed; });
    if (available < n) throw ChannelClosed("peer closed the channel");
    available -= n;
    if (front_offset == 0 && !chunks.empty() && chunks.front().size() == n) {
      auto out = std::move(chunks.front());
      chunks.pop_front();
      return out;
    }
    std::vector<uint8_t> out;
    out.reserve(n);
    while (out.size() < n) {
      auto& c = chunks.front();
      const std::size_t take = std::min(n - out.size(), c.size() - front_offset);
      out.insert(out.end(), c.begin() + front_offset, c.begin() + front_offset + take);
      front_offset += take;
      if (front_offset == c.size()) {
        chunks.pop_front();
        front_offset = 0;
      }
    }
    return out;
  }

  void close() {
    std::lock_guard lock(mu);
    closed = true;
    cv.notify_all();
  }
};

class InprocChannel final : public Channel {
 public:
  InprocChannel(std::shared_ptr<Pipe> out, std::shared_ptr<Pipe> in) : out_(std::move(out)), in_(std::move(in)) {}
  ~InprocChannel() override { close(); }
  void close() override {
    out_->close();
    in_->close();
  }
  void inject(std::vector<uint8_t> bytes) { out_->push(std::move(bytes)); }

 protected:
  void write_bytes(std::span<const uint8_t> header, std::vector<uint8_t>&& payload) override {
    // Header and payload land under one lock so frames never interleave.
    std::lock_guard lock(out_->mu);
    if (out_->closed) throw ChannelClosed("write to a closed channel");
    out_->available += header.size() + payload.size();
    out_->chunks.emplace_back(header.begin(), header.end());
    if (!payload.empty()) out_->chunks.push_back(std::move(payload));
    out_->cv.notify_all();
  }
  std::vector<uint8_t> read_bytes(std::size_t n) override { return n == 0 ? std::vector<uint8_t>{} : in_->pop(n); }

 private:
  std::shared_ptr<Pipe> out_, in_;
};

class SocketChannel final : public Channel {
 public:
  explicit SocketChannel(int fd) : fd_(fd) {
    int one = 1;
    setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~SocketChannel() override { close(); }
  void close() override {
    std::lock_guard lock(close_mu_);
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 protected:
  void write_bytes(std::span<const uint8_t> header, std::vector<uint8_t>&& payload) override {
    write_all(header.data(), header.size());
    write_all(payload.data(), payload.size());
  }
  std::vector<uint8_t> read_bytes(std::size_t n) override {
    std::vector<uint8_t> out(n);
    std::size_t got = 0;
    while (got < n) {
      const ssize_t r = ::recv(fd_, out.data() + got, n - got, 0);
      if (r == 0) throw ChannelClosed("peer closed the connection");
      if (r < 0) {
        if (errno == EINTR) continue;
        throw ChannelClosed(std::string("recv failed: ") + std::strerror(errno));
      }
      got += static_cast<std::size_t>(r);
    }
    return out;
  }

 private:
  void write_all(const uint8_t* p, std::size_t n) {
    while (n > 0) {
      const ssize_t w = ::send(fd_, p, n, MSG_NOSIGNAL);
      if (w < 0) {
        if (errno == EINTR) continue;
        throw ChannelClosed(std::string("send failed: ") + std::strerror(errno));
      }
      p += w;
      n -= static_cast<std::size_t>(w);
    }
  }

  int fd_;
  std::mutex close_mu_;
};

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_inprocess_channel_pair() {
  auto ab = std::make_shared<Pipe>(), ba = std::make_shared<Pipe>();
  return {std::make_unique<InprocChannel>(ab, ba), std::make_unique<InprocChannel>(ba, ab)};
}

void inject_raw_bytes(Channel& sender_endpoint, std::vector<uint8_t> bytes) {
  auto* c = dynamic_cast<InprocChannel*>(&sender_endpoint);
  if (!c) throw FrameError("raw injection needs an in-process channel");
  c->inject(std::move(bytes));
}

TcpListener::TcpListener(uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw ChannelClosed("socket() failed");
  int one = 1;
  setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(fd_, 1) < 0) {
    ::close(fd_);
    throw ChannelClosed("cannot listen on port " + std::to_string(port) + ": " + std::strerror(errno));
  }
  socklen_t len = sizeof addr;
  getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Channel> TcpListener::accept() {
  const int c = ::accept(fd_, nullptr, nullptr);
  if (c < 0) throw ChannelClosed(std::string("accept failed: ") + std::strerror(errno));
  return std::make_unique<SocketChannel>(c);
}

std::unique_ptr<Channel> listen_tcp(uint16_t port, uint16_t* bound_port) {
  TcpListener l(port);
  if (bound_port) *bound_port = l.port();
  return l.accept();
}

std::unique_ptr<Channel> connect_tcp(const std::string& host, uint16_t port, int retries) {
  addrinfo hints{}, *res = nullptr;
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
    throw ChannelClosed("cannot resolve " + host);
  for (int attempt = 0;; ++attempt) {
    const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) == 0) {
      freeaddrinfo(res);
      return std::make_unique<SocketChannel>(fd);
    }
    if (fd >= 0) ::close(fd);
    if (attempt >= retries) {
      freeaddrinfo(res);
      throw ChannelClosed("cannot connect to " + host + ":" + std::to_string(port));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
}

std::pair<std::string, uint16_t> parse_endpoint(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon + 1 == s.size()) throw ParamError("endpoint must be host:port, got '" + s + "'");
  const std::string host = colon == 0 ? "127.0.0.1" : s.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(s.substr(colon + 1));
  } catch (const std::exception&) {
    throw ParamError("bad port in '" + s + "'");
  }
  if (port < 0 || port > 65535) throw ParamError("bad port in '" + s + "'");
  return {host, static_cast<uint16_t>(port)};
}

}  // namespace gru2pc
