#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "core.hpp"
#include "net.hpp"
#include "wire.hpp"

namespace topodisc {

// Blocking byte stream between a prober and a probe server.
class Stream {
 public:
  virtual ~Stream() = default;
  virtual void write_all(const void* data, size_t len) = 0;
  virtual void read_all(void* data, size_t len) = 0;
};

// Connection factory plus the clock probes must use for all timing, so a
// deterministic transport can supply a virtual clock.
class Transport {
 public:
  virtual ~Transport() = default;

  // `src` names the measuring vantage. The TCP transport always measures
  // from the local host and ignores it; the fake transport uses it to pick
  // the planted (src, dst) link model.
  virtual std::unique_ptr<Stream> connect(const NodeId& src,
                                          const Endpoint& dst) = 0;

  virtual double now_us() = 0;
};

inline void send_frame(Stream& stream, Opcode op,
                       const std::vector<uint8_t>& payload) {
  uint8_t header[5];
  encode_frame_header(header, op, payload.size());
  stream.write_all(header, sizeof header);
  if (!payload.empty()) stream.write_all(payload.data(), payload.size());
}

inline Frame recv_frame(Stream& stream) {
  uint8_t header[5];
  stream.read_all(header, sizeof header);
  uint32_t len = (uint32_t(header[0]) << 24) | (uint32_t(header[1]) << 16) |
                 (uint32_t(header[2]) << 8) | uint32_t(header[3]);
  if (len > kMaxFramePayload) throw ProtocolError("oversized frame");
  if (!valid_opcode(header[4])) throw ProtocolError("unknown opcode");
  Frame frame;
  frame.op = Opcode(header[4]);
  frame.payload.resize(len);
  if (len > 0) stream.read_all(frame.payload.data(), len);
  return frame;
}

class TcpStream final : public Stream {
 public:
  explicit TcpStream(Socket socket) : socket_(std::move(socket)) {}

  void write_all(const void* data, size_t len) override {
    socket_.send_all(data, len);
  }
  void read_all(void* data, size_t len) override {
    socket_.recv_all(data, len);
  }

 private:
  Socket socket_;
};

class TcpTransport final : public Transport {
 public:
  explicit TcpTransport(std::chrono::milliseconds io_timeout =
                            std::chrono::milliseconds(5000))
      : io_timeout_(io_timeout) {}

  std::unique_ptr<Stream> connect(const NodeId& /*src*/,
                                  const Endpoint& dst) override {
    return std::make_unique<TcpStream>(connect_to(dst, io_timeout_));
  }

  double now_us() override {
    auto now = std::chrono::steady_clock::now().time_since_epoch();
    return std::chrono::duration<double, std::micro>(now).count();
  }

 private:
  std::chrono::milliseconds io_timeout_;
};

}  // namespace topodisc
