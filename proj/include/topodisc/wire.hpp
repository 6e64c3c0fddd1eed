#pragma once

#include <cstdint>
#include <cstring>
#include <deque>
#include <optional>
#include <vector>

#include "error.hpp"

namespace topodisc {

// Probe wire protocol, version-tagged by a 4-byte connection preamble:
//
//   preamble  'T' 'P' 'D' <version>         version is the ASCII digit '1'
//   frame     length(4, big-endian) opcode(1) payload(length)
//
// Opcodes: PING(1) carries an arbitrary payload echoed verbatim in PONG(2).
// BURST_DATA(3) is sunk by the receiver; BURST_END(4, empty) elicits exactly
// one BURST_ACK(5, empty).

inline constexpr char kPreamble[4] = {'T', 'P', 'D', '1'};
inline constexpr size_t kMaxFramePayload = 16u << 20;

enum class Opcode : uint8_t {
  ping = 1,
  pong = 2,
  burst_data = 3,
  burst_end = 4,
  burst_ack = 5,
};

struct Frame {
  Opcode op = Opcode::ping;
  std::vector<uint8_t> payload;
};

inline void encode_frame_header(uint8_t out[5], Opcode op, size_t payload_len) {
  if (payload_len > kMaxFramePayload)
    throw ProtocolError("frame payload exceeds protocol maximum");
  out[0] = uint8_t(payload_len >> 24);
  out[1] = uint8_t(payload_len >> 16);
  out[2] = uint8_t(payload_len >> 8);
  out[3] = uint8_t(payload_len);
  out[4] = uint8_t(op);
}

inline std::vector<uint8_t> encode_frame(Opcode op,
                                         const std::vector<uint8_t>& payload) {
  std::vector<uint8_t> bytes(5 + payload.size());
  encode_frame_header(bytes.data(), op, payload.size());
  std::memcpy(bytes.data() + 5, payload.data(), payload.size());
  return bytes;
}

inline bool valid_opcode(uint8_t raw) { return raw >= 1 && raw <= 5; }

// Incremental decoder for byte streams that may deliver partial frames.
class FrameDecoder {
 public:
  void feed(const uint8_t* data, size_t len) {
    buffer_.insert(buffer_.end(), data, data + len);
  }

  std::optional<Frame> next() {
    if (buffer_.size() < 5) return std::nullopt;
    uint32_t len = (uint32_t(buffer_[0]) << 24) | (uint32_t(buffer_[1]) << 16) |
                   (uint32_t(buffer_[2]) << 8) | uint32_t(buffer_[3]);
    if (len > kMaxFramePayload) throw ProtocolError("oversized frame");
    if (!valid_opcode(buffer_[4])) throw ProtocolError("unknown opcode");
    if (buffer_.size() < 5 + size_t(len)) return std::nullopt;
    Frame frame;
    frame.op = Opcode(buffer_[4]);
    frame.payload.assign(buffer_.begin() + 5, buffer_.begin() + 5 + len);
    buffer_.erase(buffer_.begin(), buffer_.begin() + 5 + len);
    return frame;
  }

 private:
  std::deque<uint8_t> buffer_;
};

}  // namespace topodisc
