#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "core.hpp"
#include "text.hpp"
#include "transport.hpp"
#include "wire.hpp"

namespace topodisc {

// Planted per-link model: a one-way latency plus a per-message gap that grows
// linearly with payload size (gap_base + gap_per_byte * payload).
struct FakeLink {
  double latency_us = 50.0;
  double gap_base_us = 5.0;
  double gap_per_byte_us = 0.008;  // 1 Gbit/s

  double gap_us(size_t payload_bytes) const {
    return gap_base_us + gap_per_byte_us * double(payload_bytes);
  }
};

// Deterministic in-process transport with a virtual clock. Sending a frame
// occupies the sender for the link gap of its payload size; the frame reaches
// the peer one latency later; the modelled server echoes PINGs, sinks bursts
// and acknowledges BURST_END, each reply costing a gap plus a latency. All
// delays are optionally jittered by a seeded multiplicative factor, so runs
// are reproducible bit for bit.
//
// This is the closed-loop oracle for the parameter estimator: under this
// model a ping-pong of size m takes exactly 2*latency + 2*gap(m) and the
// steady-state inter-send interval of a burst is exactly gap(m).
//
// Single-threaded use only. Endpoints address nodes by id: connect to
// Endpoint{node_id, 0}.
class FakeTransport final : public Transport {
 public:
  FakeTransport() = default;
  explicit FakeTransport(FakeLink default_link, double jitter_fraction = 0.0,
                         uint64_t seed = 0)
      : default_link_(default_link),
        has_default_(true),
        jitter_(jitter_fraction),
        seed_(seed) {}

  void set_default_link(const FakeLink& link) {
    default_link_ = link;
    has_default_ = true;
  }
  void set_link(const NodeId& src, const NodeId& dst, const FakeLink& link) {
    links_[{src, dst}] = link;
  }
  void set_down(const NodeId& node, bool down = true) {
    if (down)
      down_.insert(node);
    else
      down_.erase(node);
  }
  void set_jitter(double fraction) { jitter_ = fraction; }
  void set_seed(uint64_t seed) { seed_ = seed; }

  std::unique_ptr<Stream> connect(const NodeId& src,
                                  const Endpoint& dst) override;

  double now_us() override { return clock_us_; }

  int open_sessions() const { return open_sessions_; }
  int max_open_sessions() const { return max_open_sessions_; }

  // --- fake network file format ---------------------------------------------
  //
  //   fakenet v1
  //   seed <u64>
  //   jitter <fraction>
  //   default <latency_us> <gap_base_us> <gap_per_byte_us>
  //   link <src> <dst> <latency_us> <gap_base_us> <gap_per_byte_us>
  //   down <node>
  static FakeTransport from_file(std::string_view text,
                                 const std::string& source = "fakenet") {
    LineScanner in(text, source);
    in.expect_header("fakenet");
    FakeTransport net;
    while (in.next()) {
      if (in.keyword() == "seed") {
        in.want(2);
        net.seed_ = in.uint(1);
      } else if (in.keyword() == "jitter") {
        in.want(2);
        net.jitter_ = in.num(1);
      } else if (in.keyword() == "default") {
        in.want(4);
        net.set_default_link({in.num(1), in.num(2), in.num(3)});
      } else if (in.keyword() == "link") {
        in.want(6);
        net.set_link(in.tok(1), in.tok(2), {in.num(3), in.num(4), in.num(5)});
      } else if (in.keyword() == "down") {
        in.want(2);
        net.set_down(in.tok(1));
      } else {
        in.fail("unknown record '" + in.keyword() + "'");
      }
    }
    return net;
  }

 private:
  friend class FakeStream;

  std::map<std::pair<NodeId, NodeId>, FakeLink> links_;
  FakeLink default_link_;
  bool has_default_ = false;
  std::set<NodeId> down_;
  double jitter_ = 0.0;
  uint64_t seed_ = 0;
  double clock_us_ = 0.0;
  uint64_t sessions_opened_ = 0;
  int open_sessions_ = 0;
  int max_open_sessions_ = 0;
};

class FakeStream final : public Stream {
 public:
  FakeStream(FakeTransport* net, FakeLink link, uint64_t stream_seed)
      : net_(net), link_(link), rng_state_(stream_seed) {
    net_->open_sessions_++;
    net_->max_open_sessions_ =
        std::max(net_->max_open_sessions_, net_->open_sessions_);
  }

  ~FakeStream() override { net_->open_sessions_--; }

  void write_all(const void* data, size_t len) override {
    const uint8_t* bytes = static_cast<const uint8_t*>(data);
    if (!preamble_done_) {
      while (len > 0 && preamble_seen_ < 4) {
        if (*bytes != uint8_t(kPreamble[preamble_seen_]))
          throw ProtocolError("bad connection preamble");
        ++bytes;
        --len;
        ++preamble_seen_;
      }
      if (preamble_seen_ == 4) preamble_done_ = true;
      if (len == 0) return;
    }
    decoder_.feed(bytes, len);
    while (auto frame = decoder_.next()) handle_frame(*frame);
  }

  void read_all(void* data, size_t len) override {
    uint8_t* out = static_cast<uint8_t*>(data);
    while (len > 0) {
      if (inbox_.empty())
        throw TransportError("connection closed by peer");  // nothing pending
      Reply& reply = inbox_.front();
      if (reply.offset == 0)
        net_->clock_us_ = std::max(net_->clock_us_, reply.ready_us);
      size_t take = std::min(len, reply.bytes.size() - reply.offset);
      std::copy_n(reply.bytes.begin() + reply.offset, take, out);
      reply.offset += take;
      out += take;
      len -= take;
      if (reply.offset == reply.bytes.size()) inbox_.pop_front();
    }
  }

 private:
  struct Reply {
    double ready_us;
    std::vector<uint8_t> bytes;
    size_t offset = 0;
  };

  // Multiplicative jitter factor in [1-f, 1+f); exactly 1 when jitter is off
  // so zero-jitter runs do not depend on how many draws happened before.
  double jittered(double value) {
    if (net_->jitter_ == 0.0) return value;
    uint64_t z = (rng_state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z = z ^ (z >> 31);
    double unit = double(z >> 11) * (2.0 / 9007199254740992.0) - 1.0;
    return value * (1.0 + net_->jitter_ * unit);
  }

  void handle_frame(const Frame& frame) {
    // sender occupies the link for one gap
    net_->clock_us_ += jittered(link_.gap_us(frame.payload.size()));
    double arrival = net_->clock_us_ + jittered(link_.latency_us);
    server_free_us_ = std::max(server_free_us_, arrival);

    switch (frame.op) {
      case Opcode::ping: {
        server_free_us_ += jittered(link_.gap_us(frame.payload.size()));
        double ready = server_free_us_ + jittered(link_.latency_us);
        inbox_.push_back({ready, encode_frame(Opcode::pong, frame.payload)});
        break;
      }
      case Opcode::burst_data:
        break;  // sunk
      case Opcode::burst_end: {
        server_free_us_ += jittered(link_.gap_us(0));
        double ready = server_free_us_ + jittered(link_.latency_us);
        inbox_.push_back({ready, encode_frame(Opcode::burst_ack, {})});
        break;
      }
      default:
        throw ProtocolError("client sent a server-side opcode");
    }
  }

  FakeTransport* net_;
  FakeLink link_;
  uint64_t rng_state_;
  FrameDecoder decoder_;
  std::deque<Reply> inbox_;
  double server_free_us_ = 0.0;
  size_t preamble_seen_ = 0;
  bool preamble_done_ = false;
};

inline std::unique_ptr<Stream> FakeTransport::connect(const NodeId& src,
                                                      const Endpoint& dst) {
  const NodeId& target = dst.host;
  if (down_.count(src))
    throw TransportError("vantage '" + src + "' is down");
  if (down_.count(target))
    throw TransportError("connection refused by '" + target + "'");
  FakeLink link;
  auto it = links_.find({src, target});
  if (it != links_.end()) {
    link = it->second;
  } else if (has_default_) {
    link = default_link_;
  } else {
    throw TransportError("no planted link for '" + src + "' -> '" + target +
                         "'");
  }
  uint64_t stream_seed = seed_;
  for (char c : src) stream_seed = stream_seed * 1099511628211ull + uint8_t(c);
  for (char c : target)
    stream_seed = stream_seed * 1099511628211ull + uint8_t(c);
  stream_seed = stream_seed * 1099511628211ull + ++sessions_opened_;
  return std::make_unique<FakeStream>(this, link, stream_seed);
}

}  // namespace topodisc
