#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstring>
#include <iostream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "core.hpp"
#include "error.hpp"
#include "net.hpp"
#include "timings.hpp"
#include "transport.hpp"
#include "wire.hpp"

namespace topodisc {

struct ProbeConfig {
  int rounds = 30;        // timed ping-pong exchanges per message size
  int warmup = 5;         // discarded exchanges per size
  int burst_length = 64;  // back-to-back sends for the gap phase
  // Budget per ladder size, checked against the transport clock (virtual for
  // the fake transport). Individual socket operations are bounded by the
  // transport's own IO timeout.
  std::chrono::milliseconds per_size_timeout{5000};

  void validate() const {
    if (rounds < 5)
      throw ValidationError("rounds must be >= 5 (estimator precondition)");
    if (warmup < 0) throw ValidationError("warmup must be >= 0");
    if (burst_length < 1) throw ValidationError("burst length must be >= 1");
    if (per_size_timeout.count() <= 0)
      throw ValidationError("per-size timeout must be positive");
  }
};

// Echo server side of the probe protocol. Each connection is handled on its
// own thread: validate the preamble, then PING -> PONG, BURST_DATA -> sink,
// BURST_END -> BURST_ACK. A malformed frame drops that connection only.
class ProbeServer {
 public:
  ProbeServer() = default;
  ~ProbeServer() { stop(); }
  ProbeServer(const ProbeServer&) = delete;
  ProbeServer& operator=(const ProbeServer&) = delete;

  void start(const Endpoint& listen_endpoint) {
    listener_.open(listen_endpoint);  // throws TransportError on bind failure
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  uint16_t port() const { return listener_.port(); }

  void stop() {
    if (!running_.exchange(false)) return;
    // The accept loop polls with a 100 ms timeout, so it notices the flag on
    // its own; the listener is closed only once that thread is gone.
    if (accept_thread_.joinable()) accept_thread_.join();
    listener_.close();
    {
      std::lock_guard<std::mutex> lock(mutex_);
      for (Socket* conn : live_) conn->shutdown_both();
    }
    for (std::thread& t : workers_) t.join();
    workers_.clear();
  }

 private:
  void accept_loop() {
    while (running_) {
      auto conn = listener_.accept(std::chrono::milliseconds(100));
      if (!conn) continue;
      workers_.emplace_back(
          [this](Socket sock) { serve_connection(std::move(sock)); },
          std::move(*conn));
    }
  }

  // Non-owning stream view so the connection socket stays addressable for a
  // forced shutdown from stop().
  struct SocketStream final : Stream {
    explicit SocketStream(Socket& socket) : socket_(socket) {}
    void write_all(const void* data, size_t len) override {
      socket_.send_all(data, len);
    }
    void read_all(void* data, size_t len) override {
      socket_.recv_all(data, len);
    }
    Socket& socket_;
  };

  void serve_connection(Socket conn) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      live_.push_back(&conn);
    }
    conn.set_io_timeout(std::chrono::milliseconds(60000));
    try {
      char preamble[4];
      conn.recv_all(preamble, sizeof preamble);
      if (std::memcmp(preamble, kPreamble, sizeof kPreamble) != 0)
        throw ProtocolError("bad preamble");
      SocketStream stream_view(conn);
      while (running_) {
        Frame frame = recv_frame(stream_view);
        switch (frame.op) {
          case Opcode::ping:
            send_frame(stream_view, Opcode::pong, frame.payload);
            break;
          case Opcode::burst_data:
            break;
          case Opcode::burst_end:
            send_frame(stream_view, Opcode::burst_ack, {});
            break;
          default:
            throw ProtocolError("client sent a server-side opcode");
        }
      }
    } catch (const Error&) {
      // drop this connection, keep serving others
    }
    std::lock_guard<std::mutex> lock(mutex_);
    live_.erase(std::remove(live_.begin(), live_.end(), &conn), live_.end());
  }

  Listener listener_;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::vector<Socket*> live_;
};

namespace detail {

inline std::vector<uint8_t> probe_payload(size_t size) {
  return std::vector<uint8_t>(size, uint8_t(0xa5));
}

class ProbeSession {
 public:
  ProbeSession(Transport& transport, const NodeId& src, const Endpoint& target)
      : transport_(transport), stream_(transport.connect(src, target)) {
    stream_->write_all(kPreamble, sizeof kPreamble);
  }

  // One warmed-up ping-pong series; RTTs in microseconds.
  std::vector<double> rtt_series(uint64_t size, const ProbeConfig& config) {
    std::vector<uint8_t> payload = probe_payload(size);
    std::vector<double> rtts;
    rtts.reserve(config.rounds);
    for (int round = 0; round < config.warmup + config.rounds; ++round) {
      try {
        double t0 = transport_.now_us();
        send_frame(*stream_, Opcode::ping, payload);
        Frame pong = recv_frame(*stream_);
        double t1 = transport_.now_us();
        if (pong.op != Opcode::pong || pong.payload != payload)
          throw ProtocolError("echo mismatch");
        if (round >= config.warmup) rtts.push_back(t1 - t0);
      } catch (const TransportError& e) {
        throw TransportError("round " + std::to_string(round) + ": " +
                             e.what());
      }
    }
    return rtts;
  }

  // Saturation burst; returns the mean inter-send interval.
  double burst_interval(uint64_t size, const ProbeConfig& config) {
    std::vector<uint8_t> payload = probe_payload(size);
    double t0 = transport_.now_us();
    for (int i = 0; i < config.burst_length; ++i)
      send_frame(*stream_, Opcode::burst_data, payload);
    double t1 = transport_.now_us();
    send_frame(*stream_, Opcode::burst_end, {});
    Frame ack = recv_frame(*stream_);
    if (ack.op != Opcode::burst_ack)
      throw ProtocolError("expected burst acknowledgement");
    return (t1 - t0) / config.burst_length;
  }

 private:
  Transport& transport_;
  std::unique_ptr<Stream> stream_;
};

}  // namespace detail

// Full measurement of one directed pair: per ladder size, warmup exchanges
// are discarded, `rounds` RTTs are recorded, then one burst measures the
// steady-state send interval.
inline RawTimings probe(Transport& transport, const NodeId& src,
                        const NodeId& dst, const Endpoint& target,
                        const MessageSizeLadder& ladder,
                        const ProbeConfig& config = {}) {
  config.validate();
  ladder.validate();
  RawTimings raw;
  raw.src = src;
  raw.dst = dst;
  detail::ProbeSession session(transport, src, target);
  const double budget_us = double(config.per_size_timeout.count()) * 1000.0;
  for (uint64_t size : ladder.sizes) {
    double started_us = transport.now_us();
    try {
      raw.rtt_us[size] = session.rtt_series(size, config);
      raw.burst_interval_us[size] = session.burst_interval(size, config);
    } catch (const TransportError& e) {
      throw TransportError("probing " + dst + " at size " +
                           std::to_string(size) + ": " + e.what());
    }
    if (transport.now_us() - started_us > budget_us)
      throw TransportError("probing " + dst + " at size " +
                           std::to_string(size) + ": exceeded the " +
                           std::to_string(config.per_size_timeout.count()) +
                           " ms per-size budget");
  }
  return raw;
}

// NWS-style matrix sweep: every ordered pair is probed sequentially, RTT
// rounds at the smallest ladder size only, plus one burst at the largest size
// for throughput. Pair failures leave the entry absent (warned on stderr),
// never zero.
//
// With the TCP transport all probes originate from the calling host, so a
// genuinely remote (src, dst) entry is the vantage's view of dst; import
// matrices from per-cluster monitors when true remote-to-remote data is
// needed. The fake transport honours (src, dst) exactly.
inline DistanceMatrix measure_matrix(
    Transport& transport,
    const std::vector<std::pair<NodeId, Endpoint>>& nodes,
    const MessageSizeLadder& ladder, const ProbeConfig& config = {},
    std::ostream& warnings = std::cerr) {
  config.validate();
  ladder.validate();
  DistanceMatrix matrix;
  for (const auto& [id, endpoint] : nodes) matrix.add_node(id);

  const uint64_t small = ladder.sizes.front();
  const uint64_t large = ladder.sizes.back();
  for (const auto& [src, src_endpoint] : nodes) {
    for (const auto& [dst, dst_endpoint] : nodes) {
      if (src == dst) continue;
      try {
        detail::ProbeSession session(transport, src, dst_endpoint);
        std::vector<double> rtts = session.rtt_series(small, config);
        double interval = session.burst_interval(large, config);
        LinkMetric metric;
        metric.latency_us = median(rtts) / 2.0;
        metric.throughput_bps = double(large) * 8e6 / interval;
        matrix.add_entry(src, dst, metric);
      } catch (const TransportError& e) {
        warnings << "warning: pair " << src << " -> " << dst
                 << " unmeasured: " << e.what() << '\n';
      } catch (const ProtocolError& e) {
        warnings << "warning: pair " << src << " -> " << dst
                 << " unmeasured: " << e.what() << '\n';
      }
    }
  }
  return matrix;
}

}  // namespace topodisc
