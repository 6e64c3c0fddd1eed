#pragma once

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "error.hpp"
#include "net.hpp"
#include "registry.hpp"

namespace topodisc {

// Hostname rendezvous: each process reports its rank, hostname and pid to a
// root over a one-line text exchange, and the root assembles the registry
// used for machine grouping.
//
// Wire protocol, one connection per registration:
//   client:  HELLO <rank> <hostname> <pid>\n
//   root:    OK <rank>\n           registration recorded (or repeated)
//            ERR <reason>\n        registration rejected
// The root closes the connection after its reply.

inline std::string local_hostname() {
  char buf[256] = {0};
  if (::gethostname(buf, sizeof(buf) - 1) != 0)
    throw TransportError("gethostname failed");
  return std::string(buf);
}

struct RendezvousConfig {
  int max_retries = 3;
  std::chrono::milliseconds retry_delay{200};
  std::chrono::milliseconds io_timeout{2000};
};

class RendezvousRoot {
 public:
  explicit RendezvousRoot(const Endpoint& listen_endpoint)
      : listener_(listen_endpoint) {}

  uint16_t port() const { return listener_.port(); }

  // Accepts registrations until `expected` distinct ranks have reported or
  // the deadline passes. Malformed lines reject that connection only; a rank
  // re-registering with a different hostname aborts the collection.
  ProcessRegistry collect(int expected, std::chrono::milliseconds deadline) {
    if (expected < 1) throw ValidationError("expected world size must be >= 1");
    auto give_up = std::chrono::steady_clock::now() + deadline;

    State state;
    std::vector<std::thread> workers;
    while (true) {
      {
        std::lock_guard<std::mutex> lock(state.mutex);
        if (int(state.seen.size()) == expected || state.conflict) break;
      }
      auto now = std::chrono::steady_clock::now();
      if (now >= give_up) break;
      auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(
          give_up - now);
      auto conn = listener_.accept(std::min(wait, std::chrono::milliseconds(100)));
      if (!conn) continue;
      workers.emplace_back(&RendezvousRoot::handle, this, std::move(*conn),
                           expected, &state);
    }
    for (std::thread& t : workers) t.join();

    std::lock_guard<std::mutex> lock(state.mutex);
    if (state.conflict)
      throw ProtocolError("rank " + std::to_string(state.conflict_rank) +
                          " re-registered from a different host ('" +
                          state.conflict_host + "')");
    if (int(state.seen.size()) != expected) {
      std::ostringstream missing;
      for (int r = 0; r < expected; ++r)
        if (!state.seen.count(r)) missing << ' ' << r;
      throw TimeoutError("rendezvous deadline expired; missing ranks:" +
                         missing.str());
    }
    std::vector<ProcessInfo> processes;
    for (const auto& [rank, info] : state.seen) processes.push_back(info);
    return ProcessRegistry::from_processes(expected, std::move(processes));
  }

  void close() { listener_.close(); }

 private:
  struct State {
    std::mutex mutex;
    std::map<int, ProcessInfo> seen;
    bool conflict = false;
    int conflict_rank = 0;
    std::string conflict_host;
  };

  void handle(Socket conn, int expected, State* state) {
    conn.set_io_timeout(std::chrono::milliseconds(2000));
    std::string line;
    try {
      line = conn.recv_line();
    } catch (const Error&) {
      return;  // peer vanished; nothing to answer
    }
    std::istringstream fields(line);
    std::string verb, hostname;
    int64_t rank = -1, pid = 0;
    fields >> verb >> rank >> hostname >> pid;
    bool well_formed = !fields.fail() && verb == "HELLO" && rank >= 0 &&
                       rank < expected && !hostname.empty() && pid > 0;
    {
      std::string tail;
      if (fields >> tail) well_formed = false;
    }
    try {
      if (!well_formed) {
        conn.send_line("ERR malformed registration");
        return;
      }
      std::lock_guard<std::mutex> lock(state->mutex);
      auto it = state->seen.find(int(rank));
      if (it != state->seen.end() && it->second.hostname != hostname) {
        state->conflict = true;
        state->conflict_rank = int(rank);
        state->conflict_host = hostname;
        conn.send_line("ERR rank already registered from another host");
        return;
      }
      // First registration wins; a repeat with the same hostname is
      // acknowledged idempotently.
      state->seen.emplace(int(rank), ProcessInfo{int(rank), hostname, pid});
      conn.send_line("OK " + std::to_string(rank));
    } catch (const Error&) {
      // reply failed; the registration (if recorded) still counts
    }
  }

  Listener listener_;
};

// One-call form: bind, collect, return the registry.
inline ProcessRegistry collect_registrations(int expected,
                                             const Endpoint& listen_endpoint,
                                             std::chrono::milliseconds deadline) {
  RendezvousRoot root(listen_endpoint);
  return root.collect(expected, deadline);
}

// Reports this process to the root; returns once the root acknowledged.
// Transport failures are retried; an ERR reply is not.
inline void register_with_root(int rank, const Endpoint& root_endpoint,
                               const std::string& hostname_override = "",
                               int64_t pid_override = 0,
                               const RendezvousConfig& config = {}) {
  if (rank < 0) throw ValidationError("rank must be non-negative");
  std::string hostname =
      hostname_override.empty() ? local_hostname() : hostname_override;
  validate_node_id(hostname);
  int64_t pid = pid_override > 0 ? pid_override : int64_t(::getpid());

  std::string last_error;
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config.retry_delay);
    try {
      Socket conn = connect_to(root_endpoint, config.io_timeout);
      conn.send_line("HELLO " + std::to_string(rank) + " " + hostname + " " +
                     std::to_string(pid));
      std::string reply = conn.recv_line();
      if (reply.rfind("OK ", 0) == 0) return;
      if (reply.rfind("ERR ", 0) == 0)
        throw ProtocolError("root rejected registration: " + reply.substr(4));
      throw ProtocolError("unexpected reply '" + reply + "'");
    } catch (const TransportError& e) {
      last_error = e.what();
    }
  }
  throw TransportError("registration failed after " +
                       std::to_string(config.max_retries + 1) + " attempts: " +
                       last_error);
}

}  // namespace topodisc
