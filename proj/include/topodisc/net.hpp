#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <optional>
#include <string>
#include <utility>

#include "error.hpp"
#include "text.hpp"

namespace topodisc {

// "host:port" transport address. Numeric hosts and resolvable names both
// work; IPv6 literals are out of scope for this tool.
struct Endpoint {
  std::string host;
  uint16_t port = 0;

  static Endpoint parse(const std::string& text) {
    size_t colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size())
      throw ValidationError("endpoint '" + text + "' is not host:port");
    uint64_t port = 0;
    if (!try_parse_u64(std::string_view(text).substr(colon + 1), port) ||
        port == 0 || port > 65535)
      throw ValidationError("endpoint '" + text + "' has an invalid port");
    return {text.substr(0, colon), static_cast<uint16_t>(port)};
  }

  std::string to_string() const { return host + ":" + std::to_string(port); }
};

namespace detail {

inline void throw_errno(const std::string& what) {
  throw TransportError(what + ": " + std::strerror(errno));
}

}  // namespace detail

// Owning wrapper over a connected TCP socket with blocking full-buffer IO.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept {
    if (this != &other) {
      close();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

  void set_io_timeout(std::chrono::milliseconds timeout) {
    timeval tv{};
    tv.tv_sec = timeout.count() / 1000;
    tv.tv_usec = (timeout.count() % 1000) * 1000;
    setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
  }

  void send_all(const void* data, size_t len) {
    const char* p = static_cast<const char*>(data);
    while (len > 0) {
      ssize_t n = ::send(fd_, p, len, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        detail::throw_errno("send");
      }
      p += n;
      len -= size_t(n);
    }
  }

  void recv_all(void* data, size_t len) {
    char* p = static_cast<char*>(data);
    while (len > 0) {
      ssize_t n = ::recv(fd_, p, len, 0);
      if (n == 0) throw TransportError("connection closed by peer");
      if (n < 0) {
        if (errno == EINTR) continue;
        if (errno == EAGAIN || errno == EWOULDBLOCK)
          throw TransportError("receive timed out");
        detail::throw_errno("recv");
      }
      p += n;
      len -= size_t(n);
    }
  }

  // Reads up to and including '\n'; returns the line without the terminator.
  std::string recv_line(size_t max_len = 512) {
    std::string line;
    char c;
    while (line.size() < max_len) {
      recv_all(&c, 1);
      if (c == '\n') return line;
      line.push_back(c);
    }
    throw ProtocolError("line exceeds " + std::to_string(max_len) + " bytes");
  }

  void send_line(const std::string& line) {
    std::string framed = line + "\n";
    send_all(framed.data(), framed.size());
  }

  void shutdown_both() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

  void close() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_ = -1;
};

inline Socket connect_to(const Endpoint& endpoint,
                         std::chrono::milliseconds timeout =
                             std::chrono::milliseconds(3000)) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  std::string port = std::to_string(endpoint.port);
  int rc = ::getaddrinfo(endpoint.host.c_str(), port.c_str(), &hints, &res);
  if (rc != 0)
    throw TransportError("cannot resolve '" + endpoint.host +
                         "': " + gai_strerror(rc));

  int fd = -1;
  std::string error = "no addresses";
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    timeval tv{};
    tv.tv_sec = timeout.count() / 1000;
    tv.tv_usec = (timeout.count() % 1000) * 1000;
    setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    error = std::strerror(errno);
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0)
    throw TransportError("cannot connect to " + endpoint.to_string() + ": " +
                         error);
  Socket sock(fd);
  sock.set_io_timeout(timeout);
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return sock;
}

// Listening TCP socket; port 0 binds an ephemeral port.
class Listener {
 public:
  Listener() = default;
  explicit Listener(const Endpoint& endpoint) { open(endpoint); }
  Listener(Listener&&) = default;
  Listener& operator=(Listener&&) = default;
  ~Listener() = default;

  void open(const Endpoint& endpoint) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) detail::throw_errno("socket");
    int one = 1;
    setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(endpoint.port);
    if (endpoint.host.empty() || endpoint.host == "0.0.0.0") {
      addr.sin_addr.s_addr = htonl(INADDR_ANY);
    } else if (::inet_pton(AF_INET, endpoint.host.c_str(), &addr.sin_addr) != 1) {
      addrinfo hints{};
      hints.ai_family = AF_INET;
      hints.ai_socktype = SOCK_STREAM;
      addrinfo* res = nullptr;
      if (::getaddrinfo(endpoint.host.c_str(), nullptr, &hints, &res) != 0 ||
          res == nullptr) {
        ::close(fd);
        throw TransportError("cannot resolve listen host '" + endpoint.host +
                             "'");
      }
      addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
      ::freeaddrinfo(res);
    }
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      int saved = errno;
      ::close(fd);
      errno = saved;
      detail::throw_errno("bind " + endpoint.to_string());
    }
    if (::listen(fd, 64) != 0) {
      int saved = errno;
      ::close(fd);
      errno = saved;
      detail::throw_errno("listen");
    }
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
    sock_ = Socket(fd);
  }

  uint16_t port() const { return port_; }
  bool valid() const { return sock_.valid(); }

  // Waits up to `timeout` for one connection; nullopt on timeout or when the
  // listener has been closed from another thread.
  std::optional<Socket> accept(std::chrono::milliseconds timeout) {
    pollfd pfd{sock_.fd(), POLLIN, 0};
    int rc = ::poll(&pfd, 1, int(timeout.count()));
    if (rc <= 0) return std::nullopt;
    int fd = ::accept(sock_.fd(), nullptr, nullptr);
    if (fd < 0) return std::nullopt;
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return Socket(fd);
  }

  void close() { sock_.close(); }

 private:
  Socket sock_;
  uint16_t port_ = 0;
};

}  // namespace topodisc
