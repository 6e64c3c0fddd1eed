#pragma once

#include <stdexcept>
#include <string>

namespace topodisc {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Structurally malformed input document; message carries "<source>:<line>:".
class ParseError : public Error {
  using Error::Error;
};

// Well-formed input that violates a documented invariant (self-entry,
// unknown node, non-positive latency, missing task result, ...).
class ValidationError : public Error {
  using Error::Error;
};

// Socket-level failure: bind, connect, timeout, or peer closed early.
class TransportError : public Error {
  using Error::Error;
};

// Peer spoke the wrong protocol: bad preamble, unexpected opcode,
// conflicting registration.
class ProtocolError : public Error {
  using Error::Error;
};

// A deadline expired before the operation completed.
class TimeoutError : public Error {
  using Error::Error;
};

// Raw timings are unusable for parameter estimation.
class EstimationError : public Error {
  using Error::Error;
};

}  // namespace topodisc
