#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace topodisc {

// Shortest decimal form that parses back to the identical double, so every
// serializer in the library is byte-deterministic and round-trip exact.
// Infinities are spelled "inf"/"-inf" (the singleton min_edge sentinel).
inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline bool try_parse_double(std::string_view s, double& out) {
  if (s == "inf") {
    out = std::numeric_limits<double>::infinity();
    return true;
  }
  if (s == "-inf") {
    out = -std::numeric_limits<double>::infinity();
    return true;
  }
  const char* last = s.data() + s.size();
  auto res = std::from_chars(s.data(), last, out);
  return res.ec == std::errc() && res.ptr == last;
}

inline bool try_parse_u64(std::string_view s, uint64_t& out) {
  const char* last = s.data() + s.size();
  auto res = std::from_chars(s.data(), last, out);
  return res.ec == std::errc() && res.ptr == last;
}

inline bool try_parse_i64(std::string_view s, int64_t& out) {
  const char* last = s.data() + s.size();
  auto res = std::from_chars(s.data(), last, out);
  return res.ec == std::errc() && res.ptr == last;
}

// Line-oriented scanner shared by all file-format parsers. Grammar common to
// every format: records are single lines of space-separated tokens, blank
// lines are ignored, '#' starts a comment that runs to end of line.
class LineScanner {
 public:
  LineScanner(std::string_view text, std::string source)
      : text_(text), source_(std::move(source)) {}

  // Advances to the next non-empty line; false at end of input.
  bool next() {
    tokens_.clear();
    offsets_.clear();
    while (pos_ <= text_.size()) {
      if (pos_ == text_.size()) return false;
      size_t eol = text_.find('\n', pos_);
      if (eol == std::string_view::npos) eol = text_.size();
      line_no_++;
      std::string_view raw = text_.substr(pos_, eol - pos_);
      pos_ = eol + 1;
      size_t hash = raw.find('#');
      if (hash != std::string_view::npos) raw = raw.substr(0, hash);
      while (!raw.empty() && (raw.back() == '\r' || raw.back() == ' ' || raw.back() == '\t'))
        raw.remove_suffix(1);
      line_.assign(raw);
      size_t i = 0;
      while (i < line_.size()) {
        while (i < line_.size() && (line_[i] == ' ' || line_[i] == '\t')) ++i;
        size_t start = i;
        while (i < line_.size() && line_[i] != ' ' && line_[i] != '\t') ++i;
        if (i > start) {
          tokens_.emplace_back(line_.substr(start, i - start));
          offsets_.push_back(start);
        }
      }
      if (!tokens_.empty()) return true;
    }
    return false;
  }

  const std::vector<std::string>& tokens() const { return tokens_; }
  size_t size() const { return tokens_.size(); }
  const std::string& keyword() const { return tokens_.front(); }
  int line_no() const { return line_no_; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(source_ + ":" + std::to_string(line_no_) + ": " + msg);
  }

  void want(size_t count) const {
    if (tokens_.size() != count)
      fail("expected " + std::to_string(count) + " fields in '" + keyword() +
           "' record, got " + std::to_string(tokens_.size()));
  }

  void want_at_least(size_t count) const {
    if (tokens_.size() < count)
      fail("expected at least " + std::to_string(count) + " fields in '" +
           keyword() + "' record, got " + std::to_string(tokens_.size()));
  }

  const std::string& tok(size_t i) const {
    if (i >= tokens_.size()) fail("missing field " + std::to_string(i));
    return tokens_[i];
  }

  double num(size_t i) const {
    double v;
    if (!try_parse_double(tok(i), v)) fail("'" + tok(i) + "' is not a number");
    return v;
  }

  uint64_t uint(size_t i) const {
    uint64_t v;
    if (!try_parse_u64(tok(i), v))
      fail("'" + tok(i) + "' is not a non-negative integer");
    return v;
  }

  int64_t integer(size_t i) const {
    int64_t v;
    if (!try_parse_i64(tok(i), v)) fail("'" + tok(i) + "' is not an integer");
    return v;
  }

  // Raw line content starting at token `i` (free-form fields such as meta).
  std::string rest(size_t i) const {
    if (i >= tokens_.size()) return "";
    return line_.substr(offsets_[i]);
  }

  // Consumes and checks the fixed "<kind> v1" header line every format uses.
  void expect_header(const std::string& kind) {
    if (!next()) throw ParseError(source_ + ": empty document");
    if (tokens_.size() != 2 || tokens_[0] != kind || tokens_[1] != "v1")
      fail("expected '" + kind + " v1' header");
  }

 private:
  std::string_view text_;
  std::string source_;
  size_t pos_ = 0;
  int line_no_ = 0;
  std::string line_;
  std::vector<std::string> tokens_;
  std::vector<size_t> offsets_;
};

}  // namespace topodisc
