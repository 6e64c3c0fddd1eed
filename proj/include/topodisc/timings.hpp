#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "error.hpp"
#include "text.hpp"

namespace topodisc {

// Message sizes (bytes) at which the size-dependent gap is sampled.
struct MessageSizeLadder {
  std::vector<uint64_t> sizes;

  static MessageSizeLadder powers_of_two(uint64_t first = 1,
                                         uint64_t last = 1u << 20) {
    MessageSizeLadder ladder;
    for (uint64_t s = first; s <= last; s *= 2) ladder.sizes.push_back(s);
    return ladder;
  }

  void validate() const {
    if (sizes.empty()) throw ValidationError("message size ladder is empty");
    if (sizes.front() < 1)
      throw ValidationError("ladder sizes must be >= 1 byte");
    for (size_t i = 1; i < sizes.size(); ++i)
      if (sizes[i] <= sizes[i - 1])
        throw ValidationError("ladder sizes must be strictly increasing");
  }
};

// Raw probe output for one directed pair: per-size round-trip samples plus
// the steady-state inter-send interval observed during the burst phase.
struct RawTimings {
  NodeId src;
  NodeId dst;
  std::map<uint64_t, std::vector<double>> rtt_us;
  std::map<uint64_t, double> burst_interval_us;

  bool operator==(const RawTimings&) const = default;
};

inline double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of empty sample set");
  std::sort(values.begin(), values.end());
  size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return (values[mid - 1] + values[mid]) / 2.0;
}

// --- raw timings file format ---------------------------------------------------
//
//   timings v1
//   block <task-id> <src> <dst>
//   rtt <size> <count> <sample> ...
//   burst <size> <interval_us>
//   endblock
//
// One block per probed pair, tagged with the plan task id (or a free-form
// label for standalone probes).

struct TimingsBlock {
  std::string task_id;
  RawTimings timings;

  bool operator==(const TimingsBlock&) const = default;
};

inline std::string serialize_timings(const std::vector<TimingsBlock>& blocks) {
  std::ostringstream out;
  out << "timings v1\n";
  for (const TimingsBlock& block : blocks) {
    out << "block " << block.task_id << ' ' << block.timings.src << ' '
        << block.timings.dst << '\n';
    for (const auto& [size, samples] : block.timings.rtt_us) {
      out << "rtt " << size << ' ' << samples.size();
      for (double v : samples) out << ' ' << format_double(v);
      out << '\n';
    }
    for (const auto& [size, interval] : block.timings.burst_interval_us)
      out << "burst " << size << ' ' << format_double(interval) << '\n';
    out << "endblock\n";
  }
  return out.str();
}

inline std::vector<TimingsBlock> parse_timings(
    std::string_view text, const std::string& source = "timings") {
  LineScanner in(text, source);
  in.expect_header("timings");
  std::vector<TimingsBlock> blocks;
  bool open = false;
  while (in.next()) {
    if (in.keyword() == "block") {
      if (open) in.fail("nested block");
      in.want(4);
      blocks.push_back({in.tok(1), RawTimings{in.tok(2), in.tok(3), {}, {}}});
      open = true;
    } else if (in.keyword() == "rtt") {
      if (!open) in.fail("rtt outside block");
      in.want_at_least(3);
      uint64_t size = in.uint(1);
      uint64_t count = in.uint(2);
      in.want(3 + count);
      std::vector<double> samples;
      for (uint64_t i = 0; i < count; ++i) samples.push_back(in.num(3 + i));
      blocks.back().timings.rtt_us[size] = std::move(samples);
    } else if (in.keyword() == "burst") {
      if (!open) in.fail("burst outside block");
      in.want(3);
      blocks.back().timings.burst_interval_us[in.uint(1)] = in.num(2);
    } else if (in.keyword() == "endblock") {
      if (!open) in.fail("endblock outside block");
      in.want(1);
      open = false;
    } else {
      in.fail("unknown record '" + in.keyword() + "'");
    }
  }
  if (open) throw ParseError(source + ": unterminated block");
  return blocks;
}

}  // namespace topodisc
