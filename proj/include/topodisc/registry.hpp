#pragma once

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "error.hpp"
#include "text.hpp"

namespace topodisc {

struct ProcessInfo {
  int rank = 0;
  std::string hostname;
  int64_t pid = 0;

  bool operator==(const ProcessInfo&) const = default;
};

// Complete world of registered processes and the machine grouping derived
// from hostname string equality. Hosts with colliding names (containers,
// cloned VMs) collapse into one machine group; that is the documented
// limitation of name-based co-location.
class ProcessRegistry {
 public:
  static ProcessRegistry from_processes(int world_size,
                                        std::vector<ProcessInfo> processes) {
    if (world_size < 1) throw ValidationError("world size must be >= 1");
    if (processes.size() != size_t(world_size))
      throw ValidationError("expected " + std::to_string(world_size) +
                            " processes, got " +
                            std::to_string(processes.size()));
    std::sort(processes.begin(), processes.end(),
              [](const ProcessInfo& a, const ProcessInfo& b) {
                return a.rank < b.rank;
              });
    for (int i = 0; i < world_size; ++i) {
      const ProcessInfo& p = processes[i];
      if (p.rank != i)
        throw ValidationError(
            "ranks must be unique and contiguous from 0; missing rank " +
            std::to_string(i));
      validate_node_id(p.hostname);
      if (p.pid <= 0)
        throw ValidationError("non-positive pid for rank " +
                              std::to_string(p.rank));
    }
    ProcessRegistry registry;
    registry.world_size_ = world_size;
    registry.processes_ = std::move(processes);
    for (const ProcessInfo& p : registry.processes_)
      registry.machine_groups_[p.hostname].push_back(p.rank);
    return registry;
  }

  int world_size() const { return world_size_; }
  const std::vector<ProcessInfo>& processes() const { return processes_; }

  // hostname -> sorted rank list; a partition of the rank set.
  const std::map<std::string, std::vector<int>>& machine_groups() const {
    return machine_groups_;
  }

  bool operator==(const ProcessRegistry&) const = default;

 private:
  int world_size_ = 0;
  std::vector<ProcessInfo> processes_;
  std::map<std::string, std::vector<int>> machine_groups_;
};

// --- registry file format -----------------------------------------------------
//
//   registry v1
//   world <size>
//   process <rank> <hostname> <pid>
//
// Same fields as the rendezvous wire protocol, so a registry can be captured
// live or written by hand for offline tree building.

inline std::string serialize_registry(const ProcessRegistry& registry) {
  std::ostringstream out;
  out << "registry v1\n";
  out << "world " << registry.world_size() << '\n';
  for (const ProcessInfo& p : registry.processes())
    out << "process " << p.rank << ' ' << p.hostname << ' ' << p.pid << '\n';
  return out.str();
}

inline ProcessRegistry parse_registry(std::string_view text,
                                      const std::string& source = "registry") {
  LineScanner in(text, source);
  in.expect_header("registry");
  int world_size = -1;
  std::vector<ProcessInfo> processes;
  while (in.next()) {
    if (in.keyword() == "world") {
      in.want(2);
      world_size = static_cast<int>(in.integer(1));
    } else if (in.keyword() == "process") {
      in.want(4);
      processes.push_back(
          {static_cast<int>(in.integer(1)), in.tok(2), in.integer(3)});
    } else {
      in.fail("unknown record '" + in.keyword() + "'");
    }
  }
  if (world_size < 0) throw ParseError(source + ": missing world record");
  return ProcessRegistry::from_processes(world_size, std::move(processes));
}

}  // namespace topodisc
