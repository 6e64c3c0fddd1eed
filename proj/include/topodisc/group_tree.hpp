#pragma once

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "error.hpp"
#include "registry.hpp"
#include "text.hpp"

namespace topodisc {

enum class GroupLevel { machine, subnet, world };

inline const char* to_string(GroupLevel level) {
  switch (level) {
    case GroupLevel::machine: return "machine";
    case GroupLevel::subnet: return "subnet";
    case GroupLevel::world: return "world";
  }
  return "?";
}

// One communicator-equivalent group: sorted member ranks plus the leader,
// which is always the smallest rank (the conventional root choice).
struct Group {
  GroupLevel level = GroupLevel::world;
  std::string name;
  std::vector<int> ranks;
  int leader = 0;
  std::vector<Group> children;

  bool operator==(const Group&) const = default;
};

// machine -> subnet -> world hierarchy over registered processes.
struct GroupTree {
  Group world;

  bool operator==(const GroupTree&) const = default;
};

// Maps every registered process into its machine group, its machine into the
// partition subnet carrying that hostname, and all subnets under one world
// root. Subnets with no registered process contribute no group. Hostnames
// missing from the partition are an error rather than a guess.
inline GroupTree build_group_tree(const ProcessRegistry& registry,
                                  const Partition& partition) {
  GroupTree tree;
  tree.world.level = GroupLevel::world;
  tree.world.name = "world";

  for (const auto& [hostname, ranks] : registry.machine_groups()) {
    bool found = false;
    for (const Subnet& s : partition.subnets)
      if (std::binary_search(s.members.begin(), s.members.end(), hostname)) {
        found = true;
        break;
      }
    if (!found)
      throw ValidationError("host '" + hostname +
                            "' is not a member of any subnet");
  }

  for (size_t i = 0; i < partition.subnets.size(); ++i) {
    const Subnet& s = partition.subnets[i];
    Group subnet_group;
    subnet_group.level = GroupLevel::subnet;
    subnet_group.name = "subnet:" + std::to_string(i);
    for (const NodeId& member : s.members) {
      auto it = registry.machine_groups().find(member);
      if (it == registry.machine_groups().end()) continue;
      Group machine;
      machine.level = GroupLevel::machine;
      machine.name = member;
      machine.ranks = it->second;
      machine.leader = machine.ranks.front();
      subnet_group.ranks.insert(subnet_group.ranks.end(), machine.ranks.begin(),
                                machine.ranks.end());
      subnet_group.children.push_back(std::move(machine));
    }
    if (subnet_group.children.empty()) continue;
    std::sort(subnet_group.ranks.begin(), subnet_group.ranks.end());
    subnet_group.leader = subnet_group.ranks.front();
    tree.world.ranks.insert(tree.world.ranks.end(), subnet_group.ranks.begin(),
                            subnet_group.ranks.end());
    tree.world.children.push_back(std::move(subnet_group));
  }
  std::sort(tree.world.ranks.begin(), tree.world.ranks.end());
  tree.world.leader = 0;
  return tree;
}

// --- group tree file format -----------------------------------------------------
//
//   tree v1
//   group <level> <name> <leader> <rank> [<rank> ...]
//
// Records appear depth-first: world, then each subnet followed by its
// machines.

namespace detail {

inline void write_group(std::ostringstream& out, const Group& g) {
  out << "group " << to_string(g.level) << ' ' << g.name << ' ' << g.leader;
  for (int r : g.ranks) out << ' ' << r;
  out << '\n';
  for (const Group& child : g.children) write_group(out, child);
}

}  // namespace detail

inline std::string serialize_group_tree(const GroupTree& tree) {
  std::ostringstream out;
  out << "tree v1\n";
  detail::write_group(out, tree.world);
  return out.str();
}

inline GroupTree parse_group_tree(std::string_view text,
                                  const std::string& source = "tree") {
  LineScanner in(text, source);
  in.expect_header("tree");
  GroupTree tree;
  bool saw_world = false;
  Group* current_subnet = nullptr;
  while (in.next()) {
    if (in.keyword() != "group") in.fail("unknown record '" + in.keyword() + "'");
    in.want_at_least(5);
    Group g;
    const std::string& level = in.tok(1);
    g.name = in.tok(2);
    g.leader = static_cast<int>(in.integer(3));
    for (size_t i = 4; i < in.size(); ++i)
      g.ranks.push_back(static_cast<int>(in.integer(i)));
    if (level == "world") {
      if (saw_world) in.fail("duplicate world group");
      g.level = GroupLevel::world;
      tree.world = std::move(g);
      saw_world = true;
    } else if (level == "subnet") {
      if (!saw_world) in.fail("subnet group before world group");
      g.level = GroupLevel::subnet;
      tree.world.children.push_back(std::move(g));
      current_subnet = &tree.world.children.back();
    } else if (level == "machine") {
      if (current_subnet == nullptr) in.fail("machine group before subnet group");
      g.level = GroupLevel::machine;
      current_subnet->children.push_back(std::move(g));
    } else {
      in.fail("unknown group level '" + level + "'");
    }
  }
  if (!saw_world) throw ParseError(source + ": missing world group");
  return tree;
}

}  // namespace topodisc
