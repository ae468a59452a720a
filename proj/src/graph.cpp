#include "dmtl/graph.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <utility>

namespace dmtl {

Topology::Topology(int agents, std::vector<Edge> edges) : agents_(agents) {
  if (agents < 1) throw UsageError("topology needs at least one agent");
  std::set<std::pair<int, int>> seen;
  neighbors_.assign(agents, {});
  for (auto e : edges) {
    if (e.s == e.j) throw UsageError("self-loop at agent " + std::to_string(e.s + 1));
    if (e.s > e.j) std::swap(e.s, e.j);
    if (e.s < 0 || e.j >= agents)
      throw UsageError("edge (" + std::to_string(e.s + 1) + "," + std::to_string(e.j + 1) +
                       ") references an agent outside 1.." + std::to_string(agents));
    if (!seen.insert({e.s, e.j}).second)
      throw UsageError("duplicate edge (" + std::to_string(e.s + 1) + "," +
                       std::to_string(e.j + 1) + ")");
    edges_.push_back(e);
    neighbors_[e.s].push_back(e.j);
    neighbors_[e.j].push_back(e.s);
  }
  for (auto& n : neighbors_) std::sort(n.begin(), n.end());

  std::vector<bool> reached(agents, false);
  std::vector<int> stack{0};
  reached[0] = true;
  while (!stack.empty()) {
    const int t = stack.back();
    stack.pop_back();
    for (int nb : neighbors_[t])
      if (!reached[nb]) {
        reached[nb] = true;
        stack.push_back(nb);
      }
  }
  for (int t = 0; t < agents; ++t)
    if (!reached[t])
      throw UsageError("graph is disconnected: agent " + std::to_string(t + 1) +
                       " is unreachable from agent 1");
}

std::vector<int> Topology::degrees() const {
  std::vector<int> out(agents_);
  for (int t = 0; t < agents_; ++t) out[t] = degree(t);
  return out;
}

Topology build_topology(TopologyKind kind, int agents, std::vector<Edge> custom) {
  if (agents < 1) throw UsageError("topology needs at least one agent");
  std::vector<Edge> edges;
  switch (kind) {
    case TopologyKind::Ring:
      for (int i = 0; i + 1 < agents; ++i) edges.push_back({i, i + 1});
      if (agents > 2) edges.push_back({0, agents - 1});
      break;
    case TopologyKind::Star:
      for (int i = 1; i < agents; ++i) edges.push_back({0, i});
      break;
    case TopologyKind::Path:
      for (int i = 0; i + 1 < agents; ++i) edges.push_back({i, i + 1});
      break;
    case TopologyKind::Custom:
      edges = std::move(custom);
      break;
  }
  return Topology(agents, std::move(edges));
}

TopologyKind parse_topology_kind(const std::string& name) {
  if (name == "ring") return TopologyKind::Ring;
  if (name == "star") return TopologyKind::Star;
  if (name == "path") return TopologyKind::Path;
  if (name == "custom") return TopologyKind::Custom;
  throw UsageError("unknown topology '" + name + "' (expected ring, star, path or custom)");
}

Topology read_edge_list(std::istream& in, int agents) {
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  int max_index = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    int s = 0, j = 0;
    if (!(fields >> s)) continue;  // blank line
    std::string rest;
    if (!(fields >> j) || (fields >> rest)) throw ParseError("expected 's j' pair", line_no);
    if (s < 1 || j < 1) throw ParseError("agent indices are 1-based", line_no);
    max_index = std::max({max_index, s, j});
    edges.push_back({s - 1, j - 1});
  }
  if (agents <= 0) agents = std::max(max_index, 1);
  return Topology(agents, std::move(edges));
}

Topology read_edge_list_file(const std::string& path, int agents) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open edge list '" + path + "'");
  return read_edge_list(in, agents);
}

ConstraintSet::ConstraintSet(const Topology& topo)
    : ConstraintSet(topo, std::vector<bool>(topo.edges().size(), false)) {}

ConstraintSet::ConstraintSet(const Topology& topo, const std::vector<bool>& flip)
    : incidence_(topo.agents()) {
  if (flip.size() != topo.edges().size())
    throw UsageError("ConstraintSet: orientation vector does not match edge count");
  for (std::size_t i = 0; i < topo.edges().size(); ++i) {
    Edge e = topo.edges()[i];
    if (flip[i]) std::swap(e.s, e.j);
    edges_.push_back(e);
    incidence_[e.s].push_back({int(i), +1});
    incidence_[e.j].push_back({int(i), -1});
  }
}

}  // namespace dmtl
