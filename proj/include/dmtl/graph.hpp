#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dmtl/errors.hpp"
#include "dmtl/types.hpp"

namespace dmtl {

/// Undirected edge between agents `s` < `j` (0-based).
struct Edge {
  int s = 0;
  int j = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

enum class TopologyKind { Ring, Star, Path, Custom };

/// Connected undirected agent graph without self-loops or duplicate edges.
class Topology {
 public:
  /// Throws UsageError if the graph is malformed or disconnected.
  Topology(int agents, std::vector<Edge> edges);

  int agents() const { return agents_; }
  const std::vector<Edge>& edges() const { return edges_; }
  int edge_count() const { return int(edges_.size()); }
  int degree(int t) const { return int(neighbors_.at(t).size()); }
  const std::vector<int>& neighbors(int t) const { return neighbors_.at(t); }
  std::vector<int> degrees() const;

 private:
  int agents_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> neighbors_;
};

/// ring: i–(i+1 mod m); star: agent 0 is the hub; path: i–(i+1).
/// `custom` is only read for TopologyKind::Custom.
Topology build_topology(TopologyKind kind, int agents, std::vector<Edge> custom = {});

TopologyKind parse_topology_kind(const std::string& name);

/// Plain-text edge list: one "s j" pair per line, 1-indexed; '#' starts a
/// comment. The agent count is the largest index unless `agents` > 0.
Topology read_edge_list(std::istream& in, int agents = 0);
Topology read_edge_list_file(const std::string& path, int agents = 0);

/// Consensus constraints Σ_t C_t U_t = 0 kept in edge-incidence form.
///
/// Edge i = (s, j) contributes +U_s − U_j to block i of Σ_t C_t U_t, so
/// C_tᵀC_t = d_t I. No C_t is ever materialized.
class ConstraintSet {
 public:
  struct Incidence {
    int edge;
    int sign;  // ±1
  };

  explicit ConstraintSet(const Topology& topo);
  /// Same graph with edge i oriented j→s wherever flip[i] is set.
  ConstraintSet(const Topology& topo, const std::vector<bool>& flip);

  int agents() const { return int(incidence_.size()); }
  int edge_count() const { return int(edges_.size()); }
  const std::vector<Incidence>& incidence(int t) const { return incidence_.at(t); }
  /// Endpoint carrying +1 on edge i, then the one carrying −1.
  int positive_end(int edge) const { return edges_.at(edge).s; }
  int negative_end(int edge) const { return edges_.at(edge).j; }
  int degree(int t) const { return int(incidence_.at(t).size()); }

  /// Σ_t C_t U_t as one block per edge.
  template <typename Scalar>
  EdgeStack<Scalar> apply_sum(const std::vector<Matrix<Scalar>>& blocks) const {
    check_count(blocks.size());
    EdgeStack<Scalar> out;
    out.reserve(edges_.size());
    for (const auto& e : edges_) out.push_back(blocks[e.s] - blocks[e.j]);
    return out;
  }

  /// Ĉ_i U for a single edge.
  template <typename Scalar>
  Matrix<Scalar> apply_edge(int edge, const std::vector<Matrix<Scalar>>& blocks) const {
    check_count(blocks.size());
    const auto& e = edges_.at(edge);
    return blocks[e.s] - blocks[e.j];
  }

  /// C_tᵀ V for V stacked by edge.
  template <typename Scalar>
  Matrix<Scalar> apply_Ct_T(int t, const EdgeStack<Scalar>& v) const {
    if (int(v.size()) != edge_count())
      throw UsageError("apply_Ct_T: edge stack has " + std::to_string(v.size()) +
                       " blocks, expected " + std::to_string(edge_count()));
    if (v.empty()) throw UsageError("apply_Ct_T: empty edge stack has no block shape");
    Matrix<Scalar> out = Matrix<Scalar>::Zero(v.front().rows(), v.front().cols());
    for (const auto& inc : incidence_.at(t)) out += Scalar(inc.sign) * v[inc.edge];
    return out;
  }

 private:
  void check_count(std::size_t n) const {
    if (int(n) != agents())
      throw UsageError("ConstraintSet: got " + std::to_string(n) + " blocks for " +
                       std::to_string(agents()) + " agents");
  }

  std::vector<Edge> edges_;  // oriented: s gets +1, j gets −1
  std::vector<std::vector<Incidence>> incidence_;
};

inline ConstraintSet build_constraints(const Topology& topo) { return ConstraintSet(topo); }

}  // namespace dmtl
