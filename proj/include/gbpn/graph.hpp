#pragma once

#include <span>
#include <utility>
#include <vector>

namespace gbpn {

/// Immutable undirected graph stored as paired directed edges in CSR form.
///
/// Each undirected edge {i,j} is materialized as two directed twins (i->j)
/// and (j->i). Directed edges are sorted by (dst, src), so the edges arriving
/// at a node form one contiguous block — the layout message aggregation
/// wants — and `reverse_index` maps every directed edge to its twin, which is
/// what the belief-propagation division term reads.
class Graph {
 public:
  Graph() = default;

  /// Builds from an undirected edge list. Edges are deduplicated
  /// (order-insensitive); self-loops and out-of-range endpoints are rejected
  /// rather than dropped, since silently ignoring them hides dataset bugs.
  static Graph build(int num_nodes,
                     const std::vector<std::pair<int, int>>& undirected_edges);

  int num_nodes() const { return num_nodes_; }
  int num_directed_edges() const { return static_cast<int>(src_.size()); }
  int num_undirected_edges() const { return num_directed_edges() / 2; }

  /// Number of undirected neighbors of node i.
  int degree(int i) const;

  /// Incoming edges of node i as (directed-edge index, neighbor id), in
  /// ascending neighbor order. The edge index addresses the message sent by
  /// that neighbor and is valid with reverse_index().
  std::vector<std::pair<int, int>> neighbors(int i) const;

  /// [begin, end) range of directed edges with dst == i.
  std::pair<int, int> incoming_range(int i) const;

  std::span<const int> src() const { return src_; }
  std::span<const int> dst() const { return dst_; }
  std::span<const int> reverse_index() const { return reverse_; }

  /// Undirected edges in canonical (min, max) order, sorted.
  std::vector<std::pair<int, int>> undirected_edges() const;

 private:
  void check_node(int i, const char* what) const;

  int num_nodes_ = 0;
  std::vector<int> src_;
  std::vector<int> dst_;
  std::vector<int> offsets_;  // length num_nodes_+1, over dst-sorted edges
  std::vector<int> reverse_;  // twin edge index, an involution
};

}  // namespace gbpn
