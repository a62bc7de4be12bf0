#include "gbpn/graph.hpp"

#include <algorithm>
#include <string>

#include "gbpn/errors.hpp"

namespace gbpn {

Graph Graph::build(int num_nodes,
                   const std::vector<std::pair<int, int>>& undirected_edges) {
  if (num_nodes < 0) throw InputError("build_graph: num_nodes must be >= 0");

  std::vector<std::pair<int, int>> canon;
  canon.reserve(undirected_edges.size());
  for (const auto& [a, b] : undirected_edges) {
    if (a < 0 || a >= num_nodes || b < 0 || b >= num_nodes) {
      throw InputError("build_graph: edge (" + std::to_string(a) + "," +
                       std::to_string(b) + ") endpoint out of range");
    }
    if (a == b) {
      throw InputError("build_graph: self-loop at node " + std::to_string(a));
    }
    canon.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(canon.begin(), canon.end());
  canon.erase(std::unique(canon.begin(), canon.end()), canon.end());

  Graph g;
  g.num_nodes_ = num_nodes;
  const int m = static_cast<int>(canon.size());
  std::vector<std::pair<int, int>> directed;  // (dst, src)
  directed.reserve(2 * static_cast<std::size_t>(m));
  for (const auto& [a, b] : canon) {
    directed.emplace_back(b, a);
    directed.emplace_back(a, b);
  }
  std::sort(directed.begin(), directed.end());

  g.src_.resize(directed.size());
  g.dst_.resize(directed.size());
  for (std::size_t e = 0; e < directed.size(); ++e) {
    g.dst_[e] = directed[e].first;
    g.src_[e] = directed[e].second;
  }

  g.offsets_.assign(num_nodes + 1, 0);
  for (int d : g.dst_) ++g.offsets_[d + 1];
  for (int i = 0; i < num_nodes; ++i) g.offsets_[i + 1] += g.offsets_[i];

  // Twin of (src,dst) lives in the block of edges arriving at src; blocks are
  // sorted by src, so a binary search inside the block finds it.
  g.reverse_.resize(directed.size());
  for (int e = 0; e < static_cast<int>(directed.size()); ++e) {
    const int lo = g.offsets_[g.src_[e]];
    const int hi = g.offsets_[g.src_[e] + 1];
    const auto first = g.src_.begin() + lo;
    const auto it = std::lower_bound(first, g.src_.begin() + hi, g.dst_[e]);
    g.reverse_[e] = static_cast<int>(it - g.src_.begin());
  }
  return g;
}

void Graph::check_node(int i, const char* what) const {
  if (i < 0 || i >= num_nodes_) {
    throw InputError(std::string(what) + ": node " + std::to_string(i) +
                     " out of range [0," + std::to_string(num_nodes_) + ")");
  }
}

int Graph::degree(int i) const {
  check_node(i, "degree");
  return offsets_[i + 1] - offsets_[i];
}

std::pair<int, int> Graph::incoming_range(int i) const {
  check_node(i, "incoming_range");
  return {offsets_[i], offsets_[i + 1]};
}

std::vector<std::pair<int, int>> Graph::neighbors(int i) const {
  check_node(i, "neighbors");
  std::vector<std::pair<int, int>> out;
  out.reserve(offsets_[i + 1] - offsets_[i]);
  for (int e = offsets_[i]; e < offsets_[i + 1]; ++e) {
    out.emplace_back(e, src_[e]);
  }
  return out;
}

std::vector<std::pair<int, int>> Graph::undirected_edges() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(src_.size() / 2);
  for (std::size_t e = 0; e < src_.size(); ++e) {
    if (src_[e] < dst_[e]) out.emplace_back(src_[e], dst_[e]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace gbpn
