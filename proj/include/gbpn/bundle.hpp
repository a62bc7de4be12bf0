#pragma once

#include <string>
#include <vector>

#include "gbpn/graph.hpp"
#include "gbpn/types.hpp"

namespace gbpn {

/// An attributed-graph dataset: topology, per-node features, labels, and
/// train/val/test splits. This is the unit the on-disk format round-trips.
struct GraphBundle {
  Graph graph;
  Matrix features;  // n x d
  std::vector<int> labels;
  std::vector<int> train_ids;
  std::vector<int> val_ids;
  std::vector<int> test_ids;
  int num_classes = 0;
  std::string notes;

  int num_nodes() const { return graph.num_nodes(); }
  int feature_dim() const { return static_cast<int>(features.cols()); }

  /// Throws InputError on any violated invariant (label range, feature row
  /// count, split disjointness/containment).
  void validate() const;
};

}  // namespace gbpn
