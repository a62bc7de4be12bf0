#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "gbpn/bundle.hpp"
#include "gbpn/model.hpp"

namespace gbpn {

struct Splits {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

/// Seeded uniform shuffle of 0..n-1 followed by a contiguous cut. val/test
/// sizes are rounded to nearest; train takes the remainder. Ids within each
/// split are returned sorted.
Splits split_nodes(int n, std::array<double, 3> ratios, std::uint64_t seed);

/// Bundle directory layout (format_version 1):
///   meta.json      {"format_version","num_nodes","num_classes","feature_dim"}
///   edges.tsv      one undirected edge per line, smaller id first
///   features.tsv   n rows of d tab-separated reals (shortest round-trip)
///   labels.tsv     n integers
///   splits.json    {"train":[...],"val":[...],"test":[...]}
void save_bundle(const GraphBundle& bundle, const std::filesystem::path& dir);

/// Loads and validates every bundle invariant; violations raise LoadError
/// naming the offending file (and line where applicable).
GraphBundle load_bundle(const std::filesystem::path& dir);

/// Single JSON model file (format_version 1) holding the config, layer
/// weights and biases as nested decimal lists, and the raw coupling matrix.
/// Doubles are written in shortest round-trip form, so reload is bit-exact.
void save_model(const ModelParams& params, const ModelConfig& config,
                const std::filesystem::path& path);

/// Validates the layer shape chain before returning; truncated or
/// inconsistent files raise LoadError without producing a partial model.
std::pair<ModelParams, ModelConfig> load_model(
    const std::filesystem::path& path);

}  // namespace gbpn
