#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "recon/graph.hpp"

namespace recon {

/// Labeled graph collection. All graphs share the category counts; labels are
/// equal-frequency magnitude bins of a fixed integer score (see
/// gen_synthetic_dataset).
struct LabeledDataset {
  std::vector<CategoricalGraph> graphs;
  std::vector<int> labels;
  int num_classes = 0;
  int node_cat_count = 0;
  int edge_cat_count = 0;
  int n_max = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return graphs.size(); }
  std::vector<std::size_t> class_indices(int label) const;
  void validate(bool require_all_classes = true) const;
};

struct GenConfig {
  int count = 0;
  int num_classes = 2;
  int n_min = 2;
  int n_max = 12;
  int node_cat_count = 4;
  int edge_cat_count = 3;
  ValidityRules rules;
  std::vector<long> node_score_weights;  // length a
  std::vector<long> edge_score_weights;  // length b, index 0 unused
  double edge_density = 0.4;             // chance of attempting each extra pair
  int max_retries_per_graph = 200;
};

/// Integer magnitude score: sum of node weights plus edge weights over the
/// pairs i < j with category != 0.
long graph_score(const CategoricalGraph& g, const std::vector<long>& node_w,
                 const std::vector<long>& edge_w);

/// Generates `config.count` rule-satisfying graphs and labels them by binning
/// the score into `num_classes` equal-frequency bins (class counts differ by
/// at most one). Deterministic per seed; per-graph RNG streams are derived
/// from the master seed. Throws std::runtime_error when the validity rules
/// cannot be satisfied within the retry budget.
LabeledDataset gen_synthetic_dataset(const GenConfig& config,
                                     std::uint64_t seed);

struct SplitResult {
  LabeledDataset target, validation, auxiliary;
};

struct RandomSplitSpec {
  double target_ratio = 0.2;
  double validation_ratio = 0.1;
  double auxiliary_ratio = 0.7;
};

using GraphEncoder = std::function<Eigen::VectorXd(const CategoricalGraph&)>;

/// Distribution-shift split: k-means over encoder embeddings, exactly one
/// cluster becomes the target set. A validation slice is carved from the
/// remaining graphs so no part of the split is empty.
struct ClusterShiftSpec {
  int groups = 8;
  GraphEncoder encoder;
  double validation_fraction = 0.1;
};

SplitResult split_dataset(const LabeledDataset& dataset,
                          const RandomSplitSpec& spec, std::uint64_t seed);
SplitResult split_dataset(const LabeledDataset& dataset,
                          const ClusterShiftSpec& spec, std::uint64_t seed);

/// Structured-text dataset files; byte-stable round trip.
void write_dataset(const std::string& path, const LabeledDataset& dataset);
LabeledDataset read_dataset(const std::string& path);

}  // namespace recon
