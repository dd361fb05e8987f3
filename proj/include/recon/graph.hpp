#pragma once

#include <Eigen/Dense>
#include <vector>

namespace recon {

/// Undirected graph with categorical nodes and edges. Node categories live in
/// {0..a-1}; edge categories in {0..b-1} where category 0 means "no edge".
/// The edge matrix is symmetric and the diagonal is pinned to 0.
class CategoricalGraph {
public:
  CategoricalGraph() = default;
  CategoricalGraph(int n, int node_cat_count, int edge_cat_count);

  int n() const { return n_; }
  int node_cat_count() const { return a_; }
  int edge_cat_count() const { return b_; }

  int node_cat(int i) const { return node_cats_[static_cast<std::size_t>(i)]; }
  void set_node_cat(int i, int c);

  int edge_cat(int i, int j) const {
    return edge_cats_[static_cast<std::size_t>(i) * n_ + j];
  }
  /// Sets both (i, j) and (j, i). Self loops are rejected.
  void set_edge_cat(int i, int j, int c);

  bool has_edge(int i, int j) const { return edge_cat(i, j) != 0; }

  /// Degree counting edge category c with multiplicity c.
  int weighted_degree(int i) const;

  int edge_count() const;  // pairs i < j with category != 0
  bool connected() const;  // under "category != 0"

  Eigen::MatrixXd node_onehot() const;  // n x a
  Eigen::MatrixXd adjacency() const;    // n x n in {0, 1}

  /// Throws std::invalid_argument on any violated type invariant.
  void validate() const;

  bool operator==(const CategoricalGraph&) const = default;

private:
  int n_ = 0, a_ = 0, b_ = 0;
  std::vector<int> node_cats_;  // length n
  std::vector<int> edge_cats_;  // length n*n, symmetric, zero diagonal
};

/// Probability-simplex relaxation of a CategoricalGraph: each node row and
/// each (i, j) edge fiber is a distribution over categories. Symmetry and the
/// no-self-loop rule carry over (diagonal fibers are pinned to category 0).
class RelaxedGraph {
public:
  RelaxedGraph() = default;
  RelaxedGraph(int n, int node_cat_count, int edge_cat_count);
  explicit RelaxedGraph(const CategoricalGraph& g);

  int n() const { return n_; }
  int node_cat_count() const { return a_; }
  int edge_cat_count() const { return b_; }

  Eigen::MatrixXd& node_probs() { return node_probs_; }
  const Eigen::MatrixXd& node_probs() const { return node_probs_; }

  /// Distribution over edge categories for the pair (i, j).
  Eigen::VectorXd edge_probs(int i, int j) const;
  /// Sets both orientations of the pair. Self loops are rejected.
  void set_edge_probs(int i, int j, const Eigen::VectorXd& p);

  /// A_ij = 1 - P(edge category 0), zero diagonal. Feeds the relaxed GNN
  /// forward pass.
  Eigen::MatrixXd expected_adjacency() const;

  /// Per-row argmax (ties -> lower category index).
  CategoricalGraph discretize() const;

  void validate(double tol = 1e-9) const;

private:
  std::size_t fiber_index(int i, int j) const {
    return (static_cast<std::size_t>(i) * n_ + j) * b_;
  }

  int n_ = 0, a_ = 0, b_ = 0;
  Eigen::MatrixXd node_probs_;     // n x a
  std::vector<double> edge_probs_; // n*n fibers of length b
};

/// Synthetic stand-in for chemical validity: per-node-category caps on the
/// multiplicity-weighted degree, plus an optional connectivity requirement.
struct ValidityRules {
  std::vector<int> max_degree_per_node_cat;  // length a, every cap >= 1
  bool require_connected = true;
};

bool is_valid(const CategoricalGraph& g, const ValidityRules& rules);

}  // namespace recon
