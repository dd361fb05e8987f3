#include "recon/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace recon {

namespace {

void check_range(int value, int limit, const char* what) {
  if (value < 0 || value >= limit) {
    throw std::invalid_argument(std::string(what) + " out of range: " +
                                std::to_string(value));
  }
}

}  // namespace

CategoricalGraph::CategoricalGraph(int n, int node_cat_count,
                                   int edge_cat_count)
    : n_(n), a_(node_cat_count), b_(edge_cat_count) {
  if (n < 2) throw std::invalid_argument("CategoricalGraph: n must be >= 2");
  if (a_ < 1 || b_ < 1) {
    throw std::invalid_argument("CategoricalGraph: category counts must be >= 1");
  }
  node_cats_.assign(static_cast<std::size_t>(n_), 0);
  edge_cats_.assign(static_cast<std::size_t>(n_) * n_, 0);
}

void CategoricalGraph::set_node_cat(int i, int c) {
  check_range(i, n_, "node index");
  check_range(c, a_, "node category");
  node_cats_[static_cast<std::size_t>(i)] = c;
}

void CategoricalGraph::set_edge_cat(int i, int j, int c) {
  check_range(i, n_, "node index");
  check_range(j, n_, "node index");
  check_range(c, b_, "edge category");
  if (i == j) throw std::invalid_argument("set_edge_cat: self loop");
  edge_cats_[static_cast<std::size_t>(i) * n_ + j] = c;
  edge_cats_[static_cast<std::size_t>(j) * n_ + i] = c;
}

int CategoricalGraph::weighted_degree(int i) const {
  check_range(i, n_, "node index");
  int deg = 0;
  for (int j = 0; j < n_; ++j) deg += edge_cat(i, j);
  return deg;
}

int CategoricalGraph::edge_count() const {
  int count = 0;
  for (int i = 0; i < n_; ++i) {
    for (int j = i + 1; j < n_; ++j) {
      if (edge_cat(i, j) != 0) ++count;
    }
  }
  return count;
}

bool CategoricalGraph::connected() const {
  std::vector<int> stack{0};
  std::vector<char> seen(static_cast<std::size_t>(n_), 0);
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v = 0; v < n_; ++v) {
      if (!seen[static_cast<std::size_t>(v)] && edge_cat(u, v) != 0) {
        seen[static_cast<std::size_t>(v)] = 1;
        ++reached;
        stack.push_back(v);
      }
    }
  }
  return reached == n_;
}

Eigen::MatrixXd CategoricalGraph::node_onehot() const {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n_, a_);
  for (int i = 0; i < n_; ++i) x(i, node_cat(i)) = 1.0;
  return x;
}

Eigen::MatrixXd CategoricalGraph::adjacency() const {
  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(n_, n_);
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      if (i != j && edge_cat(i, j) != 0) adj(i, j) = 1.0;
    }
  }
  return adj;
}

void CategoricalGraph::validate() const {
  if (n_ < 2) throw std::invalid_argument("graph: n must be >= 2");
  for (int i = 0; i < n_; ++i) check_range(node_cat(i), a_, "node category");
  for (int i = 0; i < n_; ++i) {
    if (edge_cat(i, i) != 0) {
      throw std::invalid_argument("graph: nonzero diagonal at " +
                                  std::to_string(i));
    }
    for (int j = 0; j < n_; ++j) {
      check_range(edge_cat(i, j), b_, "edge category");
      if (edge_cat(i, j) != edge_cat(j, i)) {
        throw std::invalid_argument("graph: asymmetric edge categories");
      }
    }
  }
}

RelaxedGraph::RelaxedGraph(int n, int node_cat_count, int edge_cat_count)
    : n_(n), a_(node_cat_count), b_(edge_cat_count) {
  if (n < 2) throw std::invalid_argument("RelaxedGraph: n must be >= 2");
  node_probs_ = Eigen::MatrixXd::Zero(n_, a_);
  node_probs_.col(0).setOnes();
  edge_probs_.assign(static_cast<std::size_t>(n_) * n_ * b_, 0.0);
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) edge_probs_[fiber_index(i, j)] = 1.0;
  }
}

RelaxedGraph::RelaxedGraph(const CategoricalGraph& g)
    : RelaxedGraph(g.n(), g.node_cat_count(), g.edge_cat_count()) {
  node_probs_.setZero();
  for (int i = 0; i < n_; ++i) node_probs_(i, g.node_cat(i)) = 1.0;
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      if (i == j) continue;
      std::size_t base = fiber_index(i, j);
      for (int c = 0; c < b_; ++c) edge_probs_[base + c] = 0.0;
      edge_probs_[base + g.edge_cat(i, j)] = 1.0;
    }
  }
}

Eigen::VectorXd RelaxedGraph::edge_probs(int i, int j) const {
  check_range(i, n_, "node index");
  check_range(j, n_, "node index");
  Eigen::VectorXd p(b_);
  const std::size_t base = fiber_index(i, j);
  for (int c = 0; c < b_; ++c) p(c) = edge_probs_[base + c];
  return p;
}

void RelaxedGraph::set_edge_probs(int i, int j, const Eigen::VectorXd& p) {
  check_range(i, n_, "node index");
  check_range(j, n_, "node index");
  if (i == j) throw std::invalid_argument("set_edge_probs: self loop");
  if (p.size() != b_) throw std::invalid_argument("set_edge_probs: bad fiber size");
  const std::size_t ij = fiber_index(i, j), ji = fiber_index(j, i);
  for (int c = 0; c < b_; ++c) {
    edge_probs_[ij + c] = p(c);
    edge_probs_[ji + c] = p(c);
  }
}

Eigen::MatrixXd RelaxedGraph::expected_adjacency() const {
  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(n_, n_);
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      if (i != j) adj(i, j) = 1.0 - edge_probs_[fiber_index(i, j)];
    }
  }
  return adj;
}

CategoricalGraph RelaxedGraph::discretize() const {
  CategoricalGraph g(n_, a_, b_);
  for (int i = 0; i < n_; ++i) {
    int best = 0;
    for (int c = 1; c < a_; ++c) {
      if (node_probs_(i, c) > node_probs_(i, best)) best = c;
    }
    g.set_node_cat(i, best);
  }
  for (int i = 0; i < n_; ++i) {
    for (int j = i + 1; j < n_; ++j) {
      const std::size_t base = fiber_index(i, j);
      int best = 0;
      for (int c = 1; c < b_; ++c) {
        if (edge_probs_[base + c] > edge_probs_[base + best]) best = c;
      }
      g.set_edge_cat(i, j, best);
    }
  }
  return g;
}

void RelaxedGraph::validate(double tol) const {
  for (int i = 0; i < n_; ++i) {
    double row = 0.0;
    for (int c = 0; c < a_; ++c) {
      if (node_probs_(i, c) < -tol) {
        throw std::invalid_argument("relaxed graph: negative node probability");
      }
      row += node_probs_(i, c);
    }
    if (std::abs(row - 1.0) > tol) {
      throw std::invalid_argument("relaxed graph: node row does not sum to 1");
    }
  }
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      const std::size_t base = fiber_index(i, j);
      double sum = 0.0;
      for (int c = 0; c < b_; ++c) {
        const double p = edge_probs_[base + c];
        if (p < -tol) {
          throw std::invalid_argument("relaxed graph: negative edge probability");
        }
        if (i != j && edge_probs_[fiber_index(j, i) + c] != p) {
          throw std::invalid_argument("relaxed graph: asymmetric edge fiber");
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > tol) {
        throw std::invalid_argument("relaxed graph: edge fiber does not sum to 1");
      }
      if (i == j && std::abs(edge_probs_[base] - 1.0) > tol) {
        throw std::invalid_argument("relaxed graph: diagonal not category 0");
      }
    }
  }
}

bool is_valid(const CategoricalGraph& g, const ValidityRules& rules) {
  if (static_cast<int>(rules.max_degree_per_node_cat.size()) !=
      g.node_cat_count()) {
    throw std::invalid_argument("is_valid: rules do not match node categories");
  }
  for (int cap : rules.max_degree_per_node_cat) {
    if (cap < 1) throw std::invalid_argument("is_valid: caps must be >= 1");
  }
  for (int i = 0; i < g.n(); ++i) {
    const std::size_t cat = static_cast<std::size_t>(g.node_cat(i));
    if (g.weighted_degree(i) > rules.max_degree_per_node_cat[cat]) return false;
  }
  if (rules.require_connected && !g.connected()) return false;
  return true;
}

}  // namespace recon
