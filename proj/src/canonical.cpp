#include "recon/canonical.hpp"

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace recon {

namespace {

// Individualization-refinement search for the lexicographically smallest
// serialization. Colors are dense ranks assigned by sorted signature, which
// makes every step of the search invariant under node relabeling.
class CanonicalSearch {
public:
  CanonicalSearch(const CategoricalGraph& g, std::size_t budget)
      : g_(g), n_(g.n()), budget_(budget) {}

  std::string run() {
    std::vector<int> colors(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) colors[static_cast<std::size_t>(i)] = g_.node_cat(i);
    refine(colors);
    descend(colors);
    return std::move(*best_);
  }

private:
  using Signature = std::pair<int, std::vector<std::pair<int, int>>>;

  void refine(std::vector<int>& colors) {
    if (++refine_calls_ > budget_) {
      throw std::runtime_error(
          "canonical_key: search budget exceeded (graph too symmetric for the "
          "configured node bound)");
    }
    while (true) {
      std::vector<Signature> sigs(static_cast<std::size_t>(n_));
      for (int i = 0; i < n_; ++i) {
        auto& sig = sigs[static_cast<std::size_t>(i)];
        sig.first = colors[static_cast<std::size_t>(i)];
        sig.second.reserve(static_cast<std::size_t>(n_) - 1);
        for (int j = 0; j < n_; ++j) {
          if (j == i) continue;
          sig.second.emplace_back(g_.edge_cat(i, j),
                                  colors[static_cast<std::size_t>(j)]);
        }
        std::sort(sig.second.begin(), sig.second.end());
      }
      std::vector<Signature> order(sigs);
      std::sort(order.begin(), order.end());
      order.erase(std::unique(order.begin(), order.end()), order.end());
      int changed = 0;
      for (int i = 0; i < n_; ++i) {
        const int rank = static_cast<int>(
            std::lower_bound(order.begin(), order.end(),
                             sigs[static_cast<std::size_t>(i)]) -
            order.begin());
        if (rank != colors[static_cast<std::size_t>(i)]) changed = 1;
        colors[static_cast<std::size_t>(i)] = rank;
      }
      if (!changed) return;
    }
  }

  std::optional<int> branch_cell(const std::vector<int>& colors) const {
    int best_color = -1;
    for (int i = 0; i < n_; ++i) {
      const int c = colors[static_cast<std::size_t>(i)];
      int count = 0;
      for (int j = 0; j < n_; ++j) {
        if (colors[static_cast<std::size_t>(j)] == c) ++count;
      }
      if (count > 1 && (best_color < 0 || c < best_color)) best_color = c;
    }
    if (best_color < 0) return std::nullopt;
    return best_color;
  }

  // True when exchanging u and v (fixing the rest) is an automorphism; such
  // vertices produce identical branches, so only one is explored.
  bool swap_is_automorphism(int u, int v) const {
    if (g_.node_cat(u) != g_.node_cat(v)) return false;
    for (int w = 0; w < n_; ++w) {
      if (w == u || w == v) continue;
      if (g_.edge_cat(u, w) != g_.edge_cat(v, w)) return false;
    }
    return true;
  }

  void descend(const std::vector<int>& colors) {
    const auto cell = branch_cell(colors);
    if (!cell) {
      accept(colors);
      return;
    }
    std::vector<int> members;
    for (int i = 0; i < n_; ++i) {
      if (colors[static_cast<std::size_t>(i)] == *cell) members.push_back(i);
    }
    std::vector<int> branch;
    for (int v : members) {
      bool duplicate = false;
      for (int u : branch) {
        if (swap_is_automorphism(u, v)) {
          duplicate = true;
          break;
        }
      }
      if (!duplicate) branch.push_back(v);
    }
    for (int v : branch) {
      std::vector<int> next(colors);
      for (int i = 0; i < n_; ++i) next[static_cast<std::size_t>(i)] *= 2;
      next[static_cast<std::size_t>(v)] -= 1;  // v sorts before its old cell
      refine(next);
      descend(next);
    }
  }

  void accept(const std::vector<int>& colors) {
    std::vector<int> order(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int x, int y) {
      return colors[static_cast<std::size_t>(x)] < colors[static_cast<std::size_t>(y)];
    });
    std::string bytes;
    bytes.reserve(3 + static_cast<std::size_t>(n_) +
                  static_cast<std::size_t>(n_) * (n_ - 1) / 2);
    bytes.push_back(static_cast<char>(n_));
    bytes.push_back(static_cast<char>(g_.node_cat_count()));
    bytes.push_back(static_cast<char>(g_.edge_cat_count()));
    for (int p = 0; p < n_; ++p) {
      bytes.push_back(static_cast<char>(g_.node_cat(order[static_cast<std::size_t>(p)])));
    }
    for (int p = 0; p < n_; ++p) {
      for (int q = p + 1; q < n_; ++q) {
        bytes.push_back(static_cast<char>(
            g_.edge_cat(order[static_cast<std::size_t>(p)],
                        order[static_cast<std::size_t>(q)])));
      }
    }
    if (!best_ || bytes < *best_) best_ = std::move(bytes);
  }

  const CategoricalGraph& g_;
  int n_;
  std::size_t budget_;
  std::size_t refine_calls_ = 0;
  std::optional<std::string> best_;
};

}  // namespace

CanonicalKey canonical_key(const CategoricalGraph& g, std::size_t budget) {
  if (g.n() >= 256 || g.node_cat_count() >= 256 || g.edge_cat_count() >= 256) {
    throw std::invalid_argument("canonical_key: counts must fit in one byte");
  }
  g.validate();
  CanonicalSearch search(g, budget);
  return CanonicalKey{search.run()};
}

}  // namespace recon
