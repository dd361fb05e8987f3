#include "recon/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "recon/io.hpp"
#include "recon/rng.hpp"

namespace recon {

std::vector<std::size_t> LabeledDataset::class_indices(int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) out.push_back(i);
  }
  return out;
}

void LabeledDataset::validate(bool require_all_classes) const {
  if (graphs.size() != labels.size()) {
    throw std::invalid_argument("dataset: graphs/labels size mismatch");
  }
  if (num_classes < 1) throw std::invalid_argument("dataset: num_classes < 1");
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const auto& g = graphs[i];
    g.validate();
    if (g.node_cat_count() != node_cat_count ||
        g.edge_cat_count() != edge_cat_count) {
      throw std::invalid_argument("dataset: graph category counts differ");
    }
    if (g.n() > n_max) throw std::invalid_argument("dataset: graph exceeds n_max");
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw std::invalid_argument("dataset: label out of range");
    }
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  if (require_all_classes) {
    for (int c = 0; c < num_classes; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) {
        throw std::invalid_argument("dataset: class " + std::to_string(c) +
                                    " is empty");
      }
    }
  }
}

long graph_score(const CategoricalGraph& g, const std::vector<long>& node_w,
                 const std::vector<long>& edge_w) {
  if (static_cast<int>(node_w.size()) != g.node_cat_count() ||
      static_cast<int>(edge_w.size()) != g.edge_cat_count()) {
    throw std::invalid_argument("graph_score: weight table size mismatch");
  }
  long score = 0;
  for (int i = 0; i < g.n(); ++i) {
    score += node_w[static_cast<std::size_t>(g.node_cat(i))];
  }
  for (int i = 0; i < g.n(); ++i) {
    for (int j = i + 1; j < g.n(); ++j) {
      const int c = g.edge_cat(i, j);
      if (c != 0) score += edge_w[static_cast<std::size_t>(c)];
    }
  }
  return score;
}

namespace {

std::string describe_gen_config(const GenConfig& c) {
  std::ostringstream os;
  os << "count=" << c.count << " n=[" << c.n_min << "," << c.n_max << "]"
     << " a=" << c.node_cat_count << " b=" << c.edge_cat_count << " caps=[";
  for (std::size_t i = 0; i < c.rules.max_degree_per_node_cat.size(); ++i) {
    os << (i ? "," : "") << c.rules.max_degree_per_node_cat[i];
  }
  os << "] connected=" << (c.rules.require_connected ? "yes" : "no");
  return os.str();
}

// One attempt at a rule-satisfying graph; nullopt when capacity runs out.
bool try_generate_graph(const GenConfig& cfg, Rng& rng, CategoricalGraph& out) {
  const int n = rng.uniform_int(cfg.n_min, cfg.n_max);
  CategoricalGraph g(n, cfg.node_cat_count, cfg.edge_cat_count);
  for (int i = 0; i < n; ++i) {
    g.set_node_cat(i, static_cast<int>(rng.uniform_index(
                          static_cast<std::uint64_t>(cfg.node_cat_count))));
  }
  const auto& caps = cfg.rules.max_degree_per_node_cat;
  auto remaining = [&](int i) {
    return caps[static_cast<std::size_t>(g.node_cat(i))] - g.weighted_degree(i);
  };

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  if (cfg.rules.require_connected) {
    // Random spanning tree of category-1 edges over nodes with spare capacity.
    for (int k = 1; k < n; ++k) {
      std::vector<int> parents;
      for (int p = 0; p < k; ++p) {
        if (remaining(order[static_cast<std::size_t>(p)]) >= 1) {
          parents.push_back(order[static_cast<std::size_t>(p)]);
        }
      }
      if (parents.empty()) return false;
      const int parent =
          parents[rng.uniform_index(static_cast<std::uint64_t>(parents.size()))];
      g.set_edge_cat(order[static_cast<std::size_t>(k)], parent, 1);
    }
  }

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (g.edge_cat(i, j) == 0) pairs.emplace_back(i, j);
    }
  }
  rng.shuffle(pairs);
  for (auto [i, j] : pairs) {
    if (rng.uniform01() >= cfg.edge_density) continue;
    const int cap = std::min(remaining(i), remaining(j));
    const int top = std::min(cap, cfg.edge_cat_count - 1);
    if (top < 1) continue;
    g.set_edge_cat(i, j, rng.uniform_int(1, top));
  }
  if (!is_valid(g, cfg.rules)) return false;
  out = std::move(g);
  return true;
}

}  // namespace

LabeledDataset gen_synthetic_dataset(const GenConfig& cfg, std::uint64_t seed) {
  if (cfg.num_classes < 2) {
    throw std::invalid_argument("gen_synthetic_dataset: need C >= 2");
  }
  if (cfg.count < 10 * cfg.num_classes) {
    throw std::invalid_argument("gen_synthetic_dataset: need count >= 10*C");
  }
  if (cfg.n_min < 2 || cfg.n_max < cfg.n_min) {
    throw std::invalid_argument("gen_synthetic_dataset: bad node range");
  }
  if (static_cast<int>(cfg.rules.max_degree_per_node_cat.size()) !=
      cfg.node_cat_count) {
    throw std::invalid_argument(
        "gen_synthetic_dataset: caps must have one entry per node category");
  }
  if (static_cast<int>(cfg.node_score_weights.size()) != cfg.node_cat_count ||
      static_cast<int>(cfg.edge_score_weights.size()) != cfg.edge_cat_count) {
    throw std::invalid_argument("gen_synthetic_dataset: bad score weight tables");
  }

  LabeledDataset ds;
  ds.num_classes = cfg.num_classes;
  ds.node_cat_count = cfg.node_cat_count;
  ds.edge_cat_count = cfg.edge_cat_count;
  ds.n_max = cfg.n_max;
  ds.seed = seed;
  ds.graphs.reserve(static_cast<std::size_t>(cfg.count));

  for (int idx = 0; idx < cfg.count; ++idx) {
    Rng rng(derive_seed(seed, "gen-graph", static_cast<std::uint64_t>(idx)));
    CategoricalGraph g;
    bool ok = false;
    for (int attempt = 0; attempt < cfg.max_retries_per_graph; ++attempt) {
      if (try_generate_graph(cfg, rng, g)) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw std::runtime_error(
          "gen_synthetic_dataset: validity rules unsatisfiable after " +
          std::to_string(cfg.max_retries_per_graph) +
          " retries (" + describe_gen_config(cfg) + ")");
    }
    ds.graphs.push_back(std::move(g));
  }

  // Equal-frequency magnitude bins over the integer score.
  std::vector<std::size_t> order(ds.graphs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<long> scores(ds.graphs.size());
  for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
    scores[i] = graph_score(ds.graphs[i], cfg.node_score_weights,
                            cfg.edge_score_weights);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (scores[x] != scores[y]) return scores[x] < scores[y];
    return x < y;
  });
  ds.labels.assign(ds.graphs.size(), 0);
  const int base = cfg.count / cfg.num_classes;
  const int extra = cfg.count % cfg.num_classes;
  std::size_t pos = 0;
  for (int c = 0; c < cfg.num_classes; ++c) {
    const int take = base + (c < extra ? 1 : 0);
    for (int k = 0; k < take; ++k) ds.labels[order[pos++]] = c;
  }
  ds.validate();
  return ds;
}

namespace {

LabeledDataset take_subset(const LabeledDataset& ds,
                           const std::vector<std::size_t>& idx) {
  LabeledDataset out;
  out.num_classes = ds.num_classes;
  out.node_cat_count = ds.node_cat_count;
  out.edge_cat_count = ds.edge_cat_count;
  out.n_max = ds.n_max;
  out.seed = ds.seed;
  out.graphs.reserve(idx.size());
  out.labels.reserve(idx.size());
  for (std::size_t i : idx) {
    out.graphs.push_back(ds.graphs[i]);
    out.labels.push_back(ds.labels[i]);
  }
  return out;
}

void check_nonempty(const SplitResult& split) {
  if (split.target.graphs.empty() || split.validation.graphs.empty() ||
      split.auxiliary.graphs.empty()) {
    throw std::invalid_argument("split_dataset: empty split");
  }
}

}  // namespace

SplitResult split_dataset(const LabeledDataset& ds, const RandomSplitSpec& spec,
                          std::uint64_t seed) {
  const double sum =
      spec.target_ratio + spec.validation_ratio + spec.auxiliary_ratio;
  if (std::abs(sum - 1.0) > 1e-9 || spec.target_ratio < 0 ||
      spec.validation_ratio < 0 || spec.auxiliary_ratio < 0) {
    throw std::invalid_argument("split_dataset: ratios must be >= 0 and sum to 1");
  }
  const auto n = static_cast<long>(ds.size());
  const long n_target = std::lround(spec.target_ratio * static_cast<double>(n));
  const long n_val = std::lround(spec.validation_ratio * static_cast<double>(n));
  const long n_aux = n - n_target - n_val;

  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "split-random"));
  rng.shuffle(order);

  SplitResult split;
  auto cursor = order.begin();
  auto take = [&](long count) {
    std::vector<std::size_t> idx(cursor, cursor + count);
    cursor += count;
    std::sort(idx.begin(), idx.end());  // keep original dataset order
    return take_subset(ds, idx);
  };
  if (n_target < 0 || n_val < 0 || n_aux < 0) {
    throw std::invalid_argument("split_dataset: ratios produce negative sizes");
  }
  split.target = take(n_target);
  split.validation = take(n_val);
  split.auxiliary = take(n_aux);
  check_nonempty(split);
  return split;
}

namespace {

// Plain Lloyd's k-means with seeded k-means++ init.
std::vector<int> kmeans_assign(const std::vector<Eigen::VectorXd>& points,
                               int k, Rng& rng) {
  const auto n = points.size();
  std::vector<Eigen::VectorXd> centers;
  centers.reserve(static_cast<std::size_t>(k));
  centers.push_back(points[rng.uniform_index(n)]);
  std::vector<double> dist2(n, 0.0);
  while (static_cast<int>(centers.size()) < k) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = (points[i] - centers[0]).squaredNorm();
      for (std::size_t c = 1; c < centers.size(); ++c) {
        best = std::min(best, (points[i] - centers[c]).squaredNorm());
      }
      dist2[i] = best;
    }
    const double total = std::accumulate(dist2.begin(), dist2.end(), 0.0);
    if (total <= 0.0) {
      centers.push_back(points[rng.uniform_index(n)]);
      continue;
    }
    centers.push_back(points[static_cast<std::size_t>(
        rng.sample_categorical(dist2))]);
  }

  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (points[i] - centers[0]).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double d = (points[i] - centers[static_cast<std::size_t>(c)]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    for (int c = 0; c < k; ++c) {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(points[0].size());
      int count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] == c) {
          mean += points[i];
          ++count;
        }
      }
      if (count > 0) centers[static_cast<std::size_t>(c)] = mean / count;
    }
  }
  return assign;
}

}  // namespace

SplitResult split_dataset(const LabeledDataset& ds, const ClusterShiftSpec& spec,
                          std::uint64_t seed) {
  if (spec.groups < 2) {
    throw std::invalid_argument("split_dataset: cluster_shift needs g >= 2");
  }
  if (!spec.encoder) {
    throw std::invalid_argument("split_dataset: cluster_shift needs an encoder");
  }
  std::vector<Eigen::VectorXd> points;
  points.reserve(ds.size());
  for (const auto& g : ds.graphs) points.push_back(spec.encoder(g));

  Rng rng(derive_seed(seed, "split-cluster"));
  const auto assign = kmeans_assign(points, spec.groups, rng);

  // Target = the cluster whose size is closest to |D|/g (ties: lower index),
  // so the carved-out set is neither degenerate nor dominant.
  const double ideal = static_cast<double>(ds.size()) / spec.groups;
  int target_cluster = -1;
  double best_gap = 0.0;
  for (int c = 0; c < spec.groups; ++c) {
    int count = 0;
    for (int a : assign) count += (a == c);
    if (count == 0) continue;
    const double gap = std::abs(count - ideal);
    if (target_cluster < 0 || gap < best_gap) {
      target_cluster = c;
      best_gap = gap;
    }
  }

  std::vector<std::size_t> target_idx, rest_idx;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    (assign[i] == target_cluster ? target_idx : rest_idx).push_back(i);
  }
  rng.shuffle(rest_idx);
  const auto n_val = static_cast<std::size_t>(
      std::lround(spec.validation_fraction * static_cast<double>(rest_idx.size())));
  std::vector<std::size_t> val_idx(rest_idx.begin(),
                                   rest_idx.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> aux_idx(rest_idx.begin() + static_cast<long>(n_val),
                                   rest_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(aux_idx.begin(), aux_idx.end());

  SplitResult split;
  split.target = take_subset(ds, target_idx);
  split.validation = take_subset(ds, val_idx);
  split.auxiliary = take_subset(ds, aux_idx);
  check_nonempty(split);
  return split;
}

void write_dataset(const std::string& path, const LabeledDataset& ds) {
  ds.validate(false);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_dataset: cannot open " + path);
  out << "graphset 1 a=" << ds.node_cat_count << " b=" << ds.edge_cat_count
      << " C=" << ds.num_classes << " n_max=" << ds.n_max << " seed=" << ds.seed
      << " count=" << ds.size() << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& g = ds.graphs[i];
    out << "g " << g.n() << " " << ds.labels[i] << "\n";
    out << "v";
    for (int v = 0; v < g.n(); ++v) out << " " << g.node_cat(v);
    out << "\n";
    for (int u = 0; u < g.n(); ++u) {
      for (int v = u + 1; v < g.n(); ++v) {
        if (g.edge_cat(u, v) != 0) {
          out << "e " << u << " " << v << " " << g.edge_cat(u, v) << "\n";
        }
      }
    }
    out << "end\n";
  }
  if (!out) throw std::runtime_error("write_dataset: write failed: " + path);
}

LabeledDataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw io_error(io_error::Kind::corrupt_header,
                   "read_dataset: cannot open " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw io_error(io_error::Kind::corrupt_header, "read_dataset: empty file");
  }
  int version = 0, a = 0, b = 0, c = 0, n_max = 0;
  unsigned long long seed = 0, count = 0;
  if (std::sscanf(line.c_str(),
                  "graphset %d a=%d b=%d C=%d n_max=%d seed=%llu count=%llu",
                  &version, &a, &b, &c, &n_max, &seed, &count) != 7) {
    throw io_error(io_error::Kind::corrupt_header,
                   "read_dataset: bad header: " + line);
  }
  if (version != 1) {
    throw io_error(io_error::Kind::version_mismatch,
                   "read_dataset: unsupported format version " +
                       std::to_string(version));
  }
  LabeledDataset ds;
  ds.node_cat_count = a;
  ds.edge_cat_count = b;
  ds.num_classes = c;
  ds.n_max = n_max;
  ds.seed = seed;
  for (unsigned long long gi = 0; gi < count; ++gi) {
    if (!std::getline(in, line)) {
      throw io_error(io_error::Kind::truncation,
                     "read_dataset: expected graph " + std::to_string(gi));
    }
    int n = 0, label = 0;
    if (std::sscanf(line.c_str(), "g %d %d", &n, &label) != 2) {
      throw io_error(io_error::Kind::parse, "read_dataset: bad graph line: " + line);
    }
    CategoricalGraph g(n, a, b);
    if (!std::getline(in, line)) {
      throw io_error(io_error::Kind::truncation, "read_dataset: missing nodes");
    }
    std::istringstream nodes(line);
    std::string tag;
    nodes >> tag;
    if (tag != "v") {
      throw io_error(io_error::Kind::parse, "read_dataset: bad node line: " + line);
    }
    for (int v = 0; v < n; ++v) {
      int cat = -1;
      if (!(nodes >> cat)) {
        throw io_error(io_error::Kind::parse, "read_dataset: short node line");
      }
      g.set_node_cat(v, cat);
    }
    while (true) {
      if (!std::getline(in, line)) {
        throw io_error(io_error::Kind::truncation,
                       "read_dataset: missing record terminator");
      }
      if (line == "end") break;
      int u = 0, v = 0, cat = 0;
      if (std::sscanf(line.c_str(), "e %d %d %d", &u, &v, &cat) != 3) {
        throw io_error(io_error::Kind::parse, "read_dataset: bad edge line: " + line);
      }
      if (u >= v || cat == 0) {
        throw io_error(io_error::Kind::parse,
                       "read_dataset: edge must satisfy i<j, category != 0");
      }
      g.set_edge_cat(u, v, cat);
    }
    ds.graphs.push_back(std::move(g));
    ds.labels.push_back(label);
  }
  if (std::getline(in, line)) {
    throw io_error(io_error::Kind::parse, "read_dataset: trailing data");
  }
  ds.validate(false);
  return ds;
}

}  // namespace recon
