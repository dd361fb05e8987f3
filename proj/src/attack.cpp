#include "recon/attack.hpp"

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

namespace {

// Euclidean projection onto the probability simplex (Held et al.).
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const auto n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumulative = 0.0, tau = 0.0;
  int rho = 0;
  for (int j = 0; j < n; ++j) {
    cumulative += u[static_cast<std::size_t>(j)];
    const double candidate = (cumulative - 1.0) / (j + 1);
    if (u[static_cast<std::size_t>(j)] - candidate > 0.0) {
      rho = j + 1;
      tau = candidate;
    }
  }
  return (v.array() - tau).max(0.0);
}

void project_rows(Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    m.row(i) = project_simplex(m.row(i).transpose()).transpose();
  }
}

}  // namespace

void AttackConfig::validate(int num_classes) const {
  if (per_class_candidates < 1) {
    throw std::invalid_argument("attack config: m must be >= 1");
  }
  if (select_count < 1 || select_count > num_classes * per_class_candidates) {
    throw std::invalid_argument("attack config: need 1 <= k <= C*m");
  }
  if (constraint_weight < 0.0) {
    throw std::invalid_argument("attack config: alpha must be >= 0");
  }
  if (sdedit_steps < 0) {
    throw std::invalid_argument("attack config: K must be >= 0");
  }
  if (pgd.steps < 0 || pgd.step_size <= 0.0) {
    throw std::invalid_argument("attack config: bad pgd settings");
  }
  if (mask_opt.steps < 0 || mask_opt.learning_rate <= 0.0) {
    throw std::invalid_argument("attack config: bad mask optimizer settings");
  }
}

CandidateSet select_candidates(const GnnClassifier& model,
                               const LabeledDataset& aux, int per_class) {
  if (per_class < 1) {
    throw std::invalid_argument("select_candidates: m must be >= 1");
  }
  std::vector<double> conf(aux.size());
  for (std::size_t i = 0; i < aux.size(); ++i) {
    conf[i] = confidence(model, aux.graphs[i], aux.labels[i]);
  }
  CandidateSet out;
  for (int c = 0; c < aux.num_classes; ++c) {
    auto members = aux.class_indices(c);
    if (static_cast<int>(members.size()) < per_class) {
      throw std::invalid_argument(
          "select_candidates: class " + std::to_string(c) + " has only " +
          std::to_string(members.size()) + " graphs, need " +
          std::to_string(per_class));
    }
    std::sort(members.begin(), members.end(), [&](std::size_t x, std::size_t y) {
      if (conf[x] != conf[y]) return conf[x] > conf[y];
      return x < y;
    });
    for (int r = 0; r < per_class; ++r) {
      out.graphs.push_back(aux.graphs[members[static_cast<std::size_t>(r)]]);
      out.labels.push_back(c);
      out.source_indices.push_back(members[static_cast<std::size_t>(r)]);
    }
  }
  return out;
}

PgdTrace optimize_noise_single(const GnnClassifier& model,
                               const CategoricalGraph& graph, int label,
                               const PgdConfig& config, bool edges_only) {
  PgdTrace trace;
  trace.relaxed = RelaxedGraph(graph);
  auto& relaxed = trace.relaxed;
  double loss = relaxed_ce_grads(model, relaxed, label).loss;
  trace.loss_history.push_back(loss);
  if (loss < config.saturation_loss) return trace;

  const int n = relaxed.n();
  double step = config.step_size;
  for (int iter = 0; iter < config.steps; ++iter) {
    const auto grads = relaxed_ce_grads(model, relaxed, label);
    bool accepted = false;
    for (int halving = 0; halving <= config.max_halvings; ++halving) {
      RelaxedGraph proposal = relaxed;
      if (!edges_only) {
        proposal.node_probs() -= step * grads.node;
        project_rows(proposal.node_probs());
      }
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          Eigen::VectorXd fiber = relaxed.edge_probs(i, j);
          // Only the no-edge component carries gradient: A_ij = 1 - p0.
          fiber(0) += step * grads.adjacency(i, j);
          proposal.set_edge_probs(i, j, project_simplex(fiber));
        }
      }
      const double proposal_loss = relaxed_ce_grads(model, proposal, label).loss;
      if (!std::isfinite(proposal_loss)) {
        throw std::runtime_error("optimize_noise: non-finite loss at step " +
                                 std::to_string(iter));
      }
      if (proposal_loss <= loss) {
        relaxed = std::move(proposal);
        loss = proposal_loss;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no descent direction at the smallest step
    trace.loss_history.push_back(loss);
    step = std::min(step * 1.5, config.step_size);
    if (loss < config.saturation_loss) break;
  }
  return trace;
}

NoiseOptResult optimize_noise(const GnnClassifier& model,
                              const CandidateSet& candidates,
                              const PgdConfig& config) {
  NoiseOptResult out;
  out.graphs.reserve(candidates.graphs.size());
  for (std::size_t i = 0; i < candidates.graphs.size(); ++i) {
    PgdTrace trace;
    try {
      trace = optimize_noise_single(model, candidates.graphs[i],
                                    candidates.labels[i], config);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("candidate " + std::to_string(i) + ": " +
                               e.what());
    }
    out.initial_loss.push_back(trace.loss_history.front());
    out.final_loss.push_back(trace.loss_history.back());
    out.graphs.push_back(trace.relaxed.discretize());
  }
  return out;
}

MaskOptTrace optimize_selection_mask_traced(const ParamVector& theta,
                                            const std::vector<ParamVector>& features,
                                            double alpha,
                                            const MaskOptConfig& config) {
  if (features.empty()) {
    throw std::invalid_argument("optimize_selection_mask: no features");
  }
  const auto m = static_cast<Eigen::Index>(features.size());
  for (const auto& g : features) {
    if (g.size() != theta.size()) {
      throw std::invalid_argument(
          "optimize_selection_mask: feature layout mismatch");
    }
  }
  Eigen::MatrixXd gram(m, m);
  Eigen::VectorXd cross(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    cross(i) = features[static_cast<std::size_t>(i)].dot(theta);
    for (Eigen::Index j = i; j < m; ++j) {
      gram(i, j) = features[static_cast<std::size_t>(i)].dot(
          features[static_cast<std::size_t>(j)]);
      gram(j, i) = gram(i, j);
    }
  }
  const double theta_sq = theta.squaredNorm();

  auto objective = [&](const Eigen::VectorXd& lam) {
    const double ls = theta_sq - 2.0 * lam.dot(cross) +
                      lam.dot(gram * lam);
    return ls + alpha * (-lam.array()).max(0.0).sum();
  };

  MaskOptTrace trace;
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(m);
  double value = objective(lam);
  trace.objective_history.push_back(value);
  double step = config.learning_rate;

  for (int iter = 0; iter < config.steps; ++iter) {
    Eigen::VectorXd grad = 2.0 * (gram * lam - cross);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (lam(i) < 0.0) grad(i) -= alpha;
    }
    bool accepted = false;
    for (int halving = 0; halving <= config.max_halvings; ++halving) {
      Eigen::VectorXd proposal = lam - step * grad;
      const double proposal_value = objective(proposal);
      if (proposal_value <= value) {
        lam = std::move(proposal);
        value = proposal_value;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || step < 1e-18) break;
    trace.objective_history.push_back(value);
    step = std::min(step * 1.5, config.learning_rate);
  }
  trace.mask = std::move(lam);
  return trace;
}

Eigen::VectorXd optimize_selection_mask(const ParamVector& theta,
                                        const std::vector<ParamVector>& features,
                                        double alpha,
                                        const MaskOptConfig& config) {
  return optimize_selection_mask_traced(theta, features, alpha, config).mask;
}

namespace {

std::vector<int> rank_by_mask(const Eigen::VectorXd& mask) {
  std::vector<int> order(static_cast<std::size_t>(mask.size()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    if (mask(x) != mask(y)) return mask(x) > mask(y);
    return x < y;
  });
  return order;
}

// Shared tail of the pipeline: margin-gradient features, mask optimization,
// top-k ranking, record assembly.
AttackResult select_and_rank(const GnnClassifier& model,
                             const std::vector<CategoricalGraph>& generated,
                             std::vector<CandidateRecord> records,
                             const AttackConfig& config) {
  const ParamVector theta = model.params();
  std::vector<ParamVector> features;
  features.reserve(generated.size());
  for (std::size_t i = 0; i < generated.size(); ++i) {
    features.push_back(
        margin_and_grad(model, generated[i], records[i].label).grad);
  }
  const Eigen::VectorXd mask = optimize_selection_mask(
      theta, features, config.constraint_weight, config.mask_opt);
  const auto order = rank_by_mask(mask);

  AttackResult result;
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].lambda = mask(static_cast<Eigen::Index>(i));
  }
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    records[static_cast<std::size_t>(order[pos])].rank = static_cast<int>(pos);
  }
  for (int pos = 0; pos < config.select_count; ++pos) {
    const auto id = static_cast<std::size_t>(order[static_cast<std::size_t>(pos)]);
    result.reconstructed.push_back(generated[id]);
    result.labels.push_back(records[id].label);
  }
  result.records = std::move(records);
  return result;
}

std::vector<CandidateRecord> make_records(const GnnClassifier& model,
                                          const CandidateSet& candidates,
                                          const NoiseOptResult& optimized,
                                          const std::vector<CategoricalGraph>& generated,
                                          const std::vector<std::uint64_t>& seeds) {
  std::vector<CandidateRecord> records(candidates.graphs.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    r.id = static_cast<int>(i);
    r.label = candidates.labels[i];
    r.seed = seeds[i];
    r.selected = candidates.graphs[i];
    r.optimized = optimized.graphs[i];
    r.generated = generated[i];
    r.conf_selected = confidence(model, r.selected, r.label);
    r.conf_optimized = confidence(model, r.optimized, r.label);
    r.conf_generated = confidence(model, r.generated, r.label);
    r.relaxed_loss_initial = optimized.initial_loss[i];
    r.relaxed_loss_final = optimized.final_loss[i];
  }
  return records;
}

CategoricalGraph uniform_random_graph(int n, int a, int b, Rng& rng) {
  CategoricalGraph g(n, a, b);
  for (int i = 0; i < n; ++i) {
    g.set_node_cat(i, static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(a))));
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      g.set_edge_cat(i, j, static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(b))));
    }
  }
  return g;
}

}  // namespace

AttackResult run_graphsteal(const GnnClassifier& model,
                            const LabeledDataset& aux,
                            const Denoiser& denoiser,
                            const NoiseSchedule& schedule,
                            const AttackConfig& config) {
  config.validate(aux.num_classes);
  if (config.sdedit_steps > schedule.steps()) {
    throw std::invalid_argument("run_graphsteal: K exceeds schedule steps");
  }
  const auto candidates = select_candidates(model, aux, config.per_class_candidates);
  const auto optimized = optimize_noise(model, candidates, config.pgd);

  std::vector<CategoricalGraph> generated;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < optimized.graphs.size(); ++i) {
    const std::uint64_t s = derive_seed(config.seed, "graphsteal-generate", i);
    seeds.push_back(s);
    generated.push_back(sdedit_generate(denoiser, schedule, optimized.graphs[i],
                                        config.sdedit_steps, s));
  }
  auto records = make_records(model, candidates, optimized, generated, seeds);
  return select_and_rank(model, generated, std::move(records), config);
}

BaselineResult run_baseline(BaselineMethod method, const GnnClassifier& model,
                            const LabeledDataset& aux, const Denoiser* denoiser,
                            const NoiseSchedule* schedule, int k,
                            const PgdConfig& pgd, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("run_baseline: k must be >= 1");
  BaselineResult out;
  switch (method) {
    case BaselineMethod::bl_conf: {
      if (k > static_cast<int>(aux.size())) {
        throw std::invalid_argument("bl_conf: k exceeds auxiliary size");
      }
      std::vector<std::size_t> order(aux.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::vector<double> conf(aux.size());
      for (std::size_t i = 0; i < aux.size(); ++i) {
        conf[i] = confidence(model, aux.graphs[i], aux.labels[i]);
      }
      std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        if (conf[x] != conf[y]) return conf[x] > conf[y];
        return x < y;
      });
      for (int i = 0; i < k; ++i) {
        out.reconstructed.push_back(aux.graphs[order[static_cast<std::size_t>(i)]]);
        out.labels.push_back(aux.labels[order[static_cast<std::size_t>(i)]]);
      }
      return out;
    }
    case BaselineMethod::bl_rand: {
      // Erdos-Renyi at the auxiliary mean density; categories resampled from
      // auxiliary marginals.
      double density = 0.0;
      std::vector<double> node_marginal(static_cast<std::size_t>(aux.node_cat_count), 0.0);
      std::vector<double> edge_marginal(static_cast<std::size_t>(aux.edge_cat_count), 0.0);
      std::vector<double> sizes;
      for (const auto& g : aux.graphs) {
        density += static_cast<double>(g.edge_count()) /
                   (g.n() * (g.n() - 1) / 2);
        sizes.push_back(static_cast<double>(g.n()));
        for (int i = 0; i < g.n(); ++i) {
          node_marginal[static_cast<std::size_t>(g.node_cat(i))] += 1.0;
        }
        for (int i = 0; i < g.n(); ++i) {
          for (int j = i + 1; j < g.n(); ++j) {
            if (g.edge_cat(i, j) != 0) {
              edge_marginal[static_cast<std::size_t>(g.edge_cat(i, j))] += 1.0;
            }
          }
        }
      }
      density /= static_cast<double>(aux.size());
      const double edge_total =
          std::accumulate(edge_marginal.begin(), edge_marginal.end(), 0.0);
      if (edge_total == 0.0) edge_marginal[std::min(1, aux.edge_cat_count - 1)] = 1.0;

      Rng rng(derive_seed(seed, "bl-rand"));
      for (int s = 0; s < k; ++s) {
        const int n = aux.graphs[rng.uniform_index(aux.size())].n();
        CategoricalGraph g(n, aux.node_cat_count, aux.edge_cat_count);
        for (int i = 0; i < n; ++i) {
          g.set_node_cat(i, rng.sample_categorical(node_marginal));
        }
        for (int i = 0; i < n; ++i) {
          for (int j = i + 1; j < n; ++j) {
            if (rng.uniform01() < density) {
              g.set_edge_cat(i, j, rng.sample_categorical(edge_marginal));
            }
          }
        }
        out.reconstructed.push_back(std::move(g));
        out.labels.push_back(static_cast<int>(rng.uniform_index(
            static_cast<std::uint64_t>(aux.num_classes))));
      }
      return out;
    }
    case BaselineMethod::bl_diff: {
      if (!denoiser || !schedule) {
        throw std::invalid_argument("bl_diff: needs a trained diffusion model");
      }
      Rng rng(derive_seed(seed, "bl-diff"));
      for (int s = 0; s < k; ++s) {
        // Unconditional sample: node count from the auxiliary empirical
        // distribution, content irrelevant at K = T.
        const auto& shape = aux.graphs[rng.uniform_index(aux.size())];
        CategoricalGraph blank(shape.n(), aux.node_cat_count, aux.edge_cat_count);
        auto sample = sdedit_generate(*denoiser, *schedule, blank,
                                      schedule->steps(), rng.next_u64());
        out.labels.push_back(0);
        out.reconstructed.push_back(std::move(sample));
      }
      return out;
    }
    case BaselineMethod::graphmi_g: {
      Rng rng(derive_seed(seed, "graphmi-g"));
      if (k > static_cast<int>(aux.size())) {
        throw std::invalid_argument("graphmi_g: k exceeds auxiliary size");
      }
      std::vector<std::size_t> order(aux.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(order);
      for (int s = 0; s < k; ++s) {
        const auto idx = order[static_cast<std::size_t>(s)];
        auto trace = optimize_noise_single(model, aux.graphs[idx],
                                           aux.labels[idx], pgd,
                                           /*edges_only=*/true);
        out.reconstructed.push_back(trace.relaxed.discretize());
        out.labels.push_back(aux.labels[idx]);
      }
      return out;
    }
  }
  throw std::invalid_argument("run_baseline: unknown method");
}

AttackResult run_ablation(AblationVariant variant, const GnnClassifier& model,
                          const LabeledDataset& aux, const Denoiser& denoiser,
                          const NoiseSchedule& schedule,
                          const AttackConfig& config) {
  config.validate(aux.num_classes);
  const auto candidates = select_candidates(model, aux, config.per_class_candidates);

  if (variant == AblationVariant::select_from_aux) {
    // Mask selection straight over the auxiliary set; no optimization, no
    // generation.
    std::vector<CandidateRecord> records(aux.size());
    std::vector<CategoricalGraph> generated = aux.graphs;
    for (std::size_t i = 0; i < aux.size(); ++i) {
      auto& r = records[i];
      r.id = static_cast<int>(i);
      r.label = aux.labels[i];
      r.seed = 0;
      r.selected = r.optimized = r.generated = aux.graphs[i];
      r.conf_selected = r.conf_optimized = r.conf_generated =
          confidence(model, aux.graphs[i], aux.labels[i]);
    }
    return select_and_rank(model, generated, std::move(records), config);
  }

  NoiseOptResult optimized;
  if (variant == AblationVariant::random_noise_inputs) {
    // Uniform categorical graphs stand in for the optimized candidates (the
    // discrete analog of Gaussian-noise inputs).
    Rng rng(derive_seed(config.seed, "ablation-o"));
    for (std::size_t i = 0; i < candidates.graphs.size(); ++i) {
      auto noise = uniform_random_graph(candidates.graphs[i].n(),
                                        aux.node_cat_count,
                                        aux.edge_cat_count, rng);
      optimized.initial_loss.push_back(
          ce_loss(model, candidates.graphs[i], candidates.labels[i]));
      optimized.final_loss.push_back(
          ce_loss(model, noise, candidates.labels[i]));
      optimized.graphs.push_back(std::move(noise));
    }
  } else {
    optimized = optimize_noise(model, candidates, config.pgd);
  }

  std::vector<CategoricalGraph> generated;
  std::vector<std::uint64_t> seeds;
  if (variant == AblationVariant::skip_diffusion) {
    generated = optimized.graphs;
    seeds.assign(candidates.graphs.size(), 0);
  } else {
    for (std::size_t i = 0; i < optimized.graphs.size(); ++i) {
      const std::uint64_t s = derive_seed(config.seed, "graphsteal-generate", i);
      seeds.push_back(s);
      generated.push_back(sdedit_generate(denoiser, schedule,
                                          optimized.graphs[i],
                                          config.sdedit_steps, s));
    }
  }
  auto records = make_records(model, candidates, optimized, generated, seeds);

  if (variant == AblationVariant::random_selection) {
    std::vector<std::size_t> order(generated.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, "ablation-s"));
    rng.shuffle(order);
    AttackResult result;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      records[order[pos]].rank = static_cast<int>(pos);
    }
    for (int pos = 0; pos < config.select_count; ++pos) {
      const auto id = order[static_cast<std::size_t>(pos)];
      result.reconstructed.push_back(generated[id]);
      result.labels.push_back(records[id].label);
    }
    result.records = std::move(records);
    return result;
  }
  return select_and_rank(model, generated, std::move(records), config);
}

namespace {

void write_graph_block(std::ostream& out, const char* tag,
                       const CategoricalGraph& g) {
  out << tag << " " << g.n() << "\n";
  out << "v";
  for (int i = 0; i < g.n(); ++i) out << " " << g.node_cat(i);
  out << "\n";
  for (int i = 0; i < g.n(); ++i) {
    for (int j = i + 1; j < g.n(); ++j) {
      if (g.edge_cat(i, j) != 0) {
        out << "e " << i << " " << j << " " << g.edge_cat(i, j) << "\n";
      }
    }
  }
}

CategoricalGraph read_graph_block(std::istream& in, const char* tag, int a,
                                  int b, std::string& line) {
  int n = 0;
  char parsed_tag[16] = {0};
  if (std::sscanf(line.c_str(), "%15s %d", parsed_tag, &n) != 2 ||
      std::string(parsed_tag) != tag) {
    throw io_error(io_error::Kind::parse, "audit: expected block " +
                                              std::string(tag) + ", got " + line);
  }
  CategoricalGraph g(n, a, b);
  if (!std::getline(in, line) || line.rfind("v", 0) != 0) {
    throw io_error(io_error::Kind::truncation, "audit: missing node line");
  }
  std::istringstream nodes(line.substr(1));
  for (int i = 0; i < n; ++i) {
    int cat = 0;
    if (!(nodes >> cat)) {
      throw io_error(io_error::Kind::parse, "audit: short node line");
    }
    g.set_node_cat(i, cat);
  }
  while (std::getline(in, line)) {
    if (line.rfind("e ", 0) != 0) return g;
    int i = 0, j = 0, cat = 0;
    if (std::sscanf(line.c_str(), "e %d %d %d", &i, &j, &cat) != 3) {
      throw io_error(io_error::Kind::parse, "audit: bad edge line: " + line);
    }
    g.set_edge_cat(i, j, cat);
  }
  throw io_error(io_error::Kind::truncation, "audit: unterminated graph block");
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_audit(const std::string& path,
                 const std::vector<CandidateRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_audit: cannot open " + path);
  int a = 0, b = 0;
  if (!records.empty()) {
    a = records.front().selected.node_cat_count();
    b = records.front().selected.edge_cat_count();
  }
  out << "audit 1 count=" << records.size() << " a=" << a << " b=" << b << "\n";
  for (const auto& r : records) {
    out << "candidate " << r.id << " label=" << r.label << " seed=" << r.seed
        << " lambda=" << fmt_double(r.lambda) << " rank=" << r.rank
        << " conf_selected=" << fmt_double(r.conf_selected)
        << " conf_optimized=" << fmt_double(r.conf_optimized)
        << " conf_generated=" << fmt_double(r.conf_generated)
        << " loss_initial=" << fmt_double(r.relaxed_loss_initial)
        << " loss_final=" << fmt_double(r.relaxed_loss_final) << "\n";
    write_graph_block(out, "selected", r.selected);
    write_graph_block(out, "optimized", r.optimized);
    write_graph_block(out, "generated", r.generated);
    out << "end\n";
  }
  if (!out) throw std::runtime_error("write_audit: write failed: " + path);
}

std::vector<CandidateRecord> read_audit(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw io_error(io_error::Kind::corrupt_header, "read_audit: cannot open " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw io_error(io_error::Kind::corrupt_header, "read_audit: empty file");
  }
  int version = 0, a = 0, b = 0;
  unsigned long long count = 0;
  if (std::sscanf(line.c_str(), "audit %d count=%llu a=%d b=%d", &version,
                  &count, &a, &b) != 4) {
    throw io_error(io_error::Kind::corrupt_header,
                   "read_audit: bad header: " + line);
  }
  if (version != 1) {
    throw io_error(io_error::Kind::version_mismatch,
                   "read_audit: unsupported version " + std::to_string(version));
  }
  std::vector<CandidateRecord> records;
  for (unsigned long long idx = 0; idx < count; ++idx) {
    if (!std::getline(in, line)) {
      throw io_error(io_error::Kind::truncation,
                     "read_audit: expected candidate " + std::to_string(idx));
    }
    CandidateRecord r;
    unsigned long long seed = 0;
    if (std::sscanf(line.c_str(),
                    "candidate %d label=%d seed=%llu lambda=%lg rank=%d "
                    "conf_selected=%lg conf_optimized=%lg conf_generated=%lg "
                    "loss_initial=%lg loss_final=%lg",
                    &r.id, &r.label, &seed, &r.lambda, &r.rank,
                    &r.conf_selected, &r.conf_optimized, &r.conf_generated,
                    &r.relaxed_loss_initial, &r.relaxed_loss_final) != 10) {
      throw io_error(io_error::Kind::parse, "read_audit: bad candidate line: " + line);
    }
    r.seed = seed;
    if (!std::getline(in, line)) {
      throw io_error(io_error::Kind::truncation, "read_audit: missing blocks");
    }
    r.selected = read_graph_block(in, "selected", a, b, line);
    r.optimized = read_graph_block(in, "optimized", a, b, line);
    r.generated = read_graph_block(in, "generated", a, b, line);
    if (line != "end") {
      throw io_error(io_error::Kind::parse, "read_audit: missing end marker");
    }
    records.push_back(std::move(r));
  }
  if (std::getline(in, line)) {
    throw io_error(io_error::Kind::parse, "read_audit: trailing data");
  }
  return records;
}

}  // namespace recon
