#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "recon/attack.hpp"
#include "recon/canonical.hpp"
#include "recon/io.hpp"
#include "recon/rng.hpp"
#include "support/oracles.hpp"
#include "support/testutil.hpp"

using namespace recon;

namespace {

GenConfig bench_config(int count) {
  GenConfig cfg;
  cfg.count = count;
  cfg.num_classes = 2;
  cfg.n_min = 4;
  cfg.n_max = 6;
  cfg.node_cat_count = 3;
  cfg.edge_cat_count = 2;
  cfg.rules.max_degree_per_node_cat = {1, 2, 3};
  cfg.rules.require_connected = false;
  cfg.node_score_weights = {0, 1, 2};
  cfg.edge_score_weights = {0, 1};
  cfg.edge_density = 0.45;
  return cfg;
}

// Edgeless graphs + a bias-free model that scores class 0 by category-0
// counts: confidences are fully controlled.
GnnClassifier sharp_counting_model() {
  std::vector<Eigen::MatrixXd> convs{Eigen::MatrixXd::Identity(2, 2)};
  Eigen::MatrixXd readout(2, 2);
  readout << 5.0, -5.0, -5.0, 5.0;
  return GnnClassifier(std::move(convs), std::move(readout));
}

CategoricalGraph uniform_nodes_graph(int n, int cat) {
  CategoricalGraph g(n, 2, 2);
  for (int i = 0; i < n; ++i) g.set_node_cat(i, cat);
  return g;
}

CategoricalGraph half_half_graph() {
  CategoricalGraph g(2, 2, 2);
  g.set_node_cat(0, 0);
  g.set_node_cat(1, 1);
  return g;
}

std::multiset<std::string> key_multiset(const std::vector<CategoricalGraph>& graphs) {
  std::multiset<std::string> keys;
  for (const auto& g : graphs) keys.insert(canonical_key(g).bytes);
  return keys;
}

}  // namespace

TEST_CASE("select_candidates: full take, tie break, and planted confidences") {
  LabeledDataset aux;
  aux.num_classes = 2;
  aux.node_cat_count = 2;
  aux.edge_cat_count = 2;
  aux.n_max = 6;
  aux.graphs = {uniform_nodes_graph(4, 0), half_half_graph(), half_half_graph(),
                uniform_nodes_graph(4, 1), half_half_graph(), half_half_graph()};
  aux.labels = {0, 0, 0, 1, 1, 1};
  auto model = sharp_counting_model();

  // m = class size returns the whole auxiliary set.
  auto all = select_candidates(model, aux, 3);
  CHECK(all.graphs.size() == 6);
  CHECK(key_multiset(all.graphs) == key_multiset(aux.graphs));

  // Planted high-confidence graphs are picked at m = 1.
  auto top = select_candidates(model, aux, 1);
  REQUIRE(top.graphs.size() == 2);
  CHECK(top.source_indices[0] == 0);
  CHECK(top.source_indices[1] == 3);
  CHECK(confidence(model, top.graphs[0], 0) > 0.99);

  // Uniform-logit classifier: pure index tie break.
  std::vector<Eigen::MatrixXd> zero_convs{Eigen::MatrixXd::Zero(2, 2)};
  GnnClassifier uniform(std::move(zero_convs), Eigen::MatrixXd::Zero(2, 2));
  auto ties = select_candidates(uniform, aux, 2);
  CHECK(ties.source_indices == std::vector<std::size_t>{0, 1, 3, 4});

  CHECK_THROWS_WITH_AS(select_candidates(model, aux, 4),
                       doctest::Contains("class 0"), std::invalid_argument);
}

TEST_CASE("optimize_noise: zero steps and saturated candidates are no-ops") {
  auto model = sharp_counting_model();
  CandidateSet cands;
  cands.graphs = {uniform_nodes_graph(4, 0), half_half_graph()};
  cands.labels = {0, 0};
  cands.source_indices = {0, 1};

  PgdConfig zero;
  zero.steps = 0;
  auto result = optimize_noise(model, cands, zero);
  CHECK(result.graphs[0] == cands.graphs[0]);
  CHECK(result.graphs[1] == cands.graphs[1]);

  // The all-category-0 graph sits at loss ~ e^-40: below saturation, so even
  // with steps it stays untouched.
  PgdConfig live;
  live.steps = 50;
  auto saturated = optimize_noise(model, cands, live);
  CHECK(saturated.graphs[0] == cands.graphs[0]);
  CHECK(saturated.initial_loss[0] < 1e-6);
}

TEST_CASE("optimize_noise descends monotonically and strictly most steps") {
  auto cfg = bench_config(40);
  auto ds = gen_synthetic_dataset(cfg, 51);
  TrainConfig tc;
  tc.hidden_dims = {8, 8};
  tc.learning_rate = 0.02;
  tc.epochs = 800;
  tc.seed = 5;
  auto trained = train(ds, tc);

  // A candidate the model is not yet confident about.
  std::size_t worst = 0;
  double worst_conf = 2.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double c = confidence(trained.model, ds.graphs[i], ds.labels[i]);
    if (c < worst_conf) {
      worst_conf = c;
      worst = i;
    }
  }
  PgdConfig pgd;
  pgd.steps = 200;
  pgd.step_size = 0.05;
  auto trace = optimize_noise_single(trained.model, ds.graphs[worst],
                                     ds.labels[worst], pgd);
  REQUIRE(trace.loss_history.size() > 5);
  CHECK(trace.loss_history.back() < trace.loss_history.front());
  int strict = 0;
  for (std::size_t i = 0; i + 1 < trace.loss_history.size(); ++i) {
    CHECK(trace.loss_history[i + 1] <= trace.loss_history[i] + 1e-12);
    strict += (trace.loss_history[i + 1] < trace.loss_history[i]);
  }
  CHECK(strict >= static_cast<int>(0.9 * (trace.loss_history.size() - 1)));
}

TEST_CASE("optimize_selection_mask closed-form cases") {
  Rng rng(9);
  Eigen::VectorXd theta(20);
  for (int i = 0; i < 20; ++i) theta(i) = rng.normal();

  MaskOptConfig cfg;
  cfg.steps = 4000;
  cfg.learning_rate = 0.25 / theta.squaredNorm();

  const double alpha = 4.0 * theta.squaredNorm();
  auto exact = optimize_selection_mask_traced(theta, {theta}, alpha, cfg);
  CHECK(exact.mask(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(exact.objective_history.back() < 1e-6);

  auto blocked = optimize_selection_mask_traced(
      theta, {Eigen::VectorXd(-theta)}, alpha, cfg);
  CHECK(blocked.mask(0) >= -1e-6);
  CHECK(std::abs(blocked.mask(0)) < 1e-6);
  CHECK(blocked.objective_history.back() ==
        doctest::Approx(theta.squaredNorm()).epsilon(1e-9));

  for (std::size_t i = 0; i + 1 < exact.objective_history.size(); ++i) {
    CHECK(exact.objective_history[i + 1] <= exact.objective_history[i] + 1e-9);
  }
}

TEST_CASE("optimize_selection_mask matches the active-set NNLS oracle") {
  Rng rng(13);
  const int dim = 60;
  // Orthonormal features via Gram-Schmidt on random vectors.
  std::vector<Eigen::VectorXd> basis;
  while (basis.size() < 5) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = rng.normal();
    for (const auto& b : basis) v -= b.dot(v) * b;
    if (v.norm() > 1e-6) basis.push_back(v.normalized());
  }
  Eigen::VectorXd theta = 2.0 * basis[0] + 3.0 * basis[2];

  MaskOptConfig cfg;
  cfg.steps = 6000;
  cfg.learning_rate = 0.25;
  const Eigen::VectorXd mask = optimize_selection_mask(
      theta, basis, 4.0 * theta.squaredNorm(), cfg);

  Eigen::MatrixXd a(dim, 5);
  for (int j = 0; j < 5; ++j) a.col(j) = basis[static_cast<std::size_t>(j)];
  const Eigen::VectorXd oracle = oracles::nnls_active_set(a, theta);

  CHECK((mask - oracle).cwiseAbs().maxCoeff() < 1e-4);
  CHECK(mask(0) == doctest::Approx(2.0).epsilon(1e-4));
  CHECK(mask(2) == doctest::Approx(3.0).epsilon(1e-4));
  CHECK(std::abs(mask(1)) < 1e-4);
}

TEST_CASE("selection mask separates training members from non-members") {
  // The attack invariant behind Theorem 1, run over 5 seeds.
  auto cfg = bench_config(40);
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto pool = gen_synthetic_dataset(cfg, 100 + seed);
    // Deduplicate isomorphism classes, then alternate member/non-member so
    // index tie-breaks cannot favor members.
    std::set<std::string> seen;
    LabeledDataset members, nonmembers;
    for (auto* part : {&members, &nonmembers}) {
      part->num_classes = 2;
      part->node_cat_count = cfg.node_cat_count;
      part->edge_cat_count = cfg.edge_cat_count;
      part->n_max = cfg.n_max;
    }
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!seen.insert(canonical_key(pool.graphs[i]).bytes).second) continue;
      auto& part = (seen.size() % 2 == 0) ? members : nonmembers;
      if (part.size() >= 10) continue;
      part.graphs.push_back(pool.graphs[i]);
      part.labels.push_back(pool.labels[i]);
    }
    REQUIRE(members.size() == 10);
    REQUIRE(nonmembers.size() == 10);

    TrainConfig tc;
    tc.hidden_dims = {8, 8};
    tc.learning_rate = 0.02;
    tc.epochs = 4000;
    tc.seed = seed;
    auto trained = train(members, tc);

    const ParamVector theta = trained.model.params();
    std::vector<ParamVector> features;
    std::vector<bool> is_member;
    for (std::size_t i = 0; i < 10; ++i) {
      features.push_back(
          margin_and_grad(trained.model, members.graphs[i], members.labels[i]).grad);
      is_member.push_back(true);
      features.push_back(margin_and_grad(trained.model, nonmembers.graphs[i],
                                         nonmembers.labels[i]).grad);
      is_member.push_back(false);
    }
    MaskOptConfig mc;
    mc.steps = 3000;
    mc.learning_rate = 0.5 / theta.squaredNorm();
    const Eigen::VectorXd mask = optimize_selection_mask(
        theta, features, 4.0 * theta.squaredNorm(), mc);
    double member_mean = 0.0, other_mean = 0.0;
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
      (is_member[static_cast<std::size_t>(i)] ? member_mean : other_mean) += mask(i);
    }
    wins += (member_mean > other_mean);
  }
  CHECK(wins == 5);
}

TEST_CASE("pipeline: permutation at k=M, determinism, baselines, ablations") {
  auto cfg = bench_config(60);
  auto ds = gen_synthetic_dataset(cfg, 77);
  auto split = split_dataset(ds, RandomSplitSpec{0.3, 0.2, 0.5}, 3);
  const auto& aux = split.auxiliary;

  TrainConfig tc;
  tc.hidden_dims = {8, 8};
  tc.learning_rate = 0.02;
  tc.epochs = 1000;
  tc.seed = 7;
  auto target = train(split.target, tc);

  auto schedule = NoiseSchedule::cosine(50, cfg.node_cat_count, cfg.edge_cat_count);
  DenoiserHyper hyper;
  hyper.hidden = 16;
  hyper.rounds = 2;
  hyper.train_steps = 2500;
  hyper.learning_rate = 0.08;
  hyper.batch = 8;
  auto denoiser = train_denoiser(aux, schedule, hyper, 11);

  AttackConfig ac;
  ac.per_class_candidates = 6;
  ac.select_count = 12;  // k = M: selection is a permutation
  ac.sdedit_steps = 6;
  ac.constraint_weight = 1e6;
  ac.pgd.steps = 15;
  ac.pgd.step_size = 0.05;
  ac.mask_opt.steps = 1500;
  ac.mask_opt.learning_rate = 0.05;
  ac.seed = 21;

  auto full = run_graphsteal(target.model, aux, denoiser.model, schedule, ac);
  REQUIRE(full.reconstructed.size() == 12);
  REQUIRE(full.records.size() == 12);

  // k = M: reconstruction is a permutation of the generated set.
  std::vector<CategoricalGraph> generated;
  for (const auto& r : full.records) generated.push_back(r.generated);
  CHECK(key_multiset(full.reconstructed) == key_multiset(generated));

  // Ranks are a permutation of 0..M-1 ordered by lambda.
  std::set<int> ranks;
  for (const auto& r : full.records) ranks.insert(r.rank);
  CHECK(ranks.size() == 12);
  for (const auto& r : full.records) {
    for (const auto& s : full.records) {
      if (r.rank < s.rank) CHECK(r.lambda >= s.lambda);
    }
  }

  // Determinism: identical config + seed, byte-identical audit trails.
  auto again = run_graphsteal(target.model, aux, denoiser.model, schedule, ac);
  namespace fs = std::filesystem;
  const auto p1 = fs::temp_directory_path() / "recon_audit1.txt";
  const auto p2 = fs::temp_directory_path() / "recon_audit2.txt";
  write_audit(p1.string(), full.records);
  write_audit(p2.string(), again.records);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::stringstream b1, b2;
  b1 << f1.rdbuf();
  b2 << f2.rdbuf();
  CHECK(b1.str() == b2.str());

  // Audit round trip is byte stable.
  auto loaded = read_audit(p1.string());
  write_audit(p2.string(), loaded);
  std::ifstream f3(p2, std::ios::binary);
  std::stringstream b3;
  b3 << f3.rdbuf();
  CHECK(b1.str() == b3.str());
  fs::remove(p1);
  fs::remove(p2);

  // Baselines.
  auto conf_all = run_baseline(BaselineMethod::bl_conf, target.model, aux,
                               nullptr, nullptr, static_cast<int>(aux.size()),
                               ac.pgd, 5);
  CHECK(key_multiset(conf_all.reconstructed) == key_multiset(aux.graphs));
  double prev = 2.0;
  for (std::size_t i = 0; i < conf_all.reconstructed.size(); ++i) {
    const double c = confidence(target.model, conf_all.reconstructed[i],
                                conf_all.labels[i]);
    CHECK(c <= prev + 1e-12);
    prev = c;
  }
  CHECK_THROWS_AS(run_baseline(BaselineMethod::bl_conf, target.model, aux,
                               nullptr, nullptr,
                               static_cast<int>(aux.size()) + 1, ac.pgd, 5),
                  std::invalid_argument);

  auto diff_out = run_baseline(BaselineMethod::bl_diff, target.model, aux,
                               &denoiser.model, &schedule, 10, ac.pgd, 5);
  CHECK(diff_out.reconstructed.size() == 10);
  for (const auto& g : diff_out.reconstructed) CHECK_NOTHROW(g.validate());

  PgdConfig frozen = ac.pgd;
  frozen.steps = 0;
  auto mi_frozen = run_baseline(BaselineMethod::graphmi_g, target.model, aux,
                                nullptr, nullptr, 10, frozen, 5);
  auto aux_keys = key_multiset(aux.graphs);
  for (const auto& g : mi_frozen.reconstructed) {
    CHECK(aux_keys.count(canonical_key(g).bytes) > 0);
  }

  auto mi_live = run_baseline(BaselineMethod::graphmi_g, target.model, aux,
                              nullptr, nullptr, 10, ac.pgd, 5);
  for (std::size_t i = 0; i < 10; ++i) {
    // Edge-only optimization never touches node categories.
    const auto& before = mi_frozen.reconstructed[i];
    const auto& after = mi_live.reconstructed[i];
    REQUIRE(before.n() == after.n());
    for (int v = 0; v < before.n(); ++v) {
      CHECK(before.node_cat(v) == after.node_cat(v));
    }
  }

  // Ablations.
  auto abl_s = run_ablation(AblationVariant::random_selection, target.model,
                            aux, denoiser.model, schedule, ac);
  CHECK(key_multiset(abl_s.reconstructed) == key_multiset(full.reconstructed));

  auto abl_d = run_ablation(AblationVariant::skip_diffusion, target.model, aux,
                            denoiser.model, schedule, ac);
  for (const auto& r : abl_d.records) CHECK(r.generated == r.optimized);

  auto abl_g = run_ablation(AblationVariant::select_from_aux, target.model,
                            aux, denoiser.model, schedule, ac);
  for (const auto& g : abl_g.reconstructed) {
    CHECK(aux_keys.count(canonical_key(g).bytes) > 0);
  }

  auto abl_o = run_ablation(AblationVariant::random_noise_inputs, target.model,
                            aux, denoiser.model, schedule, ac);
  CHECK(abl_o.reconstructed.size() == 12);
  int same_as_selected = 0;
  for (const auto& r : abl_o.records) same_as_selected += (r.optimized == r.selected);
  CHECK(same_as_selected < 3);  // noise inputs, not the candidates
}

TEST_CASE("bl_rand with zero auxiliary density emits edgeless graphs") {
  LabeledDataset aux;
  aux.num_classes = 2;
  aux.node_cat_count = 2;
  aux.edge_cat_count = 2;
  aux.n_max = 5;
  for (int i = 0; i < 6; ++i) {
    aux.graphs.push_back(uniform_nodes_graph(3 + (i % 3), i % 2));
    aux.labels.push_back(i % 2);
  }
  auto model = sharp_counting_model();
  auto out = run_baseline(BaselineMethod::bl_rand, model, aux, nullptr, nullptr,
                          8, PgdConfig{}, 3);
  REQUIRE(out.reconstructed.size() == 8);
  for (const auto& g : out.reconstructed) CHECK(g.edge_count() == 0);
}

TEST_CASE("attack config validation") {
  AttackConfig ac;
  ac.per_class_candidates = 3;
  ac.select_count = 10;  // > C*m = 6
  CHECK_THROWS_AS(ac.validate(2), std::invalid_argument);
  ac.select_count = 6;
  CHECK_NOTHROW(ac.validate(2));
  ac.constraint_weight = -1.0;
  CHECK_THROWS_AS(ac.validate(2), std::invalid_argument);
}
