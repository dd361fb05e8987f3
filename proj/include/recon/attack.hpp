#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recon/dataset.hpp"
#include "recon/diffusion.hpp"
#include "recon/gnn.hpp"

namespace recon {

struct PgdConfig {
  int steps = 40;
  double step_size = 0.1;
  double saturation_loss = 1e-6;  // candidates already below this are left alone
  int max_halvings = 20;
};

struct MaskOptConfig {
  int steps = 2000;
  double learning_rate = 1.0;
  int max_halvings = 20;
};

struct AttackConfig {
  int per_class_candidates = 30;   // m; M = C * m
  int select_count = 30;           // k
  int sdedit_steps = 10;           // K
  double constraint_weight = 1e5;  // alpha, weight of the nonnegativity loss
  PgdConfig pgd;
  MaskOptConfig mask_opt;
  std::uint64_t seed = 0;

  void validate(int num_classes) const;
};

/// Per-class top-m candidates from the auxiliary set, scored by
/// confidence(G, y). Ordered by (class, rank); ties broken by dataset index.
struct CandidateSet {
  std::vector<CategoricalGraph> graphs;
  std::vector<int> labels;
  std::vector<std::size_t> source_indices;
};
CandidateSet select_candidates(const GnnClassifier& model,
                               const LabeledDataset& aux, int per_class);

/// Simplex-relaxed projected gradient descent on each candidate's node rows
/// and i<j edge fibers (mirrored), minimizing the target-model cross entropy,
/// with step-size backtracking so the relaxed loss never increases between
/// accepted steps. Final graphs are per-row argmax discretizations.
struct NoiseOptResult {
  std::vector<CategoricalGraph> graphs;
  std::vector<double> initial_loss;
  std::vector<double> final_loss;  // at the relaxed optimum
};
NoiseOptResult optimize_noise(const GnnClassifier& model,
                              const CandidateSet& candidates,
                              const PgdConfig& config);

/// Single-candidate variant exposing the accepted-loss trajectory. With
/// edges_only the node rows are frozen (the GraphMI-G mode).
struct PgdTrace {
  RelaxedGraph relaxed;
  std::vector<double> loss_history;  // accepted losses, first entry initial
};
PgdTrace optimize_noise_single(const GnnClassifier& model,
                               const CategoricalGraph& graph, int label,
                               const PgdConfig& config, bool edges_only = false);

/// Gradient descent from Lambda = 0 on
///   || theta - sum_i lambda_i g_i ||_2^2 + alpha * sum_i max(-lambda_i, 0),
/// with backtracking halving; the recorded objective never increases across
/// accepted steps.
struct MaskOptTrace {
  Eigen::VectorXd mask;
  std::vector<double> objective_history;
};
MaskOptTrace optimize_selection_mask_traced(const ParamVector& theta,
                                            const std::vector<ParamVector>& features,
                                            double alpha,
                                            const MaskOptConfig& config);
Eigen::VectorXd optimize_selection_mask(const ParamVector& theta,
                                        const std::vector<ParamVector>& features,
                                        double alpha,
                                        const MaskOptConfig& config);

/// Audit-trail entry: stage snapshots, per-stage confidence, the carried
/// label, provenance seed, and the selection outcome.
struct CandidateRecord {
  int id = 0;
  int label = 0;
  std::uint64_t seed = 0;
  CategoricalGraph selected, optimized, generated;
  double conf_selected = 0.0, conf_optimized = 0.0, conf_generated = 0.0;
  double relaxed_loss_initial = 0.0, relaxed_loss_final = 0.0;
  double lambda = 0.0;
  int rank = -1;  // position in the lambda-descending order
};

struct AttackResult {
  std::vector<CategoricalGraph> reconstructed;  // k graphs, by rank
  std::vector<int> labels;                      // carried labels, same order
  std::vector<CandidateRecord> records;         // one per candidate
};

/// Full reconstruction pipeline: select candidates, optimize noise, SDEdit
/// one generation per candidate, fit the selection mask against the model
/// parameters, return the top-k graphs by lambda (ties by candidate id).
AttackResult run_graphsteal(const GnnClassifier& model,
                            const LabeledDataset& aux,
                            const Denoiser& denoiser,
                            const NoiseSchedule& schedule,
                            const AttackConfig& config);

enum class BaselineMethod { bl_rand, bl_conf, bl_diff, graphmi_g };

/// bl_rand: Erdos-Renyi graphs at the auxiliary mean density with categories
/// resampled from auxiliary marginals. bl_conf: top-k most confident
/// auxiliary graphs. bl_diff: k unconditional diffusion samples (K = T).
/// graphmi_g: edge-only PGD on k random auxiliary graphs.
struct BaselineResult {
  std::vector<CategoricalGraph> reconstructed;
  std::vector<int> labels;
};
BaselineResult run_baseline(BaselineMethod method, const GnnClassifier& model,
                            const LabeledDataset& aux, const Denoiser* denoiser,
                            const NoiseSchedule* schedule, int k,
                            const PgdConfig& pgd, std::uint64_t seed);

enum class AblationVariant {
  random_noise_inputs,  // "/O": uniform categorical graphs replace the
                        // optimized SDEdit inputs
  skip_diffusion,       // "/D": optimized graphs go straight to selection
  random_selection,     // "/S": random top-k instead of the mask ranking
  select_from_aux,      // "/G": mask selection directly over the auxiliary set
};
AttackResult run_ablation(AblationVariant variant, const GnnClassifier& model,
                          const LabeledDataset& aux, const Denoiser& denoiser,
                          const NoiseSchedule& schedule,
                          const AttackConfig& config);

/// Versioned structured-text audit trail; byte-stable round trip.
void write_audit(const std::string& path,
                 const std::vector<CandidateRecord>& records);
std::vector<CandidateRecord> read_audit(const std::string& path);

}  // namespace recon
