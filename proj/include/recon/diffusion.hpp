#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "recon/dataset.hpp"
#include "recon/graph.hpp"

namespace recon {

/// Discrete uniform-transition noise schedule. Node transitions are
/// Q_X^t = alpha_t I + (1 - alpha_t)/a 11^T (edges analogous with b), so the
/// cumulative products stay in the same family with
/// alpha_bar_t = prod_{s<=t} alpha_s.
class NoiseSchedule {
public:
  /// Cosine schedule alpha_bar_t = f(t)/f(0), f(t) = cos^2((t/T + s)/(1+s) *
  /// pi/2), s = 0.008. Normalizing by f(0) pins alpha_bar_0 = 1 so that
  /// Qbar^0 = I and Qbar^t = Q^1 ... Q^t hold exactly.
  static NoiseSchedule cosine(int steps, int node_cat_count,
                              int edge_cat_count);

  /// alpha * I + (1 - alpha)/k * 11^T; the single family every Q and Qbar
  /// lives in.
  static Eigen::MatrixXd transition_matrix(int categories, double alpha);

  int steps() const { return static_cast<int>(alpha_.size()); }
  int node_cat_count() const { return a_; }
  int edge_cat_count() const { return b_; }

  double alpha(int t) const;      // t in 1..T
  double alpha_bar(int t) const;  // t in 0..T, alpha_bar(0) = 1

  Eigen::MatrixXd node_transition(int t) const;  // Q_X^t
  Eigen::MatrixXd node_cumulative(int t) const;  // Qbar_X^t, t in 0..T
  Eigen::MatrixXd edge_transition(int t) const;  // Q_E^t
  Eigen::MatrixXd edge_cumulative(int t) const;  // Qbar_E^t

private:
  NoiseSchedule() = default;
  int a_ = 0, b_ = 0;
  std::vector<double> alpha_;      // alpha_t, index t-1
  std::vector<double> alpha_bar_;  // alpha_bar_t, index t, includes t = 0
};

/// Samples G^t ~ q(G^t | G^0): each node category from its row of Qbar_X^t,
/// each i<j edge category from its row of Qbar_E^t, mirrored. t = 0 returns
/// the input unchanged.
CategoricalGraph forward_noise(const NoiseSchedule& schedule,
                               const CategoricalGraph& g, int t,
                               std::uint64_t seed);

/// Small message-passing denoiser: node/edge category embeddings plus a
/// sinusoidal timestep feature, R rounds of mean-aggregated messages, then
/// per-node category logits and per-pair (i<j, mirrored) edge-category
/// logits. Predicts the clean graph from a noisy one.
class Denoiser {
public:
  Denoiser() = default;
  static Denoiser init_random(int node_cat_count, int edge_cat_count,
                              int hidden, int rounds, std::uint64_t seed);

  int node_cat_count() const { return a_; }
  int edge_cat_count() const { return b_; }
  int hidden() const { return hidden_; }
  int rounds() const { return rounds_; }
  static constexpr int kTimeFeatures = 8;

  struct Prediction {
    Eigen::MatrixXd node_probs;  // n x a, rows sum to 1
    Eigen::MatrixXd edge_probs;  // one row per i<j pair (row-major), b columns
  };
  /// Clean-graph distributions given the noisy graph at diffusion time t of T.
  Prediction predict(const CategoricalGraph& noisy, int t, int total_steps) const;

  /// Mean node + edge cross entropy of the clean graph under predict(), and
  /// the parameter gradient.
  double loss_and_grad(const CategoricalGraph& noisy,
                       const CategoricalGraph& clean, int t, int total_steps,
                       Eigen::VectorXd* grad) const;

  Eigen::Index param_count() const;
  Eigen::VectorXd params() const;
  void set_params(const Eigen::VectorXd& phi);

private:
  friend struct DenoiserKernel;
  int a_ = 0, b_ = 0, hidden_ = 0, rounds_ = 0;
  // Embeddings and timestep mixing.
  Eigen::MatrixXd wx_, wt_, we_;  // a x H, F x H, b x H
  Eigen::VectorXd bh_;
  // Shared message-passing round.
  Eigen::MatrixXd wm_, um_, ws_, wa_;  // H x H
  Eigen::VectorXd bm_, bu_;
  // Heads.
  Eigen::MatrixXd wn_;  // a x H
  Eigen::VectorXd bn_;
  Eigen::MatrixXd wp_, up_;  // H x H
  Eigen::VectorXd bp_;
  Eigen::MatrixXd weo_;  // b x H
  Eigen::VectorXd bo_;
};

struct DenoiserHyper {
  int hidden = 32;
  int rounds = 2;
  int train_steps = 20000;
  double learning_rate = 0.05;
  int batch = 8;
  double holdout_fraction = 0.1;
};

struct DenoiserTrainResult {
  Denoiser model;
  std::vector<double> loss_history;  // one entry per optimizer step
  double holdout_loss = 0.0;         // mean loss on the held-out slice
  double marginal_baseline = 0.0;    // constant marginal-predictor entropy
  double uniform_baseline = 0.0;     // log a + log b
};

/// Standard discrete-diffusion training: sample t uniformly, noise the graph
/// through the schedule, minimize clean-category cross entropy. Plain SGD
/// with deterministic shuffling. Throws std::runtime_error (with step index)
/// on a non-finite loss.
DenoiserTrainResult train_denoiser(const LabeledDataset& aux,
                                   const NoiseSchedule& schedule,
                                   const DenoiserHyper& hyper,
                                   std::uint64_t seed);

/// One reverse step: per node and per i<j pair samples
///   p(x^{t-1} | x^t) ~ sum_{x0} p_phi(x0 | G^t) q(x^{t-1} | x^t, x0),
/// q(x^{t-1} | x^t, x0) = (x^t Q^t^T o x0 Qbar^{t-1}) / (x0 Qbar^t x^t^T).
/// Throws std::runtime_error naming (t, entry) on a zero normalizer.
CategoricalGraph denoise_step(const Denoiser& model,
                              const NoiseSchedule& schedule,
                              const CategoricalGraph& noisy, int t,
                              std::uint64_t seed);

/// Same reverse step driven by externally supplied clean-graph distributions.
CategoricalGraph denoise_step(const Denoiser::Prediction& prediction,
                              const NoiseSchedule& schedule,
                              const CategoricalGraph& noisy, int t,
                              std::uint64_t seed);

/// SDEdit: diffuse the input K steps, then run the reverse process back to 0.
/// K = 0 returns the input unchanged; K = T is unconditional generation from
/// (near-)pure noise.
CategoricalGraph sdedit_generate(const Denoiser& model,
                                 const NoiseSchedule& schedule,
                                 const CategoricalGraph& input, int K,
                                 std::uint64_t seed);

/// Denoiser file format mirrors the GNN model format. The schedule is always
/// recomputed from {T, kind}, never serialized.
void write_denoiser(const std::string& path, const Denoiser& model,
                    std::uint64_t seed);
struct LoadedDenoiser {
  Denoiser model;
  std::uint64_t seed = 0;
};
LoadedDenoiser read_denoiser(const std::string& path);

}  // namespace recon
