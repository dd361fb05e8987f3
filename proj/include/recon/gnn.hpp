#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "recon/dataset.hpp"
#include "recon/graph.hpp"

namespace recon {

/// Flattened parameter vector. Layout (version 1): conv layers in order, then
/// the readout, each block row-major.
using ParamVector = Eigen::VectorXd;
inline constexpr int kParamLayoutVersion = 1;

/// Bias-free message-passing classifier:
///   H^(i) = ReLU(S H^(i-1) W^(i)),  S = D^{-1/2} (A + I) D^{-1/2},
/// followed by sum pooling and a bias-free linear readout. With K conv layers
/// the network is homogeneous of degree L = K + 1 under whole-parameter
/// scaling: f(G; sigma * theta) = sigma^L f(G; theta).
class GnnClassifier {
public:
  GnnClassifier() = default;
  GnnClassifier(std::vector<Eigen::MatrixXd> conv_weights,
                Eigen::MatrixXd readout_weight);

  /// Symmetric uniform init scaled by 1/sqrt(fan_in), seeded.
  static GnnClassifier init_random(int input_dim,
                                   const std::vector<int>& hidden_dims,
                                   int num_classes, std::uint64_t seed);

  int depth() const { return static_cast<int>(conv_weights_.size()); }
  int homogeneity_degree() const { return depth() + 1; }
  int input_dim() const;
  int num_classes() const { return static_cast<int>(readout_weight_.cols()); }
  std::vector<int> dims() const;  // {input, hidden..., classes}

  const std::vector<Eigen::MatrixXd>& conv_weights() const { return conv_weights_; }
  const Eigen::MatrixXd& readout_weight() const { return readout_weight_; }

  Eigen::Index param_count() const;
  ParamVector params() const;
  void set_params(const ParamVector& theta);

  /// Pre-softmax scores. The relaxed overload uses the expected adjacency
  /// A_ij = 1 - P(edge category 0).
  Eigen::VectorXd logits(const CategoricalGraph& g) const;
  Eigen::VectorXd logits(const RelaxedGraph& g) const;

  /// Sum-pooled final hidden layer; the surrogate embedding for FED.
  Eigen::VectorXd pooled_embedding(const CategoricalGraph& g) const;

private:
  std::vector<Eigen::MatrixXd> conv_weights_;  // W^(i): d_{i-1} x d_i
  Eigen::MatrixXd readout_weight_;             // d_K x C
};

/// Margin beta = f(G)_y - max_{j != y} f(G)_j, with the runner-up fixed
/// before differentiation (ties: smallest index), and its parameter gradient.
struct MarginGrad {
  double margin = 0.0;
  int runner_up = -1;
  ParamVector grad;
};
MarginGrad margin_and_grad(const GnnClassifier& model,
                           const CategoricalGraph& g, int y);

/// softmax(logits)[y]; the candidate-scoring accessor. Kept separate from the
/// raw-logit quantities used by the margin machinery.
double confidence(const GnnClassifier& model, const CategoricalGraph& g, int y);

/// max_c |f(G; sigma*theta)_c - sigma^L f(G; theta)_c|.
double check_homogeneity(const GnnClassifier& model, const CategoricalGraph& g,
                         double sigma);

/// Cross entropy log(1 + sum_{j != y} exp(-(z_y - z_j))), equal to the
/// softmax negative log likelihood.
double ce_loss(const GnnClassifier& model, const CategoricalGraph& g, int y);
ParamVector ce_loss_grad(const GnnClassifier& model, const CategoricalGraph& g,
                         int y);

/// Cross entropy of the relaxed forward pass and its gradients w.r.t. the
/// node-category rows and the expected adjacency (the latter flows through
/// both the messages and the degree normalization).
struct RelaxedCeGrads {
  double loss = 0.0;
  Eigen::MatrixXd node;       // n x a
  Eigen::MatrixXd adjacency;  // n x n, symmetric, zero diagonal
};
RelaxedCeGrads relaxed_ce_grads(const GnnClassifier& model,
                                const RelaxedGraph& g, int y);

double accuracy(const GnnClassifier& model, const LabeledDataset& ds);

struct DpConfig {
  double clip_norm = 1.0;
  double noise_multiplier = 0.0;
  double epsilon = 0.0;  // reported privacy budget, carried as metadata
  double delta = 0.0;
};

struct TrainConfig {
  std::vector<int> hidden_dims = {16, 16};
  double learning_rate = 0.01;
  int epochs = 100;
  bool full_batch = true;  // weight-decay-free full-batch gradient descent
  std::optional<DpConfig> dp;
  std::uint64_t seed = 0;
};

struct TrainResult {
  GnnClassifier model;
  std::vector<double> loss_history;  // epochs + 1 entries, first is the
                                     // initial loss
  bool loss_monotone = true;  // non-increasing within 1e-6/step (non-DP runs)
};

/// Full-batch gradient descent on the summed cross entropy. With dp set,
/// per-sample gradients are clipped to clip_norm and Gaussian noise of std
/// clip_norm * noise_multiplier is added to the summed gradient each step.
/// Throws std::runtime_error (with the step index) if the loss diverges.
TrainResult train(const LabeledDataset& dataset, const TrainConfig& config);

/// Model file: text header {dims, L, format_version, seed} followed by the
/// ParamVector as raw 64-bit floats. Byte-stable round trip; version
/// mismatches are rejected.
void write_model(const std::string& path, const GnnClassifier& model,
                 std::uint64_t seed);
struct LoadedModel {
  GnnClassifier model;
  std::uint64_t seed = 0;
};
LoadedModel read_model(const std::string& path);

}  // namespace recon
