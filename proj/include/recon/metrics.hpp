#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "recon/dataset.hpp"
#include "recon/gnn.hpp"
#include "recon/graph.hpp"

namespace recon {

using Encoder = std::function<Eigen::VectorXd(const CategoricalGraph&)>;

/// Validity = fraction of rule-satisfying graphs; uniqueness = fraction of
/// distinct canonical keys.
struct SampleMetrics {
  double validity = 0.0;
  double uniqueness = 0.0;
};
SampleMetrics sample_metrics(const std::vector<CategoricalGraph>& reconstructed,
                             const ValidityRules& rules);

/// |keys(D_r) ∩ keys(D_t)| / |keys(D_r)| over canonical-key sets, so
/// duplicates in D_r count once.
double reconstruction_rate(const std::vector<CategoricalGraph>& reconstructed,
                           const std::vector<CategoricalGraph>& target);

/// Gaussian summary of graph embeddings. Covariance is the sample covariance,
/// diagonally regularized with 1e-6 when the set is smaller than dim + 1.
struct FrechetStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};
FrechetStats embedding_stats(const std::vector<CategoricalGraph>& graphs,
                             const Encoder& encoder);

/// Squared Wasserstein-2 distance between Gaussian embedding statistics:
/// d^2 = ||m - m_w||^2 + Tr(C + C_w - 2 (C^(1/2) C_w C^(1/2))^(1/2)),
/// matrix square roots via symmetric eigendecomposition with negative
/// eigenvalues clamped to zero; the result is clamped at 0.
double fed_from_stats(const FrechetStats& p, const FrechetStats& q);
double fed(const std::vector<CategoricalGraph>& p,
           const std::vector<CategoricalGraph>& q, const Encoder& encoder);

/// Penultimate sum-pooled layer of a trained classifier, the surrogate
/// embedding network.
Encoder make_gnn_encoder(GnnClassifier model);

struct SeedMetrics {
  double validity = 0.0;
  double uniqueness = 0.0;
  double recon_rate = 0.0;
  double fed = 0.0;
};

struct MetricsRow {
  std::string method;
  int seed_count = 0;
  double validity_mean = 0.0, validity_std = 0.0;
  double uniqueness_mean = 0.0, uniqueness_std = 0.0;
  double recon_mean = 0.0, recon_std = 0.0;
  double fed_mean = 0.0, fed_std = 0.0;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;
  std::string config_fingerprint;
};

/// Mean and sample standard deviation per method over seeds. Methods must all
/// carry the same number of seeds (one row per method, insertion order).
MetricsReport full_report(
    const std::vector<std::pair<std::string, std::vector<SeedMetrics>>>& per_method,
    const std::string& config_fingerprint);

void write_report_csv(const std::string& path, const MetricsReport& report);
std::string report_text(const MetricsReport& report);

}  // namespace recon
