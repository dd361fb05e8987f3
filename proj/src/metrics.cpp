#include "recon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "recon/canonical.hpp"

namespace recon {

SampleMetrics sample_metrics(const std::vector<CategoricalGraph>& reconstructed,
                             const ValidityRules& rules) {
  if (reconstructed.empty()) {
    throw std::invalid_argument("sample_metrics: empty reconstruction set");
  }
  int valid = 0;
  std::set<std::string> keys;
  for (const auto& g : reconstructed) {
    valid += is_valid(g, rules);
    keys.insert(canonical_key(g).bytes);
  }
  const auto total = static_cast<double>(reconstructed.size());
  return SampleMetrics{valid / total, static_cast<double>(keys.size()) / total};
}

double reconstruction_rate(const std::vector<CategoricalGraph>& reconstructed,
                           const std::vector<CategoricalGraph>& target) {
  if (reconstructed.empty() || target.empty()) {
    throw std::invalid_argument("reconstruction_rate: empty input set");
  }
  std::set<std::string> recon_keys, target_keys;
  for (const auto& g : reconstructed) recon_keys.insert(canonical_key(g).bytes);
  for (const auto& g : target) target_keys.insert(canonical_key(g).bytes);
  int hits = 0;
  for (const auto& k : recon_keys) hits += target_keys.count(k);
  return static_cast<double>(hits) / static_cast<double>(recon_keys.size());
}

FrechetStats embedding_stats(const std::vector<CategoricalGraph>& graphs,
                             const Encoder& encoder) {
  if (graphs.empty()) {
    throw std::invalid_argument("embedding_stats: empty graph set");
  }
  std::vector<Eigen::VectorXd> embeddings;
  embeddings.reserve(graphs.size());
  for (const auto& g : graphs) embeddings.push_back(encoder(g));
  const auto dim = embeddings.front().size();
  for (const auto& e : embeddings) {
    if (e.size() != dim) {
      throw std::invalid_argument("embedding_stats: inconsistent embedding dims");
    }
  }
  FrechetStats stats;
  stats.mean = Eigen::VectorXd::Zero(dim);
  for (const auto& e : embeddings) stats.mean += e;
  stats.mean /= static_cast<double>(embeddings.size());

  stats.cov = Eigen::MatrixXd::Zero(dim, dim);
  if (embeddings.size() > 1) {
    for (const auto& e : embeddings) {
      const Eigen::VectorXd d = e - stats.mean;
      stats.cov += d * d.transpose();
    }
    stats.cov /= static_cast<double>(embeddings.size() - 1);
  }
  if (embeddings.size() < static_cast<std::size_t>(dim) + 1) {
    stats.cov += 1e-6 * Eigen::MatrixXd::Identity(dim, dim);
  }
  stats.cov = 0.5 * (stats.cov + stats.cov.transpose().eval());
  return stats;
}

namespace {

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      0.5 * (m + m.transpose()));
  Eigen::VectorXd roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * roots.asDiagonal() *
         solver.eigenvectors().transpose();
}

}  // namespace

double fed_from_stats(const FrechetStats& p, const FrechetStats& q) {
  if (p.mean.size() != q.mean.size()) {
    throw std::invalid_argument("fed: dimension mismatch");
  }
  const Eigen::MatrixXd root_p = symmetric_sqrt(p.cov);
  const Eigen::MatrixXd inner = root_p * q.cov * root_p;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      0.5 * (inner + inner.transpose()));
  const double cross = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d2 = (p.mean - q.mean).squaredNorm() + p.cov.trace() +
                    q.cov.trace() - 2.0 * cross;
  return std::max(0.0, d2);
}

double fed(const std::vector<CategoricalGraph>& p,
           const std::vector<CategoricalGraph>& q, const Encoder& encoder) {
  return fed_from_stats(embedding_stats(p, encoder),
                        embedding_stats(q, encoder));
}

Encoder make_gnn_encoder(GnnClassifier model) {
  return [model = std::move(model)](const CategoricalGraph& g) {
    return model.pooled_embedding(g);
  };
}

MetricsReport full_report(
    const std::vector<std::pair<std::string, std::vector<SeedMetrics>>>& per_method,
    const std::string& config_fingerprint) {
  if (per_method.empty()) {
    throw std::invalid_argument("full_report: no methods");
  }
  const std::size_t seeds = per_method.front().second.size();
  if (seeds == 0) throw std::invalid_argument("full_report: need >= 1 seed");
  MetricsReport report;
  report.config_fingerprint = config_fingerprint;
  for (const auto& [method, runs] : per_method) {
    if (runs.size() != seeds) {
      throw std::invalid_argument(
          "full_report: method " + method + " has " +
          std::to_string(runs.size()) + " seeds, expected " +
          std::to_string(seeds));
    }
    auto mean_std = [&](auto selector) {
      double mean = 0.0;
      for (const auto& r : runs) mean += selector(r);
      mean /= static_cast<double>(runs.size());
      double var = 0.0;
      if (runs.size() > 1) {
        for (const auto& r : runs) {
          const double d = selector(r) - mean;
          var += d * d;
        }
        var /= static_cast<double>(runs.size() - 1);
      }
      return std::pair<double, double>{mean, std::sqrt(var)};
    };
    MetricsRow row;
    row.method = method;
    row.seed_count = static_cast<int>(runs.size());
    std::tie(row.validity_mean, row.validity_std) =
        mean_std([](const SeedMetrics& r) { return r.validity; });
    std::tie(row.uniqueness_mean, row.uniqueness_std) =
        mean_std([](const SeedMetrics& r) { return r.uniqueness; });
    std::tie(row.recon_mean, row.recon_std) =
        mean_std([](const SeedMetrics& r) { return r.recon_rate; });
    std::tie(row.fed_mean, row.fed_std) =
        mean_std([](const SeedMetrics& r) { return r.fed; });
    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

std::string fmt_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void write_report_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_report_csv: cannot open " + path);
  out << "method,seed_count,validity_mean,validity_std,uniqueness_mean,"
         "uniqueness_std,recon_mean,recon_std,fed_mean,fed_std\n";
  for (const auto& r : report.rows) {
    out << r.method << "," << r.seed_count << "," << fmt_metric(r.validity_mean)
        << "," << fmt_metric(r.validity_std) << ","
        << fmt_metric(r.uniqueness_mean) << "," << fmt_metric(r.uniqueness_std)
        << "," << fmt_metric(r.recon_mean) << "," << fmt_metric(r.recon_std)
        << "," << fmt_metric(r.fed_mean) << "," << fmt_metric(r.fed_std)
        << "\n";
  }
  if (!out) throw std::runtime_error("write_report_csv: write failed: " + path);
}

std::string report_text(const MetricsReport& report) {
  std::ostringstream os;
  os << "metrics report (config " << report.config_fingerprint << ")\n";
  for (const auto& r : report.rows) {
    os << "  " << r.method << " [" << r.seed_count << " seeds]"
       << " validity " << fmt_metric(r.validity_mean) << " +/- "
       << fmt_metric(r.validity_std) << ", uniqueness "
       << fmt_metric(r.uniqueness_mean) << " +/- "
       << fmt_metric(r.uniqueness_std) << ", recon "
       << fmt_metric(r.recon_mean) << " +/- " << fmt_metric(r.recon_std)
       << ", fed " << fmt_metric(r.fed_mean) << " +/- "
       << fmt_metric(r.fed_std) << "\n";
  }
  return os.str();
}

}  // namespace recon
