#include "support/oracles.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <numeric>
#include <stdexcept>

namespace oracles {

bool brute_force_isomorphic(const recon::CategoricalGraph& g,
                            const recon::CategoricalGraph& h) {
  if (g.n() != h.n() || g.node_cat_count() != h.node_cat_count() ||
      g.edge_cat_count() != h.edge_cat_count()) {
    return false;
  }
  const int n = g.n();
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  do {
    bool ok = true;
    for (int i = 0; ok && i < n; ++i) {
      if (g.node_cat(i) != h.node_cat(perm[static_cast<std::size_t>(i)])) ok = false;
    }
    for (int i = 0; ok && i < n; ++i) {
      for (int j = i + 1; ok && j < n; ++j) {
        if (g.edge_cat(i, j) != h.edge_cat(perm[static_cast<std::size_t>(i)],
                                           perm[static_cast<std::size_t>(j)])) {
          ok = false;
        }
      }
    }
    if (ok) return true;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return false;
}

Eigen::VectorXd nnls_active_set(const Eigen::MatrixXd& A,
                                const Eigen::VectorXd& b, int max_iterations) {
  const auto n = A.cols();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);

  auto solve_passive = [&](const std::vector<bool>& set) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (set[static_cast<std::size_t>(i)]) idx.push_back(i);
    }
    Eigen::MatrixXd Ap(A.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) Ap.col(static_cast<Eigen::Index>(k)) = A.col(idx[k]);
    Eigen::VectorXd zp = Ap.colPivHouseholderQr().solve(b);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < idx.size(); ++k) z(idx[k]) = zp(static_cast<Eigen::Index>(k));
    return z;
  };

  for (int iter = 0; iter < max_iterations; ++iter) {
    const Eigen::VectorXd w = A.transpose() * (b - A * x);
    int best = -1;
    double best_w = 1e-10;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!passive[static_cast<std::size_t>(i)] && w(i) > best_w) {
        best_w = w(i);
        best = static_cast<int>(i);
      }
    }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;

    while (true) {
      Eigen::VectorXd z = solve_passive(passive);
      double min_z = 0.0;
      bool feasible = true;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (passive[static_cast<std::size_t>(i)] && z(i) <= 1e-12) {
          feasible = false;
          min_z = std::min(min_z, z(i));
        }
      }
      if (feasible) {
        x = z;
        break;
      }
      double alpha = 1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (passive[static_cast<std::size_t>(i)] && z(i) <= 1e-12) {
          alpha = std::min(alpha, x(i) / (x(i) - z(i)));
        }
      }
      x += alpha * (z - x);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (passive[static_cast<std::size_t>(i)] && x(i) <= 1e-12) {
          passive[static_cast<std::size_t>(i)] = false;
          x(i) = 0.0;
        }
      }
    }
  }
  return x;
}

double chi_square_p_value(double statistic, int dof) {
  if (dof <= 0) throw std::invalid_argument("chi_square_p_value: dof <= 0");
  boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, statistic));
}

double chi_square_statistic(const std::vector<long>& observed,
                            const std::vector<double>& expected_probs,
                            int* dof_out) {
  if (observed.size() != expected_probs.size() || observed.empty()) {
    throw std::invalid_argument("chi_square_statistic: size mismatch");
  }
  const double total = static_cast<double>(
      std::accumulate(observed.begin(), observed.end(), 0L));
  // Pool low-expectation bins to keep the chi-square approximation sound.
  std::vector<double> probs;
  std::vector<double> counts;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (!probs.empty() && expected_probs[i] * total < 5.0) {
      probs.back() += expected_probs[i];
      counts.back() += static_cast<double>(observed[i]);
    } else {
      probs.push_back(expected_probs[i]);
      counts.push_back(static_cast<double>(observed[i]));
    }
  }
  if (probs.size() < 2) {
    if (dof_out) *dof_out = 1;
    return 0.0;
  }
  double stat = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double expect = probs[i] * total;
    const double diff = counts[i] - expect;
    stat += diff * diff / expect;
  }
  if (dof_out) *dof_out = static_cast<int>(probs.size()) - 1;
  return stat;
}

}  // namespace oracles
