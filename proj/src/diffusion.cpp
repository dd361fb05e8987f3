#include "recon/diffusion.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "recon/io.hpp"
#include "recon/rng.hpp"

namespace recon {

namespace {

int pair_count(int n) { return n * (n - 1) / 2; }

int pair_index(int n, int i, int j) {
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

Eigen::VectorXd softmax_vec(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - m).exp();
  return e / e.sum();
}

double nll_vec(const Eigen::VectorXd& z, int y) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum()) - z(y);
}

}  // namespace

NoiseSchedule NoiseSchedule::cosine(int steps, int node_cat_count,
                                    int edge_cat_count) {
  if (steps < 2) throw std::invalid_argument("NoiseSchedule: need T >= 2");
  if (node_cat_count < 1 || edge_cat_count < 1) {
    throw std::invalid_argument("NoiseSchedule: bad category counts");
  }
  NoiseSchedule s;
  s.a_ = node_cat_count;
  s.b_ = edge_cat_count;
  const double shift = 0.008;
  auto f = [&](double t) {
    const double arg =
        (t / steps + shift) / (1.0 + shift) * std::numbers::pi / 2.0;
    const double c = std::cos(arg);
    return c * c;
  };
  const double f0 = f(0.0);
  s.alpha_bar_.resize(static_cast<std::size_t>(steps) + 1);
  s.alpha_bar_[0] = 1.0;
  for (int t = 1; t <= steps; ++t) {
    s.alpha_bar_[static_cast<std::size_t>(t)] = f(static_cast<double>(t)) / f0;
  }
  s.alpha_.resize(static_cast<std::size_t>(steps));
  for (int t = 1; t <= steps; ++t) {
    s.alpha_[static_cast<std::size_t>(t - 1)] =
        s.alpha_bar_[static_cast<std::size_t>(t)] /
        s.alpha_bar_[static_cast<std::size_t>(t - 1)];
  }
  if (s.alpha_bar_.back() > 0.01) {
    throw std::invalid_argument("NoiseSchedule: alpha_bar_T above 0.01");
  }
  return s;
}

double NoiseSchedule::alpha(int t) const {
  if (t < 1 || t > steps()) throw std::invalid_argument("alpha: t out of range");
  return alpha_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > steps()) {
    throw std::invalid_argument("alpha_bar: t out of range");
  }
  return alpha_bar_[static_cast<std::size_t>(t)];
}

Eigen::MatrixXd NoiseSchedule::transition_matrix(int categories, double alpha) {
  if (categories < 1) {
    throw std::invalid_argument("transition_matrix: bad category count");
  }
  return alpha * Eigen::MatrixXd::Identity(categories, categories) +
         ((1.0 - alpha) / categories) *
             Eigen::MatrixXd::Ones(categories, categories);
}

Eigen::MatrixXd NoiseSchedule::node_transition(int t) const {
  return transition_matrix(a_, alpha(t));
}

Eigen::MatrixXd NoiseSchedule::node_cumulative(int t) const {
  return transition_matrix(a_, alpha_bar(t));
}

Eigen::MatrixXd NoiseSchedule::edge_transition(int t) const {
  return transition_matrix(b_, alpha(t));
}

Eigen::MatrixXd NoiseSchedule::edge_cumulative(int t) const {
  return transition_matrix(b_, alpha_bar(t));
}

CategoricalGraph forward_noise(const NoiseSchedule& schedule,
                               const CategoricalGraph& g, int t,
                               std::uint64_t seed) {
  if (t < 0 || t > schedule.steps()) {
    throw std::invalid_argument("forward_noise: t out of range");
  }
  if (g.node_cat_count() != schedule.node_cat_count() ||
      g.edge_cat_count() != schedule.edge_cat_count()) {
    throw std::invalid_argument("forward_noise: schedule/graph category mismatch");
  }
  if (t == 0) return g;

  Rng rng(derive_seed(seed, "forward-noise", static_cast<std::uint64_t>(t)));
  const Eigen::MatrixXd qx = schedule.node_cumulative(t);
  const Eigen::MatrixXd qe = schedule.edge_cumulative(t);
  CategoricalGraph out(g.n(), g.node_cat_count(), g.edge_cat_count());
  std::vector<double> row(static_cast<std::size_t>(g.node_cat_count()));
  for (int i = 0; i < g.n(); ++i) {
    for (int c = 0; c < g.node_cat_count(); ++c) row[static_cast<std::size_t>(c)] = qx(g.node_cat(i), c);
    out.set_node_cat(i, rng.sample_categorical(row));
  }
  std::vector<double> erow(static_cast<std::size_t>(g.edge_cat_count()));
  for (int i = 0; i < g.n(); ++i) {
    for (int j = i + 1; j < g.n(); ++j) {
      for (int c = 0; c < g.edge_cat_count(); ++c) erow[static_cast<std::size_t>(c)] = qe(g.edge_cat(i, j), c);
      out.set_edge_cat(i, j, rng.sample_categorical(erow));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Denoiser

Denoiser Denoiser::init_random(int node_cat_count, int edge_cat_count,
                               int hidden, int rounds, std::uint64_t seed) {
  if (node_cat_count < 1 || edge_cat_count < 1 || hidden < 1 || rounds < 1) {
    throw std::invalid_argument("Denoiser: bad architecture");
  }
  Denoiser d;
  d.a_ = node_cat_count;
  d.b_ = edge_cat_count;
  d.hidden_ = hidden;
  d.rounds_ = rounds;
  Rng rng(derive_seed(seed, "denoiser-init"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(hidden));
  auto mat = [&](int r, int c) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) m(i, j) = (2.0 * rng.uniform01() - 1.0) * scale;
    }
    return m;
  };
  d.wx_ = mat(node_cat_count, hidden);
  d.wt_ = mat(kTimeFeatures, hidden);
  d.bh_ = Eigen::VectorXd::Zero(hidden);
  d.we_ = mat(edge_cat_count, hidden);
  d.wm_ = mat(hidden, hidden);
  d.um_ = mat(hidden, hidden);
  d.bm_ = Eigen::VectorXd::Zero(hidden);
  d.ws_ = mat(hidden, hidden);
  d.wa_ = mat(hidden, hidden);
  d.bu_ = Eigen::VectorXd::Zero(hidden);
  d.wn_ = mat(node_cat_count, hidden);
  d.bn_ = Eigen::VectorXd::Zero(node_cat_count);
  d.wp_ = mat(hidden, hidden);
  d.up_ = mat(hidden, hidden);
  d.bp_ = Eigen::VectorXd::Zero(hidden);
  d.weo_ = mat(edge_cat_count, hidden);
  d.bo_ = Eigen::VectorXd::Zero(edge_cat_count);
  return d;
}

namespace {

void flatten_block(const Eigen::MatrixXd& m, Eigen::VectorXd& out,
                   Eigen::Index& pos) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out(pos++) = m(r, c);
  }
}

void unflatten_block(Eigen::MatrixXd& m, const Eigen::VectorXd& in,
                     Eigen::Index& pos) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = in(pos++);
  }
}

}  // namespace

Eigen::Index Denoiser::param_count() const {
  return wx_.size() + wt_.size() + bh_.size() + we_.size() + wm_.size() +
         um_.size() + bm_.size() + ws_.size() + wa_.size() + bu_.size() +
         wn_.size() + bn_.size() + wp_.size() + up_.size() + bp_.size() +
         weo_.size() + bo_.size();
}

Eigen::VectorXd Denoiser::params() const {
  Eigen::VectorXd phi(param_count());
  Eigen::Index pos = 0;
  for (const Eigen::MatrixXd* m : {&wx_, &wt_}) flatten_block(*m, phi, pos);
  for (Eigen::Index i = 0; i < bh_.size(); ++i) phi(pos++) = bh_(i);
  flatten_block(we_, phi, pos);
  for (const Eigen::MatrixXd* m : {&wm_, &um_}) flatten_block(*m, phi, pos);
  for (Eigen::Index i = 0; i < bm_.size(); ++i) phi(pos++) = bm_(i);
  for (const Eigen::MatrixXd* m : {&ws_, &wa_}) flatten_block(*m, phi, pos);
  for (Eigen::Index i = 0; i < bu_.size(); ++i) phi(pos++) = bu_(i);
  flatten_block(wn_, phi, pos);
  for (Eigen::Index i = 0; i < bn_.size(); ++i) phi(pos++) = bn_(i);
  for (const Eigen::MatrixXd* m : {&wp_, &up_}) flatten_block(*m, phi, pos);
  for (Eigen::Index i = 0; i < bp_.size(); ++i) phi(pos++) = bp_(i);
  flatten_block(weo_, phi, pos);
  for (Eigen::Index i = 0; i < bo_.size(); ++i) phi(pos++) = bo_(i);
  return phi;
}

void Denoiser::set_params(const Eigen::VectorXd& phi) {
  if (phi.size() != param_count()) {
    throw std::invalid_argument("Denoiser::set_params: length mismatch");
  }
  Eigen::Index pos = 0;
  for (Eigen::MatrixXd* m : {&wx_, &wt_}) unflatten_block(*m, phi, pos);
  for (Eigen::Index i = 0; i < bh_.size(); ++i) bh_(i) = phi(pos++);
  unflatten_block(we_, phi, pos);
  for (Eigen::MatrixXd* m : {&wm_, &um_}) unflatten_block(*m, phi, pos);
  for (Eigen::Index i = 0; i < bm_.size(); ++i) bm_(i) = phi(pos++);
  for (Eigen::MatrixXd* m : {&ws_, &wa_}) unflatten_block(*m, phi, pos);
  for (Eigen::Index i = 0; i < bu_.size(); ++i) bu_(i) = phi(pos++);
  unflatten_block(wn_, phi, pos);
  for (Eigen::Index i = 0; i < bn_.size(); ++i) bn_(i) = phi(pos++);
  for (Eigen::MatrixXd* m : {&wp_, &up_}) unflatten_block(*m, phi, pos);
  for (Eigen::Index i = 0; i < bp_.size(); ++i) bp_(i) = phi(pos++);
  unflatten_block(weo_, phi, pos);
  for (Eigen::Index i = 0; i < bo_.size(); ++i) bo_(i) = phi(pos++);
}

// Forward pass with all caches needed for backprop. Column-vector states.
struct DenoiserKernel {
  const Denoiser& d;
  const CategoricalGraph& noisy;
  int n;
  Eigen::VectorXd tau;                    // F
  std::vector<Eigen::VectorXd> ue;        // per edge category, H
  std::vector<Eigen::MatrixXd> h;         // rounds+1 entries, n x H (rows)
  std::vector<Eigen::MatrixXd> zup;       // rounds entries, n x H
  std::vector<Eigen::MatrixXd> zmsg;      // rounds entries, (n*n) x H
  std::vector<Eigen::MatrixXd> msum;      // rounds entries, n x H (mean msg)
  Eigen::MatrixXd z0;                     // n x H
  Eigen::MatrixXd zn;                     // n x a
  Eigen::MatrixXd zp;                     // pairs x H
  Eigen::MatrixXd ze;                     // pairs x b

  DenoiserKernel(const Denoiser& model, const CategoricalGraph& graph, int t,
                 int total_steps)
      : d(model), noisy(graph), n(graph.n()) {
    if (graph.node_cat_count() != d.a_ || graph.edge_cat_count() != d.b_) {
      throw std::invalid_argument("denoiser: graph category mismatch");
    }
    if (total_steps < 1 || t < 0 || t > total_steps) {
      throw std::invalid_argument("denoiser: bad timestep");
    }
    const int H = d.hidden_;
    tau.resize(Denoiser::kTimeFeatures);
    const double u = static_cast<double>(t) / total_steps;
    for (int k = 0; k < Denoiser::kTimeFeatures / 2; ++k) {
      const double w = 2.0 * std::numbers::pi * std::pow(2.0, k) * u;
      tau(2 * k) = std::sin(w);
      tau(2 * k + 1) = std::cos(w);
    }
    ue.resize(static_cast<std::size_t>(d.b_));
    for (int c = 0; c < d.b_; ++c) {
      ue[static_cast<std::size_t>(c)] = d.um_ * d.we_.row(c).transpose();
    }

    z0.resize(n, H);
    Eigen::VectorXd time_mix = d.wt_.transpose() * tau + d.bh_;
    for (int i = 0; i < n; ++i) {
      z0.row(i) = d.wx_.row(noisy.node_cat(i)) + time_mix.transpose();
    }
    h.push_back(z0.cwiseMax(0.0));

    for (int r = 0; r < d.rounds_; ++r) {
      const Eigen::MatrixXd q = h.back() * d.wm_.transpose();  // n x H
      Eigen::MatrixXd zm(n * n, H);
      Eigen::MatrixXd mean_msg = Eigen::MatrixXd::Zero(n, H);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (i == j) continue;
          const auto& edge_mix = ue[static_cast<std::size_t>(noisy.edge_cat(i, j))];
          zm.row(i * n + j) =
              q.row(j) + edge_mix.transpose() + d.bm_.transpose();
          mean_msg.row(i) += zm.row(i * n + j).cwiseMax(0.0);
        }
      }
      mean_msg /= static_cast<double>(n - 1);
      Eigen::MatrixXd zu = h.back() * d.ws_.transpose() +
                           mean_msg * d.wa_.transpose();
      zu.rowwise() += d.bu_.transpose();
      zmsg.push_back(std::move(zm));
      msum.push_back(std::move(mean_msg));
      zup.push_back(zu);
      h.push_back(zu.cwiseMax(0.0));
    }

    zn = h.back() * d.wn_.transpose();
    zn.rowwise() += d.bn_.transpose();

    const int pairs = pair_count(n);
    zp.resize(pairs, H);
    ze.resize(pairs, d.b_);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const int p = pair_index(n, i, j);
        const Eigen::VectorXd s =
            (h.back().row(i) + h.back().row(j)).transpose();
        zp.row(p) = (d.wp_ * s +
                     d.up_ * d.we_.row(noisy.edge_cat(i, j)).transpose() +
                     d.bp_)
                        .transpose();
        ze.row(p) =
            (d.weo_ * zp.row(p).cwiseMax(0.0).transpose() + d.bo_).transpose();
      }
    }
  }

  // Mean cross entropy against the clean graph; fills a parameter gradient if
  // grad_out is non-null.
  double loss(const CategoricalGraph& clean, Eigen::VectorXd* grad_out) const {
    const int pairs = pair_count(n);
    double node_loss = 0.0, edge_loss = 0.0;
    Eigen::MatrixXd dzn = Eigen::MatrixXd::Zero(n, d.a_);
    Eigen::MatrixXd dze = Eigen::MatrixXd::Zero(pairs, d.b_);
    for (int i = 0; i < n; ++i) {
      const int y = clean.node_cat(i);
      node_loss += nll_vec(zn.row(i).transpose(), y);
      if (grad_out) {
        Eigen::VectorXd p = softmax_vec(zn.row(i).transpose());
        p(y) -= 1.0;
        dzn.row(i) = p.transpose() / n;
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const int p = pair_index(n, i, j);
        const int y = clean.edge_cat(i, j);
        edge_loss += nll_vec(ze.row(p).transpose(), y);
        if (grad_out) {
          Eigen::VectorXd q = softmax_vec(ze.row(p).transpose());
          q(y) -= 1.0;
          dze.row(p) = q.transpose() / pairs;
        }
      }
    }
    const double total =
        node_loss / n + (pairs > 0 ? edge_loss / pairs : 0.0);
    if (grad_out) backward(dzn, dze, *grad_out);
    return total;
  }

  void backward(const Eigen::MatrixXd& dzn, const Eigen::MatrixXd& dze,
                Eigen::VectorXd& grad_out) const {
    const int H = d.hidden_;
    Denoiser g = d;
    g.set_params(Eigen::VectorXd::Zero(d.param_count()));

    Eigen::MatrixXd dh = dzn * d.wn_;  // n x H
    g.wn_ += dzn.transpose() * h.back();
    g.bn_ += dzn.colwise().sum().transpose();

    std::vector<Eigen::VectorXd> dwe_direct(
        static_cast<std::size_t>(d.b_), Eigen::VectorXd::Zero(H));
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const int p = pair_index(n, i, j);
        const int cat = noisy.edge_cat(i, j);
        const Eigen::VectorXd dzev = dze.row(p).transpose();
        const Eigen::VectorXd pvec = zp.row(p).cwiseMax(0.0).transpose();
        g.weo_ += dzev * pvec.transpose();
        g.bo_ += dzev;
        Eigen::VectorXd dp = d.weo_.transpose() * dzev;
        Eigen::VectorXd dzp =
            (zp.row(p).transpose().array() > 0.0).select(dp, 0.0);
        const Eigen::VectorXd s = (h.back().row(i) + h.back().row(j)).transpose();
        g.wp_ += dzp * s.transpose();
        g.up_ += dzp * d.we_.row(cat);
        g.bp_ += dzp;
        const Eigen::VectorXd dsv = d.wp_.transpose() * dzp;
        dh.row(i) += dsv.transpose();
        dh.row(j) += dsv.transpose();
        dwe_direct[static_cast<std::size_t>(cat)] += d.up_.transpose() * dzp;
      }
    }

    std::vector<Eigen::VectorXd> due(static_cast<std::size_t>(d.b_),
                                     Eigen::VectorXd::Zero(H));
    for (int r = d.rounds_ - 1; r >= 0; --r) {
      const auto ur = static_cast<std::size_t>(r);
      Eigen::MatrixXd dzu =
          (zup[ur].array() > 0.0).select(dh, Eigen::MatrixXd::Zero(n, H));
      g.ws_ += dzu.transpose() * h[ur];
      g.wa_ += dzu.transpose() * msum[ur];
      g.bu_ += dzu.colwise().sum().transpose();
      Eigen::MatrixXd dprev = dzu * d.ws_;       // via self path
      Eigen::MatrixXd dm = dzu * d.wa_;          // n x H
      Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(n, H);
      for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd dmi = dm.row(i).transpose() / (n - 1);
        for (int j = 0; j < n; ++j) {
          if (i == j) continue;
          Eigen::VectorXd dzm =
              (zmsg[ur].row(i * n + j).transpose().array() > 0.0)
                  .select(dmi, 0.0);
          dq.row(j) += dzm.transpose();
          due[static_cast<std::size_t>(noisy.edge_cat(i, j))] += dzm;
          g.bm_ += dzm;
        }
      }
      g.wm_ += dq.transpose() * h[ur];
      dprev += dq * d.wm_;
      dh = std::move(dprev);
    }

    Eigen::MatrixXd dz0 =
        (z0.array() > 0.0).select(dh, Eigen::MatrixXd::Zero(n, H));
    for (int i = 0; i < n; ++i) {
      g.wx_.row(noisy.node_cat(i)) += dz0.row(i);
      g.wt_ += tau * dz0.row(i);
      g.bh_ += dz0.row(i).transpose();
    }
    for (int c = 0; c < d.b_; ++c) {
      const auto uc = static_cast<std::size_t>(c);
      g.um_ += due[uc] * d.we_.row(c);
      g.we_.row(c) += (d.um_.transpose() * due[uc] + dwe_direct[uc]).transpose();
    }
    grad_out = g.params();
  }
};

Denoiser::Prediction Denoiser::predict(const CategoricalGraph& noisy, int t,
                                       int total_steps) const {
  DenoiserKernel k(*this, noisy, t, total_steps);
  Prediction out;
  out.node_probs.resize(noisy.n(), a_);
  for (int i = 0; i < noisy.n(); ++i) {
    out.node_probs.row(i) = softmax_vec(k.zn.row(i).transpose()).transpose();
  }
  out.edge_probs.resize(pair_count(noisy.n()), b_);
  for (int p = 0; p < out.edge_probs.rows(); ++p) {
    out.edge_probs.row(p) = softmax_vec(k.ze.row(p).transpose()).transpose();
  }
  return out;
}

double Denoiser::loss_and_grad(const CategoricalGraph& noisy,
                               const CategoricalGraph& clean, int t,
                               int total_steps, Eigen::VectorXd* grad) const {
  if (clean.n() != noisy.n()) {
    throw std::invalid_argument("denoiser loss: clean/noisy size mismatch");
  }
  DenoiserKernel k(*this, noisy, t, total_steps);
  return k.loss(clean, grad);
}

DenoiserTrainResult train_denoiser(const LabeledDataset& aux,
                                   const NoiseSchedule& schedule,
                                   const DenoiserHyper& hyper,
                                   std::uint64_t seed) {
  if (aux.graphs.empty()) {
    throw std::invalid_argument("train_denoiser: empty auxiliary set");
  }
  if (hyper.train_steps < 0 || hyper.batch < 1 ||
      hyper.holdout_fraction < 0.0 || hyper.holdout_fraction >= 1.0) {
    throw std::invalid_argument("train_denoiser: bad hyperparameters");
  }

  DenoiserTrainResult result;
  result.model =
      Denoiser::init_random(aux.node_cat_count, aux.edge_cat_count,
                            hyper.hidden, hyper.rounds, seed);

  std::vector<std::size_t> order(aux.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(derive_seed(seed, "denoiser-shuffle"));
  shuffle_rng.shuffle(order);
  auto holdout_count = static_cast<std::size_t>(
      hyper.holdout_fraction * static_cast<double>(aux.size()));
  holdout_count = std::min(holdout_count, aux.size() - 1);
  std::vector<std::size_t> holdout(order.begin(),
                                   order.begin() + static_cast<long>(holdout_count));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(holdout_count),
                                     order.end());
  if (holdout.empty()) holdout = train_idx;

  const int total_steps = schedule.steps();
  Eigen::VectorXd phi = result.model.params();
  Rng rng(derive_seed(seed, "denoiser-train"));
  std::size_t cursor = 0;
  std::vector<std::size_t> epoch_order = train_idx;

  for (int step = 0; step < hyper.train_steps; ++step) {
    Eigen::VectorXd grad_sum = Eigen::VectorXd::Zero(phi.size());
    double loss_sum = 0.0;
    for (int b = 0; b < hyper.batch; ++b) {
      if (cursor == epoch_order.size()) {
        cursor = 0;
        rng.shuffle(epoch_order);
      }
      const auto idx = epoch_order[cursor++];
      const auto& clean = aux.graphs[idx];
      const int t = rng.uniform_int(1, total_steps);
      const CategoricalGraph noisy =
          forward_noise(schedule, clean, t, rng.next_u64());
      Eigen::VectorXd g;
      loss_sum += result.model.loss_and_grad(noisy, clean, t, total_steps, &g);
      grad_sum += g;
    }
    const double mean_loss = loss_sum / hyper.batch;
    if (!std::isfinite(mean_loss)) {
      throw std::runtime_error("train_denoiser: loss diverged at step " +
                               std::to_string(step));
    }
    result.loss_history.push_back(mean_loss);
    phi -= (hyper.learning_rate / hyper.batch) * grad_sum;
    result.model.set_params(phi);
  }

  // Held-out loss, averaged over a deterministic spread of timesteps.
  Rng eval_rng(derive_seed(seed, "denoiser-eval"));
  double holdout_loss = 0.0;
  int holdout_terms = 0;
  for (std::size_t idx : holdout) {
    for (int rep = 0; rep < 5; ++rep) {
      const int t = eval_rng.uniform_int(1, total_steps);
      const CategoricalGraph noisy =
          forward_noise(schedule, aux.graphs[idx], t, eval_rng.next_u64());
      holdout_loss += result.model.loss_and_grad(noisy, aux.graphs[idx], t,
                                                 total_steps, nullptr);
      ++holdout_terms;
    }
  }
  result.holdout_loss = holdout_loss / holdout_terms;

  // Constant-predictor baselines from the train-slice marginals.
  Eigen::VectorXd node_marginal = Eigen::VectorXd::Zero(aux.node_cat_count);
  Eigen::VectorXd edge_marginal = Eigen::VectorXd::Zero(aux.edge_cat_count);
  for (std::size_t idx : train_idx) {
    const auto& g = aux.graphs[idx];
    for (int i = 0; i < g.n(); ++i) node_marginal(g.node_cat(i)) += 1.0;
    for (int i = 0; i < g.n(); ++i) {
      for (int j = i + 1; j < g.n(); ++j) edge_marginal(g.edge_cat(i, j)) += 1.0;
    }
  }
  node_marginal /= node_marginal.sum();
  edge_marginal /= edge_marginal.sum();
  double marginal = 0.0;
  for (std::size_t idx : holdout) {
    const auto& g = aux.graphs[idx];
    double gn = 0.0, ge = 0.0;
    for (int i = 0; i < g.n(); ++i) {
      gn -= std::log(std::max(node_marginal(g.node_cat(i)), 1e-12));
    }
    for (int i = 0; i < g.n(); ++i) {
      for (int j = i + 1; j < g.n(); ++j) {
        ge -= std::log(std::max(edge_marginal(g.edge_cat(i, j)), 1e-12));
      }
    }
    marginal += gn / g.n() + ge / pair_count(g.n());
  }
  result.marginal_baseline = marginal / static_cast<double>(holdout.size());
  result.uniform_baseline =
      std::log(static_cast<double>(aux.node_cat_count)) +
      std::log(static_cast<double>(aux.edge_cat_count));
  return result;
}

CategoricalGraph denoise_step(const Denoiser& model,
                              const NoiseSchedule& schedule,
                              const CategoricalGraph& noisy, int t,
                              std::uint64_t seed) {
  if (t < 1 || t > schedule.steps()) {
    throw std::invalid_argument("denoise_step: t out of range");
  }
  return denoise_step(model.predict(noisy, t, schedule.steps()), schedule,
                      noisy, t, seed);
}

CategoricalGraph denoise_step(const Denoiser::Prediction& pred,
                              const NoiseSchedule& schedule,
                              const CategoricalGraph& noisy, int t,
                              std::uint64_t seed) {
  if (t < 1 || t > schedule.steps()) {
    throw std::invalid_argument("denoise_step: t out of range");
  }
  Rng rng(derive_seed(seed, "denoise-step", static_cast<std::uint64_t>(t)));

  const Eigen::MatrixXd qx_t = schedule.node_transition(t);
  const Eigen::MatrixXd qx_prev = schedule.node_cumulative(t - 1);
  const Eigen::MatrixXd qx_cum = schedule.node_cumulative(t);
  const Eigen::MatrixXd qe_t = schedule.edge_transition(t);
  const Eigen::MatrixXd qe_prev = schedule.edge_cumulative(t - 1);
  const Eigen::MatrixXd qe_cum = schedule.edge_cumulative(t);

  // posterior(k) ~ Q^t(k -> x_t) * sum_c phat(c) Qbar^{t-1}(c -> k) / Qbar^t(c -> x_t)
  auto posterior = [&](const Eigen::VectorXd& phat, int x_t,
                       const Eigen::MatrixXd& q_t, const Eigen::MatrixXd& q_prev,
                       const Eigen::MatrixXd& q_cum, const char* what,
                       int entry_i, int entry_j) {
    const auto k_count = q_t.rows();
    std::vector<double> post(static_cast<std::size_t>(k_count), 0.0);
    double total = 0.0;
    for (Eigen::Index k = 0; k < k_count; ++k) {
      double mix = 0.0;
      for (Eigen::Index c = 0; c < k_count; ++c) {
        mix += phat(c) * q_prev(c, k) / q_cum(c, x_t);
      }
      post[static_cast<std::size_t>(k)] = q_t(k, x_t) * mix;
      total += post[static_cast<std::size_t>(k)];
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
      std::ostringstream os;
      os << "denoise_step: zero normalizer at t=" << t << " " << what << " ("
         << entry_i;
      if (entry_j >= 0) os << "," << entry_j;
      os << ")";
      throw std::runtime_error(os.str());
    }
    return post;
  };

  CategoricalGraph out(noisy.n(), noisy.node_cat_count(), noisy.edge_cat_count());
  for (int i = 0; i < noisy.n(); ++i) {
    const auto post = posterior(pred.node_probs.row(i).transpose(),
                                noisy.node_cat(i), qx_t, qx_prev, qx_cum,
                                "node", i, -1);
    out.set_node_cat(i, rng.sample_categorical(post));
  }
  for (int i = 0; i < noisy.n(); ++i) {
    for (int j = i + 1; j < noisy.n(); ++j) {
      const int p = pair_index(noisy.n(), i, j);
      const auto post = posterior(pred.edge_probs.row(p).transpose(),
                                  noisy.edge_cat(i, j), qe_t, qe_prev, qe_cum,
                                  "pair", i, j);
      out.set_edge_cat(i, j, rng.sample_categorical(post));
    }
  }
  return out;
}

CategoricalGraph sdedit_generate(const Denoiser& model,
                                 const NoiseSchedule& schedule,
                                 const CategoricalGraph& input, int K,
                                 std::uint64_t seed) {
  if (K < 0 || K > schedule.steps()) {
    throw std::invalid_argument("sdedit_generate: K out of range");
  }
  if (K == 0) return input;
  CategoricalGraph g =
      forward_noise(schedule, input, K, derive_seed(seed, "sdedit-noise"));
  for (int t = K; t >= 1; --t) {
    g = denoise_step(model, schedule, g, t,
                     derive_seed(seed, "sdedit-step", static_cast<std::uint64_t>(t)));
  }
  return g;
}

void write_denoiser(const std::string& path, const Denoiser& model,
                    std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_denoiser: cannot open " + path);
  out << "denoiser 1\ndims " << model.node_cat_count() << " "
      << model.edge_cat_count() << " " << model.hidden() << " "
      << model.rounds() << " " << Denoiser::kTimeFeatures << "\nseed " << seed
      << "\nparams " << model.param_count() << "\n";
  const Eigen::VectorXd phi = model.params();
  out.write(reinterpret_cast<const char*>(phi.data()),
            static_cast<std::streamsize>(sizeof(double)) * phi.size());
  if (!out) throw std::runtime_error("write_denoiser: write failed: " + path);
}

LoadedDenoiser read_denoiser(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw io_error(io_error::Kind::corrupt_header,
                   "read_denoiser: cannot open " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw io_error(io_error::Kind::corrupt_header, "read_denoiser: empty file");
  }
  int version = 0;
  if (std::sscanf(line.c_str(), "denoiser %d", &version) != 1) {
    throw io_error(io_error::Kind::corrupt_header,
                   "read_denoiser: bad magic: " + line);
  }
  if (version != 1) {
    throw io_error(io_error::Kind::version_mismatch,
                   "read_denoiser: unsupported version " + std::to_string(version));
  }
  int a = 0, b = 0, hidden = 0, rounds = 0, tf = 0;
  if (!std::getline(in, line) ||
      std::sscanf(line.c_str(), "dims %d %d %d %d %d", &a, &b, &hidden, &rounds,
                  &tf) != 5) {
    throw io_error(io_error::Kind::parse, "read_denoiser: missing dims");
  }
  if (tf != Denoiser::kTimeFeatures) {
    throw io_error(io_error::Kind::parse, "read_denoiser: bad time feature count");
  }
  unsigned long long seed = 0;
  if (!std::getline(in, line) ||
      std::sscanf(line.c_str(), "seed %llu", &seed) != 1) {
    throw io_error(io_error::Kind::parse, "read_denoiser: missing seed");
  }
  long long declared = 0;
  if (!std::getline(in, line) ||
      std::sscanf(line.c_str(), "params %lld", &declared) != 1) {
    throw io_error(io_error::Kind::parse, "read_denoiser: missing params count");
  }
  Denoiser model = Denoiser::init_random(a, b, hidden, rounds, 0);
  if (declared != model.param_count()) {
    throw io_error(io_error::Kind::parse,
                   "read_denoiser: params count inconsistent with dims");
  }
  Eigen::VectorXd phi(model.param_count());
  in.read(reinterpret_cast<char*>(phi.data()),
          static_cast<std::streamsize>(sizeof(double)) * phi.size());
  if (in.gcount() != static_cast<std::streamsize>(sizeof(double)) * phi.size()) {
    throw io_error(io_error::Kind::truncation,
                   "read_denoiser: short weight block");
  }
  char extra = 0;
  if (in.read(&extra, 1); in.gcount() != 0) {
    throw io_error(io_error::Kind::parse, "read_denoiser: trailing data");
  }
  model.set_params(phi);
  return LoadedDenoiser{std::move(model), seed};
}

}  // namespace recon
