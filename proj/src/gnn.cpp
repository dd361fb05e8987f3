#include "recon/gnn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "recon/io.hpp"
#include "recon/rng.hpp"

namespace recon {

namespace {

struct ForwardTrace {
  Eigen::MatrixXd x;    // n x a
  Eigen::MatrixXd adj;  // n x n, zero diagonal
  Eigen::VectorXd deg;  // row sums of A + I
  Eigen::MatrixXd s;    // D^{-1/2} (A + I) D^{-1/2}
  std::vector<Eigen::MatrixXd> z;  // pre-activations, one per conv layer
  std::vector<Eigen::MatrixXd> h;  // h[0] = x, h[i] = ReLU(z[i-1])
  Eigen::VectorXd pooled;
  Eigen::VectorXd logits;
};

Eigen::MatrixXd message_matrix(const Eigen::MatrixXd& adj,
                               Eigen::VectorXd* deg_out) {
  const auto n = adj.rows();
  Eigen::VectorXd deg = adj.rowwise().sum() + Eigen::VectorXd::Ones(n);
  Eigen::VectorXd rsqrt = deg.array().rsqrt();
  Eigen::MatrixXd s(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double a_tilde = (i == j) ? 1.0 : adj(i, j);
      s(i, j) = a_tilde * rsqrt(i) * rsqrt(j);
    }
  }
  if (deg_out) *deg_out = deg;
  return s;
}

ForwardTrace run_forward(const GnnClassifier& model, Eigen::MatrixXd x,
                         Eigen::MatrixXd adj) {
  if (x.cols() != model.input_dim()) {
    throw std::invalid_argument("gnn forward: node feature dim " +
                                std::to_string(x.cols()) +
                                " != model input dim " +
                                std::to_string(model.input_dim()));
  }
  ForwardTrace t;
  t.x = std::move(x);
  t.adj = std::move(adj);
  t.s = message_matrix(t.adj, &t.deg);
  t.h.reserve(model.conv_weights().size() + 1);
  t.h.push_back(t.x);
  for (const auto& w : model.conv_weights()) {
    t.z.push_back(t.s * t.h.back() * w);
    t.h.push_back(t.z.back().cwiseMax(0.0));
  }
  t.pooled = t.h.back().colwise().sum().transpose();
  t.logits = model.readout_weight().transpose() * t.pooled;
  return t;
}

ForwardTrace run_forward(const GnnClassifier& model, const CategoricalGraph& g) {
  return run_forward(model, g.node_onehot(), g.adjacency());
}

ForwardTrace run_forward(const GnnClassifier& model, const RelaxedGraph& g) {
  return run_forward(model, g.node_probs(), g.expected_adjacency());
}

ParamVector backprop_params(const GnnClassifier& model, const ForwardTrace& t,
                            const Eigen::VectorXd& dlogits) {
  const auto& convs = model.conv_weights();
  std::vector<Eigen::MatrixXd> dconv(convs.size());
  Eigen::MatrixXd dreadout = t.pooled * dlogits.transpose();
  Eigen::VectorXd dpooled = model.readout_weight() * dlogits;
  Eigen::MatrixXd dh =
      Eigen::VectorXd::Ones(t.x.rows()) * dpooled.transpose();  // n x d_K
  for (int i = static_cast<int>(convs.size()) - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    Eigen::MatrixXd dz = (t.z[ui].array() > 0.0)
                             .select(dh, Eigen::MatrixXd::Zero(dh.rows(), dh.cols()));
    dconv[ui] = (t.s * t.h[ui]).transpose() * dz;
    dh = t.s.transpose() * dz * convs[ui].transpose();
  }

  ParamVector grad(model.param_count());
  Eigen::Index pos = 0;
  for (const auto& d : dconv) {
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
      for (Eigen::Index c = 0; c < d.cols(); ++c) grad(pos++) = d(r, c);
    }
  }
  for (Eigen::Index r = 0; r < dreadout.rows(); ++r) {
    for (Eigen::Index c = 0; c < dreadout.cols(); ++c) grad(pos++) = dreadout(r, c);
  }
  return grad;
}

struct InputGrads {
  Eigen::MatrixXd node;       // n x a
  Eigen::MatrixXd adjacency;  // n x n symmetric, zero diagonal
};

InputGrads backprop_inputs(const GnnClassifier& model, const ForwardTrace& t,
                           const Eigen::VectorXd& dlogits) {
  const auto& convs = model.conv_weights();
  const auto n = t.x.rows();
  Eigen::VectorXd dpooled = model.readout_weight() * dlogits;
  Eigen::MatrixXd dh = Eigen::VectorXd::Ones(n) * dpooled.transpose();
  Eigen::MatrixXd ds = Eigen::MatrixXd::Zero(n, n);
  for (int i = static_cast<int>(convs.size()) - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    Eigen::MatrixXd dz = (t.z[ui].array() > 0.0)
                             .select(dh, Eigen::MatrixXd::Zero(dh.rows(), dh.cols()));
    ds += dz * (t.h[ui] * convs[ui]).transpose();
    dh = t.s.transpose() * dz * convs[ui].transpose();
  }

  // S_pq = A~_pq d_p^{-1/2} d_q^{-1/2} with d_p a row sum of A~, so every
  // entry of row p contributes a correction that does not depend on q.
  Eigen::VectorXd rsqrt = t.deg.array().rsqrt();
  Eigen::VectorXd row_corr(n);
  for (Eigen::Index p = 0; p < n; ++p) {
    double c = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double a_pj = (p == j) ? 1.0 : t.adj(p, j);
      c += (ds(p, j) + ds(j, p)) * a_pj * rsqrt(j);
    }
    row_corr(p) = -0.5 * std::pow(t.deg(p), -1.5) * c;
  }
  // Fold both orientations of the shared pair value A_pq = A_qp.
  Eigen::MatrixXd dadj = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index p = 0; p < n; ++p) {
    for (Eigen::Index q = 0; q < n; ++q) {
      if (p == q) continue;
      dadj(p, q) = (ds(p, q) + ds(q, p)) * rsqrt(p) * rsqrt(q) + row_corr(p) +
                   row_corr(q);
    }
  }
  return InputGrads{dh, dadj};
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - m).exp();
  return e / e.sum();
}

double nll(const Eigen::VectorXd& z, int y) {
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return lse - z(y);
}

int runner_up_index(const Eigen::VectorXd& z, int y) {
  int best = -1;
  for (int j = 0; j < z.size(); ++j) {
    if (j == y) continue;
    if (best < 0 || z(j) > z(best)) best = j;  // ties keep the smaller index
  }
  return best;
}

}  // namespace

GnnClassifier::GnnClassifier(std::vector<Eigen::MatrixXd> conv_weights,
                             Eigen::MatrixXd readout_weight)
    : conv_weights_(std::move(conv_weights)),
      readout_weight_(std::move(readout_weight)) {
  if (conv_weights_.empty()) {
    throw std::invalid_argument("GnnClassifier: need at least one conv layer");
  }
  for (std::size_t i = 1; i < conv_weights_.size(); ++i) {
    if (conv_weights_[i].rows() != conv_weights_[i - 1].cols()) {
      throw std::invalid_argument("GnnClassifier: layer dim mismatch");
    }
  }
  if (readout_weight_.rows() != conv_weights_.back().cols()) {
    throw std::invalid_argument("GnnClassifier: readout dim mismatch");
  }
}

GnnClassifier GnnClassifier::init_random(int input_dim,
                                         const std::vector<int>& hidden_dims,
                                         int num_classes, std::uint64_t seed) {
  if (hidden_dims.empty()) {
    throw std::invalid_argument("init_random: need at least one hidden layer");
  }
  Rng rng(derive_seed(seed, "gnn-init"));
  std::vector<int> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  auto sample = [&](int rows, int cols) {
    Eigen::MatrixXd w(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        w(r, c) = (2.0 * rng.uniform01() - 1.0) * scale;
      }
    }
    return w;
  };
  std::vector<Eigen::MatrixXd> convs;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    convs.push_back(sample(dims[i], dims[i + 1]));
  }
  Eigen::MatrixXd readout = sample(dims.back(), num_classes);
  return GnnClassifier(std::move(convs), std::move(readout));
}

int GnnClassifier::input_dim() const {
  return static_cast<int>(conv_weights_.front().rows());
}

std::vector<int> GnnClassifier::dims() const {
  std::vector<int> d;
  d.push_back(input_dim());
  for (const auto& w : conv_weights_) d.push_back(static_cast<int>(w.cols()));
  d.push_back(num_classes());
  return d;
}

Eigen::Index GnnClassifier::param_count() const {
  Eigen::Index count = readout_weight_.size();
  for (const auto& w : conv_weights_) count += w.size();
  return count;
}

ParamVector GnnClassifier::params() const {
  ParamVector theta(param_count());
  Eigen::Index pos = 0;
  for (const auto& w : conv_weights_) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) theta(pos++) = w(r, c);
    }
  }
  for (Eigen::Index r = 0; r < readout_weight_.rows(); ++r) {
    for (Eigen::Index c = 0; c < readout_weight_.cols(); ++c) {
      theta(pos++) = readout_weight_(r, c);
    }
  }
  return theta;
}

void GnnClassifier::set_params(const ParamVector& theta) {
  if (theta.size() != param_count()) {
    throw std::invalid_argument("set_params: length mismatch");
  }
  Eigen::Index pos = 0;
  for (auto& w : conv_weights_) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = theta(pos++);
    }
  }
  for (Eigen::Index r = 0; r < readout_weight_.rows(); ++r) {
    for (Eigen::Index c = 0; c < readout_weight_.cols(); ++c) {
      readout_weight_(r, c) = theta(pos++);
    }
  }
}

Eigen::VectorXd GnnClassifier::logits(const CategoricalGraph& g) const {
  return run_forward(*this, g).logits;
}

Eigen::VectorXd GnnClassifier::logits(const RelaxedGraph& g) const {
  return run_forward(*this, g).logits;
}

Eigen::VectorXd GnnClassifier::pooled_embedding(const CategoricalGraph& g) const {
  return run_forward(*this, g).pooled;
}

MarginGrad margin_and_grad(const GnnClassifier& model,
                           const CategoricalGraph& g, int y) {
  if (y < 0 || y >= model.num_classes()) {
    throw std::invalid_argument("margin_and_grad: label out of range");
  }
  if (model.num_classes() < 2) {
    throw std::invalid_argument("margin_and_grad: need C >= 2");
  }
  const auto t = run_forward(model, g);
  const int j = runner_up_index(t.logits, y);
  Eigen::VectorXd dlogits = Eigen::VectorXd::Zero(model.num_classes());
  dlogits(y) = 1.0;
  dlogits(j) -= 1.0;
  MarginGrad out;
  out.margin = t.logits(y) - t.logits(j);
  out.runner_up = j;
  out.grad = backprop_params(model, t, dlogits);
  return out;
}

double confidence(const GnnClassifier& model, const CategoricalGraph& g, int y) {
  if (y < 0 || y >= model.num_classes()) {
    throw std::invalid_argument("confidence: label out of range");
  }
  return softmax(model.logits(g))(y);
}

double check_homogeneity(const GnnClassifier& model, const CategoricalGraph& g,
                         double sigma) {
  if (sigma <= 0.0) throw std::invalid_argument("check_homogeneity: sigma <= 0");
  GnnClassifier scaled = model;
  scaled.set_params(model.params() * sigma);
  const Eigen::VectorXd base = model.logits(g);
  const Eigen::VectorXd lhs = scaled.logits(g);
  const double factor = std::pow(sigma, model.homogeneity_degree());
  return (lhs - factor * base).cwiseAbs().maxCoeff();
}

double ce_loss(const GnnClassifier& model, const CategoricalGraph& g, int y) {
  if (y < 0 || y >= model.num_classes()) {
    throw std::invalid_argument("ce_loss: label out of range");
  }
  return nll(model.logits(g), y);
}

ParamVector ce_loss_grad(const GnnClassifier& model, const CategoricalGraph& g,
                         int y) {
  const auto t = run_forward(model, g);
  Eigen::VectorXd dlogits = softmax(t.logits);
  dlogits(y) -= 1.0;
  return backprop_params(model, t, dlogits);
}

RelaxedCeGrads relaxed_ce_grads(const GnnClassifier& model,
                                const RelaxedGraph& g, int y) {
  if (y < 0 || y >= model.num_classes()) {
    throw std::invalid_argument("relaxed_ce_grads: label out of range");
  }
  const auto t = run_forward(model, g);
  Eigen::VectorXd dlogits = softmax(t.logits);
  dlogits(y) -= 1.0;
  auto grads = backprop_inputs(model, t, dlogits);
  return RelaxedCeGrads{nll(t.logits, y), std::move(grads.node),
                        std::move(grads.adjacency)};
}

double accuracy(const GnnClassifier& model, const LabeledDataset& ds) {
  if (ds.graphs.empty()) throw std::invalid_argument("accuracy: empty dataset");
  int hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Eigen::VectorXd z = model.logits(ds.graphs[i]);
    int best = 0;
    for (int c = 1; c < z.size(); ++c) {
      if (z(c) > z(best)) best = c;
    }
    hits += (best == ds.labels[i]);
  }
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

TrainResult train(const LabeledDataset& dataset, const TrainConfig& config) {
  dataset.validate(true);
  if (config.learning_rate < 0.0) {
    throw std::invalid_argument("train: learning rate must be >= 0");
  }
  if (!config.full_batch) {
    throw std::invalid_argument(
        "train: only full-batch gradient descent is supported");
  }
  if (config.dp &&
      (config.dp->clip_norm <= 0.0 || config.dp->noise_multiplier < 0.0)) {
    throw std::invalid_argument("train: bad dp config");
  }

  TrainResult result;
  result.model =
      GnnClassifier::init_random(dataset.node_cat_count, config.hidden_dims,
                                 dataset.num_classes, config.seed);
  Rng noise_rng(derive_seed(config.seed, "dp-noise"));
  ParamVector theta = result.model.params();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double total_loss = 0.0;
    ParamVector grad_sum = ParamVector::Zero(theta.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto t = run_forward(result.model, dataset.graphs[i]);
      total_loss += nll(t.logits, dataset.labels[i]);
      Eigen::VectorXd dlogits = softmax(t.logits);
      dlogits(dataset.labels[i]) -= 1.0;
      ParamVector g = backprop_params(result.model, t, dlogits);
      if (config.dp) {
        const double norm = g.norm();
        if (norm > config.dp->clip_norm) g *= config.dp->clip_norm / norm;
      }
      grad_sum += g;
    }
    if (!std::isfinite(total_loss)) {
      throw std::runtime_error("train: loss diverged at epoch " +
                               std::to_string(epoch));
    }
    result.loss_history.push_back(total_loss);
    if (config.dp && config.dp->noise_multiplier > 0.0) {
      const double std_dev = config.dp->clip_norm * config.dp->noise_multiplier;
      for (Eigen::Index k = 0; k < grad_sum.size(); ++k) {
        grad_sum(k) += std_dev * noise_rng.normal();
      }
    }
    theta -= config.learning_rate * grad_sum;
    result.model.set_params(theta);
  }

  double final_loss = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    final_loss += ce_loss(result.model, dataset.graphs[i], dataset.labels[i]);
  }
  if (!std::isfinite(final_loss)) {
    throw std::runtime_error("train: loss diverged at epoch " +
                             std::to_string(config.epochs));
  }
  result.loss_history.push_back(final_loss);

  if (!config.dp) {
    for (std::size_t i = 0; i + 1 < result.loss_history.size(); ++i) {
      if (result.loss_history[i + 1] > result.loss_history[i] + 1e-6) {
        result.loss_monotone = false;
        break;
      }
    }
  }
  return result;
}

void write_model(const std::string& path, const GnnClassifier& model,
                 std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_model: cannot open " + path);
  out << "gnnmodel 1\ndims";
  for (int d : model.dims()) out << " " << d;
  out << "\nL " << model.homogeneity_degree() << "\nseed " << seed
      << "\nparams " << model.param_count() << "\n";
  const ParamVector theta = model.params();
  out.write(reinterpret_cast<const char*>(theta.data()),
            static_cast<std::streamsize>(sizeof(double)) * theta.size());
  if (!out) throw std::runtime_error("write_model: write failed: " + path);
}

LoadedModel read_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw io_error(io_error::Kind::corrupt_header,
                   "read_model: cannot open " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw io_error(io_error::Kind::corrupt_header, "read_model: empty file");
  }
  int version = 0;
  if (std::sscanf(line.c_str(), "gnnmodel %d", &version) != 1) {
    throw io_error(io_error::Kind::corrupt_header,
                   "read_model: bad magic: " + line);
  }
  if (version != 1) {
    throw io_error(io_error::Kind::version_mismatch,
                   "read_model: unsupported version " + std::to_string(version));
  }
  if (!std::getline(in, line) || line.rfind("dims", 0) != 0) {
    throw io_error(io_error::Kind::parse, "read_model: missing dims");
  }
  std::istringstream dims_line(line.substr(4));
  std::vector<int> dims;
  for (int d = 0; dims_line >> d;) dims.push_back(d);
  if (dims.size() < 3) {
    throw io_error(io_error::Kind::parse, "read_model: need >= 3 dims");
  }
  int degree = 0;
  if (!std::getline(in, line) || std::sscanf(line.c_str(), "L %d", &degree) != 1) {
    throw io_error(io_error::Kind::parse, "read_model: missing L");
  }
  unsigned long long seed = 0;
  if (!std::getline(in, line) ||
      std::sscanf(line.c_str(), "seed %llu", &seed) != 1) {
    throw io_error(io_error::Kind::parse, "read_model: missing seed");
  }
  long long declared = 0;
  if (!std::getline(in, line) ||
      std::sscanf(line.c_str(), "params %lld", &declared) != 1) {
    throw io_error(io_error::Kind::parse, "read_model: missing params count");
  }

  std::vector<Eigen::MatrixXd> convs;
  for (std::size_t i = 0; i + 2 < dims.size(); ++i) {
    convs.emplace_back(Eigen::MatrixXd::Zero(dims[i], dims[i + 1]));
  }
  Eigen::MatrixXd readout =
      Eigen::MatrixXd::Zero(dims[dims.size() - 2], dims.back());
  GnnClassifier model(std::move(convs), std::move(readout));
  if (degree != model.homogeneity_degree()) {
    throw io_error(io_error::Kind::parse, "read_model: L inconsistent with dims");
  }
  if (declared != model.param_count()) {
    throw io_error(io_error::Kind::parse,
                   "read_model: params count inconsistent with dims");
  }
  ParamVector theta(model.param_count());
  in.read(reinterpret_cast<char*>(theta.data()),
          static_cast<std::streamsize>(sizeof(double)) * theta.size());
  if (in.gcount() !=
      static_cast<std::streamsize>(sizeof(double)) * theta.size()) {
    throw io_error(io_error::Kind::truncation, "read_model: short weight block");
  }
  char extra = 0;
  if (in.read(&extra, 1); in.gcount() != 0) {
    throw io_error(io_error::Kind::parse, "read_model: trailing data");
  }
  model.set_params(theta);
  return LoadedModel{std::move(model), seed};
}

}  // namespace recon
