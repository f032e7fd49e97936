#include "movseq/classifier.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "movseq/error.hpp"
#include "movseq/seed.hpp"
#include "movseq/stats.hpp"

namespace movseq {

namespace {

constexpr std::size_t kMinPerClass = 5;

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

std::vector<int> argmax_columns(const Eigen::MatrixXd& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index j = 0; j < logits.cols(); ++j) out[static_cast<std::size_t>(j)] = logits(1, j) > logits(0, j) ? 1 : 0;
  return out;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& y) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ok += pred[i] == y[i];
  return static_cast<double>(ok) / static_cast<double>(y.size());
}

template <typename T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

}  // namespace

void MlpConfig::validate() const {
  if (hidden_layers == 0) throw Error(ErrorCode::ConfigError, "mlp.hidden_layers must be positive");
  if (units == 0) throw Error(ErrorCode::ConfigError, "mlp.units must be positive");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::ConfigError, "mlp.learning_rate must be positive");
  if (epochs == 0) throw Error(ErrorCode::ConfigError, "mlp.epochs must be positive");
  if (runs == 0) throw Error(ErrorCode::ConfigError, "mlp.runs must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::ConfigError, "mlp.train_fraction must lie in (0, 1)");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw Error(ErrorCode::ConfigError, "mlp Adam parameters out of range");
  }
}

Split split(const std::vector<int>& labels, double fraction, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] ? 1 : 0].push_back(i);
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].size() < kMinPerClass) {
      throw Error(ErrorCode::TooFewRows, std::string("class ") + (c ? "B" : "NB") + " has " +
                                             std::to_string(by_class[c].size()) + " rows, need 5");
    }
  }
  std::mt19937_64 rng(seed);
  Split s;
  for (auto& idx : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_train = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

Standardizer Standardizer::fit(const std::vector<DirectionFeatures>& rows) {
  const auto p = static_cast<Eigen::Index>(kFeaturesPerDirection);
  Standardizer s;
  s.mean = Eigen::VectorXd::Zero(p);
  s.scale = Eigen::VectorXd::Zero(p);
  for (Eigen::Index c = 0; c < p; ++c) {
    double sum = 0.0;
    std::size_t k = 0;
    for (const auto& r : rows) {
      if (const auto& v = r[static_cast<std::size_t>(c)]) {
        sum += *v;
        ++k;
      }
    }
    if (k < 2) continue;
    double mean = sum / static_cast<double>(k);
    double ss = 0.0;
    for (const auto& r : rows) {
      if (const auto& v = r[static_cast<std::size_t>(c)]) ss += (*v - mean) * (*v - mean);
    }
    double sd = std::sqrt(ss / static_cast<double>(k - 1));
    s.mean(c) = mean;
    if (sd > 0.0) s.scale(c) = 1.0 / sd;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const std::vector<DirectionFeatures>& rows) const {
  const auto p = static_cast<Eigen::Index>(kFeaturesPerDirection);
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(p, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    for (Eigen::Index c = 0; c < p; ++c) {
      if (const auto& v = rows[j][static_cast<std::size_t>(c)]) {
        X(c, static_cast<Eigen::Index>(j)) = (*v - mean(c)) * scale(c);
      }
    }
  }
  return X;
}

Mlp::Mlp(std::size_t inputs, std::size_t hidden_layers, std::size_t units, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::size_t fan_in = inputs;
  for (std::size_t l = 0; l <= hidden_layers; ++l) {
    std::size_t out = l == hidden_layers ? 2 : units;
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Eigen::MatrixXd W(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(fan_in));
    for (Eigen::Index j = 0; j < W.cols(); ++j)
      for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = u(rng);
    Eigen::VectorXd b(static_cast<Eigen::Index>(out));
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = u(rng);
    W_.push_back(std::move(W));
    b_.push_back(std::move(b));
    fan_in = out;
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd h = X;
  for (std::size_t l = 0; l < W_.size(); ++l) {
    Eigen::MatrixXd z = (W_[l] * h).colwise() + b_[l];
    h = l + 1 < W_.size() ? relu(z) : z;
  }
  return h;
}

double Mlp::loss_and_gradient(const Eigen::MatrixXd& X, const std::vector<int>& y, Eigen::VectorXd& grad) const {
  const std::size_t L = W_.size();
  const auto n = static_cast<double>(X.cols());
  std::vector<Eigen::MatrixXd> acts(L + 1);
  acts[0] = X;
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd z = (W_[l] * acts[l]).colwise() + b_[l];
    acts[l + 1] = l + 1 < L ? relu(z) : z;
  }
  // Softmax cross-entropy on the logits.
  const Eigen::MatrixXd& logits = acts[L];
  Eigen::MatrixXd delta(2, logits.cols());
  double loss = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    double m = logits.col(j).maxCoeff();
    double e0 = std::exp(logits(0, j) - m);
    double e1 = std::exp(logits(1, j) - m);
    double lse = m + std::log(e0 + e1);
    int label = y[static_cast<std::size_t>(j)];
    loss += lse - logits(label, j);
    delta(0, j) = e0 / (e0 + e1);
    delta(1, j) = e1 / (e0 + e1);
    delta(label, j) -= 1.0;
  }
  loss /= n;
  delta /= n;

  grad.resize(static_cast<Eigen::Index>(parameter_count()));
  std::vector<Eigen::Index> offset(L);
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < L; ++l) {
    offset[l] = pos;
    pos += W_[l].size() + b_[l].size();
  }
  for (std::size_t l = L; l-- > 0;) {
    Eigen::Map<Eigen::MatrixXd> gW(grad.data() + offset[l], W_[l].rows(), W_[l].cols());
    gW.noalias() = delta * acts[l].transpose();
    grad.segment(offset[l] + W_[l].size(), b_[l].size()) = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = W_[l].transpose() * delta;
      delta = back.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
    }
  }
  return loss;
}

double Mlp::loss(const Eigen::MatrixXd& X, const std::vector<int>& y) const {
  Eigen::MatrixXd logits = forward(X);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    double m = logits.col(j).maxCoeff();
    double lse = m + std::log(std::exp(logits(0, j) - m) + std::exp(logits(1, j) - m));
    loss += lse - logits(y[static_cast<std::size_t>(j)], j);
  }
  return loss / static_cast<double>(logits.cols());
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < W_.size(); ++l) n += static_cast<std::size_t>(W_[l].size() + b_[l].size());
  return n;
}

Eigen::VectorXd Mlp::parameters() const {
  Eigen::VectorXd p(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < W_.size(); ++l) {
    p.segment(pos, W_[l].size()) = Eigen::Map<const Eigen::VectorXd>(W_[l].data(), W_[l].size());
    pos += W_[l].size();
    p.segment(pos, b_[l].size()) = b_[l];
    pos += b_[l].size();
  }
  return p;
}

void Mlp::set_parameters(const Eigen::VectorXd& p) {
  if (static_cast<std::size_t>(p.size()) != parameter_count()) {
    throw Error(ErrorCode::InvalidInput, "parameter vector has the wrong length");
  }
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < W_.size(); ++l) {
    Eigen::Map<Eigen::VectorXd>(W_[l].data(), W_[l].size()) = p.segment(pos, W_[l].size());
    pos += W_[l].size();
    b_[l] = p.segment(pos, b_[l].size());
    pos += b_[l].size();
  }
}

std::vector<int> Mlp::predict(const Eigen::MatrixXd& X) const { return argmax_columns(forward(X)); }

TrainedModel train(const MlpConfig& cfg, const std::vector<DirectionFeatures>& rows, const std::vector<int>& labels,
                   std::uint64_t seed) {
  cfg.validate();
  if (rows.empty() || rows.size() != labels.size()) throw Error(ErrorCode::InvalidInput, "training set is empty");
  TrainedModel m;
  m.standardizer = Standardizer::fit(rows);
  const Eigen::MatrixXd X = m.standardizer.apply(rows);
  m.net = Mlp(kFeaturesPerDirection, cfg.hidden_layers, cfg.units, derive_seed(seed, {1}));
  std::mt19937_64 batch_rng(derive_seed(seed, {2}));

  Eigen::VectorXd theta = m.net.parameters();
  Eigen::VectorXd g;
  Eigen::VectorXd mom = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd vel = Eigen::VectorXd::Zero(theta.size());
  const std::size_t n = rows.size();
  const std::size_t batch = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  m.loss_history.reserve(cfg.epochs);

  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < n) std::shuffle(order.begin(), order.end(), batch_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      std::size_t end = std::min(start + batch, n);
      double loss;
      if (batch == n) {
        loss = m.net.loss_and_gradient(X, labels, g);
      } else {
        Eigen::MatrixXd xb(X.rows(), static_cast<Eigen::Index>(end - start));
        std::vector<int> yb;
        for (std::size_t i = start; i < end; ++i) {
          xb.col(static_cast<Eigen::Index>(i - start)) = X.col(static_cast<Eigen::Index>(order[i]));
          yb.push_back(labels[order[i]]);
        }
        loss = m.net.loss_and_gradient(xb, yb, g);
      }
      if (!std::isfinite(loss) || !g.allFinite()) {
        throw Error(ErrorCode::NonFiniteLoss, "loss diverged at epoch " + std::to_string(epoch));
      }
      epoch_loss += loss * static_cast<double>(end - start);
      ++t;
      mom = cfg.beta1 * mom + (1.0 - cfg.beta1) * g;
      vel = cfg.beta2 * vel + (1.0 - cfg.beta2) * g.cwiseProduct(g);
      double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
      double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
      theta.array() -= cfg.learning_rate * (mom.array() / c1) / ((vel.array() / c2).sqrt() + cfg.adam_eps);
      m.net.set_parameters(theta);
    }
    m.loss_history.push_back(epoch_loss / static_cast<double>(n));
  }
  m.final_loss = m.net.loss(X, labels);
  if (!std::isfinite(m.final_loss)) throw Error(ErrorCode::NonFiniteLoss, "final loss is not finite");
  m.train_accuracy = accuracy(m.net.predict(X), labels);
  return m;
}

double evaluate(const TrainedModel& model, const std::vector<DirectionFeatures>& rows, const std::vector<int>& labels) {
  if (rows.empty()) throw Error(ErrorCode::EmptyTestSet, "no test rows");
  if (rows.size() != labels.size()) throw Error(ErrorCode::InvalidInput, "labels and rows differ in length");
  return accuracy(model.net.predict(model.standardizer.apply(rows)), labels);
}

TrainReport run_protocol(const FeatureMatrix& fm, std::string_view scope, Direction direction, const MlpConfig& cfg) {
  cfg.validate();
  std::vector<DirectionFeatures> rows;
  std::vector<int> labels;
  for (const auto& r : fm.rows) {
    if (scope != kPopulationScope && r.participant_id != scope) continue;
    rows.push_back(r.direction(direction));
    labels.push_back(label_of(r.condition));
  }
  TrainReport rep;
  rep.scope = std::string(scope);
  rep.direction = direction;
  rep.seed = cfg.seed;
  double sum = 0.0;
  std::size_t ok = 0;
  for (std::size_t run = 0; run < cfg.runs; ++run) {
    RunResult rr;
    rr.seed = derive_seed(cfg.seed, {fnv1a64(scope), static_cast<std::uint64_t>(direction), run});
    auto sp = split(labels, cfg.train_fraction, rr.seed);
    rr.n_train = sp.train.size();
    rr.n_test = sp.test.size();
    try {
      auto model = train(cfg, pick(rows, sp.train), pick(labels, sp.train), rr.seed);
      rr.final_loss = model.final_loss;
      rr.accuracy = evaluate(model, pick(rows, sp.test), pick(labels, sp.test));
      sum += *rr.accuracy;
      ++ok;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFiniteLoss) throw;
      rr.status = std::string(to_string(e.code()));
    }
    rep.runs.push_back(rr);
  }
  if (ok > 0) rep.mean_accuracy = sum / static_cast<double>(ok);
  return rep;
}

std::string train_report_json(const TrainReport& r) {
  nlohmann::json j;
  j["scope"] = r.scope;
  j["direction"] = std::string(display_name(r.direction));
  j["seed"] = r.seed;
  j["mean_accuracy"] = r.mean_accuracy ? nlohmann::json(*r.mean_accuracy) : nlohmann::json();
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& rr : r.runs) {
    runs.push_back({{"seed", rr.seed},
                    {"status", rr.status},
                    {"accuracy", rr.accuracy ? nlohmann::json(*rr.accuracy) : nlohmann::json()},
                    {"final_loss", rr.final_loss ? nlohmann::json(*rr.final_loss) : nlohmann::json()},
                    {"n_train", rr.n_train},
                    {"n_test", rr.n_test}});
  }
  j["runs"] = runs;
  return j.dump(2);
}

}  // namespace movseq
