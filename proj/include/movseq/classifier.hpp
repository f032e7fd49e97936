#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "movseq/featurize.hpp"

namespace movseq {

struct MlpConfig {
  std::size_t hidden_layers = 6;
  std::size_t units = 64;
  double learning_rate = 1e-3;
  std::size_t epochs = 2500;
  std::size_t batch_size = 0;  // 0 = full batch
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t runs = 3;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Binary labels: 0 = NB, 1 = B.
inline int label_of(Condition c) { return c == Condition::B ? 1 : 0; }

struct Split {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;
};

/// Stratified by label: each class contributes round(fraction * n_class) rows
/// to training. Throws TooFewRows when a class has fewer than 5 rows.
Split split(const std::vector<int>& labels, double fraction, std::uint64_t seed);

/// Per-column centring and scaling over non-NA entries (sd with n - 1), NA -> 0
/// afterwards. Zero-variance columns map to 0.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // 0 marks a column that is dropped to 0

  static Standardizer fit(const std::vector<DirectionFeatures>& rows);
  /// Columns are samples (33 x n).
  Eigen::MatrixXd apply(const std::vector<DirectionFeatures>& rows) const;
};

/// Fully connected ReLU network with a linear 2-logit output.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t inputs, std::size_t hidden_layers, std::size_t units, std::uint64_t seed);

  /// Logits, 2 x n, for inputs given as columns.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& X) const;

  /// Mean softmax cross-entropy over the columns of X and its gradient with
  /// respect to parameters() (same layout).
  double loss_and_gradient(const Eigen::MatrixXd& X, const std::vector<int>& y, Eigen::VectorXd& grad) const;
  double loss(const Eigen::MatrixXd& X, const std::vector<int>& y) const;

  /// Weights then bias of each layer, weights column-major.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& p);
  std::size_t parameter_count() const;

  std::vector<int> predict(const Eigen::MatrixXd& X) const;

 private:
  std::vector<Eigen::MatrixXd> W_;
  std::vector<Eigen::VectorXd> b_;
};

struct TrainedModel {
  Mlp net;
  Standardizer standardizer;
  std::vector<double> loss_history;  // one entry per epoch, before the update
  double final_loss = 0.0;           // after the last update
  double train_accuracy = 0.0;
};

/// Full-batch Adam (or mini-batch when cfg.batch_size > 0) on the
/// standardized rows. Weights start uniform in +-1/sqrt(fan_in). Throws
/// NonFiniteLoss when training diverges.
TrainedModel train(const MlpConfig& cfg, const std::vector<DirectionFeatures>& rows, const std::vector<int>& labels,
                   std::uint64_t seed);

/// Share of rows whose argmax logit equals the label. Throws EmptyTestSet.
double evaluate(const TrainedModel& model, const std::vector<DirectionFeatures>& rows, const std::vector<int>& labels);

struct RunResult {
  std::uint64_t seed = 0;
  std::string status = "ok";  // "ok" or an error code name
  std::optional<double> accuracy;
  std::optional<double> final_loss;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

struct TrainReport {
  std::string scope;
  Direction direction = Direction::AccelX;
  std::vector<RunResult> runs;
  std::optional<double> mean_accuracy;  // over the runs that succeeded
  std::uint64_t seed = 0;
};

/// Rows of `scope` ("population" or a participant id), `direction`'s 33
/// features; cfg.runs split/train/evaluate loops with seeds derived from
/// cfg.seed, scope and direction.
TrainReport run_protocol(const FeatureMatrix& fm, std::string_view scope, Direction direction, const MlpConfig& cfg);

std::string train_report_json(const TrainReport& r);

}  // namespace movseq
