#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "movseq/featurize.hpp"

namespace movseq {

inline constexpr std::string_view kPopulationScope = "population";
inline constexpr double kAlpha = 0.05;
inline constexpr std::size_t kExactWilcoxonMaxN = 25;

struct PairedTestResult {
  std::string scope;  // "population" or a participant id
  Direction direction = Direction::AccelX;
  std::string feature;  // e.g. "M5"
  std::size_t n_pairs = 0;  // after NA removal, before dropping zero differences
  bool testable = false;
  bool exact = false;
  double W = 0.0;  // sum of ranks of positive differences x - y
  double p = 1.0;
  bool significant = false;
};

/// Two-sided signed-rank test on x - y. Pairs with NA in either member are
/// removed, zero differences dropped, ties get midranks. The p-value is exact
/// for at most 25 nonzero differences without ties or zeros, otherwise it uses
/// the tie-corrected normal approximation with continuity correction. Throws
/// Untestable when no nonzero difference remains.
PairedTestResult wilcoxon_paired(std::span<const Feature> x, std::span<const Feature> y);
PairedTestResult wilcoxon_paired(std::span<const double> x, std::span<const double> y);

/// Exact two-sided p for the statistic W+ = w with n nonzero, untied differences.
double signrank_exact_p(std::size_t n, double w);

/// Participants in order of first appearance.
std::vector<std::string> participants(const FeatureMatrix& fm);

struct SlicePair {
  std::size_t nb_row = 0;
  std::size_t b_row = 0;
};

/// Within each participant the i-th NB slice pairs with the i-th B slice, in
/// row order; unmatched slices are dropped. Population scope concatenates the
/// participants' pairs. Throws MissingCondition when a condition is absent.
std::vector<SlicePair> pair_slices(const FeatureMatrix& fm, std::string_view scope);

/// 132 tests (one per column) for `scope`. Columns whose pairs are all NA or
/// all equal come back with testable = false.
std::vector<PairedTestResult> run_pairwise_suite(const FeatureMatrix& fm, std::string_view scope);

struct StandardizedMatrix {
  std::vector<std::string> participant_id;
  std::vector<Condition> condition;
  Eigen::MatrixXd values;  // rows x 132, NA replaced by 0 after scaling
  std::vector<bool> flagged;  // zero variance or fewer than two values

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
};

/// Column-wise (x - mean) / sd over non-NA entries (sd with n - 1), then NA -> 0.
/// Throws TooFewRows below two rows.
StandardizedMatrix standardize(const FeatureMatrix& fm);

struct PcaReport {
  std::string scope;
  Direction direction = Direction::AccelX;
  Condition condition = Condition::NB;
  std::size_t n_rows = 0;
  std::vector<std::string> features;  // the 33 direction features
  Eigen::VectorXd eigenvalues;         // descending
  Eigen::MatrixXd loadings;            // columns orthonormal, largest entry positive
  Eigen::VectorXd variance_explained;  // percent, sums to 100
  Eigen::MatrixXd contributions;       // percent, each column sums to 100
  std::size_t top_pc1 = 0;
  std::size_t top_pc2 = 0;

  double pc12_explained() const;
};

/// PCA of the sample covariance of the rows of `sm` matching (scope,
/// condition), restricted to `direction`'s 33 columns. Top features break ties
/// by lowest column index. Throws TooFewRows below three rows and
/// DegenerateCovariance when the covariance is zero.
PcaReport pca(const StandardizedMatrix& sm, std::string_view scope, Direction direction, Condition condition);

}  // namespace movseq
