#include "movseq/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "movseq/error.hpp"

namespace movseq {

namespace {

constexpr double kTieTolerance = 1e-9;

PairedTestResult signed_rank(std::vector<double> d, std::size_t n_pairs) {
  PairedTestResult r;
  r.n_pairs = n_pairs;
  const bool had_zero = std::any_of(d.begin(), d.end(), [](double v) { return v == 0.0; });
  d.erase(std::remove(d.begin(), d.end(), 0.0), d.end());
  const std::size_t n = d.size();
  if (n == 0) throw Error(ErrorCode::Untestable, "no nonzero paired differences");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<double> rank(n);
  double tie_term = 0.0;
  bool ties = false;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    auto t = static_cast<double>(j - i + 1);
    if (j > i) {
      ties = true;
      tie_term += t * t * t - t;
    }
    i = j + 1;
  }
  double w = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] > 0.0) w += rank[i];
  }
  r.W = w;
  r.testable = true;

  if (n <= kExactWilcoxonMaxN && !ties && !had_zero) {
    r.exact = true;
    r.p = signrank_exact_p(n, w);
  } else {
    auto nn = static_cast<double>(n);
    double mu = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    double dev = std::abs(w - mu) - 0.5;
    r.p = (var > 0.0 && dev > 0.0) ? std::erfc(dev / std::sqrt(var) / std::sqrt(2.0)) : 1.0;
  }
  r.p = std::clamp(r.p, 0.0, 1.0);
  r.significant = r.p < kAlpha;
  return r;
}

std::vector<std::size_t> scope_rows(const FeatureMatrix& fm, std::string_view scope, Condition c) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < fm.size(); ++i) {
    const auto& r = fm.rows[i];
    if (r.condition == c && (scope == kPopulationScope || r.participant_id == scope)) rows.push_back(i);
  }
  return rows;
}

}  // namespace

double signrank_exact_p(std::size_t n, double w) {
  // count[s] = number of subsets of {1..n} with rank sum s.
  const std::size_t max_sum = n * (n + 1) / 2;
  std::vector<double> count(max_sum + 1, 0.0);
  count[0] = 1.0;
  for (std::size_t k = 1; k <= n; ++k) {
    for (std::size_t s = max_sum; s >= k; --s) count[s] += count[s - k];
  }
  const double total = std::ldexp(1.0, static_cast<int>(n));
  double lower = 0.0;
  double upper = 0.0;
  for (std::size_t s = 0; s <= max_sum; ++s) {
    auto sd = static_cast<double>(s);
    if (sd <= w + 1e-9) lower += count[s];
    if (sd >= w - 1e-9) upper += count[s];
  }
  return std::min(1.0, 2.0 * std::min(lower, upper) / total);
}

PairedTestResult wilcoxon_paired(std::span<const Feature> x, std::span<const Feature> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidInput, "paired samples differ in length");
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] && y[i]) d.push_back(*x[i] - *y[i]);
  }
  if (d.empty()) throw Error(ErrorCode::Untestable, "no complete pairs");
  std::size_t n_pairs = d.size();
  return signed_rank(std::move(d), n_pairs);
}

PairedTestResult wilcoxon_paired(std::span<const double> x, std::span<const double> y) {
  std::vector<Feature> fx(x.begin(), x.end());
  std::vector<Feature> fy(y.begin(), y.end());
  for (auto& v : fx)
    if (!std::isfinite(*v)) v = NA;
  for (auto& v : fy)
    if (!std::isfinite(*v)) v = NA;
  return wilcoxon_paired(std::span<const Feature>(fx), std::span<const Feature>(fy));
}

std::vector<std::string> participants(const FeatureMatrix& fm) {
  std::vector<std::string> out;
  for (const auto& r : fm.rows) {
    if (std::find(out.begin(), out.end(), r.participant_id) == out.end()) out.push_back(r.participant_id);
  }
  return out;
}

std::vector<SlicePair> pair_slices(const FeatureMatrix& fm, std::string_view scope) {
  std::vector<std::string> ids;
  if (scope == kPopulationScope) {
    ids = participants(fm);
  } else {
    ids.emplace_back(scope);
  }
  std::vector<SlicePair> pairs;
  bool any_nb = false;
  bool any_b = false;
  for (const auto& id : ids) {
    auto nb = scope_rows(fm, id, Condition::NB);
    auto b = scope_rows(fm, id, Condition::B);
    any_nb = any_nb || !nb.empty();
    any_b = any_b || !b.empty();
    for (std::size_t i = 0; i < std::min(nb.size(), b.size()); ++i) pairs.push_back({nb[i], b[i]});
  }
  if (!any_nb || !any_b) {
    throw Error(ErrorCode::MissingCondition,
                "scope '" + std::string(scope) + "' lacks " + (any_nb ? "B" : "NB") + " slices");
  }
  return pairs;
}

std::vector<PairedTestResult> run_pairwise_suite(const FeatureMatrix& fm, std::string_view scope) {
  auto pairs = pair_slices(fm, scope);
  const auto& dir_names = direction_feature_names();
  std::vector<PairedTestResult> out;
  out.reserve(kFeatureCount);
  std::vector<Feature> x(pairs.size()), y(pairs.size());
  for (std::size_t c = 0; c < kFeatureCount; ++c) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      x[i] = fm.rows[pairs[i].b_row].values[c];
      y[i] = fm.rows[pairs[i].nb_row].values[c];
    }
    PairedTestResult r;
    try {
      r = wilcoxon_paired(std::span<const Feature>(x), std::span<const Feature>(y));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Untestable) throw;
      r = PairedTestResult{};
      for (std::size_t i = 0; i < pairs.size(); ++i) r.n_pairs += x[i] && y[i];
    }
    r.scope = std::string(scope);
    r.direction = kAnalysisDirections[c / kFeaturesPerDirection];
    r.feature = dir_names[c % kFeaturesPerDirection];
    out.push_back(std::move(r));
  }
  return out;
}

StandardizedMatrix standardize(const FeatureMatrix& fm) {
  if (fm.size() < 2) throw Error(ErrorCode::TooFewRows, "standardization needs at least 2 rows");
  StandardizedMatrix sm;
  const auto n = static_cast<Eigen::Index>(fm.size());
  sm.values = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(kFeatureCount));
  sm.flagged.assign(kFeatureCount, false);
  for (const auto& r : fm.rows) {
    sm.participant_id.push_back(r.participant_id);
    sm.condition.push_back(r.condition);
  }
  for (std::size_t c = 0; c < kFeatureCount; ++c) {
    double sum = 0.0;
    std::size_t k = 0;
    for (const auto& r : fm.rows) {
      if (r.values[c]) {
        sum += *r.values[c];
        ++k;
      }
    }
    if (k < 2) {
      sm.flagged[c] = true;
      continue;
    }
    double mean = sum / static_cast<double>(k);
    double ss = 0.0;
    for (const auto& r : fm.rows) {
      if (r.values[c]) ss += (*r.values[c] - mean) * (*r.values[c] - mean);
    }
    double sd = std::sqrt(ss / static_cast<double>(k - 1));
    if (!(sd > 0.0)) {
      sm.flagged[c] = true;
      continue;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& v = fm.rows[static_cast<std::size_t>(i)].values[c];
      if (v) sm.values(i, static_cast<Eigen::Index>(c)) = (*v - mean) / sd;
    }
  }
  return sm;
}

double PcaReport::pc12_explained() const {
  double s = 0.0;
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(2, variance_explained.size()); ++i) s += variance_explained(i);
  return s;
}

PcaReport pca(const StandardizedMatrix& sm, std::string_view scope, Direction direction, Condition condition) {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < sm.rows(); ++i) {
    if (sm.condition[i] == condition && (scope == kPopulationScope || sm.participant_id[i] == scope)) {
      rows.push_back(static_cast<Eigen::Index>(i));
    }
  }
  if (rows.size() < 3) {
    throw Error(ErrorCode::TooFewRows, "PCA needs at least 3 rows, scope '" + std::string(scope) + "' has " +
                                           std::to_string(rows.size()));
  }
  const auto p = static_cast<Eigen::Index>(kFeaturesPerDirection);
  const auto first = static_cast<Eigen::Index>(analysis_index(direction) * kFeaturesPerDirection);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), p);
  for (std::size_t i = 0; i < rows.size(); ++i) X.row(static_cast<Eigen::Index>(i)) = sm.values.row(rows[i]).segment(first, p);
  X.rowwise() -= X.colwise().mean();
  Eigen::MatrixXd cov = (X.transpose() * X) / static_cast<double>(X.rows() - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::DegenerateCovariance, "eigensolver failed");
  // Eigen returns ascending order.
  Eigen::VectorXd evals = es.eigenvalues().reverse();
  Eigen::MatrixXd evecs = es.eigenvectors().rowwise().reverse();
  if (!(evals(0) > 1e-12)) {
    throw Error(ErrorCode::DegenerateCovariance, "covariance is zero for scope '" + std::string(scope) + "'");
  }

  PcaReport r;
  r.scope = std::string(scope);
  r.direction = direction;
  r.condition = condition;
  r.n_rows = rows.size();
  const auto& names = direction_feature_names();
  r.features.assign(names.begin(), names.end());
  r.eigenvalues = evals.cwiseMax(0.0);
  for (Eigen::Index c = 0; c < p; ++c) {
    Eigen::Index arg = 0;
    evecs.col(c).cwiseAbs().maxCoeff(&arg);
    if (evecs(arg, c) < 0.0) evecs.col(c) *= -1.0;
  }
  r.loadings = evecs;
  r.variance_explained = 100.0 * r.eigenvalues / r.eigenvalues.sum();
  r.contributions = Eigen::MatrixXd(p, p);
  for (Eigen::Index c = 0; c < p; ++c) {
    Eigen::VectorXd sq = evecs.col(c).array().square();
    r.contributions.col(c) = 100.0 * sq / sq.sum();
  }
  auto top = [&](Eigen::Index c) {
    std::size_t best = 0;
    for (Eigen::Index i = 1; i < p; ++i) {
      if (r.contributions(i, c) > r.contributions(static_cast<Eigen::Index>(best), c) + kTieTolerance) {
        best = static_cast<std::size_t>(i);
      }
    }
    return best;
  };
  r.top_pc1 = top(0);
  r.top_pc2 = top(1);
  return r;
}

}  // namespace movseq
