#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "movseq/error.hpp"
#include "movseq/stats.hpp"
#include "oracles.hpp"

using namespace movseq;

namespace {

// Distinct |d| values so the exact branch applies.
std::pair<std::vector<double>, std::vector<double>> untied_pairs(std::size_t n, std::mt19937_64& rng, double shift = 0.0) {
  std::vector<double> x(n), y(n);
  std::normal_distribution<double> z;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = z(rng);
    x[i] = y[i] + shift + z(rng);
  }
  return {x, y};
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidInput;
}

FeatureMatrix two_participant_matrix(std::mt19937_64& rng, std::size_t slices = 6) {
  std::normal_distribution<double> z;
  FeatureMatrix fm;
  fm.provenance = {"seed=1"};
  for (std::string id : {"P01", "P02"}) {
    for (Condition c : {Condition::NB, Condition::B}) {
      for (std::size_t s = 0; s < slices; ++s) {
        FeatureVector fv;
        fv.participant_id = id;
        fv.condition = c;
        fv.slice_index = s;
        for (auto& v : fv.values) v = z(rng);
        fm.rows.push_back(fv);
      }
    }
  }
  return fm;
}

StandardizedMatrix blank_standardized(std::size_t rows, Condition c = Condition::NB) {
  StandardizedMatrix sm;
  sm.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(kFeatureCount));
  sm.participant_id.assign(rows, "P01");
  sm.condition.assign(rows, c);
  sm.flagged.assign(kFeatureCount, false);
  return sm;
}

}  // namespace

TEST_CASE("exact p matches 2^n sign enumeration for n <= 10") {
  std::mt19937_64 rng(1);
  for (std::size_t n = 1; n <= 10; ++n) {
    for (int rep = 0; rep < 40; ++rep) {
      auto [x, y] = untied_pairs(n, rng, rep % 3 == 0 ? 1.0 : 0.0);
      auto r = wilcoxon_paired(std::span<const double>(x), std::span<const double>(y));
      CHECK(r.exact);
      CHECK(r.n_pairs == n);
      CHECK(r.p == oracle::signrank_enumeration_p(static_cast<int>(n), r.W));
    }
  }
}

TEST_CASE("n = 6 hand fixture") {
  // d = x - y = (0.5, -1.5, 2.5, 3.5, 4.5, 5.5): ranks 1..6 with only rank 2
  // negative, so W+ = 19. Rank subsets summing to 19, 20 and 21 are the
  // complements of {2}, {1} and {}, hence P(W+ >= 19) = 3/64.
  std::vector<double> x = {1.5, 0.0, 3.5, 4.5, 5.5, 6.5};
  std::vector<double> y = {1.0, 1.5, 1.0, 1.0, 1.0, 1.0};
  auto r = wilcoxon_paired(std::span<const double>(x), std::span<const double>(y));
  CHECK(r.W == 19.0);
  CHECK(r.p == oracle::signrank_enumeration_p(6, 19.0));
  CHECK(r.p == doctest::Approx(2.0 * 3.0 / 64.0));
  CHECK_FALSE(r.significant);
  // All positive: the smallest attainable two-sided p at n = 6.
  std::vector<double> up = {1, 2, 3, 4, 5, 6}, z(6, 0.0);
  auto all = wilcoxon_paired(std::span<const double>(up), std::span<const double>(z));
  CHECK(all.p == doctest::Approx(1.0 / 32.0));
  CHECK(all.significant);
}

TEST_CASE("identical members are Untestable") {
  std::vector<double> x = {1, 2, 3, 4};
  CHECK(code_of([&] { wilcoxon_paired(std::span<const double>(x), std::span<const double>(x)); }) ==
        ErrorCode::Untestable);
  std::vector<Feature> a = {1.0, NA}, b = {NA, 2.0};
  CHECK(code_of([&] { wilcoxon_paired(std::span<const Feature>(a), std::span<const Feature>(b)); }) ==
        ErrorCode::Untestable);
}

TEST_CASE("NA pairs are removed before testing") {
  std::vector<Feature> x = {1.0, 5.0, NA, 3.0, 8.0};
  std::vector<Feature> y = {0.5, 4.0, 1.0, NA, 9.0};
  auto r = wilcoxon_paired(std::span<const Feature>(x), std::span<const Feature>(y));
  CHECK(r.n_pairs == 3);
  std::vector<double> cx = {1.0, 5.0, 8.0}, cy = {0.5, 4.0, 9.0};
  auto c = wilcoxon_paired(std::span<const double>(cx), std::span<const double>(cy));
  CHECK(r.W == c.W);
  CHECK(r.p == c.p);
}

TEST_CASE("ties get midranks and the normal approximation") {
  // d = (1, 1, 2, -3): ranks 1.5, 1.5, 3, 4; W+ = 6.
  std::vector<double> x = {2, 3, 5, 1}, y = {1, 2, 3, 4};
  auto r = wilcoxon_paired(std::span<const double>(x), std::span<const double>(y));
  CHECK(r.W == 6.0);
  CHECK_FALSE(r.exact);
  double mu = 5.0;
  double var = 4.0 * 5.0 * 9.0 / 24.0 - (8.0 - 2.0) / 48.0;
  double z = (std::abs(6.0 - mu) - 0.5) / std::sqrt(var);
  CHECK(r.p == doctest::Approx(std::erfc(z / std::sqrt(2.0))));
}

TEST_CASE("n = 40 with a large shift") {
  std::mt19937_64 rng(2);
  auto [x, y] = untied_pairs(40, rng, 2.0);
  auto r = wilcoxon_paired(std::span<const double>(x), std::span<const double>(y));
  CHECK_FALSE(r.exact);
  CHECK(r.p < 0.001);
  // Independent normal-approximation cross-check without ties.
  double z = (std::abs(r.W - 410.0) - 0.5) / std::sqrt(40.0 * 41.0 * 81.0 / 24.0);
  CHECK(r.p == doctest::Approx(std::erfc(z / std::sqrt(2.0))).epsilon(1e-12));
}

TEST_CASE("exact branch at n = 25, approximation at 26") {
  std::mt19937_64 rng(3);
  auto [x, y] = untied_pairs(25, rng, 0.3);
  auto r = wilcoxon_paired(std::span<const double>(x), std::span<const double>(y));
  CHECK(r.exact);
  CHECK(r.p == doctest::Approx(oracle::signrank_enumeration_p(25, r.W)).epsilon(1e-12));
  auto [x2, y2] = untied_pairs(26, rng, 0.3);
  CHECK_FALSE(wilcoxon_paired(std::span<const double>(x2), std::span<const double>(y2)).exact);
}

TEST_CASE("p in [0, 1] and symmetric under swapping members") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 200; ++rep) {
    std::size_t n = 1 + rng() % 60;
    auto [x, y] = untied_pairs(n, rng, 0.2);
    if (rep % 4 == 0) {
      for (auto& v : x) v = std::round(v);
      for (auto& v : y) v = std::round(v);
    }
    try {
      auto a = wilcoxon_paired(std::span<const double>(x), std::span<const double>(y));
      auto b = wilcoxon_paired(std::span<const double>(y), std::span<const double>(x));
      CHECK(a.p >= 0.0);
      CHECK(a.p <= 1.0);
      CHECK(a.p == doctest::Approx(b.p).epsilon(1e-12));
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Untestable);
    }
  }
}

TEST_CASE("rank statistics are invariant under a shared positive affine map") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    std::size_t n = 3 + rng() % 30;
    auto [x, y] = untied_pairs(n, rng, 0.4);
    double a = std::exp(std::uniform_real_distribution<double>(-3, 3)(rng));
    double b = std::uniform_real_distribution<double>(-10, 10)(rng);
    // Powers of two keep the map exact in floating point.
    a = std::exp2(std::round(std::log2(a)));
    b = std::round(b);
    std::vector<double> tx(n), ty(n);
    for (std::size_t i = 0; i < n; ++i) {
      tx[i] = a * x[i] + b;
      ty[i] = a * y[i] + b;
    }
    auto r = wilcoxon_paired(std::span<const double>(x), std::span<const double>(y));
    auto t = wilcoxon_paired(std::span<const double>(tx), std::span<const double>(ty));
    CHECK(r.W == t.W);
    CHECK(r.p == t.p);
  }
}

TEST_CASE("a nonlinear monotone map can change the signed-rank statistic") {
  // Differences are not preserved by exp, so neither are their ranks.
  std::vector<double> x = {1.0, 0.0, 3.0}, y = {0.0, 2.0, 2.5};
  std::vector<double> ex(3), ey(3);
  for (std::size_t i = 0; i < 3; ++i) {
    ex[i] = std::exp(x[i]);
    ey[i] = std::exp(y[i]);
  }
  auto a = wilcoxon_paired(std::span<const double>(x), std::span<const double>(y));
  auto b = wilcoxon_paired(std::span<const double>(ex), std::span<const double>(ey));
  CHECK(a.W != b.W);
}

TEST_CASE("slice pairing is chronological and drops the unmatched") {
  std::mt19937_64 rng(6);
  auto fm = two_participant_matrix(rng);
  // P02 loses two B slices.
  fm.rows.erase(fm.rows.begin() + 22, fm.rows.begin() + 24);
  auto pop = pair_slices(fm, kPopulationScope);
  CHECK(pop.size() == 10);
  auto p1 = pair_slices(fm, "P01");
  REQUIRE(p1.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(p1[i].nb_row == i);
    CHECK(p1[i].b_row == 6 + i);
  }
  auto p2 = pair_slices(fm, "P02");
  CHECK(p2.size() == 4);
  CHECK(p2.back().nb_row == 15);
}

TEST_CASE("suite shape and missing condition") {
  std::mt19937_64 rng(7);
  auto fm = two_participant_matrix(rng);
  auto res = run_pairwise_suite(fm, kPopulationScope);
  REQUIRE(res.size() == 132);
  CHECK(res[0].direction == Direction::AccelX);
  CHECK(res[0].feature == "M0");
  CHECK(res[131].direction == Direction::RotY);
  CHECK(res[131].feature == "F12");
  for (const auto& r : res) {
    CHECK(r.scope == "population");
    CHECK(r.n_pairs == 12);
    CHECK(r.testable);
  }
  FeatureMatrix nb_only = fm;
  std::erase_if(nb_only.rows, [](const FeatureVector& r) { return r.condition == Condition::B; });
  CHECK(code_of([&] { run_pairwise_suite(nb_only, kPopulationScope); }) == ErrorCode::MissingCondition);
  CHECK(code_of([&] { run_pairwise_suite(fm, "P99"); }) == ErrorCode::MissingCondition);
}

TEST_CASE("all-NA column is untestable, not an error") {
  std::mt19937_64 rng(8);
  auto fm = two_participant_matrix(rng);
  for (auto& r : fm.rows) r.values[40] = NA;
  auto res = run_pairwise_suite(fm, "P01");
  CHECK_FALSE(res[40].testable);
  CHECK(res[40].n_pairs == 0);
  CHECK_FALSE(res[40].significant);
  CHECK(res[41].testable);
}

TEST_CASE("population scope with one participant equals individual scope") {
  std::mt19937_64 rng(9);
  auto fm = two_participant_matrix(rng);
  std::erase_if(fm.rows, [](const FeatureVector& r) { return r.participant_id == "P02"; });
  auto pop = run_pairwise_suite(fm, kPopulationScope);
  auto ind = run_pairwise_suite(fm, "P01");
  for (std::size_t c = 0; c < 132; ++c) {
    CHECK(pop[c].W == ind[c].W);
    CHECK(pop[c].p == ind[c].p);
    CHECK(pop[c].n_pairs == ind[c].n_pairs);
  }
}

TEST_CASE("standardize") {
  FeatureMatrix fm;
  for (int i = 0; i < 4; ++i) {
    FeatureVector fv;
    fv.values.fill(NA);
    fm.rows.push_back(fv);
  }
  fm.rows[0].values[0] = 1.0;
  fm.rows[1].values[0] = 2.0;
  fm.rows[2].values[0] = 3.0;
  std::mt19937_64 rng(10);
  std::normal_distribution<double> z;
  std::vector<double> col(4);
  for (auto& v : col) v = z(rng);
  double m = (col[0] + col[1] + col[2] + col[3]) / 4.0;
  double ss = 0.0;
  for (double v : col) ss += (v - m) * (v - m);
  for (int i = 0; i < 4; ++i) {
    fm.rows[static_cast<std::size_t>(i)].values[1] = (col[static_cast<std::size_t>(i)] - m) / std::sqrt(ss / 3.0);
    fm.rows[static_cast<std::size_t>(i)].values[2] = 7.0;
  }
  auto sm = standardize(fm);
  CHECK(sm.values(0, 0) == doctest::Approx(-1.0));
  CHECK(sm.values(1, 0) == doctest::Approx(0.0));
  CHECK(sm.values(2, 0) == doctest::Approx(1.0));
  CHECK(sm.values(3, 0) == 0.0);
  CHECK_FALSE(sm.flagged[0]);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(sm.values(i, 1) - *fm.rows[static_cast<std::size_t>(i)].values[1]) < 1e-12);
    CHECK(sm.values(i, 2) == 0.0);
    CHECK(sm.values(i, 3) == 0.0);
  }
  CHECK(sm.flagged[2]);
  CHECK(sm.flagged[3]);
  fm.rows.resize(1);
  CHECK(code_of([&] { standardize(fm); }) == ErrorCode::TooFewRows);
}

TEST_CASE("PCA matches a Jacobi eigensolver") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 5; ++rep) {
    auto sm = blank_standardized(80);
    // Correlated columns from a random mixing matrix.
    Eigen::MatrixXd mix = Eigen::MatrixXd::NullaryExpr(33, 33, [&] { return z(rng); });
    Eigen::MatrixXd raw = Eigen::MatrixXd::NullaryExpr(80, 33, [&] { return z(rng); });
    Eigen::MatrixXd X = raw * mix;
    sm.values.block(0, 33, 80, 33) = X;
    auto r = pca(sm, kPopulationScope, Direction::AccelY, Condition::NB);
    CHECK(r.n_rows == 80);

    Eigen::MatrixXd centred = X.rowwise() - X.colwise().mean();
    Eigen::MatrixXd cov = centred.transpose() * centred / 79.0;
    auto [evals, evecs] = oracle::jacobi_eigen(cov);
    double scale = evals(0);
    for (Eigen::Index i = 0; i < 33; ++i) {
      CHECK(std::abs(r.eigenvalues(i) - evals(i)) < 1e-8 * scale);
      double sign = r.loadings.col(i).dot(evecs.col(i)) < 0 ? -1.0 : 1.0;
      CHECK((r.loadings.col(i) - sign * evecs.col(i)).cwiseAbs().maxCoeff() < 1e-6);
    }
    Eigen::MatrixXd gram = r.loadings.transpose() * r.loadings;
    CHECK((gram - Eigen::MatrixXd::Identity(33, 33)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(r.variance_explained.sum() == doctest::Approx(100.0));
    for (Eigen::Index i = 1; i < 33; ++i) CHECK(r.variance_explained(i) <= r.variance_explained(i - 1));
    for (Eigen::Index c = 0; c < 33; ++c) CHECK(r.contributions.col(c).sum() == doctest::Approx(100.0));
    Eigen::Index arg = 0;
    r.contributions.col(0).maxCoeff(&arg);
    CHECK(r.top_pc1 == static_cast<std::size_t>(arg));
    // Top feature depends on squared loadings only.
    Eigen::VectorXd flipped = -r.loadings.col(1);
    Eigen::Index arg2 = 0;
    flipped.array().square().maxCoeff(&arg2);
    CHECK(r.top_pc2 == static_cast<std::size_t>(arg2));
  }
}

TEST_CASE("two perfectly correlated features") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z;
  auto sm = blank_standardized(50);
  for (Eigen::Index i = 0; i < 50; ++i) {
    double v = z(rng);
    sm.values(i, 66 + 4) = v;
    sm.values(i, 66 + 9) = v;
  }
  auto r = pca(sm, kPopulationScope, Direction::AccelZ, Condition::NB);
  CHECK(r.variance_explained(0) == doctest::Approx(100.0));
  CHECK(r.contributions(4, 0) == doctest::Approx(50.0));
  CHECK(r.contributions(9, 0) == doctest::Approx(50.0));
  CHECK(r.top_pc1 == 4);
  CHECK(r.features[r.top_pc1] == "M4");
}

TEST_CASE("two variables with correlation 0.6: PC1 explains 80%") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> z;
  auto sm = blank_standardized(10000, Condition::B);
  const double rho = 0.6;
  for (Eigen::Index i = 0; i < 10000; ++i) {
    double a = z(rng);
    double b = rho * a + std::sqrt(1 - rho * rho) * z(rng);
    sm.values(i, 99) = a;
    sm.values(i, 100) = b;
  }
  auto r = pca(sm, kPopulationScope, Direction::RotY, Condition::B);
  CHECK(std::abs(r.variance_explained(0) - 80.0) < 2.0);
  CHECK(r.pc12_explained() == doctest::Approx(100.0));
}

TEST_CASE("PCA row filtering and errors") {
  auto sm = blank_standardized(6);
  sm.participant_id = {"P01", "P01", "P02", "P02", "P02", "P02"};
  sm.condition = {Condition::NB, Condition::NB, Condition::NB, Condition::NB, Condition::NB, Condition::B};
  sm.values(2, 0) = 1.0;
  sm.values(3, 0) = -1.0;
  CHECK(code_of([&] { pca(sm, "P01", Direction::AccelX, Condition::NB); }) == ErrorCode::TooFewRows);
  CHECK(code_of([&] { pca(sm, kPopulationScope, Direction::AccelY, Condition::NB); }) ==
        ErrorCode::DegenerateCovariance);
  auto r = pca(sm, kPopulationScope, Direction::AccelX, Condition::NB);
  CHECK(r.n_rows == 5);
  CHECK(r.top_pc1 == 0);
}
