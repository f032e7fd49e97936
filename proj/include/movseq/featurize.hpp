#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "movseq/feature.hpp"
#include "movseq/hmc.hpp"
#include "movseq/signal.hpp"

namespace movseq {

inline constexpr std::size_t kMengCount = 6;
inline constexpr std::size_t kGCount = 15;
inline constexpr std::size_t kFftCount = 12;
inline constexpr std::size_t kFeaturesPerDirection = kMengCount + kGCount + kFftCount;  // 33
inline constexpr std::size_t kFeatureCount = kFeaturesPerDirection * kAnalysisDirections.size();  // 132

using DirectionFeatures = std::array<Feature, kFeaturesPerDirection>;

/// Per-direction feature names in column order: M0..M5, G1..G15, F1..F12.
const std::array<std::string, kFeaturesPerDirection>& direction_feature_names();
/// All 132 column names, `<Direction>.<Feature>`, directions in
/// AccelX, AccelY, AccelZ, RotY order.
const std::vector<std::string>& feature_names();
/// Position of `d` within the analysis directions; throws InvalidInput for
/// a non-analysis direction.
std::size_t analysis_index(Direction d);
/// Column of `<d>.<feature>` in a FeatureVector.
std::size_t feature_column(Direction d, std::string_view feature);

struct FeatureVector {
  std::string participant_id;
  Condition condition = Condition::NB;
  std::size_t slice_index = 0;
  std::array<Feature, kFeatureCount> values;

  DirectionFeatures direction(Direction d) const;
};

bool operator==(const FeatureVector& a, const FeatureVector& b);

/// Rows in chronological order within each (participant, condition).
struct FeatureMatrix {
  std::vector<FeatureVector> rows;
  std::vector<std::string> provenance;  // "key=value" lines

  std::size_t size() const { return rows.size(); }
};

struct FeaturizeConfig {
  double rate = kNominalRate;
  HmcConfig hmc;
  bool fit_gp = true;  // false leaves G1..G15 NA (spectral features only)
};

struct DirectionDiagnostics {
  Direction direction = Direction::AccelX;
  std::uint64_t seed = 0;
  std::string spectral_status = "ok";  // "ok" or an error code name
  std::string gp_status = "ok";
  std::string message;
  std::size_t n_peaks = 0;
  std::optional<PosteriorSummary> posterior;
  std::array<Feature, kGCount> g_uncertainty;
};

struct SliceDiagnostics {
  std::string participant_id;
  Condition condition = Condition::NB;
  std::size_t slice_index = 0;
  std::vector<DirectionDiagnostics> directions;
};

struct SliceResult {
  FeatureVector features;
  SliceDiagnostics diagnostics;
};

/// One direction of one slice. Failures never throw; they leave the affected
/// features NA and record the reason.
std::pair<DirectionFeatures, DirectionDiagnostics> featurize_direction(const Slice& slice, Direction d,
                                                                       std::uint64_t seed,
                                                                       const FeaturizeConfig& cfg = {});

/// All four analysis directions of a slice; per-direction seeds derive from
/// `seed`.
SliceResult featurize_slice(const Slice& slice, std::uint64_t seed, const FeaturizeConfig& cfg = {});

/// Seed used for a slice inside a matrix run.
std::uint64_t slice_seed(std::uint64_t global_seed, const Slice& slice);

struct MatrixResult {
  FeatureMatrix matrix;
  std::vector<SliceDiagnostics> diagnostics;
};

/// Work-pool over (slice x direction) with `jobs` OpenMP threads (0 = runtime
/// default). Output equals featurize_matrix_serial for any thread count.
MatrixResult featurize_matrix(const std::vector<Slice>& slices, std::uint64_t seed,
                              const FeaturizeConfig& cfg = {}, int jobs = 0);

/// Single-threaded reference: featurize_slice on each slice in order.
MatrixResult featurize_matrix_serial(const std::vector<Slice>& slices, std::uint64_t seed,
                                     const FeaturizeConfig& cfg = {});

std::string diagnostics_jsonl(const std::vector<SliceDiagnostics>& diags);

struct ScreenConfig {
  double z_threshold = 5.0;
  double row_na_flag = 0.3;
};

struct ScreenedEntry {
  std::size_t row = 0;
  std::size_t column = 0;
  double value = 0.0;
  double z = 0.0;
};

struct FlaggedRow {
  std::size_t row = 0;
  double na_fraction = 0.0;
};

struct ScreenReport {
  std::vector<ScreenedEntry> removed;
  std::vector<std::size_t> skipped_columns;  // zero MAD on the final pass
  std::vector<FlaggedRow> flagged_rows;
  std::size_t passes = 0;
};

/// Robust z-scores per column, z = (x - median) / (1.4826 MAD) over non-NA
/// entries. Entries beyond the threshold become NA, and the rule is reapplied
/// until nothing changes, so screening a screened matrix is a no-op. Columns
/// with zero MAD are skipped. Rows with more than 30% NA are flagged, never
/// dropped. Throws TooFewRows below 10 rows.
std::pair<FeatureMatrix, ScreenReport> screen_outliers(const FeatureMatrix& fm, const ScreenConfig& cfg = {});

/// CSV with `#` provenance lines, then `participant_id,condition,<132 names>`.
/// NA is written as the literal `NA`; numbers use shortest round-trip text.
void export_matrix(std::ostream& out, const FeatureMatrix& fm);
std::string export_matrix(const FeatureMatrix& fm);

/// Inverse of export_matrix. Throws SchemaMismatch naming the first unknown
/// or missing column, or a bad cell.
FeatureMatrix import_matrix(std::istream& in);
FeatureMatrix import_matrix_string(std::string_view text);

}  // namespace movseq
