#include "movseq/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <omp.h>

#include "movseq/error.hpp"
#include "movseq/seed.hpp"
#include "movseq/spectral.hpp"
#include "text_util.hpp"

namespace movseq {

namespace {

constexpr double kMadScale = 1.4826;

double median_inplace(std::vector<double>& v) {
  const std::size_t n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  double hi = *mid;
  if (n % 2 == 1) return hi;
  return 0.5 * (*std::max_element(v.begin(), mid) + hi);
}

std::string task_label(const Slice& s, Direction d) {
  return s.participant_id + "/" + std::string(to_string(s.condition)) + "/" + std::to_string(s.index) + "/" +
         std::string(display_name(d));
}

FeatureVector blank_row(const Slice& s) {
  FeatureVector fv;
  fv.participant_id = s.participant_id;
  fv.condition = s.condition;
  fv.slice_index = s.index;
  fv.values.fill(NA);
  return fv;
}

void place(FeatureVector& fv, Direction d, const DirectionFeatures& f) {
  std::copy(f.begin(), f.end(), fv.values.begin() + static_cast<std::ptrdiff_t>(analysis_index(d) * kFeaturesPerDirection));
}

std::vector<std::string> base_provenance(std::uint64_t seed, const FeaturizeConfig& cfg, std::size_t n_slices) {
  return {"seed=" + std::to_string(seed),
          "rate_hz=" + detail::format_double(cfg.rate),
          "hmc_steps=" + std::to_string(cfg.hmc.steps),
          "hmc_warmup=" + std::to_string(cfg.hmc.warmup),
          "hmc_leapfrog=" + std::to_string(cfg.hmc.leapfrog),
          "hmc_target_accept=" + detail::format_double(cfg.hmc.target_accept),
          "fit_gp=" + std::string(cfg.fit_gp ? "true" : "false"),
          "slices=" + std::to_string(n_slices)};
}

}  // namespace

const std::array<std::string, kFeaturesPerDirection>& direction_feature_names() {
  static const auto names = [] {
    std::array<std::string, kFeaturesPerDirection> n;
    std::size_t i = 0;
    for (std::size_t k = 0; k < kMengCount; ++k) n[i++] = "M" + std::to_string(k);
    for (std::size_t k = 1; k <= kGCount; ++k) n[i++] = "G" + std::to_string(k);
    for (std::size_t k = 1; k <= kFftCount; ++k) n[i++] = "F" + std::to_string(k);
    return n;
  }();
  return names;
}

const std::vector<std::string>& feature_names() {
  static const auto names = [] {
    std::vector<std::string> n;
    for (Direction d : kAnalysisDirections) {
      for (const auto& f : direction_feature_names()) n.push_back(std::string(display_name(d)) + "." + f);
    }
    return n;
  }();
  return names;
}

std::size_t analysis_index(Direction d) {
  for (std::size_t i = 0; i < kAnalysisDirections.size(); ++i) {
    if (kAnalysisDirections[i] == d) return i;
  }
  throw Error(ErrorCode::InvalidInput, std::string(display_name(d)) + " is not an analysis direction");
}

std::size_t feature_column(Direction d, std::string_view feature) {
  const auto& names = direction_feature_names();
  auto it = std::find(names.begin(), names.end(), feature);
  if (it == names.end()) throw Error(ErrorCode::InvalidInput, "unknown feature " + std::string(feature));
  return analysis_index(d) * kFeaturesPerDirection + static_cast<std::size_t>(it - names.begin());
}

DirectionFeatures FeatureVector::direction(Direction d) const {
  DirectionFeatures f;
  auto first = values.begin() + static_cast<std::ptrdiff_t>(analysis_index(d) * kFeaturesPerDirection);
  std::copy(first, first + static_cast<std::ptrdiff_t>(kFeaturesPerDirection), f.begin());
  return f;
}

bool operator==(const FeatureVector& a, const FeatureVector& b) {
  return a.participant_id == b.participant_id && a.condition == b.condition && a.slice_index == b.slice_index &&
         a.values == b.values;
}

std::pair<DirectionFeatures, DirectionDiagnostics> featurize_direction(const Slice& slice, Direction d,
                                                                       std::uint64_t seed,
                                                                       const FeaturizeConfig& cfg) {
  DirectionFeatures f;
  f.fill(NA);
  DirectionDiagnostics diag;
  diag.direction = d;
  diag.seed = seed;
  diag.g_uncertainty.fill(NA);

  const ChannelSeries* ch = slice.channel(d);
  const double nominal = slice.length() * cfg.rate;
  if (!ch || ch->empty() || static_cast<double>(ch->size()) < kMinSampleFraction * nominal) {
    diag.spectral_status = diag.gp_status = std::string(to_string(ErrorCode::TooFewSamples));
    diag.message = (ch ? std::to_string(ch->size()) : std::string("0")) + " samples, need " +
                   std::to_string(static_cast<std::size_t>(std::ceil(kMinSampleFraction * nominal)));
    return {f, diag};
  }

  PeakSet peaks;
  try {
    auto u = resample_uniform(slice, d, cfg.rate);
    auto p = periodogram(u);
    double f0 = find_fundamental(p);
    peaks = detect_peaks(p, f0);
    auto meng = meng_vector(p, f0);
    auto fft = fft_features(peaks);
    std::copy(meng.values.begin(), meng.values.end(), f.begin());
    std::copy(fft.values.begin(), fft.values.end(), f.begin() + kMengCount + kGCount);
  } catch (const Error& e) {
    diag.spectral_status = std::string(to_string(e.code()));
    diag.message = e.what();
  }
  diag.n_peaks = peaks.size();

  if (!cfg.fit_gp) {
    diag.gp_status = "skipped";
    return {f, diag};
  }
  if (peaks.empty()) {
    diag.gp_status = std::string(to_string(ErrorCode::NoPeaks));
    return {f, diag};
  }
  try {
    std::vector<double> v(ch->v);
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    for (auto& x : v) x -= mean;
    auto m0 = init_model(peaks, v, cfg.rate);
    auto post = hmc_fit(m0, ch->t, v, seed, cfg.hmc);
    auto g = g_features(post, m0.components.size());
    std::copy(g.values.begin(), g.values.end(), f.begin() + kMengCount);
    diag.g_uncertainty = g.uncertainty;
    diag.posterior = post;
  } catch (const Error& e) {
    diag.gp_status = std::string(to_string(e.code()));
    if (!diag.message.empty()) diag.message += "; ";
    diag.message += e.what();
  }
  return {f, diag};
}

std::uint64_t slice_seed(std::uint64_t global_seed, const Slice& slice) {
  return derive_seed(global_seed,
                     {fnv1a64(slice.participant_id), static_cast<std::uint64_t>(slice.condition), slice.index});
}

SliceResult featurize_slice(const Slice& slice, std::uint64_t seed, const FeaturizeConfig& cfg) {
  SliceResult r;
  r.features = blank_row(slice);
  r.diagnostics.participant_id = slice.participant_id;
  r.diagnostics.condition = slice.condition;
  r.diagnostics.slice_index = slice.index;
  for (std::size_t i = 0; i < kAnalysisDirections.size(); ++i) {
    Direction d = kAnalysisDirections[i];
    auto [f, diag] = featurize_direction(slice, d, derive_seed(seed, {i}), cfg);
    place(r.features, d, f);
    r.diagnostics.directions.push_back(std::move(diag));
  }
  return r;
}

MatrixResult featurize_matrix(const std::vector<Slice>& slices, std::uint64_t seed, const FeaturizeConfig& cfg,
                              int jobs) {
  const std::size_t n_dirs = kAnalysisDirections.size();
  const std::size_t n_tasks = slices.size() * n_dirs;
  std::vector<std::pair<DirectionFeatures, DirectionDiagnostics>> results(n_tasks);
  std::vector<std::string> failures(n_tasks);
  const int threads = jobs > 0 ? jobs : omp_get_max_threads();

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::ptrdiff_t task = 0; task < static_cast<std::ptrdiff_t>(n_tasks); ++task) {
    const auto t = static_cast<std::size_t>(task);
    const Slice& s = slices[t / n_dirs];
    const std::size_t di = t % n_dirs;
    try {
      results[t] = featurize_direction(s, kAnalysisDirections[di], derive_seed(slice_seed(seed, s), {di}), cfg);
    } catch (const std::exception& e) {
      failures[t] = task_label(s, kAnalysisDirections[di]) + ": " + e.what();
    }
  }
  for (const auto& msg : failures) {
    if (!msg.empty()) throw Error(ErrorCode::InvalidInput, msg);
  }

  MatrixResult out;
  out.matrix.provenance = base_provenance(seed, cfg, slices.size());
  for (std::size_t si = 0; si < slices.size(); ++si) {
    FeatureVector fv = blank_row(slices[si]);
    SliceDiagnostics sd;
    sd.participant_id = slices[si].participant_id;
    sd.condition = slices[si].condition;
    sd.slice_index = slices[si].index;
    for (std::size_t di = 0; di < n_dirs; ++di) {
      auto& [f, diag] = results[si * n_dirs + di];
      place(fv, kAnalysisDirections[di], f);
      sd.directions.push_back(std::move(diag));
    }
    out.matrix.rows.push_back(std::move(fv));
    out.diagnostics.push_back(std::move(sd));
  }
  return out;
}

MatrixResult featurize_matrix_serial(const std::vector<Slice>& slices, std::uint64_t seed,
                                     const FeaturizeConfig& cfg) {
  MatrixResult out;
  out.matrix.provenance = base_provenance(seed, cfg, slices.size());
  for (const auto& s : slices) {
    auto r = featurize_slice(s, slice_seed(seed, s), cfg);
    out.matrix.rows.push_back(std::move(r.features));
    out.diagnostics.push_back(std::move(r.diagnostics));
  }
  return out;
}

std::string diagnostics_jsonl(const std::vector<SliceDiagnostics>& diags) {
  std::string out;
  for (const auto& sd : diags) {
    for (const auto& dd : sd.directions) {
      nlohmann::json j;
      j["participant_id"] = sd.participant_id;
      j["condition"] = std::string(to_string(sd.condition));
      j["slice"] = sd.slice_index;
      j["direction"] = std::string(display_name(dd.direction));
      j["seed"] = dd.seed;
      j["spectral_status"] = dd.spectral_status;
      j["gp_status"] = dd.gp_status;
      j["n_peaks"] = dd.n_peaks;
      if (!dd.message.empty()) j["message"] = dd.message;
      if (dd.posterior) j["fit"] = nlohmann::json::parse(diagnostics_json(*dd.posterior));
      out += j.dump();
      out += '\n';
    }
  }
  return out;
}

std::pair<FeatureMatrix, ScreenReport> screen_outliers(const FeatureMatrix& fm, const ScreenConfig& cfg) {
  if (fm.rows.size() < 10) {
    throw Error(ErrorCode::TooFewRows, "outlier screening needs at least 10 rows, got " + std::to_string(fm.size()));
  }
  FeatureMatrix out = fm;
  ScreenReport report;
  std::vector<double> col, dev;
  std::set<std::size_t> skipped;
  for (std::size_t pass = 0; pass < 1000; ++pass) {
    ++report.passes;
    skipped.clear();
    std::vector<ScreenedEntry> hits;
    for (std::size_t c = 0; c < kFeatureCount; ++c) {
      col.clear();
      for (const auto& r : out.rows) {
        if (r.values[c]) col.push_back(*r.values[c]);
      }
      if (col.empty()) continue;
      double med = median_inplace(col);
      dev.resize(col.size());
      std::transform(col.begin(), col.end(), dev.begin(), [med](double x) { return std::abs(x - med); });
      double mad = median_inplace(dev);
      if (!(mad > 0.0)) {
        skipped.insert(c);
        continue;
      }
      for (std::size_t r = 0; r < out.rows.size(); ++r) {
        const auto& v = out.rows[r].values[c];
        if (!v) continue;
        double z = (*v - med) / (kMadScale * mad);
        if (std::abs(z) > cfg.z_threshold) hits.push_back({r, c, *v, z});
      }
    }
    if (hits.empty()) break;
    for (const auto& h : hits) out.rows[h.row].values[h.column] = NA;
    report.removed.insert(report.removed.end(), hits.begin(), hits.end());
  }
  report.skipped_columns.assign(skipped.begin(), skipped.end());
  for (std::size_t r = 0; r < out.rows.size(); ++r) {
    auto na = static_cast<double>(std::count_if(out.rows[r].values.begin(), out.rows[r].values.end(),
                                                [](const Feature& f) { return is_na(f); }));
    double frac = na / static_cast<double>(kFeatureCount);
    if (frac > cfg.row_na_flag) report.flagged_rows.push_back({r, frac});
  }
  std::string tag = "screen_z=" + detail::format_double(cfg.z_threshold);
  if (std::find(out.provenance.begin(), out.provenance.end(), tag) == out.provenance.end()) {
    out.provenance.push_back(tag);
  }
  return {out, report};
}

void export_matrix(std::ostream& out, const FeatureMatrix& fm) {
  for (const auto& p : fm.provenance) out << "# " << p << '\n';
  out << "participant_id,condition";
  for (const auto& n : feature_names()) out << ',' << n;
  out << '\n';
  for (const auto& r : fm.rows) {
    if (r.participant_id.find_first_of(",\n\r#") != std::string::npos || r.participant_id.empty()) {
      throw Error(ErrorCode::InvalidInput, "participant id '" + r.participant_id + "' cannot be written to CSV");
    }
    out << r.participant_id << ',' << to_string(r.condition);
    for (const auto& v : r.values) {
      out << ',';
      if (v) {
        out << detail::format_double(*v);
      } else {
        out << "NA";
      }
    }
    out << '\n';
  }
}

std::string export_matrix(const FeatureMatrix& fm) {
  std::ostringstream os;
  export_matrix(os, fm);
  return os.str();
}

FeatureMatrix import_matrix(std::istream& in) {
  FeatureMatrix fm;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::size_t> column_of;  // CSV field -> feature column
  bool have_header = false;
  std::map<std::pair<std::string, Condition>, std::size_t> counts;
  const auto& names = feature_names();

  while (std::getline(in, line)) {
    ++line_no;
    auto sv = detail::trim(line);
    if (sv.empty()) continue;
    if (sv.front() == '#') {
      sv.remove_prefix(1);
      fm.provenance.emplace_back(detail::trim(sv));
      continue;
    }
    auto fields = detail::split(sv);
    if (!have_header) {
      if (fields.size() < 2 || fields[0] != "participant_id" || fields[1] != "condition") {
        throw Error(ErrorCode::SchemaMismatch, "header must start with participant_id,condition");
      }
      std::vector<bool> seen(kFeatureCount, false);
      for (std::size_t i = 2; i < fields.size(); ++i) {
        auto it = std::find(names.begin(), names.end(), fields[i]);
        if (it == names.end()) throw Error(ErrorCode::SchemaMismatch, "unknown column " + std::string(fields[i]));
        auto c = static_cast<std::size_t>(it - names.begin());
        if (seen[c]) throw Error(ErrorCode::SchemaMismatch, "duplicate column " + std::string(fields[i]));
        seen[c] = true;
        column_of.push_back(c);
      }
      for (std::size_t c = 0; c < kFeatureCount; ++c) {
        if (!seen[c]) throw Error(ErrorCode::SchemaMismatch, "missing column " + names[c]);
      }
      have_header = true;
      continue;
    }
    if (fields.size() != column_of.size() + 2) {
      throw Error(ErrorCode::SchemaMismatch, "line " + std::to_string(line_no) + ": expected " +
                                                 std::to_string(column_of.size() + 2) + " fields, got " +
                                                 std::to_string(fields.size()));
    }
    FeatureVector fv;
    fv.participant_id = std::string(fields[0]);
    auto cond = condition_from_string(fields[1]);
    if (!cond) {
      throw Error(ErrorCode::SchemaMismatch,
                  "line " + std::to_string(line_no) + ": bad condition '" + std::string(fields[1]) + "'");
    }
    fv.condition = *cond;
    fv.slice_index = counts[{fv.participant_id, fv.condition}]++;
    fv.values.fill(NA);
    for (std::size_t i = 0; i < column_of.size(); ++i) {
      auto cell = fields[i + 2];
      if (cell == "NA") continue;
      auto v = detail::parse_double(cell);
      if (!v) {
        throw Error(ErrorCode::SchemaMismatch, "line " + std::to_string(line_no) + ", column " +
                                                   names[column_of[i]] + ": bad value '" + std::string(cell) + "'");
      }
      fv.values[column_of[i]] = *v;
    }
    fm.rows.push_back(std::move(fv));
  }
  if (!have_header) throw Error(ErrorCode::SchemaMismatch, "no header row");
  return fm;
}

FeatureMatrix import_matrix_string(std::string_view text) {
  std::istringstream is{std::string(text)};
  return import_matrix(is);
}

}  // namespace movseq
