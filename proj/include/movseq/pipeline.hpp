#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "movseq/classifier.hpp"
#include "movseq/featurize.hpp"
#include "movseq/synth.hpp"

namespace movseq {

struct RunConfig {
  std::uint64_t seed = 42;
  std::filesystem::path out = "out";
  std::vector<std::string> input;  // session files or directories; empty = <out>/cohort
  std::filesystem::path features;  // empty = <out>/features.csv
  std::size_t participants = 17;
  SynthOptions synth;
  double slice_window = kDefaultWindow;
  FeaturizeConfig featurize;
  bool screen = true;
  ScreenConfig screening;
  MlpConfig mlp;
  std::string scope = "both";  // population | individual | both
  std::vector<Direction> directions{kAnalysisDirections.begin(), kAnalysisDirections.end()};
  int jobs = 0;

  /// Throws ConfigError naming the offending key.
  void validate() const;

  std::filesystem::path cohort_dir() const { return out / "cohort"; }
  std::filesystem::path features_path() const { return features.empty() ? out / "features.csv" : features; }
  bool population() const { return scope != "individual"; }
  bool individual() const { return scope != "population"; }
};

nlohmann::json to_json(const RunConfig& cfg);

/// Missing keys keep their defaults; unknown keys and wrong types throw
/// ConfigError with the dotted key path.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

/// 16 hex digits of FNV-1a over the canonical JSON of the config.
std::string config_hash(const RunConfig& cfg);

/// "key=value" lines every output carries.
std::vector<std::string> provenance(const RunConfig& cfg, const std::string& command);

/// Each command reads the files earlier commands wrote under cfg.out.
void cmd_synth(const RunConfig& cfg);
void cmd_featurize(const RunConfig& cfg);
void cmd_wilcoxon(const RunConfig& cfg);
void cmd_pca(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_report(const RunConfig& cfg);

/// Error JSON written on failure: {"error": <code>, "message": ..., "command": ...}.
std::string error_json(const std::string& command, const std::string& code, const std::string& message);

}  // namespace movseq
