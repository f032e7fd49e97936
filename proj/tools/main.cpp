#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "movseq/error.hpp"
#include "movseq/pipeline.hpp"

using namespace movseq;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> scope;
  std::optional<std::string> directions;
  std::optional<int> jobs;
};

RunConfig resolve(const Overrides& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.out = *o.out;
  if (o.scope) cfg.scope = *o.scope;
  if (o.jobs) cfg.jobs = *o.jobs;
  if (o.directions) {
    cfg.directions.clear();
    std::stringstream ss(*o.directions);
    std::string name;
    while (std::getline(ss, name, ',')) {
      auto d = direction_from_name(name);
      if (!d || !is_analysis_direction(*d)) {
        throw Error(ErrorCode::ConfigError, "directions: unknown analysis direction '" + name + "'");
      }
      cfg.directions.push_back(*d);
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gait-sensor featurization and NB/B analysis pipeline"};
  app.require_subcommand(1, 1);
  Overrides o;
  app.add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "global seed");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--scope", o.scope, "population, individual or both")
      ->check(CLI::IsMember({"population", "individual", "both"}));
  app.add_option("--directions", o.directions, "comma-separated subset of AccelX,AccelY,AccelZ,RotY");
  app.add_option("--jobs", o.jobs, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);

  using Command = void (*)(const RunConfig&);
  const std::vector<std::pair<std::string, Command>> steps = {
      {"synth", cmd_synth}, {"featurize", cmd_featurize}, {"wilcoxon", cmd_wilcoxon},
      {"pca", cmd_pca},     {"train", cmd_train},         {"report", cmd_report}};
  const std::map<std::string, std::string> help = {
      {"synth", "generate a synthetic cohort"},
      {"featurize", "build the 132-column feature matrix"},
      {"wilcoxon", "paired NB/B signed-rank grids"},
      {"pca", "top-feature and variance-explained grids"},
      {"train", "MLP accuracy grid"},
      {"report", "markdown summary of all grids"},
      {"all", "every step in order"}};
  for (const auto& [name, text] : help) app.add_subcommand(name, text);

  std::string command = "movseq";
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cout << error_json(command, "UsageError", e.what()) << '\n';
    return 2;
  }
  command = app.get_subcommands().front()->get_name();
  try {
    RunConfig cfg = resolve(o);
    for (const auto& [name, fn] : steps) {
      if (command == name || command == "all") fn(cfg);
    }
  } catch (const Error& e) {
    std::cout << error_json(command, std::string(to_string(e.code())), e.what()) << '\n';
    return e.code() == ErrorCode::ConfigError ? 2 : 1;
  } catch (const std::exception& e) {
    std::cout << error_json(command, "InternalError", e.what()) << '\n';
    return 1;
  }
  return 0;
}
