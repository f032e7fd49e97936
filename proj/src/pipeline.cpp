#include "movseq/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "movseq/error.hpp"
#include "movseq/seed.hpp"
#include "movseq/stats.hpp"
#include "text_util.hpp"

namespace movseq {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were consumed so leftovers can
// be reported by name.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorCode::ConfigError, where("") + " must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigError, where(key) + ": " + e.what());
    }
  }

  Reader child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Reader(j_.contains(key) ? j_.at(key) : empty, where(key));
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw Error(ErrorCode::ConfigError, "unknown key " + where(k));
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void config_error(const std::string& key, const std::string& what) {
  throw Error(ErrorCode::ConfigError, key + ": " + what);
}

void log(const std::string& command, const std::string& msg) { std::cerr << "[" << command << "] " << msg << '\n'; }

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + p.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  return out;
}

void close_out(std::ofstream& out, const fs::path& p) {
  out.close();
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + p.string());
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string() + " (run the earlier command first)");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json provenance_json(const RunConfig& cfg, const std::string& command) {
  return {{"config_hash", config_hash(cfg)}, {"seed", cfg.seed}, {"command", command}};
}

void write_csv_header(std::ostream& out, const RunConfig& cfg, const std::string& command) {
  for (const auto& p : provenance(cfg, command)) out << "# " << p << '\n';
}

void write_json(const fs::path& p, const json& j) {
  auto out = open_out(p);
  out << j.dump(2) << '\n';
  close_out(out, p);
}

void write_run_config(const RunConfig& cfg) {
  json j = {{"config_hash", config_hash(cfg)}, {"seed", cfg.seed}, {"config", to_json(cfg)}};
  write_json(cfg.out / "config.json", j);
}

std::string cell(const std::optional<double>& v) { return v ? detail::format_double(*v) : "NA"; }

std::vector<fs::path> session_files(const RunConfig& cfg) {
  std::vector<std::string> inputs = cfg.input;
  if (inputs.empty()) inputs.push_back(cfg.cohort_dir().string());
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    fs::path p(in);
    std::error_code ec;
    if (fs::is_directory(p, ec)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(p, ec)) {
      files.push_back(p);
    } else {
      throw Error(ErrorCode::IoError, "input " + in + " does not exist");
    }
  }
  if (files.empty()) throw Error(ErrorCode::IoError, "no session CSV files in the inputs");
  return files;
}

FeatureMatrix load_features(const RunConfig& cfg) {
  std::istringstream in(read_text(cfg.features_path()));
  return import_matrix(in);
}

std::vector<std::string> scopes_of(const RunConfig& cfg, const FeatureMatrix& fm) {
  std::vector<std::string> s;
  if (cfg.population()) s.emplace_back(kPopulationScope);
  if (cfg.individual()) {
    auto ids = participants(fm);
    s.insert(s.end(), ids.begin(), ids.end());
  }
  return s;
}

// Minimal CSV grid as written by the analysis commands.
struct Grid {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Grid read_grid(const fs::path& p) {
  std::istringstream in(read_text(p));
  Grid g;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    for (auto f : detail::split(line)) fields.emplace_back(f);
    if (g.header.empty()) {
      g.header = std::move(fields);
    } else {
      g.rows.push_back(std::move(fields));
    }
  }
  return g;
}

void markdown_table(std::ostream& out, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows) {
  out << '|';
  for (const auto& h : header) out << ' ' << h << " |";
  out << "\n|";
  for (std::size_t i = 0; i < header.size(); ++i) out << (i == 0 ? "---|" : "---:|");
  out << '\n';
  for (const auto& r : rows) {
    out << '|';
    for (const auto& c : r) out << ' ' << c << " |";
    out << '\n';
  }
  out << '\n';
}

std::string sig3(const std::string& text) {
  auto v = detail::parse_double(text);
  if (!v) return text;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", *v);
  return buf;
}

std::string percent1(const std::string& text, double scale) {
  auto v = detail::parse_double(text);
  if (!v) return text;
  return detail::format_fixed(*v * scale, 1);
}

}  // namespace

void RunConfig::validate() const {
  if (participants < 1) config_error("participants", "must be at least 1");
  if (!(synth.nb_duration >= 60.0)) config_error("synth.nb_duration", "must be at least 60 s");
  if (!(synth.b_duration >= 60.0)) config_error("synth.b_duration", "must be at least 60 s");
  if (!(synth.rate_lo >= kMinRate && synth.rate_hi <= kMaxRate && synth.rate_lo <= synth.rate_hi)) {
    config_error("synth.rate_lo", "rates must satisfy 20 <= rate_lo <= rate_hi <= 30");
  }
  if (!(synth.effect_scale >= 0.0)) config_error("synth.effect_scale", "must be non-negative");
  if (synth.min_knobs < 1 || synth.min_knobs > synth.max_knobs) {
    config_error("synth.min_knobs", "must satisfy 1 <= min_knobs <= max_knobs");
  }
  if (!(slice_window > 0.0)) config_error("slice_window", "must be positive");
  if (!(featurize.rate >= kMinRate && featurize.rate <= kMaxRate)) config_error("featurize.rate", "must lie in [20, 30]");
  if (featurize.hmc.steps < 1) config_error("featurize.hmc.steps", "must be positive");
  if (featurize.hmc.leapfrog < 1) config_error("featurize.hmc.leapfrog", "must be positive");
  if (featurize.hmc.warmup >= featurize.hmc.steps) config_error("featurize.hmc.warmup", "must be below steps");
  if (!(featurize.hmc.target_accept > 0.0 && featurize.hmc.target_accept < 1.0)) {
    config_error("featurize.hmc.target_accept", "must lie in (0, 1)");
  }
  if (!(screening.z_threshold > 0.0)) config_error("screen.z_threshold", "must be positive");
  if (!(screening.row_na_flag > 0.0 && screening.row_na_flag <= 1.0)) {
    config_error("screen.row_na_flag", "must lie in (0, 1]");
  }
  try {
    mlp.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  if (scope != "population" && scope != "individual" && scope != "both") {
    config_error("scope", "must be population, individual or both");
  }
  if (directions.empty()) config_error("directions", "must name at least one direction");
  if (jobs < 0) config_error("jobs", "must be non-negative");
}

json to_json(const RunConfig& c) {
  json dirs = json::array();
  for (auto d : c.directions) dirs.push_back(std::string(display_name(d)));
  return {
      {"seed", c.seed},
      {"out", c.out.string()},
      {"input", c.input},
      {"features", c.features.string()},
      {"participants", c.participants},
      {"synth",
       {{"nb_duration", c.synth.nb_duration},
        {"b_duration", c.synth.b_duration},
        {"rate_lo", c.synth.rate_lo},
        {"rate_hi", c.synth.rate_hi},
        {"effect_scale", c.synth.effect_scale},
        {"min_knobs", c.synth.min_knobs},
        {"max_knobs", c.synth.max_knobs}}},
      {"slice_window", c.slice_window},
      {"featurize",
       {{"rate", c.featurize.rate},
        {"fit_gp", c.featurize.fit_gp},
        {"hmc",
         {{"steps", c.featurize.hmc.steps},
          {"warmup", c.featurize.hmc.warmup},
          {"leapfrog", c.featurize.hmc.leapfrog},
          {"target_accept", c.featurize.hmc.target_accept}}}}},
      {"screen",
       {{"enabled", c.screen}, {"z_threshold", c.screening.z_threshold}, {"row_na_flag", c.screening.row_na_flag}}},
      {"mlp",
       {{"hidden_layers", c.mlp.hidden_layers},
        {"units", c.mlp.units},
        {"learning_rate", c.mlp.learning_rate},
        {"epochs", c.mlp.epochs},
        {"batch_size", c.mlp.batch_size},
        {"beta1", c.mlp.beta1},
        {"beta2", c.mlp.beta2},
        {"adam_eps", c.mlp.adam_eps},
        {"runs", c.mlp.runs},
        {"train_fraction", c.mlp.train_fraction}}},
      {"scope", c.scope},
      {"directions", dirs},
      {"jobs", c.jobs},
  };
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  Reader r(j, "");
  r.get("seed", c.seed);
  std::string out = c.out.string();
  r.get("out", out);
  c.out = out;
  r.get("input", c.input);
  std::string features = c.features.string();
  r.get("features", features);
  c.features = features;
  r.get("participants", c.participants);
  {
    auto s = r.child("synth");
    s.get("nb_duration", c.synth.nb_duration);
    s.get("b_duration", c.synth.b_duration);
    s.get("rate_lo", c.synth.rate_lo);
    s.get("rate_hi", c.synth.rate_hi);
    s.get("effect_scale", c.synth.effect_scale);
    s.get("min_knobs", c.synth.min_knobs);
    s.get("max_knobs", c.synth.max_knobs);
    s.finish();
  }
  r.get("slice_window", c.slice_window);
  {
    auto f = r.child("featurize");
    f.get("rate", c.featurize.rate);
    f.get("fit_gp", c.featurize.fit_gp);
    auto h = f.child("hmc");
    h.get("steps", c.featurize.hmc.steps);
    h.get("warmup", c.featurize.hmc.warmup);
    h.get("leapfrog", c.featurize.hmc.leapfrog);
    h.get("target_accept", c.featurize.hmc.target_accept);
    h.finish();
    f.finish();
  }
  {
    auto s = r.child("screen");
    s.get("enabled", c.screen);
    s.get("z_threshold", c.screening.z_threshold);
    s.get("row_na_flag", c.screening.row_na_flag);
    s.finish();
  }
  {
    auto m = r.child("mlp");
    m.get("hidden_layers", c.mlp.hidden_layers);
    m.get("units", c.mlp.units);
    m.get("learning_rate", c.mlp.learning_rate);
    m.get("epochs", c.mlp.epochs);
    m.get("batch_size", c.mlp.batch_size);
    m.get("beta1", c.mlp.beta1);
    m.get("beta2", c.mlp.beta2);
    m.get("adam_eps", c.mlp.adam_eps);
    m.get("runs", c.mlp.runs);
    m.get("train_fraction", c.mlp.train_fraction);
    m.finish();
  }
  r.get("scope", c.scope);
  if (r.has("directions")) {
    std::vector<std::string> names;
    r.get("directions", names);
    c.directions.clear();
    for (const auto& n : names) {
      auto d = direction_from_name(n);
      if (!d || !is_analysis_direction(*d)) config_error("directions", "unknown analysis direction '" + n + "'");
      c.directions.push_back(*d);
    }
  }
  r.get("jobs", c.jobs);
  r.finish();
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const RunConfig& cfg) {
  // Where outputs go and how many threads run does not change them.
  json j = to_json(cfg);
  j.erase("out");
  j.erase("jobs");
  std::uint64_t h = fnv1a64(j.dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> provenance(const RunConfig& cfg, const std::string& command) {
  return {"config_hash=" + config_hash(cfg), "seed=" + std::to_string(cfg.seed), "command=" + command};
}

std::string error_json(const std::string& command, const std::string& code, const std::string& message) {
  return json{{"command", command}, {"error", code}, {"message", message}}.dump();
}

void cmd_synth(const RunConfig& cfg) {
  cfg.validate();
  auto cohort = generate_cohort(cfg.participants, cfg.seed, cfg.synth);
  auto paths = write_cohort(cohort, cfg.cohort_dir());
  json manifest = to_json(cohort);
  manifest["provenance"] = provenance_json(cfg, "synth");
  write_json(cfg.cohort_dir() / "manifest.json", manifest);
  write_run_config(cfg);
  log("synth", std::to_string(paths.size()) + " sessions written to " + cfg.cohort_dir().string());
}

void cmd_featurize(const RunConfig& cfg) {
  cfg.validate();
  FeatureMatrix fm;
  std::vector<SliceDiagnostics> diags;
  std::vector<std::string> base;
  for (const auto& path : session_files(cfg)) {
    auto rec = load_session(path);
    auto slices = slice_session(rec, cfg.slice_window);
    auto res = featurize_matrix(slices, cfg.seed, cfg.featurize, cfg.jobs);
    base = res.matrix.provenance;
    fm.rows.insert(fm.rows.end(), res.matrix.rows.begin(), res.matrix.rows.end());
    diags.insert(diags.end(), res.diagnostics.begin(), res.diagnostics.end());
    log("featurize", path.filename().string() + ": " + std::to_string(slices.size()) + " slices");
  }
  fm.provenance = provenance(cfg, "featurize");
  for (const auto& p : base) {
    if (p.rfind("seed=", 0) != 0 && p.rfind("slices=", 0) != 0) fm.provenance.push_back(p);
  }
  fm.provenance.push_back("slices=" + std::to_string(fm.size()));

  json screen = {{"provenance", provenance_json(cfg, "featurize")}};
  if (cfg.screen && fm.size() >= 10) {
    auto [screened, rep] = screen_outliers(fm, cfg.screening);
    fm = std::move(screened);
    json removed = json::array();
    for (const auto& e : rep.removed) {
      removed.push_back({{"participant_id", fm.rows[e.row].participant_id},
                         {"condition", std::string(to_string(fm.rows[e.row].condition))},
                         {"slice", fm.rows[e.row].slice_index},
                         {"feature", feature_names()[e.column]},
                         {"value", e.value},
                         {"z", e.z}});
    }
    json skipped = json::array();
    for (auto c : rep.skipped_columns) skipped.push_back(feature_names()[c]);
    json flagged = json::array();
    for (const auto& f : rep.flagged_rows) {
      flagged.push_back({{"participant_id", fm.rows[f.row].participant_id},
                         {"condition", std::string(to_string(fm.rows[f.row].condition))},
                         {"slice", fm.rows[f.row].slice_index},
                         {"na_fraction", f.na_fraction}});
    }
    screen["status"] = "ok";
    screen["passes"] = rep.passes;
    screen["removed"] = removed;
    screen["skipped_columns"] = skipped;
    screen["flagged_rows"] = flagged;
  } else {
    screen["status"] = cfg.screen ? "skipped: fewer than 10 rows" : "disabled";
  }

  auto fpath = cfg.features_path();
  auto out = open_out(fpath);
  export_matrix(out, fm);
  close_out(out, fpath);

  auto dpath = cfg.out / "diagnostics.jsonl";
  auto dout = open_out(dpath);
  dout << json{{"provenance", provenance_json(cfg, "featurize")}}.dump() << '\n' << diagnostics_jsonl(diags);
  close_out(dout, dpath);
  write_json(cfg.out / "screening.json", screen);
  write_run_config(cfg);
  log("featurize", std::to_string(fm.size()) + " rows written to " + fpath.string());
}

void cmd_wilcoxon(const RunConfig& cfg) {
  cfg.validate();
  auto fm = load_features(cfg);
  auto scopes = scopes_of(cfg, fm);

  // results[scope][column]
  std::vector<std::vector<std::optional<PairedTestResult>>> results(scopes.size());
  json errors = json::array();
  json all = json::array();
  for (std::size_t s = 0; s < scopes.size(); ++s) {
    results[s].resize(kFeatureCount);
    try {
      auto suite = run_pairwise_suite(fm, scopes[s]);
      for (std::size_t c = 0; c < kFeatureCount; ++c) results[s][c] = suite[c];
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MissingCondition) throw;
      errors.push_back({{"scope", scopes[s]}, {"error", std::string(to_string(e.code()))}, {"message", e.what()}});
    }
  }

  std::vector<std::size_t> columns;
  for (auto d : cfg.directions) {
    for (std::size_t k = 0; k < kFeaturesPerDirection; ++k) columns.push_back(analysis_index(d) * kFeaturesPerDirection + k);
  }
  auto ppath = cfg.out / "wilcoxon_p.csv";
  auto spath = cfg.out / "wilcoxon_significant.csv";
  auto pout = open_out(ppath);
  auto sout = open_out(spath);
  write_csv_header(pout, cfg, "wilcoxon");
  write_csv_header(sout, cfg, "wilcoxon");
  pout << "feature";
  sout << "feature";
  for (const auto& s : scopes) {
    pout << ',' << s;
    sout << ',' << s;
  }
  pout << '\n';
  sout << '\n';
  for (auto c : columns) {
    pout << feature_names()[c];
    sout << feature_names()[c];
    for (std::size_t s = 0; s < scopes.size(); ++s) {
      const auto& r = results[s][c];
      if (r && r->testable) {
        pout << ',' << detail::format_double(r->p);
        sout << ',' << (r->significant ? 1 : 0);
        all.push_back({{"scope", r->scope},
                       {"feature", feature_names()[c]},
                       {"n_pairs", r->n_pairs},
                       {"exact", r->exact},
                       {"W", r->W},
                       {"p", r->p},
                       {"significant", r->significant}});
      } else {
        pout << ",NA";
        sout << ",NA";
      }
    }
    pout << '\n';
    sout << '\n';
  }
  close_out(pout, ppath);
  close_out(sout, spath);
  write_json(cfg.out / "wilcoxon.json",
             {{"provenance", provenance_json(cfg, "wilcoxon")}, {"alpha", kAlpha}, {"tests", all}, {"errors", errors}});
  write_run_config(cfg);
  log("wilcoxon", std::to_string(scopes.size()) + " scopes x " + std::to_string(columns.size()) + " features");
}

void cmd_pca(const RunConfig& cfg) {
  cfg.validate();
  auto fm = load_features(cfg);
  auto sm = standardize(fm);
  auto scopes = scopes_of(cfg, fm);
  const std::array<Condition, 2> conds{Condition::NB, Condition::B};
  const auto& names = direction_feature_names();

  auto tpath = cfg.out / "pca_top_features.csv";
  auto vpath = cfg.out / "pca_variance.csv";
  auto tout = open_out(tpath);
  auto vout = open_out(vpath);
  write_csv_header(tout, cfg, "pca");
  write_csv_header(vout, cfg, "pca");
  tout << "scope";
  vout << "scope";
  for (auto d : cfg.directions) {
    for (auto c : conds) {
      auto prefix = std::string(display_name(d)) + "." + std::string(to_string(c));
      tout << ',' << prefix << ".PC1," << prefix << ".PC2";
      vout << ',' << prefix << ".PC1," << prefix << ".PC2," << prefix << ".PC12";
    }
  }
  tout << '\n';
  vout << '\n';

  json reports = json::array();
  json errors = json::array();
  json flagged = json::array();
  for (std::size_t c = 0; c < kFeatureCount; ++c) {
    if (sm.flagged[c]) flagged.push_back(feature_names()[c]);
  }
  for (const auto& s : scopes) {
    tout << s;
    vout << s;
    for (auto d : cfg.directions) {
      for (auto c : conds) {
        try {
          auto r = pca(sm, s, d, c);
          tout << ',' << names[r.top_pc1] << ',' << names[r.top_pc2];
          vout << ',' << detail::format_double(r.variance_explained(0)) << ','
               << detail::format_double(r.variance_explained(1)) << ',' << detail::format_double(r.pc12_explained());
          json loadings = json::array();
          json contributions = json::array();
          for (Eigen::Index k = 0; k < r.loadings.cols(); ++k) {
            loadings.push_back(std::vector<double>(r.loadings.col(k).data(), r.loadings.col(k).data() + r.loadings.rows()));
            contributions.push_back(
                std::vector<double>(r.contributions.col(k).data(), r.contributions.col(k).data() + r.contributions.rows()));
          }
          reports.push_back(
              {{"scope", s},
               {"direction", std::string(display_name(d))},
               {"condition", std::string(to_string(c))},
               {"n_rows", r.n_rows},
               {"features", r.features},
               {"eigenvalues", std::vector<double>(r.eigenvalues.data(), r.eigenvalues.data() + r.eigenvalues.size())},
               {"variance_explained", std::vector<double>(r.variance_explained.data(),
                                                          r.variance_explained.data() + r.variance_explained.size())},
               {"loadings", loadings},
               {"contributions", contributions},
               {"top_pc1", names[r.top_pc1]},
               {"top_pc2", names[r.top_pc2]}});
        } catch (const Error& e) {
          if (e.code() != ErrorCode::TooFewRows && e.code() != ErrorCode::DegenerateCovariance) throw;
          tout << ",NA,NA";
          vout << ",NA,NA,NA";
          errors.push_back({{"scope", s},
                            {"direction", std::string(display_name(d))},
                            {"condition", std::string(to_string(c))},
                            {"error", std::string(to_string(e.code()))},
                            {"message", e.what()}});
        }
      }
    }
    tout << '\n';
    vout << '\n';
  }
  close_out(tout, tpath);
  close_out(vout, vpath);
  write_json(cfg.out / "pca.json", {{"provenance", provenance_json(cfg, "pca")},
                                    {"flagged_columns", flagged},
                                    {"reports", reports},
                                    {"errors", errors}});
  write_run_config(cfg);
  log("pca", std::to_string(reports.size()) + " decompositions");
}

void cmd_train(const RunConfig& cfg) {
  cfg.validate();
  auto fm = load_features(cfg);
  auto scopes = scopes_of(cfg, fm);
  MlpConfig mlp = cfg.mlp;
  mlp.seed = cfg.seed;

  auto apath = cfg.out / "mlp_accuracy.csv";
  auto aout = open_out(apath);
  write_csv_header(aout, cfg, "train");
  aout << "scope";
  for (auto d : cfg.directions) aout << ',' << display_name(d);
  aout << '\n';
  json reports = json::array();
  json errors = json::array();
  for (const auto& s : scopes) {
    aout << s;
    for (auto d : cfg.directions) {
      try {
        auto rep = run_protocol(fm, s, d, mlp);
        aout << ',' << cell(rep.mean_accuracy);
        reports.push_back(json::parse(train_report_json(rep)));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::TooFewRows && e.code() != ErrorCode::EmptyTestSet) throw;
        aout << ",NA";
        errors.push_back({{"scope", s},
                          {"direction", std::string(display_name(d))},
                          {"error", std::string(to_string(e.code()))},
                          {"message", e.what()}});
      }
    }
    aout << '\n';
    log("train", s + " done");
  }
  close_out(aout, apath);
  write_run_config(cfg);
  write_json(cfg.out / "train.json",
             {{"provenance", provenance_json(cfg, "train")}, {"reports", reports}, {"errors", errors}});
}

void cmd_report(const RunConfig& cfg) {
  cfg.validate();
  auto fm = load_features(cfg);
  auto screen = json::parse(read_text(cfg.out / "screening.json"));
  auto pgrid = read_grid(cfg.out / "wilcoxon_p.csv");
  auto sgrid = read_grid(cfg.out / "wilcoxon_significant.csv");
  auto top = read_grid(cfg.out / "pca_top_features.csv");
  auto var = read_grid(cfg.out / "pca_variance.csv");
  auto acc = read_grid(cfg.out / "mlp_accuracy.csv");

  std::ostringstream md;
  md << "# Gait feature analysis report\n\n";
  md << "- config hash: `" << config_hash(cfg) << "`\n";
  md << "- seed: " << cfg.seed << "\n\n";

  std::size_t nb = 0;
  for (const auto& r : fm.rows) nb += r.condition == Condition::NB;
  auto ids = participants(fm);
  md << "## Data\n\n";
  md << fm.size() << " slices from " << ids.size() << " participants (" << nb << " NB, " << fm.size() - nb
     << " B), " << kFeatureCount << " features per slice.";
  if (screen.contains("removed")) {
    md << " Outlier screening set " << screen["removed"].size() << " values to NA and flagged "
       << screen["flagged_rows"].size() << " rows.";
  }
  md << "\n\n";

  md << "## Signed-rank tests\n\n";
  md << "Significant features (p < " << kAlpha << ") per scope and direction.\n\n";
  {
    std::vector<std::string> header{"scope"};
    std::vector<std::string> dir_names;
    for (auto d : cfg.directions) dir_names.emplace_back(display_name(d));
    header.insert(header.end(), dir_names.begin(), dir_names.end());
    header.emplace_back("total");
    std::vector<std::vector<std::string>> rows;
    for (std::size_t s = 1; s < sgrid.header.size(); ++s) {
      std::vector<std::string> row{sgrid.header[s]};
      std::size_t total = 0;
      for (const auto& dn : dir_names) {
        std::size_t k = 0;
        for (const auto& r : sgrid.rows) {
          if (r[0].rfind(dn + ".", 0) == 0 && r[s] == "1") ++k;
        }
        total += k;
        row.push_back(std::to_string(k));
      }
      row.push_back(std::to_string(total));
      rows.push_back(std::move(row));
    }
    markdown_table(md, header, rows);

    std::vector<std::string> in_all;
    std::size_t first_individual = (sgrid.header.size() > 1 && sgrid.header[1] == kPopulationScope) ? 2 : 1;
    if (first_individual < sgrid.header.size()) {
      for (const auto& r : sgrid.rows) {
        bool every = true;
        for (std::size_t s = first_individual; s < r.size(); ++s) every = every && r[s] == "1";
        if (every) in_all.push_back(r[0]);
      }
      md << "Features significant for every participant: ";
      if (in_all.empty()) {
        md << "none.\n\n";
      } else {
        for (std::size_t i = 0; i < in_all.size(); ++i) md << (i ? ", " : "") << in_all[i];
        md << ".\n\n";
      }
    }
    if (first_individual == 2) {
      std::vector<std::string> pop_only;
      for (const auto& r : sgrid.rows) {
        if (r[1] != "1") {
          for (std::size_t s = 2; s < r.size(); ++s) {
            if (r[s] == "1") {
              pop_only.push_back(r[0]);
              break;
            }
          }
        }
      }
      md << "Features significant for at least one participant but not at population scope: " << pop_only.size()
         << ".\n\n";
    }
  }
  md << "### p-values\n\n";
  {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < pgrid.rows.size(); ++i) {
      std::vector<std::string> row{pgrid.rows[i][0]};
      for (std::size_t s = 1; s < pgrid.rows[i].size(); ++s) {
        std::string v = sig3(pgrid.rows[i][s]);
        if (sgrid.rows[i][s] == "1") v += "*";
        row.push_back(v);
      }
      rows.push_back(std::move(row));
    }
    markdown_table(md, pgrid.header, rows);
  }

  md << "## Principal components\n\n### Top contributing feature\n\n";
  markdown_table(md, top.header, top.rows);
  md << "### Variance explained (%)\n\n";
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : var.rows) {
      std::vector<std::string> row{r[0]};
      for (std::size_t i = 1; i < r.size(); ++i) row.push_back(percent1(r[i], 1.0));
      rows.push_back(std::move(row));
    }
    markdown_table(md, var.header, rows);
  }

  md << "## MLP classification\n\n";
  md << "Mean test accuracy (%) over " << cfg.mlp.runs << " stratified " << detail::format_fixed(cfg.mlp.train_fraction * 100, 0)
     << "/" << detail::format_fixed(100 - cfg.mlp.train_fraction * 100, 0) << " splits.\n\n";
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : acc.rows) {
      std::vector<std::string> row{r[0]};
      for (std::size_t i = 1; i < r.size(); ++i) row.push_back(percent1(r[i], 100.0));
      rows.push_back(std::move(row));
    }
    markdown_table(md, acc.header, rows);
  }

  auto rpath = cfg.out / "report.md";
  auto out = open_out(rpath);
  out << md.str();
  close_out(out, rpath);
  write_run_config(cfg);
  log("report", "written to " + rpath.string());
}

}  // namespace movseq
