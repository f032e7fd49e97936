#include "movseq/signal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "movseq/error.hpp"
#include "text_util.hpp"

namespace movseq {

namespace {

constexpr std::array<std::string_view, 9> kTokens = {"accel_x", "accel_y", "accel_z", "rot_x", "rot_y",
                                                     "rot_z",   "att_x",   "att_y",   "att_z"};
constexpr std::array<std::string_view, 9> kNames = {"AccelX", "AccelY", "AccelZ", "RotX", "RotY",
                                                    "RotZ",   "AttX",   "AttY",   "AttZ"};

[[noreturn]] void fail_row(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line) + ": " + what);
}

void append_sample(ChannelSeries& ch, double t, double v, std::size_t line) {
  if (!ch.t.empty() && !(t > ch.t.back())) {
    throw Error(ErrorCode::NonMonotonicTimestamps,
                "line " + std::to_string(line) + ": timestamp " + detail::format_double(t) +
                    " does not increase for " + std::string(token(ch.direction)));
  }
  ch.t.push_back(t);
  ch.v.push_back(v);
}

double parse_finite(std::string_view cell, std::size_t line, std::string_view what) {
  auto v = detail::parse_double(cell);
  if (!v || !std::isfinite(*v)) fail_row(line, "invalid " + std::string(what) + " '" + std::string(cell) + "'");
  return *v;
}

// Unit conversion, required-channel and rate checks, and rebasing to t = 0.
void finalize(SessionRecording& rec, bool accel_in_g) {
  for (Direction d : kAnalysisDirections) {
    auto it = rec.channels.find(d);
    if (it == rec.channels.end() || it->second.empty()) {
      throw Error(ErrorCode::MissingRequiredChannel,
                  "missing required channel " + std::string(token(d)));
    }
  }
  if (accel_in_g) {
    for (auto& [d, ch] : rec.channels) {
      if (is_acceleration(d)) {
        for (double& v : ch.v) v *= kStandardGravity;
      }
    }
  }
  double t0 = std::numeric_limits<double>::infinity();
  for (const auto& [d, ch] : rec.channels) {
    if (!ch.empty()) t0 = std::min(t0, ch.t.front());
  }
  for (auto& [d, ch] : rec.channels) {
    for (double& t : ch.t) t -= t0;
  }
  for (Direction d : kAnalysisDirections) {
    const auto& ch = rec.channels.at(d);
    double rate = median_rate(ch);
    if (ch.size() >= 2 && (rate < kMinRate || rate > kMaxRate)) {
      throw Error(ErrorCode::RateOutOfRange, std::string(token(d)) + " median rate " +
                                                 detail::format_fixed(rate, 2) + " Hz outside [20, 30]");
    }
  }
}

bool read_content_line(std::istream& in, std::string& line, std::size_t& lineno) {
  while (std::getline(in, line)) {
    ++lineno;
    if (!detail::trim(line).empty()) return true;
  }
  return false;
}

SessionRecording ingest_long(std::istream& in) {
  SessionRecording rec;
  bool accel_in_g = false;
  std::string line;
  std::size_t lineno = 0;
  // Optional "# key=value" lines before the header; accel_units=g is honoured.
  bool have_header = false;
  while (read_content_line(in, line, lineno)) {
    auto s = detail::trim(line);
    if (s.front() == '#') {
      s.remove_prefix(1);
      auto eq = s.find('=');
      if (eq != std::string_view::npos && detail::trim(s.substr(0, eq)) == "accel_units") {
        accel_in_g = detail::trim(s.substr(eq + 1)) == "g";
      }
      continue;
    }
    auto cols = detail::split(s);
    const std::vector<std::string_view> expected = {"participant_id", "condition", "timestamp_s", "direction",
                                                    "value"};
    if (cols != expected) fail_row(lineno, "unexpected long-CSV header");
    have_header = true;
    break;
  }
  if (!have_header) throw Error(ErrorCode::EmptySession, "no header in long-CSV input");

  bool first = true;
  while (read_content_line(in, line, lineno)) {
    auto cols = detail::split(line);
    if (cols.size() != 5) fail_row(lineno, "expected 5 fields, got " + std::to_string(cols.size()));
    auto cond = condition_from_string(cols[1]);
    if (!cond) fail_row(lineno, "unknown condition '" + std::string(cols[1]) + "'");
    if (first) {
      rec.participant_id = std::string(cols[0]);
      rec.condition = *cond;
      first = false;
    } else if (cols[0] != rec.participant_id || *cond != rec.condition) {
      fail_row(lineno, "labels differ from the first row");
    }
    double t = parse_finite(cols[2], lineno, "timestamp");
    auto dir = direction_from_token(cols[3]);
    if (!dir) fail_row(lineno, "unknown direction '" + std::string(cols[3]) + "'");
    double v = parse_finite(cols[4], lineno, "value");
    auto [it, inserted] = rec.channels.try_emplace(*dir);
    if (inserted) it->second.direction = *dir;
    append_sample(it->second, t, v, lineno);
  }
  finalize(rec, accel_in_g);
  return rec;
}

SessionRecording ingest_wide(std::istream& in, const SessionMeta& meta) {
  SessionRecording rec;
  rec.participant_id = meta.participant_id;
  rec.condition = meta.condition;
  rec.brace_type = meta.brace_type;

  std::string line;
  std::size_t lineno = 0;
  if (!read_content_line(in, line, lineno)) throw Error(ErrorCode::EmptySession, "empty wide-CSV input");
  auto header = detail::split(line);
  if (header.empty() || header[0] != "timestamp_s") fail_row(lineno, "first column must be timestamp_s");
  std::vector<Direction> columns;
  std::set<Direction> seen;
  for (std::size_t i = 1; i < header.size(); ++i) {
    auto dir = direction_from_token(header[i]);
    if (!dir) fail_row(lineno, "unknown column '" + std::string(header[i]) + "'");
    if (!seen.insert(*dir).second) fail_row(lineno, "duplicate column '" + std::string(header[i]) + "'");
    columns.push_back(*dir);
  }
  for (Direction d : kAnalysisDirections) {
    if (!seen.count(d)) {
      throw Error(ErrorCode::MissingRequiredChannel, "missing required channel " + std::string(token(d)));
    }
  }
  for (Direction d : columns) rec.channels[d].direction = d;

  double last_t = -std::numeric_limits<double>::infinity();
  while (read_content_line(in, line, lineno)) {
    auto cols = detail::split(line);
    if (cols.size() != header.size()) {
      fail_row(lineno, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(cols.size()));
    }
    double t = parse_finite(cols[0], lineno, "timestamp");
    if (!(t > last_t)) {
      throw Error(ErrorCode::NonMonotonicTimestamps,
                  "line " + std::to_string(lineno) + ": timestamp " + detail::format_double(t) + " does not increase");
    }
    last_t = t;
    for (std::size_t i = 1; i < cols.size(); ++i) {
      if (cols[i].empty()) continue;
      double v = parse_finite(cols[i], lineno, "value");
      append_sample(rec.channels[columns[i - 1]], t, v, lineno);
    }
  }
  for (auto it = rec.channels.begin(); it != rec.channels.end();) {
    if (it->second.empty() && !is_analysis_direction(it->first)) {
      it = rec.channels.erase(it);
    } else {
      ++it;
    }
  }
  finalize(rec, meta.accel_in_g);
  return rec;
}

}  // namespace

bool is_analysis_direction(Direction d) {
  return std::find(kAnalysisDirections.begin(), kAnalysisDirections.end(), d) != kAnalysisDirections.end();
}

bool is_acceleration(Direction d) {
  return d == Direction::AccelX || d == Direction::AccelY || d == Direction::AccelZ;
}

std::string_view token(Direction d) { return kTokens[static_cast<int>(d)]; }
std::string_view display_name(Direction d) { return kNames[static_cast<int>(d)]; }

std::optional<Direction> direction_from_token(std::string_view s) {
  for (std::size_t i = 0; i < kTokens.size(); ++i) {
    if (kTokens[i] == s) return static_cast<Direction>(i);
  }
  return std::nullopt;
}

std::optional<Direction> direction_from_name(std::string_view s) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == s) return static_cast<Direction>(i);
  }
  return std::nullopt;
}

std::string_view to_string(Condition c) { return c == Condition::NB ? "NB" : "B"; }

std::optional<Condition> condition_from_string(std::string_view s) {
  if (s == "NB") return Condition::NB;
  if (s == "B") return Condition::B;
  return std::nullopt;
}

std::string_view to_string(BraceType b) {
  switch (b) {
    case BraceType::Ankle: return "ankle";
    case BraceType::Knee: return "knee";
    case BraceType::Back: return "back";
  }
  return "?";
}

std::optional<BraceType> brace_from_string(std::string_view s) {
  if (s == "ankle") return BraceType::Ankle;
  if (s == "knee") return BraceType::Knee;
  if (s == "back") return BraceType::Back;
  return std::nullopt;
}

double median_rate(const ChannelSeries& c) {
  if (c.size() < 2) return 0.0;
  std::vector<double> dt(c.size() - 1);
  for (std::size_t i = 1; i < c.size(); ++i) dt[i - 1] = c.t[i] - c.t[i - 1];
  auto mid = dt.begin() + static_cast<std::ptrdiff_t>(dt.size() / 2);
  std::nth_element(dt.begin(), mid, dt.end());
  double med = *mid;
  if (dt.size() % 2 == 0) {
    double lower = *std::max_element(dt.begin(), mid);
    med = 0.5 * (med + lower);
  }
  return 1.0 / med;
}

const ChannelSeries* SessionRecording::channel(Direction d) const {
  auto it = channels.find(d);
  return it == channels.end() ? nullptr : &it->second;
}

bool SessionRecording::featurizable() const {
  return std::all_of(kAnalysisDirections.begin(), kAnalysisDirections.end(), [&](Direction d) {
    const auto* ch = channel(d);
    return ch && !ch->empty();
  });
}

double SessionRecording::duration() const {
  double dur = 0.0;
  for (const auto& [d, ch] : channels) {
    if (ch.empty()) continue;
    double rate = median_rate(ch);
    double dt = rate > 0.0 ? 1.0 / rate : 1.0 / kNominalRate;
    dur = std::max(dur, ch.t.back() + dt);
  }
  return dur;
}

const ChannelSeries* Slice::channel(Direction d) const {
  auto it = channels.find(d);
  return it == channels.end() ? nullptr : &it->second;
}

SessionMeta parse_sidecar(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("sidecar is not valid JSON: ") + e.what());
  }
  SessionMeta meta;
  if (!j.contains("participant_id") || !j["participant_id"].is_string()) {
    throw Error(ErrorCode::SchemaMismatch, "sidecar key 'participant_id' missing or not a string");
  }
  meta.participant_id = j["participant_id"].get<std::string>();
  auto cond = j.contains("condition") && j["condition"].is_string()
                  ? condition_from_string(j["condition"].get<std::string>())
                  : std::nullopt;
  if (!cond) throw Error(ErrorCode::SchemaMismatch, "sidecar key 'condition' must be \"NB\" or \"B\"");
  meta.condition = *cond;
  if (j.contains("brace_type") && !j["brace_type"].is_null()) {
    auto b = brace_from_string(j["brace_type"].get<std::string>());
    if (!b) throw Error(ErrorCode::SchemaMismatch, "sidecar key 'brace_type' must be ankle, knee or back");
    meta.brace_type = *b;
  }
  if (j.contains("units")) {
    const auto& u = j["units"];
    if (u.contains("accel")) {
      auto a = u["accel"].get<std::string>();
      if (a == "g") {
        meta.accel_in_g = true;
      } else if (a != "mps2") {
        throw Error(ErrorCode::SchemaMismatch, "sidecar key 'units.accel' must be \"g\" or \"mps2\"");
      }
    }
    if (u.contains("rot") && u["rot"].get<std::string>() != "rads") {
      throw Error(ErrorCode::SchemaMismatch, "sidecar key 'units.rot' must be \"rads\"");
    }
  }
  return meta;
}

std::string sidecar_json(const SessionRecording& rec) {
  nlohmann::ordered_json j;
  j["participant_id"] = rec.participant_id;
  j["condition"] = std::string(to_string(rec.condition));
  if (rec.brace_type) j["brace_type"] = std::string(to_string(*rec.brace_type));
  j["units"] = {{"accel", "mps2"}, {"rot", "rads"}};
  return j.dump(2) + "\n";
}

SessionRecording ingest_session(std::istream& source, CsvFormat format, const std::optional<SessionMeta>& meta) {
  if (format == CsvFormat::Long) return ingest_long(source);
  if (!meta) throw Error(ErrorCode::SchemaMismatch, "wide-CSV input requires sidecar metadata");
  return ingest_wide(source, *meta);
}

SessionRecording load_session(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  CsvFormat format = CsvFormat::Wide;
  while (std::getline(in, line)) {
    auto s = detail::trim(line);
    if (s.empty() || s.front() == '#') continue;
    if (s.rfind("participant_id", 0) == 0) format = CsvFormat::Long;
    break;
  }
  in.clear();
  in.seekg(0);
  if (format == CsvFormat::Long) return ingest_session(in, format);

  auto sidecar_path = path;
  sidecar_path.replace_extension(".json");
  std::ifstream sc(sidecar_path);
  if (!sc) throw Error(ErrorCode::IoError, "missing sidecar " + sidecar_path.string());
  std::stringstream buf;
  buf << sc.rdbuf();
  return ingest_session(in, format, parse_sidecar(buf.str()));
}

void write_wide_csv(std::ostream& out, const SessionRecording& rec) {
  std::vector<Direction> cols = {Direction::AccelX, Direction::AccelY, Direction::AccelZ,
                                 Direction::RotX,   Direction::RotY,   Direction::RotZ};
  bool has_att = rec.channel(Direction::AttX) || rec.channel(Direction::AttY) || rec.channel(Direction::AttZ);
  if (has_att) {
    cols.insert(cols.end(), {Direction::AttX, Direction::AttY, Direction::AttZ});
  }
  std::vector<double> times;
  for (const auto& [d, ch] : rec.channels) times.insert(times.end(), ch.t.begin(), ch.t.end());
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  out << "timestamp_s";
  for (Direction d : cols) out << ',' << token(d);
  out << '\n';
  std::vector<std::size_t> cursor(cols.size(), 0);
  for (double t : times) {
    out << detail::format_double(t);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      out << ',';
      const auto* ch = rec.channel(cols[c]);
      if (ch && cursor[c] < ch->size() && ch->t[cursor[c]] == t) {
        out << detail::format_double(ch->v[cursor[c]]);
        ++cursor[c];
      }
    }
    out << '\n';
  }
}

std::vector<Slice> slice_session(const SessionRecording& rec, double window_s) {
  if (!(window_s > 0.0)) throw Error(ErrorCode::InvalidInput, "slice window must be positive");
  double duration = rec.duration();
  if (rec.channels.empty() || !(duration > 0.0)) throw Error(ErrorCode::EmptySession, "session has no samples");
  if (!rec.featurizable()) {
    for (Direction d : kAnalysisDirections) {
      const auto* ch = rec.channel(d);
      if (!ch || ch->empty()) {
        throw Error(ErrorCode::MissingRequiredChannel, "missing required channel " + std::string(token(d)));
      }
    }
  }

  constexpr double eps = 1e-9;
  auto n_full = static_cast<std::size_t>(std::floor(duration / window_s + eps));
  std::vector<std::pair<double, double>> windows;
  for (std::size_t k = 0; k < n_full; ++k) {
    windows.emplace_back(static_cast<double>(k) * window_s, static_cast<double>(k + 1) * window_s);
  }
  double tail_start = static_cast<double>(n_full) * window_s;
  if (duration - tail_start >= kTrailingKeepFraction * window_s - eps) windows.emplace_back(tail_start, duration);

  std::vector<Slice> slices;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    Slice s;
    s.participant_id = rec.participant_id;
    s.condition = rec.condition;
    s.index = k;
    s.start = windows[k].first;
    s.end = windows[k].second;
    bool last = k + 1 == windows.size();
    for (const auto& [d, ch] : rec.channels) {
      auto lo = std::lower_bound(ch.t.begin(), ch.t.end(), s.start);
      auto hi = last ? std::upper_bound(ch.t.begin(), ch.t.end(), s.end)
                     : std::lower_bound(ch.t.begin(), ch.t.end(), s.end);
      ChannelSeries sub;
      sub.direction = d;
      auto a = lo - ch.t.begin();
      auto b = hi - ch.t.begin();
      sub.t.assign(ch.t.begin() + a, ch.t.begin() + b);
      sub.v.assign(ch.v.begin() + a, ch.v.begin() + b);
      s.channels.emplace(d, std::move(sub));
    }
    double nominal = s.length() * kNominalRate;
    bool enough = std::any_of(kAnalysisDirections.begin(), kAnalysisDirections.end(), [&](Direction d) {
      const auto* ch = s.channel(d);
      return ch && static_cast<double>(ch->size()) >= kMinSampleFraction * nominal;
    });
    if (enough) slices.push_back(std::move(s));
  }
  return slices;
}

UniformSlice resample_uniform(const Slice& slice, Direction d, double rate) {
  if (!(rate > 0.0)) throw Error(ErrorCode::InvalidInput, "resampling rate must be positive");
  const auto* ch = slice.channel(d);
  if (!ch || ch->size() < 2) {
    throw Error(ErrorCode::TooFewSamples, "fewer than 2 samples for " + std::string(token(d)));
  }
  constexpr double eps = 1e-9;
  const auto& t = ch->t;
  const auto& v = ch->v;
  double t_first = t.front();
  auto max_len = static_cast<std::size_t>(std::floor(slice.length() * rate + eps));
  auto fit_len = static_cast<std::size_t>(std::floor((t.back() - t_first) * rate + eps)) + 1;
  std::size_t n = std::min(max_len, fit_len);

  UniformSlice u;
  u.direction = d;
  u.start = t_first;
  u.rate = rate;
  u.values.resize(n);
  std::size_t i = 0;
  for (std::size_t k = 0; k < n; ++k) {
    double tk = t_first + static_cast<double>(k) / rate;
    while (i + 1 < t.size() && t[i + 1] <= tk + eps) ++i;
    if (std::abs(tk - t[i]) <= eps || i + 1 == t.size()) {
      u.values[k] = v[i];
      continue;
    }
    double w = (tk - t[i]) / (t[i + 1] - t[i]);
    u.values[k] = v[i] + w * (v[i + 1] - v[i]);
  }
  return u;
}

}  // namespace movseq
