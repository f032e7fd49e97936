#include "movseq/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "movseq/error.hpp"
#include "movseq/seed.hpp"
#include "movseq/sho_gp.hpp"

namespace movseq {

namespace {

constexpr std::array<Direction, 6> kSynthDirections = {Direction::AccelX, Direction::AccelY, Direction::AccelZ,
                                                       Direction::RotX,   Direction::RotY,   Direction::RotZ};

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Base fundamental amplitude range per direction.
std::pair<double, double> amplitude_range(Direction d) {
  switch (d) {
    case Direction::AccelX: return {0.4, 1.2};
    case Direction::AccelY: return {0.6, 1.5};
    case Direction::AccelZ: return {1.0, 3.0};
    default: return {0.1, 0.4};
  }
}

std::string participant_name(std::size_t i) {
  std::string n = std::to_string(i + 1);
  if (n.size() < 2) n = "0" + n;
  return "P" + n;
}

KnobKind knob_from_string(const std::string& s) {
  if (s == "harmonic_amplitude") return KnobKind::HarmonicAmplitude;
  if (s == "sho_q") return KnobKind::ShoQ;
  throw Error(ErrorCode::SchemaMismatch, "unknown adaptation kind '" + s + "'");
}

Direction direction_json(const nlohmann::json& j) {
  auto d = direction_from_name(j.get<std::string>());
  if (!d) throw Error(ErrorCode::SchemaMismatch, "unknown direction " + j.dump());
  return *d;
}

nlohmann::json adaptation_json(const Adaptation& a) {
  return {{"direction", std::string(display_name(a.direction))},
          {"kind", std::string(to_string(a.kind))},
          {"harmonic", a.harmonic},
          {"log_factor", a.log_factor}};
}

Adaptation adaptation_from(const nlohmann::json& j) {
  Adaptation a;
  a.direction = direction_json(j.at("direction"));
  a.kind = knob_from_string(j.at("kind").get<std::string>());
  a.harmonic = j.at("harmonic").get<std::size_t>();
  a.log_factor = j.at("log_factor").get<double>();
  return a;
}

}  // namespace

std::string_view to_string(KnobKind k) {
  return k == KnobKind::HarmonicAmplitude ? "harmonic_amplitude" : "sho_q";
}

std::map<Direction, DirectionProfile> ParticipantProfile::effective(Condition c) const {
  auto out = directions;
  if (c == Condition::NB) return out;
  for (const auto& a : adaptation) {
    auto it = out.find(a.direction);
    if (it == out.end()) continue;
    auto& dp = it->second;
    double f = std::exp(a.log_factor);
    if (a.kind == KnobKind::HarmonicAmplitude) {
      if (a.harmonic >= 1 && a.harmonic <= dp.harmonics.size()) dp.harmonics[a.harmonic - 1].amplitude *= f;
    } else {
      dp.sho_Q = std::clamp(dp.sho_Q * f, 0.6, 50.0);
    }
  }
  return out;
}

std::vector<Adaptation> knob_pool() {
  std::vector<Adaptation> pool;
  for (Direction d : kAnalysisDirections) {
    for (std::size_t k = 2; k <= 4; ++k) pool.push_back({d, KnobKind::HarmonicAmplitude, k, 0.0});
    pool.push_back({d, KnobKind::ShoQ, 0, 0.0});
  }
  return pool;
}

ParticipantProfile sample_profile(const std::string& participant_id, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParticipantProfile p;
  p.participant_id = participant_id;
  p.cadence = uniform(rng, 1.5, 2.2);
  p.brace_type = static_cast<BraceType>(std::uniform_int_distribution<int>(0, 2)(rng));
  for (Direction d : kSynthDirections) {
    DirectionProfile dp;
    auto [alo, ahi] = amplitude_range(d);
    double a1 = uniform(rng, alo, ahi);
    auto n_harm = static_cast<std::size_t>(std::uniform_int_distribution<int>(4, 6)(rng));
    for (std::size_t k = 1; k <= n_harm; ++k) {
      double ratio = k == 1 ? 1.0 : std::exp(-uniform(rng, 0.2, 0.8) * static_cast<double>(k - 1));
      dp.harmonics.push_back({a1 * ratio, uniform(rng, 0.0, kTwoPi)});
    }
    dp.offset = d == Direction::AccelZ ? kStandardGravity : (is_acceleration(d) ? uniform(rng, -0.5, 0.5) : 0.0);
    dp.sho_w0 = kTwoPi * uniform(rng, 0.7, 5.0);
    dp.sho_Q = uniform(rng, 1.5, 8.0);
    double sho_sd = uniform(rng, 0.1, 0.25) * a1;
    dp.sho_S0 = sho_sd * sho_sd / (dp.sho_w0 * dp.sho_Q);
    dp.noise_sd = uniform(rng, 0.02, 0.06) * a1;
    p.directions[d] = dp;
  }
  return p;
}

Cohort generate_cohort(std::size_t n, std::uint64_t seed, const SynthOptions& options) {
  if (n == 0) throw Error(ErrorCode::InvalidInput, "cohort needs at least one participant");
  if (options.min_knobs == 0 || options.min_knobs > options.max_knobs) {
    throw Error(ErrorCode::ConfigError, "adaptation knob counts must satisfy 1 <= min <= max");
  }
  Cohort c;
  c.seed = seed;
  c.options = options;
  const auto pool = knob_pool();
  const std::size_t max_knobs = std::min(options.max_knobs, pool.size() - 1);
  const std::size_t min_knobs = std::min(options.min_knobs, max_knobs);
  std::vector<std::size_t> usage(pool.size(), 0);

  for (std::size_t i = 0; i < n; ++i) {
    auto prof = sample_profile(participant_name(i), derive_seed(seed, {i, 0x70726f66}));
    std::mt19937_64 rng(derive_seed(seed, {i, 0x6b6e6f62}));
    if (options.effect_scale > 0.0) {
      std::vector<std::size_t> idx(pool.size());
      for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
      std::shuffle(idx.begin(), idx.end(), rng);
      auto count = static_cast<std::size_t>(
          std::uniform_int_distribution<std::size_t>(min_knobs, max_knobs)(rng));
      // The last participant may not complete a knob every earlier one holds.
      if (n > 1 && i + 1 == n) {
        auto safe_end =
            std::stable_partition(idx.begin(), idx.end(), [&](std::size_t k) { return usage[k] + 1 < n; });
        count = std::min(count, static_cast<std::size_t>(safe_end - idx.begin()));
      }
      for (std::size_t k = 0; k < count; ++k) {
        Adaptation a = pool[idx[k]];
        double sign = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
        a.log_factor = sign * options.effect_scale * uniform(rng, 0.3, 0.9);
        prof.adaptation.push_back(a);
        ++usage[idx[k]];
      }
    }
    for (const auto& f : options.forced) {
      auto it = std::find_if(prof.adaptation.begin(), prof.adaptation.end(),
                             [&](const Adaptation& a) { return a.same_knob(f); });
      if (it != prof.adaptation.end()) {
        *it = f;
      } else {
        prof.adaptation.push_back(f);
      }
    }
    c.profiles.push_back(std::move(prof));
  }
  return c;
}

SessionRecording generate_session(const ParticipantProfile& profile, Condition condition, double duration_s,
                                  std::uint64_t seed, const SynthOptions& options) {
  if (!(duration_s >= 60.0)) throw Error(ErrorCode::InvalidInput, "session duration must be at least 60 s");
  if (!(options.rate_lo > 0.0 && options.rate_lo <= options.rate_hi)) {
    throw Error(ErrorCode::ConfigError, "sampling rate range must satisfy 0 < lo <= hi");
  }
  std::mt19937_64 rng(derive_seed(seed, {0x74696d65}));
  std::vector<double> t;
  for (double tk = 0.0; tk < duration_s; tk += 1.0 / uniform(rng, options.rate_lo, options.rate_hi)) {
    t.push_back(tk);
  }

  SessionRecording rec;
  rec.participant_id = profile.participant_id;
  rec.condition = condition;
  if (condition == Condition::B) rec.brace_type = profile.brace_type;
  const auto dirs = profile.effective(condition);
  for (const auto& [d, dp] : dirs) {
    std::mt19937_64 noise_rng(derive_seed(seed, {static_cast<std::uint64_t>(d) + 1}));
    std::normal_distribution<double> z;
    std::vector<double> e(t.size());
    for (auto& x : e) x = z(noise_rng);
    std::vector<double> v(t.size());
    if (dp.sho_S0 > 0.0) {
      // The sampler needs a positive diagonal; a negligible one stands in for
      // noise-free sensors.
      double sho_sd = std::sqrt(dp.sho_S0 * dp.sho_w0 * dp.sho_Q);
      double jitter = dp.noise_sd > 0.0 ? dp.noise_sd : 1e-9 * sho_sd;
      ShoModel noise{{{std::log(dp.sho_S0), std::log(dp.sho_Q), std::log(dp.sho_w0)}}, std::log(jitter)};
      v = gp_sample(noise, t, e);
    } else {
      for (std::size_t i = 0; i < t.size(); ++i) v[i] = dp.noise_sd * e[i];
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
      double s = dp.offset;
      for (std::size_t k = 0; k < dp.harmonics.size(); ++k) {
        const auto& h = dp.harmonics[k];
        s += h.amplitude * std::sin(kTwoPi * static_cast<double>(k + 1) * profile.cadence * t[i] + h.phase);
      }
      v[i] += s;
    }
    rec.channels[d] = ChannelSeries{d, t, std::move(v)};
  }
  return rec;
}

std::uint64_t session_seed(const Cohort& cohort, std::size_t participant, Condition condition) {
  return derive_seed(cohort.seed, {participant, static_cast<std::uint64_t>(condition), 0x73657373});
}

std::vector<SessionRecording> generate_sessions(const Cohort& cohort) {
  std::vector<SessionRecording> out;
  for (std::size_t i = 0; i < cohort.profiles.size(); ++i) {
    for (Condition c : {Condition::NB, Condition::B}) {
      double dur = c == Condition::NB ? cohort.options.nb_duration : cohort.options.b_duration;
      out.push_back(generate_session(cohort.profiles[i], c, dur, session_seed(cohort, i, c), cohort.options));
    }
  }
  return out;
}

nlohmann::json to_json(const Cohort& cohort) {
  nlohmann::json j;
  j["seed"] = cohort.seed;
  const auto& o = cohort.options;
  nlohmann::json forced = nlohmann::json::array();
  for (const auto& a : o.forced) forced.push_back(adaptation_json(a));
  j["options"] = {{"nb_duration", o.nb_duration}, {"b_duration", o.b_duration}, {"rate_lo", o.rate_lo},
                  {"rate_hi", o.rate_hi},         {"effect_scale", o.effect_scale}, {"min_knobs", o.min_knobs},
                  {"max_knobs", o.max_knobs},     {"forced", forced}};
  nlohmann::json profiles = nlohmann::json::array();
  for (const auto& p : cohort.profiles) {
    nlohmann::json pj;
    pj["participant_id"] = p.participant_id;
    pj["cadence"] = p.cadence;
    pj["brace_type"] = p.brace_type ? nlohmann::json(std::string(to_string(*p.brace_type))) : nlohmann::json();
    nlohmann::json dirs = nlohmann::json::object();
    for (const auto& [d, dp] : p.directions) {
      nlohmann::json h = nlohmann::json::array();
      for (const auto& hm : dp.harmonics) h.push_back({{"amplitude", hm.amplitude}, {"phase", hm.phase}});
      dirs[std::string(display_name(d))] = {{"offset", dp.offset},   {"harmonics", h},
                                            {"sho_S0", dp.sho_S0},   {"sho_Q", dp.sho_Q},
                                            {"sho_w0", dp.sho_w0},   {"noise_sd", dp.noise_sd}};
    }
    pj["directions"] = dirs;
    nlohmann::json ad = nlohmann::json::array();
    for (const auto& a : p.adaptation) ad.push_back(adaptation_json(a));
    pj["adaptation"] = ad;
    profiles.push_back(pj);
  }
  j["profiles"] = profiles;
  return j;
}

Cohort cohort_from_json(const nlohmann::json& j) {
  try {
    Cohort c;
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto& o = j.at("options");
    c.options.nb_duration = o.at("nb_duration").get<double>();
    c.options.b_duration = o.at("b_duration").get<double>();
    c.options.rate_lo = o.at("rate_lo").get<double>();
    c.options.rate_hi = o.at("rate_hi").get<double>();
    c.options.effect_scale = o.at("effect_scale").get<double>();
    c.options.min_knobs = o.at("min_knobs").get<std::size_t>();
    c.options.max_knobs = o.at("max_knobs").get<std::size_t>();
    for (const auto& a : o.at("forced")) c.options.forced.push_back(adaptation_from(a));
    for (const auto& pj : j.at("profiles")) {
      ParticipantProfile p;
      p.participant_id = pj.at("participant_id").get<std::string>();
      p.cadence = pj.at("cadence").get<double>();
      if (!pj.at("brace_type").is_null()) {
        auto b = brace_from_string(pj.at("brace_type").get<std::string>());
        if (!b) throw Error(ErrorCode::SchemaMismatch, "unknown brace type");
        p.brace_type = *b;
      }
      for (const auto& [name, dj] : pj.at("directions").items()) {
        auto d = direction_from_name(name);
        if (!d) throw Error(ErrorCode::SchemaMismatch, "unknown direction " + name);
        DirectionProfile dp;
        dp.offset = dj.at("offset").get<double>();
        for (const auto& h : dj.at("harmonics")) {
          dp.harmonics.push_back({h.at("amplitude").get<double>(), h.at("phase").get<double>()});
        }
        dp.sho_S0 = dj.at("sho_S0").get<double>();
        dp.sho_Q = dj.at("sho_Q").get<double>();
        dp.sho_w0 = dj.at("sho_w0").get<double>();
        dp.noise_sd = dj.at("noise_sd").get<double>();
        p.directions[*d] = dp;
      }
      for (const auto& a : pj.at("adaptation")) p.adaptation.push_back(adaptation_from(a));
      c.profiles.push_back(std::move(p));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("malformed cohort manifest: ") + e.what());
  }
}

bool operator==(const Harmonic& a, const Harmonic& b) { return a.amplitude == b.amplitude && a.phase == b.phase; }

bool operator==(const DirectionProfile& a, const DirectionProfile& b) {
  return a.offset == b.offset && a.harmonics == b.harmonics && a.sho_S0 == b.sho_S0 && a.sho_Q == b.sho_Q &&
         a.sho_w0 == b.sho_w0 && a.noise_sd == b.noise_sd;
}

bool operator==(const Adaptation& a, const Adaptation& b) { return a.same_knob(b) && a.log_factor == b.log_factor; }

bool operator==(const ParticipantProfile& a, const ParticipantProfile& b) {
  return a.participant_id == b.participant_id && a.cadence == b.cadence && a.brace_type == b.brace_type &&
         a.directions == b.directions && a.adaptation == b.adaptation;
}

bool operator==(const SynthOptions& a, const SynthOptions& b) {
  return a.nb_duration == b.nb_duration && a.b_duration == b.b_duration && a.rate_lo == b.rate_lo &&
         a.rate_hi == b.rate_hi && a.effect_scale == b.effect_scale && a.min_knobs == b.min_knobs &&
         a.max_knobs == b.max_knobs && a.forced == b.forced;
}

bool operator==(const Cohort& a, const Cohort& b) {
  return a.seed == b.seed && a.options == b.options && a.profiles == b.profiles;
}

std::vector<std::filesystem::path> write_cohort(const Cohort& cohort, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> paths;
  auto sessions = generate_sessions(cohort);
  for (const auto& s : sessions) {
    auto stem = s.participant_id + "_" + std::string(to_string(s.condition));
    auto csv = dir / (stem + ".csv");
    std::ofstream out(csv);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + csv.string());
    write_wide_csv(out, s);
    std::ofstream side(dir / (stem + ".json"));
    side << sidecar_json(s);
    if (!out || !side) throw Error(ErrorCode::IoError, "failed writing session " + stem);
    paths.push_back(csv);
  }
  std::ofstream man(dir / "manifest.json");
  man << to_json(cohort).dump(2) << '\n';
  if (!man) throw Error(ErrorCode::IoError, "cannot write manifest");
  return paths;
}

}  // namespace movseq
