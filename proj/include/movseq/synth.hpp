#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "movseq/signal.hpp"

namespace movseq {

struct Harmonic {
  double amplitude = 0.0;  // m/s^2 or rad/s
  double phase = 0.0;      // rad
};

/// Ground truth for one direction: harmonics at k * cadence (k = 1..H), one
/// SHO noise component and white sensor noise.
struct DirectionProfile {
  double offset = 0.0;
  std::vector<Harmonic> harmonics;
  double sho_S0 = 0.0;
  double sho_Q = 1.0;
  double sho_w0 = 1.0;  // rad/s
  double noise_sd = 0.0;
};

enum class KnobKind { HarmonicAmplitude, ShoQ };

/// One brace adaptation: under condition B the knob is multiplied by
/// exp(log_factor).
struct Adaptation {
  Direction direction = Direction::AccelZ;
  KnobKind kind = KnobKind::HarmonicAmplitude;
  std::size_t harmonic = 0;  // 1-based, HarmonicAmplitude only
  double log_factor = 0.0;

  bool same_knob(const Adaptation& o) const {
    return direction == o.direction && kind == o.kind && harmonic == o.harmonic;
  }
};

struct ParticipantProfile {
  std::string participant_id;
  double cadence = 1.8;  // Hz
  std::optional<BraceType> brace_type;
  std::map<Direction, DirectionProfile> directions;
  std::vector<Adaptation> adaptation;

  /// The profile as walked under `c` (adaptation applied for B).
  std::map<Direction, DirectionProfile> effective(Condition c) const;
};

struct SynthOptions {
  double nb_duration = 309.0;
  double b_duration = 317.0;
  double rate_lo = kMinRate;  // per-step sampling rate range, Hz
  double rate_hi = kMaxRate;
  double effect_scale = 1.0;  // 0 gives a cohort with no brace effect
  std::size_t min_knobs = 2;
  std::size_t max_knobs = 4;
  std::vector<Adaptation> forced;  // added to every participant
};

struct Cohort {
  std::uint64_t seed = 0;
  SynthOptions options;
  std::vector<ParticipantProfile> profiles;
};

/// Every knob the adaptation sampler may pick from.
std::vector<Adaptation> knob_pool();

/// Draws a participant profile (without adaptation) from `seed`.
ParticipantProfile sample_profile(const std::string& participant_id, std::uint64_t seed);

/// n profiles ("P01", "P02", ...) with heterogeneous adaptation subsets: each
/// participant gets between min_knobs and max_knobs knobs with random signs
/// and magnitudes, and when n > 1 no knob is given to every participant.
Cohort generate_cohort(std::size_t n, std::uint64_t seed, const SynthOptions& options = {});

/// Six channels (accel x/y/z, rot x/y/z) sampled at jittered timestamps whose
/// per-step rate is uniform in [rate_lo, rate_hi]. SHO noise plus white noise
/// is drawn exactly from the corresponding Gaussian process.
SessionRecording generate_session(const ParticipantProfile& profile, Condition condition, double duration_s,
                                  std::uint64_t seed, const SynthOptions& options = {});

std::uint64_t session_seed(const Cohort& cohort, std::size_t participant, Condition condition);

/// NB then B session for every participant, using the cohort's durations.
std::vector<SessionRecording> generate_sessions(const Cohort& cohort);

nlohmann::json to_json(const Cohort& cohort);
Cohort cohort_from_json(const nlohmann::json& j);

bool operator==(const Harmonic& a, const Harmonic& b);
bool operator==(const DirectionProfile& a, const DirectionProfile& b);
bool operator==(const Adaptation& a, const Adaptation& b);
bool operator==(const ParticipantProfile& a, const ParticipantProfile& b);
bool operator==(const SynthOptions& a, const SynthOptions& b);
bool operator==(const Cohort& a, const Cohort& b);

/// Writes `<id>_<cond>.csv` (wide schema) and its `.json` sidecar for every
/// session plus `manifest.json`. Returns the session CSV paths.
std::vector<std::filesystem::path> write_cohort(const Cohort& cohort, const std::filesystem::path& dir);

std::string_view to_string(KnobKind k);

}  // namespace movseq
