#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace movseq {

/// The nine IMU streams a head-worn sensor reports.
enum class Direction : int { AccelX, AccelY, AccelZ, RotX, RotY, RotZ, AttX, AttY, AttZ };

inline constexpr std::array<Direction, 9> kAllDirections = {
    Direction::AccelX, Direction::AccelY, Direction::AccelZ, Direction::RotX, Direction::RotY,
    Direction::RotZ,   Direction::AttX,   Direction::AttY,   Direction::AttZ};

/// Directions that are featurized: mediolateral, anteroposterior and vertical
/// acceleration plus mediolateral rotation.
inline constexpr std::array<Direction, 4> kAnalysisDirections = {
    Direction::AccelX, Direction::AccelY, Direction::AccelZ, Direction::RotY};

bool is_analysis_direction(Direction d);
bool is_acceleration(Direction d);

/// File token, e.g. "accel_x".
std::string_view token(Direction d);
/// Column-prefix name, e.g. "AccelX".
std::string_view display_name(Direction d);
std::optional<Direction> direction_from_token(std::string_view s);
std::optional<Direction> direction_from_name(std::string_view s);

enum class Condition { NB, B };
std::string_view to_string(Condition c);
std::optional<Condition> condition_from_string(std::string_view s);

enum class BraceType { Ankle, Knee, Back };
std::string_view to_string(BraceType b);
std::optional<BraceType> brace_from_string(std::string_view s);

inline constexpr double kStandardGravity = 9.80665;
inline constexpr double kNominalRate = 25.0;
inline constexpr double kMinRate = 20.0;
inline constexpr double kMaxRate = 30.0;

/// One direction's samples. Acceleration in m/s^2, rotation rate in rad/s.
struct ChannelSeries {
  Direction direction = Direction::AccelX;
  std::vector<double> t;  // seconds, strictly increasing
  std::vector<double> v;

  std::size_t size() const { return t.size(); }
  bool empty() const { return t.empty(); }
};

/// Median of 1/dt over consecutive samples; 0 for fewer than two samples.
double median_rate(const ChannelSeries& c);

struct SessionRecording {
  std::string participant_id;
  Condition condition = Condition::NB;
  std::optional<BraceType> brace_type;
  std::map<Direction, ChannelSeries> channels;

  const ChannelSeries* channel(Direction d) const;
  /// True when all four analysis directions are present.
  bool featurizable() const;
  /// Last timestamp plus one median sample interval, over all channels.
  double duration() const;
};

struct Slice {
  std::string participant_id;
  Condition condition = Condition::NB;
  std::size_t index = 0;  // window position within the session
  double start = 0.0;
  double end = 0.0;
  std::map<Direction, ChannelSeries> channels;

  double length() const { return end - start; }
  const ChannelSeries* channel(Direction d) const;
};

struct UniformSlice {
  Direction direction = Direction::AccelX;
  double start = 0.0;
  double rate = kNominalRate;
  std::vector<double> values;
};

/// Session metadata carried by a wide-CSV sidecar.
struct SessionMeta {
  std::string participant_id;
  Condition condition = Condition::NB;
  std::optional<BraceType> brace_type;
  bool accel_in_g = false;
};

enum class CsvFormat { Long, Wide };

SessionMeta parse_sidecar(std::string_view json_text);
std::string sidecar_json(const SessionRecording& rec);

/// Parses a session. Long-CSV rows carry their own labels; wide-CSV needs the
/// sidecar metadata. Timestamps are rebased so the earliest sample is at 0.
SessionRecording ingest_session(std::istream& source, CsvFormat format,
                                const std::optional<SessionMeta>& meta = std::nullopt);

/// Loads `path`, detecting the format from its header. Wide files read their
/// sidecar from the same stem with a `.json` extension.
SessionRecording load_session(const std::filesystem::path& path);

/// Writes the wide-CSV schema (m/s^2 and rad/s). Rows are the union of all
/// channel timestamps; missing cells are left empty.
void write_wide_csv(std::ostream& out, const SessionRecording& rec);

inline constexpr double kDefaultWindow = 50.0;
inline constexpr double kTrailingKeepFraction = 0.6;
inline constexpr double kMinSampleFraction = 0.6;

/// Consecutive non-overlapping windows. A trailing partial window is kept when
/// it spans at least 60% of `window_s`. A window is discarded when every
/// analysis direction holds fewer than 60% of the nominal sample count.
std::vector<Slice> slice_session(const SessionRecording& rec, double window_s = kDefaultWindow);

/// Linear interpolation onto a uniform grid starting at the first raw sample.
/// The grid never extends past the last raw sample and has at most
/// floor(length * rate) points.
UniformSlice resample_uniform(const Slice& slice, Direction d, double rate = kNominalRate);

}  // namespace movseq
