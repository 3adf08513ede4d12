#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "gst/interaction_graph.hpp"
#include "gst/masked_lstm.hpp"
#include "gst/tensor.hpp"

namespace gst {

inline constexpr std::size_t kObsSteps = 8;
inline constexpr std::size_t kPredSteps = 12;
inline constexpr std::size_t kWindowSteps = kObsSteps + kPredSteps;

struct TrackRow {
  long frame = 0;
  long ped = 0;
  double x = 0.0;
  double y = 0.0;
};

/// One scene in the benchmark text format, sorted by (frame, pedestrian).
struct SceneRecording {
  std::vector<TrackRow> rows;
  long frame_stride = 1;  // frame-id difference between consecutive samples

  std::size_t pedestrian_count() const;
};

/// Parses whitespace-separated "frame ped x y" lines. Blank lines are
/// skipped. Throws FormatError naming the line for malformed input or a
/// repeated (frame, ped) pair.
SceneRecording parse_scene(std::istream& in, const std::string& source = "<stream>");
SceneRecording load_scene(const std::filesystem::path& path);
void write_scene(std::ostream& out, const SceneRecording& recording);

/// A fixed-length slice of a scene. Absent entries hold 0.
struct TrajectoryWindow {
  Tensor positions;                // [steps, N, 2]
  std::vector<Mask> presence;      // steps masks of N
  Mask fully_observed;             // N
  std::vector<long> pedestrian_ids;
  std::string scene;
  long start_frame = 0;

  std::size_t steps() const { return presence.size(); }
  std::size_t num_peds() const { return fully_observed.size(); }
  Tensor positions_at(std::size_t step) const;  // [N, 2]

  ObservedWindow observed(std::size_t obs_steps = kObsSteps) const;
};

/// Sliding windows of `length` steps every `stride` steps. Pedestrians whose
/// presence inside a window is not one contiguous run, or covers fewer than
/// two steps, are left out of that window. Windows with nobody present during
/// observation are skipped.
std::vector<TrajectoryWindow> make_windows(const SceneRecording& recording, std::size_t stride,
                                           const std::string& scene = {},
                                           std::size_t length = kWindowSteps,
                                           std::size_t obs_steps = kObsSteps);

/// Share of (window, pedestrian) instances that are not fully observed.
double partial_fraction(const std::vector<TrajectoryWindow>& windows);

/// Rigid rotation of every present position about `origin`.
TrajectoryWindow rotate_augment(const TrajectoryWindow& window, double angle,
                                std::array<double, 2> origin);

/// Mean of the present positions over the first `obs_steps` steps.
std::array<double, 2> observed_centroid(const TrajectoryWindow& window,
                                        std::size_t obs_steps = kObsSteps);

/// Same window restricted to its fully observed pedestrians. May be empty
/// (num_peds() == 0).
TrajectoryWindow only_fully_observed(const TrajectoryWindow& window);

struct SyntheticSpec {
  std::size_t windows = 200;
  std::size_t pedestrians = 5;
  double step_seconds = 0.4;
  double min_speed = 0.5;  // m/s
  double max_speed = 1.5;
  double arena = 10.0;     // start positions in [0, arena)^2
};

/// Fully observed constant-velocity windows, one random heading and speed per
/// pedestrian.
std::vector<TrajectoryWindow> constant_velocity_windows(const SyntheticSpec& spec,
                                                        std::uint64_t seed);

struct DatasetSplit {
  std::vector<TrajectoryWindow> train;
  std::vector<TrajectoryWindow> test;
  double ratio = 0.8;
};

/// Chronological split: the earliest `ratio` share of windows (by start frame)
/// go to train.
DatasetSplit chronological_split(std::vector<TrajectoryWindow> windows, double ratio = 0.8);

/// "name = path" lines; '#' starts a comment. Relative paths resolve against
/// the manifest's directory.
std::map<std::string, std::filesystem::path> load_manifest(const std::filesystem::path& path);

inline constexpr int kWindowCacheVersion = 1;

nlohmann::json windows_to_json(const std::vector<TrajectoryWindow>& windows);
std::vector<TrajectoryWindow> windows_from_json(const nlohmann::json& doc);
void save_windows(const std::filesystem::path& path, const std::vector<TrajectoryWindow>& windows);
std::vector<TrajectoryWindow> load_windows(const std::filesystem::path& path);

}  // namespace gst
