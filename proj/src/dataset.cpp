#include "gst/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "gst/errors.hpp"
#include "gst/rng.hpp"

namespace gst {

std::size_t SceneRecording::pedestrian_count() const {
  std::set<long> ids;
  for (const auto& r : rows) ids.insert(r.ped);
  return ids.size();
}

namespace {

long as_integer(double v, const std::string& what, const std::string& where) {
  const double r = std::round(v);
  if (!std::isfinite(v) || std::abs(v - r) > 1e-6) {
    throw FormatError(where + ": " + what + " '" + std::to_string(v) + "' is not an integer");
  }
  return static_cast<long>(r);
}

}  // namespace

SceneRecording parse_scene(std::istream& in, const std::string& source) {
  SceneRecording rec;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string tok; fields >> tok;) tokens.push_back(tok);
    if (tokens.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (tokens.size() != 4) {
      throw FormatError(where + ": expected 4 columns (frame ped x y), found " +
                        std::to_string(tokens.size()));
    }
    double v[4];
    for (int c = 0; c < 4; ++c) {
      std::size_t used = 0;
      try {
        v[c] = std::stod(tokens[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tokens[c].size() || !std::isfinite(v[c])) {
        throw FormatError(where + ": column " + std::to_string(c + 1) + " '" + tokens[c] +
                          "' is not a finite number");
      }
    }
    rec.rows.push_back(
        {as_integer(v[0], "frame", where), as_integer(v[1], "pedestrian id", where), v[2], v[3]});
  }

  std::stable_sort(rec.rows.begin(), rec.rows.end(), [](const TrackRow& a, const TrackRow& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.ped < b.ped;
  });
  for (std::size_t i = 1; i < rec.rows.size(); ++i) {
    if (rec.rows[i].frame == rec.rows[i - 1].frame && rec.rows[i].ped == rec.rows[i - 1].ped) {
      throw FormatError(source + ": duplicate entry for frame " + std::to_string(rec.rows[i].frame) +
                        ", pedestrian " + std::to_string(rec.rows[i].ped));
    }
  }

  long stride = 0;
  for (std::size_t i = 1; i < rec.rows.size(); ++i) {
    const long d = rec.rows[i].frame - rec.rows[i - 1].frame;
    if (d > 0) stride = std::gcd(stride, d);
  }
  rec.frame_stride = stride > 0 ? stride : 1;
  return rec;
}

SceneRecording load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open trajectory file " + path.string());
  }
  return parse_scene(in, path.string());
}

void write_scene(std::ostream& out, const SceneRecording& recording) {
  out << std::fixed;
  for (const auto& r : recording.rows) {
    out << r.frame << '\t' << r.ped << '\t' << std::setprecision(4) << r.x << '\t' << r.y << '\n';
  }
}

Tensor TrajectoryWindow::positions_at(std::size_t step) const {
  const std::size_t n = num_peds();
  const auto src = positions.data().subspan(step * n * 2, n * 2);
  return Tensor({n, 2}, std::vector<double>(src.begin(), src.end()));
}

ObservedWindow TrajectoryWindow::observed(std::size_t obs_steps) const {
  if (obs_steps > steps()) {
    throw std::invalid_argument("observed: window has only " + std::to_string(steps()) + " steps");
  }
  ObservedWindow w;
  for (std::size_t t = 0; t < obs_steps; ++t) {
    w.positions.push_back(positions_at(t));
    w.presence.push_back(presence[t]);
  }
  return w;
}

std::vector<TrajectoryWindow> make_windows(const SceneRecording& recording, std::size_t stride,
                                           const std::string& scene, std::size_t length,
                                           std::size_t obs_steps) {
  if (stride < 1) {
    throw std::invalid_argument("make_windows: stride must be at least 1");
  }
  std::vector<TrajectoryWindow> windows;
  if (recording.rows.empty()) {
    return windows;
  }
  const long first = recording.rows.front().frame;
  const long fs = recording.frame_stride;

  struct Track {
    std::map<long, std::array<double, 2>> at;  // step -> position
  };
  std::map<long, Track> tracks;
  long last_step = 0;
  for (const auto& r : recording.rows) {
    const long step = (r.frame - first) / fs;
    tracks[r.ped].at[step] = {r.x, r.y};
    last_step = std::max(last_step, step);
  }

  const long len = static_cast<long>(length);
  for (long s = 0; s + len <= last_step + 1; s += static_cast<long>(stride)) {
    std::vector<long> ids;
    std::vector<std::vector<std::array<double, 2>>> pos;
    std::vector<Mask> present;
    for (const auto& [id, track] : tracks) {
      auto lo = track.at.lower_bound(s);
      auto hi = track.at.lower_bound(s + len);
      const long n_present = std::distance(lo, hi);
      if (n_present < 2) continue;
      const long run = std::prev(hi)->first - lo->first + 1;
      if (run != n_present) continue;  // gap inside the window
      std::vector<std::array<double, 2>> p(length, {0.0, 0.0});
      Mask m(length, false);
      for (auto it = lo; it != hi; ++it) {
        p[static_cast<std::size_t>(it->first - s)] = it->second;
        m[static_cast<std::size_t>(it->first - s)] = true;
      }
      ids.push_back(id);
      pos.push_back(std::move(p));
      present.push_back(std::move(m));
    }
    const bool anyone_observed = std::any_of(present.begin(), present.end(), [&](const Mask& m) {
      return std::any_of(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(obs_steps),
                         [](bool b) { return b; });
    });
    if (!anyone_observed) continue;

    const std::size_t n = ids.size();
    TrajectoryWindow w;
    w.scene = scene;
    w.start_frame = first + s * fs;
    w.pedestrian_ids = ids;
    w.positions = Tensor({length, n, 2});
    w.presence.assign(length, Mask(n, false));
    w.fully_observed.assign(n, true);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < length; ++t) {
        w.presence[t][i] = present[i][t];
        w.positions[(t * n + i) * 2] = pos[i][t][0];
        w.positions[(t * n + i) * 2 + 1] = pos[i][t][1];
        if (!present[i][t]) w.fully_observed[i] = false;
      }
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

double partial_fraction(const std::vector<TrajectoryWindow>& windows) {
  std::size_t total = 0;
  std::size_t partial = 0;
  for (const auto& w : windows) {
    total += w.num_peds();
    partial += w.num_peds() - count(w.fully_observed);
  }
  if (total == 0) {
    throw std::invalid_argument("partial_fraction: no pedestrians in the window list");
  }
  return static_cast<double>(partial) / static_cast<double>(total);
}

TrajectoryWindow rotate_augment(const TrajectoryWindow& window, double angle,
                                std::array<double, 2> origin) {
  TrajectoryWindow out = window;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const std::size_t n = window.num_peds();
  for (std::size_t t = 0; t < window.steps(); ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!window.presence[t][i]) continue;
      const std::size_t idx = (t * n + i) * 2;
      const double dx = window.positions[idx] - origin[0];
      const double dy = window.positions[idx + 1] - origin[1];
      out.positions[idx] = origin[0] + c * dx - s * dy;
      out.positions[idx + 1] = origin[1] + s * dx + c * dy;
    }
  }
  return out;
}

std::array<double, 2> observed_centroid(const TrajectoryWindow& window, std::size_t obs_steps) {
  double sx = 0.0;
  double sy = 0.0;
  std::size_t k = 0;
  const std::size_t n = window.num_peds();
  for (std::size_t t = 0; t < std::min(obs_steps, window.steps()); ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!window.presence[t][i]) continue;
      sx += window.positions[(t * n + i) * 2];
      sy += window.positions[(t * n + i) * 2 + 1];
      ++k;
    }
  }
  if (k == 0) return {0.0, 0.0};
  return {sx / static_cast<double>(k), sy / static_cast<double>(k)};
}

TrajectoryWindow only_fully_observed(const TrajectoryWindow& window) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < window.num_peds(); ++i) {
    if (window.fully_observed[i]) keep.push_back(i);
  }
  TrajectoryWindow out;
  out.scene = window.scene;
  out.start_frame = window.start_frame;
  const std::size_t n = window.num_peds();
  const std::size_t m = keep.size();
  const std::size_t steps = window.steps();
  out.presence.assign(steps, Mask(m, false));
  out.fully_observed.assign(m, true);
  if (m == 0) {
    return out;
  }
  out.positions = Tensor({steps, m, 2});
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = keep[k];
    out.pedestrian_ids.push_back(window.pedestrian_ids.empty() ? static_cast<long>(i)
                                                               : window.pedestrian_ids[i]);
    for (std::size_t t = 0; t < steps; ++t) {
      out.presence[t][k] = window.presence[t][i];
      out.positions[(t * m + k) * 2] = window.positions[(t * n + i) * 2];
      out.positions[(t * m + k) * 2 + 1] = window.positions[(t * n + i) * 2 + 1];
    }
  }
  return out;
}

DatasetSplit chronological_split(std::vector<TrajectoryWindow> windows, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("chronological_split: ratio must lie in (0, 1)");
  }
  std::stable_sort(windows.begin(), windows.end(),
                   [](const TrajectoryWindow& a, const TrajectoryWindow& b) {
                     return a.start_frame < b.start_frame;
                   });
  const auto cut = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(windows.size())));
  DatasetSplit split;
  split.ratio = ratio;
  split.train.assign(std::make_move_iterator(windows.begin()),
                     std::make_move_iterator(windows.begin() + static_cast<std::ptrdiff_t>(cut)));
  split.test.assign(std::make_move_iterator(windows.begin() + static_cast<std::ptrdiff_t>(cut)),
                    std::make_move_iterator(windows.end()));
  return split;
}

std::map<std::string, std::filesystem::path> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open manifest " + path.string());
  }
  std::map<std::string, std::filesystem::path> out;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 'name = path'");
    }
    std::filesystem::path p = trim(line.substr(eq + 1));
    if (p.is_relative()) p = path.parent_path() / p;
    out[trim(line.substr(0, eq))] = p;
  }
  return out;
}

nlohmann::json windows_to_json(const std::vector<TrajectoryWindow>& windows) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& w : windows) {
    nlohmann::json presence = nlohmann::json::array();
    for (const auto& m : w.presence) {
      std::vector<int> row(m.begin(), m.end());
      presence.push_back(row);
    }
    list.push_back({{"scene", w.scene},
                    {"start_frame", w.start_frame},
                    {"pedestrian_ids", w.pedestrian_ids},
                    {"steps", w.steps()},
                    {"positions", w.num_peds() ? w.positions.vec() : std::vector<double>{}},
                    {"presence", presence}});
  }
  return {{"format_version", kWindowCacheVersion}, {"windows", list}};
}

std::vector<TrajectoryWindow> windows_from_json(const nlohmann::json& doc) {
  if (doc.value("format_version", 0) != kWindowCacheVersion) {
    throw FormatError("window cache: unsupported format_version");
  }
  std::vector<TrajectoryWindow> out;
  for (const auto& j : doc.at("windows")) {
    TrajectoryWindow w;
    w.scene = j.at("scene").get<std::string>();
    w.start_frame = j.at("start_frame").get<long>();
    w.pedestrian_ids = j.at("pedestrian_ids").get<std::vector<long>>();
    const auto steps = j.at("steps").get<std::size_t>();
    const std::size_t n = w.pedestrian_ids.size();
    for (const auto& row : j.at("presence")) {
      const auto bits = row.get<std::vector<int>>();
      if (bits.size() != n) throw FormatError("window cache: presence row size mismatch");
      w.presence.emplace_back(bits.begin(), bits.end());
    }
    if (w.presence.size() != steps) throw FormatError("window cache: presence step mismatch");
    if (n > 0) w.positions = Tensor({steps, n, 2}, j.at("positions").get<std::vector<double>>());
    w.fully_observed.assign(n, true);
    for (const auto& m : w.presence) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!m[i]) w.fully_observed[i] = false;
      }
    }
    out.push_back(std::move(w));
  }
  return out;
}

void save_windows(const std::filesystem::path& path, const std::vector<TrajectoryWindow>& windows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write window cache " + path.string());
  out << windows_to_json(windows).dump();
}

std::vector<TrajectoryWindow> load_windows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open window cache " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("window cache " + path.string() + ": " + e.what());
  }
  return windows_from_json(doc);
}

}  // namespace gst

namespace gst {

std::vector<TrajectoryWindow> constant_velocity_windows(const SyntheticSpec& spec,
                                                        std::uint64_t seed) {
  if (spec.pedestrians == 0 || spec.min_speed > spec.max_speed) {
    throw std::invalid_argument("constant_velocity_windows: bad specification");
  }
  std::vector<TrajectoryWindow> out;
  const std::size_t n = spec.pedestrians;
  for (std::size_t w = 0; w < spec.windows; ++w) {
    Rng rng = make_rng(seed, {0xC0FE, w});
    std::uniform_real_distribution<double> pos(0.0, spec.arena);
    std::uniform_real_distribution<double> speed(spec.min_speed, spec.max_speed);
    std::uniform_real_distribution<double> heading(0.0, 2.0 * std::numbers::pi);
    TrajectoryWindow win;
    win.scene = "synthetic";
    win.start_frame = static_cast<long>(w * kWindowSteps);
    win.positions = Tensor({kWindowSteps, n, 2});
    win.presence.assign(kWindowSteps, Mask(n, true));
    win.fully_observed.assign(n, true);
    for (std::size_t i = 0; i < n; ++i) {
      win.pedestrian_ids.push_back(static_cast<long>(i));
      const double x0 = pos(rng);
      const double y0 = pos(rng);
      const double v = speed(rng) * spec.step_seconds;
      const double a = heading(rng);
      for (std::size_t t = 0; t < kWindowSteps; ++t) {
        win.positions[(t * n + i) * 2] = x0 + static_cast<double>(t) * v * std::cos(a);
        win.positions[(t * n + i) * 2 + 1] = y0 + static_cast<double>(t) * v * std::sin(a);
      }
    }
    out.push_back(std::move(win));
  }
  return out;
}

}  // namespace gst
