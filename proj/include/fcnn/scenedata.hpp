#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fcnn/image_io.hpp"
#include "fcnn/network.hpp"
#include "fcnn/tensor.hpp"

namespace fcnn {

enum class BackgroundKind { Flat, Stripes, Blobs };

struct SceneConfig {
  uint64_t seed = 0;
  int height = 96, width = 96;      // divisible by 4
  int frames = 8;
  double crowd_density = 0.5;       // pedestrians per 1000 px^2, roughly
  double fraction_stationary = 0.3;
  double perspective_gradient = 1.8;  // size scale bottom / top
  BackgroundKind background = BackgroundKind::Stripes;
  int distractors = 1;
  double noise_amplitude = 0.02;    // per-frame uniform noise, peak-to-peak

  void validate() const {
    if (height % 4 != 0 || width % 4 != 0)
      throw std::invalid_argument("SceneConfig: size must be divisible by 4");
    if (frames < 2)
      throw std::invalid_argument("SceneConfig: need at least 2 frames");
    if (height < 54 || width < 54)
      throw std::invalid_argument(
          "SceneConfig: size below the 54-pixel receptive field");
    if (fraction_stationary < 0.0 || fraction_stationary > 1.0)
      throw std::invalid_argument("SceneConfig: fraction_stationary in [0,1]");
    if (crowd_density < 0.0)
      throw std::invalid_argument("SceneConfig: negative density");
  }
};

using Polygon = std::vector<std::pair<double, double>>;  // (x, y) vertices

struct Clip {
  std::vector<Tensor> frames;   // grayscale, values in [0,1]
  int label_frame_index = 0;
  Tensor mask;                  // pixel truth at the label frame
  std::vector<Polygon> polygons;  // rough region labels at the label frame
};

/// Point-in-polygon, even-odd rule, evaluated at pixel centers.
inline bool point_in_polygon(const Polygon& poly, double px, double py) {
  bool inside = false;
  const size_t n = poly.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& [xi, yi] = poly[i];
    const auto& [xj, yj] = poly[j];
    if ((yi > py) != (yj > py) &&
        px < (xj - xi) * (py - yi) / (yj - yi) + xi)
      inside = !inside;
  }
  return inside;
}

inline Tensor rasterize_polygons(const std::vector<Polygon>& polygons, int h,
                                 int w) {
  for (const Polygon& p : polygons)
    if (p.size() < 3)
      throw std::invalid_argument(
          "rasterize_polygons: polygon needs >= 3 vertices");
  Tensor mask(1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (const Polygon& p : polygons)
        if (point_in_polygon(p, x + 0.5, y + 0.5)) {
          mask.at(0, y, x) = 1.0;
          break;
        }
  return mask;
}

namespace detail {

struct Agent {
  double x, y;        // center at frame 0
  double vx, vy;      // per-frame velocity
  double rx, ry;      // ellipse radii
  double intensity;   // base brightness
  uint64_t texture_seed;
  bool is_pedestrian;
};

inline double agent_x(const Agent& a, int frame, int width) {
  double x = a.x + a.vx * frame;
  const double span = width + 2.0 * a.rx;
  x = std::fmod(x + a.rx, span);
  if (x < 0) x += span;
  return x - a.rx;  // wraps around horizontally
}

inline bool inside_agent(const Agent& a, int frame, int width, double px,
                         double py) {
  const double cx = agent_x(a, frame, width);
  const double cy = a.y + a.vy * frame;
  const double dx = (px - cx) / a.rx, dy = (py - cy) / a.ry;
  return dx * dx + dy * dy <= 1.0;
}

inline double hash_noise(uint64_t seed, int x, int y) {
  uint64_t h = seed;
  h ^= static_cast<uint64_t>(x) * 0x9e3779b97f4a7c15ull;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
  h ^= static_cast<uint64_t>(y) * 0xd6e8feb86659fd93ull;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
  h ^= h >> 31;
  return static_cast<double>(h >> 11) * 0x1.0p-53;  // in [0,1)
}

inline Tensor render_background(const SceneConfig& cfg, uint64_t seed) {
  Tensor bg(1, cfg.height, cfg.width);
  std::mt19937_64 rng(seed);
  switch (cfg.background) {
    case BackgroundKind::Flat: {
      const double level = uniform_range(rng, 0.3, 0.45);
      for (double& v : bg.values()) v = level;
      break;
    }
    case BackgroundKind::Stripes: {
      const double period = uniform_range(rng, 8.0, 18.0);
      const double phase = uniform_range(rng, 0.0, period);
      const bool vertical = rng() % 2 == 0;
      for (int y = 0; y < cfg.height; ++y)
        for (int x = 0; x < cfg.width; ++x) {
          const double t = (vertical ? x : y) + phase;
          bg.at(0, y, x) =
              0.4 + 0.25 * std::sin(2.0 * 3.14159265358979 * t / period);
        }
      break;
    }
    case BackgroundKind::Blobs: {
      for (double& v : bg.values()) v = 0.35;
      const int n = 6 + static_cast<int>(rng() % 5);
      for (int i = 0; i < n; ++i) {
        const double cx = uniform_range(rng, 0, cfg.width);
        const double cy = uniform_range(rng, 0, cfg.height);
        const double r = uniform_range(rng, 8, 24);
        const double amp = uniform_range(rng, -0.18, 0.3);
        for (int y = 0; y < cfg.height; ++y)
          for (int x = 0; x < cfg.width; ++x) {
            const double d2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) /
                              (r * r);
            bg.at(0, y, x) += amp * std::exp(-d2);
          }
      }
      break;
    }
  }
  return bg;
}

}  // namespace detail

/// Synthetic clip: textured elliptical pedestrians over a textured
/// background, sizes growing top-to-bottom (perspective), a configured
/// fraction stationary, plus non-crowd distractor objects. The pixel mask
/// is the exact union of pedestrian supports at the label frame; polygon
/// labels are rough 10-gon outlines of the same ellipses.
inline Clip generate_clip(const SceneConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const Tensor bg = detail::render_background(cfg, rng());

  const int n_peds = std::max(
      0, static_cast<int>(std::lround(cfg.crowd_density * cfg.height *
                                      cfg.width / 1000.0)));
  std::vector<detail::Agent> agents;
  for (int i = 0; i < n_peds; ++i) {
    detail::Agent a;
    a.y = uniform_range(rng, 6.0, cfg.height - 6.0);
    a.x = uniform_range(rng, 0.0, cfg.width);
    const double persp =
        1.0 + (cfg.perspective_gradient - 1.0) * (a.y / cfg.height);
    a.ry = std::max(2.5, 4.5 * persp);
    a.rx = a.ry * 0.45;
    const bool stationary = uniform_unit(rng) < cfg.fraction_stationary;
    a.vx = stationary ? 0.0 : uniform_range(rng, -2.5, 2.5) * persp * 0.5;
    a.vy = stationary ? 0.0 : uniform_range(rng, -0.4, 0.4);
    // brightness overlaps the background range on purpose: raw intensity
    // alone must not separate crowd from background, texture/shape/motion do
    a.intensity = uniform_range(rng, 0.25, 0.85);
    a.texture_seed = rng();
    a.is_pedestrian = true;
    agents.push_back(a);
  }
  for (int i = 0; i < cfg.distractors; ++i) {
    detail::Agent a;
    a.y = uniform_range(rng, 6.0, cfg.height - 6.0);
    a.x = uniform_range(rng, 0.0, cfg.width);
    a.ry = uniform_range(rng, 3.0, 6.0);
    a.rx = a.ry * uniform_range(rng, 1.2, 2.5);  // wide, un-person-like
    a.vx = uniform_range(rng, 1.0, 3.0) * (rng() % 2 ? 1.0 : -1.0);
    a.vy = 0.0;
    a.intensity = uniform_range(rng, 0.55, 0.8);
    a.texture_seed = 0;  // untextured
    a.is_pedestrian = false;
    agents.push_back(a);
  }

  Clip clip;
  clip.label_frame_index = cfg.frames / 2;
  const uint64_t noise_seed = rng();
  for (int f = 0; f < cfg.frames; ++f) {
    Tensor frame = bg;
    for (const detail::Agent& a : agents) {
      const double cx = detail::agent_x(a, f, cfg.width);
      const double cy = a.y + a.vy * f;
      const int y0 = std::max(0, static_cast<int>(cy - a.ry) - 1);
      const int y1 = std::min(cfg.height - 1, static_cast<int>(cy + a.ry) + 1);
      const int x0 = std::max(0, static_cast<int>(cx - a.rx) - 1);
      const int x1 = std::min(cfg.width - 1, static_cast<int>(cx + a.rx) + 1);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          if (!detail::inside_agent(a, f, cfg.width, x + 0.5, y + 0.5))
            continue;
          double v = a.intensity;
          if (a.texture_seed) {
            // speckle texture fixed to the agent, moves with it
            const int tx = static_cast<int>(std::floor(x + 0.5 - cx));
            const int ty = static_cast<int>(std::floor(y + 0.5 - cy));
            v += 0.3 * (detail::hash_noise(a.texture_seed, tx, ty) - 0.5);
          }
          frame.at(0, y, x) = std::clamp(v, 0.0, 1.0);
        }
    }
    if (cfg.noise_amplitude > 0.0) {
      const double half = cfg.noise_amplitude / 2.0;
      for (int y = 0; y < cfg.height; ++y)
        for (int x = 0; x < cfg.width; ++x)
          frame.at(0, y, x) = std::clamp(
              frame.at(0, y, x) +
                  half * (2.0 * detail::hash_noise(noise_seed + f, x, y) - 1.0),
              0.0, 1.0);
    }
    clip.frames.push_back(std::move(frame));
  }

  // exact pixel truth at the label frame: union of pedestrian supports
  clip.mask = Tensor(1, cfg.height, cfg.width);
  for (const detail::Agent& a : agents) {
    if (!a.is_pedestrian) continue;
    for (int y = 0; y < cfg.height; ++y)
      for (int x = 0; x < cfg.width; ++x)
        if (detail::inside_agent(a, clip.label_frame_index, cfg.width, x + 0.5,
                                 y + 0.5))
          clip.mask.at(0, y, x) = 1.0;
  }

  // rough polygon labels: decagon around each pedestrian ellipse
  for (const detail::Agent& a : agents) {
    if (!a.is_pedestrian) continue;
    const double cx = detail::agent_x(a, clip.label_frame_index, cfg.width);
    const double cy = a.y + a.vy * clip.label_frame_index;
    Polygon poly;
    for (int i = 0; i < 10; ++i) {
      const double t = 2.0 * 3.14159265358979 * i / 10.0;
      // slightly circumscribed: rough labels overshoot the true support
      poly.emplace_back(cx + 1.08 * a.rx * std::cos(t),
                        cy + 1.08 * a.ry * std::sin(t));
    }
    clip.polygons.push_back(std::move(poly));
  }
  return clip;
}

/// Background-subtraction cue: the chosen frame minus the per-pixel mean
/// over all frames of the clip. Signed, not thresholded.
inline Tensor motion_channel(const Clip& clip, int frame_index) {
  if (clip.frames.empty())
    throw std::invalid_argument("motion_channel: empty clip");
  if (frame_index < 0 || frame_index >= static_cast<int>(clip.frames.size()))
    throw std::invalid_argument("motion_channel: frame index out of range");
  Tensor mean(1, clip.frames[0].height(), clip.frames[0].width());
  for (const Tensor& f : clip.frames)
    for (size_t i = 0; i < mean.size(); ++i)
      mean.values()[i] += f.values()[i];
  const double inv = 1.0 / clip.frames.size();
  Tensor out = clip.frames[frame_index];
  for (size_t i = 0; i < out.size(); ++i)
    out.values()[i] -= mean.values()[i] * inv;
  return out;
}

inline Tensor motion_channel(const Clip& clip) {
  return motion_channel(clip, clip.label_frame_index);
}

/// Structure cue: gradient magnitude from 3x3 Sobel stencils, normalized
/// to [0,1] by the frame's max magnitude (all-zero gradients stay zero).
inline Tensor edge_channel(const Tensor& frame) {
  if (frame.channels() != 1)
    throw std::invalid_argument("edge_channel: expected 1 channel");
  const int h = frame.height(), w = frame.width();
  Tensor mag(1, h, w);
  auto px = [&](int y, int x) {
    return frame.at(0, std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1));
  };
  double max_mag = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
      const double gy = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2 * px(y - 1, x) + px(y - 1, x + 1));
      const double m = std::sqrt(gx * gx + gy * gy);
      mag.at(0, y, x) = m;
      max_mag = std::max(max_mag, m);
    }
  if (max_mag > 0.0)
    for (double& v : mag.values()) v /= max_mag;
  return mag;
}

// ---------------------------------------------------------------------------
// Dataset on disk: frames and masks as binary PGM, polygons as JSON,
// everything listed in a versioned JSON manifest.

struct ClipEntry {
  std::string scene_id;
  std::string split;  // "train" or "test"
  std::vector<std::string> frame_files;
  int label_frame_index = 0;
  std::string mask_file;      // test clips
  std::string polygon_file;   // train clips
};

struct SceneManifest {
  int schema_version = 1;
  uint64_t seed = 0;
  int height = 0, width = 0;
  std::vector<ClipEntry> clips;
};

inline void save_manifest(const SceneManifest& m,
                          const std::filesystem::path& path) {
  nlohmann::json j;
  j["schema_version"] = m.schema_version;
  j["seed"] = m.seed;
  j["height"] = m.height;
  j["width"] = m.width;
  nlohmann::json clips = nlohmann::json::array();
  for (const ClipEntry& c : m.clips) {
    nlohmann::json jc;
    jc["scene_id"] = c.scene_id;
    jc["split"] = c.split;
    jc["frames"] = c.frame_files;
    jc["label_frame_index"] = c.label_frame_index;
    if (!c.mask_file.empty()) jc["mask"] = c.mask_file;
    if (!c.polygon_file.empty()) jc["polygons"] = c.polygon_file;
    clips.push_back(jc);
  }
  j["clips"] = clips;
  std::ofstream os(path);
  if (!os)
    throw std::runtime_error("save_manifest: cannot open " + path.string());
  os << j.dump(2) << "\n";
}

inline SceneManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is)
    throw std::runtime_error("load_manifest: cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(is);
  SceneManifest m;
  m.schema_version = j.at("schema_version").get<int>();
  if (m.schema_version != 1)
    throw std::runtime_error("load_manifest: unsupported schema version");
  m.seed = j.at("seed").get<uint64_t>();
  m.height = j.at("height").get<int>();
  m.width = j.at("width").get<int>();
  for (const auto& jc : j.at("clips")) {
    ClipEntry c;
    c.scene_id = jc.at("scene_id").get<std::string>();
    c.split = jc.at("split").get<std::string>();
    c.frame_files = jc.at("frames").get<std::vector<std::string>>();
    c.label_frame_index = jc.at("label_frame_index").get<int>();
    if (jc.contains("mask")) c.mask_file = jc.at("mask").get<std::string>();
    if (jc.contains("polygons"))
      c.polygon_file = jc.at("polygons").get<std::string>();
    m.clips.push_back(std::move(c));
  }
  return m;
}

inline void save_polygons(const std::vector<Polygon>& polys,
                          const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const Polygon& p : polys) {
    nlohmann::json jp = nlohmann::json::array();
    for (const auto& [x, y] : p) jp.push_back({x, y});
    j.push_back(jp);
  }
  std::ofstream os(path);
  if (!os)
    throw std::runtime_error("save_polygons: cannot open " + path.string());
  os << j.dump() << "\n";
}

inline std::vector<Polygon> load_polygons(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is)
    throw std::runtime_error("load_polygons: cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(is);
  std::vector<Polygon> polys;
  for (const auto& jp : j) {
    Polygon p;
    for (const auto& v : jp)
      p.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
    polys.push_back(std::move(p));
  }
  return polys;
}

/// Generates a multi-scene dataset with scene-disjoint train/test splits
/// and writes all files under `dir`. Train clips carry polygon labels,
/// test clips carry pixel masks.
inline SceneManifest build_dataset(int n_scenes, int clips_per_scene,
                                   double train_fraction, uint64_t seed,
                                   const std::filesystem::path& dir,
                                   int height = 96, int width = 96,
                                   int frames = 8) {
  if (n_scenes < 1)
    throw std::invalid_argument("build_dataset: need at least one scene");
  if (clips_per_scene < 1)
    throw std::invalid_argument("build_dataset: need at least one clip");
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw std::invalid_argument("build_dataset: train_fraction in (0,1)");
  std::filesystem::create_directories(dir);

  std::mt19937_64 rng(seed);
  std::vector<int> order(n_scenes);
  for (int i = 0; i < n_scenes; ++i) order[i] = i;
  for (int i = n_scenes - 1; i > 0; --i)
    std::swap(order[i], order[rng() % (i + 1)]);
  const int n_train =
      std::max(1, std::min(n_scenes - 1,
                           static_cast<int>(std::lround(
                               train_fraction * n_scenes))));

  SceneManifest manifest;
  manifest.seed = seed;
  manifest.height = height;
  manifest.width = width;

  const std::array<BackgroundKind, 3> kinds = {
      BackgroundKind::Flat, BackgroundKind::Stripes, BackgroundKind::Blobs};
  for (int si = 0; si < n_scenes; ++si) {
    const int scene = order[si];
    const bool is_train = si < n_train;
    const std::string scene_id = "scene" + std::to_string(scene);
    // per-scene look, shared by all its clips
    std::mt19937_64 scene_rng(seed * 7919 + scene);
    SceneConfig cfg;
    cfg.height = height;
    cfg.width = width;
    cfg.frames = frames;
    cfg.background = kinds[scene % kinds.size()];
    cfg.crowd_density = uniform_range(scene_rng, 0.5, 1.1);
    cfg.fraction_stationary = uniform_range(scene_rng, 0.0, 0.4);
    cfg.perspective_gradient = uniform_range(scene_rng, 1.3, 2.2);
    cfg.distractors = static_cast<int>(scene_rng() % 3);

    for (int ci = 0; ci < clips_per_scene; ++ci) {
      cfg.seed = scene_rng();
      const Clip clip = generate_clip(cfg);
      const std::string base = scene_id + "_clip" + std::to_string(ci);
      ClipEntry entry;
      entry.scene_id = scene_id;
      entry.split = is_train ? "train" : "test";
      entry.label_frame_index = clip.label_frame_index;
      for (size_t fi = 0; fi < clip.frames.size(); ++fi) {
        const std::string fname =
            base + "_f" + std::to_string(fi) + ".pgm";
        write_pgm(clip.frames[fi], dir / fname);
        entry.frame_files.push_back(fname);
      }
      if (is_train) {
        entry.polygon_file = base + "_polygons.json";
        save_polygons(clip.polygons, dir / entry.polygon_file);
      } else {
        entry.mask_file = base + "_mask.pgm";
        write_pgm(clip.mask, dir / entry.mask_file);
      }
      manifest.clips.push_back(std::move(entry));
    }
  }
  save_manifest(manifest, dir / "manifest.json");
  return manifest;
}

/// Loads a clip's frames (and mask, when present) back from disk.
inline Clip load_clip(const SceneManifest& m, const ClipEntry& entry,
                      const std::filesystem::path& dir) {
  Clip clip;
  clip.label_frame_index = entry.label_frame_index;
  for (const std::string& f : entry.frame_files)
    clip.frames.push_back(read_pgm(dir / f));
  if (!entry.mask_file.empty()) clip.mask = read_pgm(dir / entry.mask_file);
  if (!entry.polygon_file.empty()) {
    clip.polygons = load_polygons(dir / entry.polygon_file);
    clip.mask = rasterize_polygons(clip.polygons, m.height, m.width);
  }
  return clip;
}

/// The three cue channels at a clip's label frame.
struct CueChannels {
  Tensor appearance;
  Tensor motion;
  Tensor structure;

  const Tensor& cue(int i) const {
    switch (i) {
      case 0: return appearance;
      case 1: return motion;
      case 2: return structure;
    }
    throw std::out_of_range("CueChannels::cue");
  }
};

inline CueChannels extract_cues(const Clip& clip) {
  CueChannels c;
  c.appearance = clip.frames.at(clip.label_frame_index);
  c.motion = motion_channel(clip);
  c.structure = edge_channel(c.appearance);
  return c;
}

}  // namespace fcnn
