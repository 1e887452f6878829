#pragma once

// Deterministic synthetic tracking corpus: colored shapes with compositional
// descriptions whose attribute decomposition is known by construction.
// Mid-sequence action/location changes produce sequences whose description
// no longer matches the target's state, plus distractor and occlusion
// challenges.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vltrack/box.hpp"
#include "vltrack/image.hpp"
#include "vltrack/lang.hpp"

namespace vltrack {

struct GenConfig {
  long frame_size = 128;
  long frames = 40;
  std::vector<std::string> shapes = lexicon::shapes();
  std::vector<std::string> colors = lexicon::colors();
  std::vector<std::string> actions{"moving right", "moving left", "moving up",
                                   "moving down",  "circling",    "standing still"};
  std::vector<std::string> locations{"in the upper half", "in the lower half",
                                     "on the left side", "on the right side",
                                     "near the center"};
  long distractors_min = 1;
  long distractors_max = 2;
  double occluder_prob = 0.3;
  double change_prob = 0.5;   // probability of a mid-sequence attribute change
  double p_appearance = 0.9;  // inclusion probabilities of optional attributes
  double p_action = 0.85;
  double p_location = 0.85;
  std::uint64_t seed = 1;

  void validate() const {
    check(frame_size >= 32 && frames >= 4, "gen config: frame size or count too small");
    check(!shapes.empty() && !colors.empty() && !actions.empty() && !locations.empty(),
          "gen config: vocabularies must be nonempty");
    for (double p : {occluder_prob, change_prob, p_appearance, p_action, p_location})
      check(p >= 0.0 && p <= 1.0, "gen config: probabilities must lie in [0,1]");
    check(distractors_min >= 0 && distractors_max >= distractors_min,
          "gen config: bad distractor range");
    const long combos = static_cast<long>(shapes.size() * colors.size());
    check(distractors_max <= combos - 1,
          "gen config: more distinct distractors requested than color/shape combinations");
  }
};

struct SequenceRecord {
  std::string name;
  std::vector<Image> frames;
  std::vector<Box> boxes;
  std::string description;
  AttributePhrases attrs;
  std::vector<std::pair<long, std::string>> events;  // (frame, "action" | "location")
  std::vector<std::string> tags;

  bool operator==(const SequenceRecord&) const = default;
};

namespace synth {

struct Rgb {
  double r, g, b;
};

inline Rgb color_value(const std::string& name) {
  static const std::map<std::string, Rgb> table{
      {"red", {220, 40, 40}},     {"green", {40, 190, 60}},  {"blue", {45, 90, 230}},
      {"yellow", {235, 220, 50}}, {"magenta", {220, 60, 210}}, {"cyan", {60, 210, 220}},
      {"orange", {240, 150, 40}}, {"white", {245, 245, 245}}};
  auto it = table.find(name);
  check(it != table.end(), "unknown color in grammar: " + name);
  return it->second;
}

inline bool inside_shape(const std::string& shape, double cx, double cy, double r, double px,
                         double py) {
  const double dx = px - cx, dy = py - cy;
  if (shape == "circle") return dx * dx + dy * dy <= r * r;
  if (shape == "square") {
    const double a = 0.8 * r;
    return std::fabs(dx) <= a && std::fabs(dy) <= a;
  }
  if (shape == "diamond") return std::fabs(dx) + std::fabs(dy) <= r;
  if (shape == "ring") {
    const double d2 = dx * dx + dy * dy;
    return d2 <= r * r && d2 >= 0.3 * r * r;
  }
  if (shape == "triangle") {
    // Up-pointing triangle with apex at (cx, cy - r).
    const double x0 = 0.0, y0 = -r, x1 = -0.9 * r, y1 = 0.7 * r, x2 = 0.9 * r, y2 = 0.7 * r;
    auto side = [&](double ax, double ay, double bx, double by) {
      return (bx - ax) * (dy - ay) - (by - ay) * (dx - ax);
    };
    const double s0 = side(x0, y0, x1, y1), s1 = side(x1, y1, x2, y2), s2 = side(x2, y2, x0, y0);
    return (s0 <= 0 && s1 <= 0 && s2 <= 0) || (s0 >= 0 && s1 >= 0 && s2 >= 0);
  }
  check(false, "unknown shape in grammar: " + shape);
  return false;
}

inline Box shape_bbox(const std::string& shape, double cx, double cy, double r) {
  if (shape == "square") return {cx - 0.8 * r, cy - 0.8 * r, 1.6 * r, 1.6 * r};
  if (shape == "triangle") return {cx - 0.9 * r, cy - r, 1.8 * r, 1.7 * r};
  return {cx - r, cy - r, 2 * r, 2 * r};  // circle, diamond, ring
}

struct Rect {
  double x0, y0, x1, y1;
  double w() const { return x1 - x0; }
  double h() const { return y1 - y0; }
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

inline Rect region_rect(const std::string& location, double s) {
  if (location == "in the upper half") return {0, 0, s, s / 2};
  if (location == "in the lower half") return {0, s / 2, s, s};
  if (location == "on the left side") return {0, 0, s / 2, s};
  if (location == "on the right side") return {s / 2, 0, s, s};
  if (location == "near the center") return {0.28 * s, 0.28 * s, 0.72 * s, 0.72 * s};
  return {0, 0, s, s};  // interaction phrases and unknown locations: anywhere
}

inline Rect shrink(const Rect& r, double m) { return {r.x0 + m, r.y0 + m, r.x1 - m, r.y1 - m}; }

// Piecewise motion: straight runs sized to stay inside the region for the
// remaining frames, orbits that fit, or standing still. A location change
// switches to a transit leg toward the new region.
struct Motion {
  std::string action = "standing still";
  Rect region{0, 0, 0, 0};
  double radius = 10.0;
  double x = 0.0, y = 0.0;
  double vx = 0.0, vy = 0.0;
  double anchor_x = 0.0, anchor_y = 0.0, orbit_r = 0.0, theta = 0.0, omega = 0.0;
  bool transit = false;
  double transit_tx = 0.0, transit_ty = 0.0;
  long frames_left = 0;

  static double uniform(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng);
  }

  void place_and_program(const std::string& act, const Rect& reg, long total_frames,
                         std::mt19937_64& rng) {
    action = act;
    region = reg;
    frames_left = total_frames;
    const Rect safe = shrink(reg, radius + 3.0);
    if (action == "circling") {
      orbit_r = std::min(uniform(rng, 10.0, 18.0),
                         0.5 * std::min(safe.w(), safe.h()) - 1.0);
      orbit_r = std::max(orbit_r, 3.0);
      const Rect anchor_rect = shrink(safe, orbit_r);
      anchor_x = uniform(rng, anchor_rect.x0, anchor_rect.x1);
      anchor_y = uniform(rng, anchor_rect.y0, anchor_rect.y1);
      theta = uniform(rng, 0.0, 2.0 * M_PI);
      omega = (rng() % 2 ? 1.0 : -1.0) * uniform(rng, 0.12, 0.2);
      x = anchor_x + orbit_r * std::cos(theta);
      y = anchor_y + orbit_r * std::sin(theta);
      vx = vy = 0.0;
      return;
    }
    double dx = 0.0, dy = 0.0;
    if (action == "moving right") dx = 1.0;
    if (action == "moving left") dx = -1.0;
    if (action == "moving up") dy = -1.0;
    if (action == "moving down") dy = 1.0;
    const double t = static_cast<double>(std::max<long>(total_frames, 1));
    if (dx == 0.0 && dy == 0.0) {  // standing still
      x = uniform(rng, safe.x0, safe.x1);
      y = uniform(rng, safe.y0, safe.y1);
      vx = vy = 0.0;
      return;
    }
    const double span = (dx != 0.0 ? safe.w() : safe.h());
    const double speed = std::min(1.6, std::max(0.2, (span - 2.0) / t));
    vx = dx * speed;
    vy = dy * speed;
    const double travel = speed * t;
    if (dx > 0) x = uniform(rng, safe.x0, safe.x1 - travel);
    if (dx < 0) x = uniform(rng, safe.x0 + travel, safe.x1);
    if (dx == 0) x = uniform(rng, safe.x0, safe.x1);
    if (dy > 0) y = uniform(rng, safe.y0, safe.y1 - travel);
    if (dy < 0) y = uniform(rng, safe.y0 + travel, safe.y1);
    if (dy == 0) y = uniform(rng, safe.y0, safe.y1);
  }

  // Keep the current position, adopt a new action for the remaining frames.
  void change_action(const std::string& act, std::mt19937_64& rng) {
    action = act;
    transit = false;
    const Rect safe = shrink(region, radius + 3.0);
    const double t = static_cast<double>(std::max<long>(frames_left, 1));
    if (action == "circling") {
      orbit_r = std::max(3.0, std::min(8.0, 0.5 * std::min(safe.w(), safe.h()) - 1.0));
      theta = uniform(rng, 0.0, 2.0 * M_PI);
      omega = (rng() % 2 ? 1.0 : -1.0) * uniform(rng, 0.12, 0.2);
      anchor_x = std::clamp(x - orbit_r * std::cos(theta), safe.x0 + orbit_r, safe.x1 - orbit_r);
      anchor_y = std::clamp(y - orbit_r * std::sin(theta), safe.y0 + orbit_r, safe.y1 - orbit_r);
      vx = vy = 0.0;
      return;
    }
    double dx = 0.0, dy = 0.0;
    if (action == "moving right") dx = 1.0;
    if (action == "moving left") dx = -1.0;
    if (action == "moving up") dy = -1.0;
    if (action == "moving down") dy = 1.0;
    if (dx == 0.0 && dy == 0.0) {
      vx = vy = 0.0;
      return;
    }
    const double room = dx > 0   ? safe.x1 - x
                        : dx < 0 ? x - safe.x0
                        : dy > 0 ? safe.y1 - y
                                 : y - safe.y0;
    const double speed = std::min(1.6, std::max(0.0, (room - 1.0) / t));
    vx = dx * speed;
    vy = dy * speed;
  }

  void change_location(const Rect& reg, std::mt19937_64& rng) {
    region = reg;
    transit = true;
    const Rect safe = shrink(reg, radius + 3.0);
    transit_tx = uniform(rng, safe.x0, safe.x1);
    transit_ty = uniform(rng, safe.y0, safe.y1);
  }

  void step(std::mt19937_64& rng) {
    --frames_left;
    if (transit) {
      const double dx = transit_tx - x, dy = transit_ty - y;
      const double dist = std::hypot(dx, dy);
      if (dist < 3.0) {
        transit = false;
        change_action(action, rng);  // resume the pattern inside the new region
      } else {
        x += 3.0 * dx / dist;
        y += 3.0 * dy / dist;
        return;
      }
    }
    if (action == "circling") {
      theta += omega;
      x = anchor_x + orbit_r * std::cos(theta);
      y = anchor_y + orbit_r * std::sin(theta);
    } else {
      x += vx;
      y += vy;
    }
  }
};

inline Image render_background(long s, std::mt19937_64& rng) {
  Image img(s, s);
  std::uniform_real_distribution<double> base_d(95.0, 130.0);
  const double base = base_d(rng);
  std::uniform_real_distribution<double> noise(-13.0, 13.0);
  for (long i = 0; i < s * s; ++i) {
    const double v = std::clamp(base + noise(rng), 0.0, 255.0);
    for (long c = 0; c < 3; ++c) img.rgb[static_cast<size_t>(i * 3 + c)] = static_cast<std::uint8_t>(std::lround(v));
  }
  return img;
}

// Anti-aliased fill with a 3x3 coverage supersample over the shape bounds.
inline void draw_shape(Image& img, const std::string& shape, double cx, double cy, double r,
                       const Rgb& color) {
  const Box bb = shape_bbox(shape, cx, cy, r);
  const long x0 = std::max<long>(0, static_cast<long>(std::floor(bb.x)) - 1);
  const long y0 = std::max<long>(0, static_cast<long>(std::floor(bb.y)) - 1);
  const long x1 = std::min<long>(img.w - 1, static_cast<long>(std::ceil(bb.x + bb.w)) + 1);
  const long y1 = std::min<long>(img.h - 1, static_cast<long>(std::ceil(bb.y + bb.h)) + 1);
  for (long y = y0; y <= y1; ++y)
    for (long x = x0; x <= x1; ++x) {
      int hits = 0;
      for (int sy = 0; sy < 3; ++sy)
        for (int sx = 0; sx < 3; ++sx) {
          const double px = static_cast<double>(x) + (sx + 0.5) / 3.0;
          const double py = static_cast<double>(y) + (sy + 0.5) / 3.0;
          hits += inside_shape(shape, cx, cy, r, px, py) ? 1 : 0;
        }
      if (hits == 0) continue;
      const double a = hits / 9.0;
      const double src[3] = {color.r, color.g, color.b};
      for (long c = 0; c < 3; ++c) {
        const double v = (1.0 - a) * img.at(y, x, c) + a * src[c];
        img.set(y, x, c, static_cast<std::uint8_t>(std::lround(v)));
      }
    }
}

inline void draw_vertical_bar(Image& img, double cx, double half_width) {
  const long x0 = std::max<long>(0, static_cast<long>(std::lround(cx - half_width)));
  const long x1 = std::min<long>(img.w - 1, static_cast<long>(std::lround(cx + half_width)));
  for (long y = 0; y < img.h; ++y)
    for (long x = x0; x <= x1; ++x)
      for (long c = 0; c < 3; ++c) img.set(y, x, c, 75);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace synth

using ComboPool = std::vector<std::pair<std::string, std::string>>;  // (color, shape)

// Fully determined by (cfg, seed). The description reflects the frame-0
// state; events mark where the target's true action/location diverges.
inline SequenceRecord generate_sequence(const GenConfig& cfg, std::uint64_t seed,
                                        const ComboPool* pool = nullptr) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const double s = static_cast<double>(cfg.frame_size);
  SequenceRecord rec;

  // Target attributes.
  std::string color, shape;
  if (pool && !pool->empty()) {
    const auto& combo = (*pool)[rng() % pool->size()];
    color = combo.first;
    shape = combo.second;
  } else {
    color = cfg.colors[rng() % cfg.colors.size()];
    shape = cfg.shapes[rng() % cfg.shapes.size()];
  }
  const std::string action = cfg.actions[rng() % cfg.actions.size()];
  const std::string location = cfg.locations[rng() % cfg.locations.size()];
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool with_appearance = unit(rng) < cfg.p_appearance;
  const bool with_action = unit(rng) < cfg.p_action;
  const bool with_location = unit(rng) < cfg.p_location;

  // Distractors never share both color and shape with the target.
  std::uniform_int_distribution<long> dcount(cfg.distractors_min, cfg.distractors_max);
  const long n_distractors = dcount(rng);
  std::vector<std::pair<std::string, std::string>> dspec;
  while (static_cast<long>(dspec.size()) < n_distractors) {
    std::string dc = cfg.colors[rng() % cfg.colors.size()];
    std::string ds = cfg.shapes[rng() % cfg.shapes.size()];
    if (dc == color && ds == shape) continue;
    dspec.emplace_back(dc, ds);
  }

  // Optional interaction-style location referencing the first distractor.
  bool interaction_location = false;
  std::string location_phrase = location;
  if (with_location && !dspec.empty() && unit(rng) < 0.25) {
    interaction_location = true;
    location_phrase = "next to the " + dspec[0].first + " " + dspec[0].second;
  }

  // Motion setup. The target obeys its described region; an interaction
  // location keeps both objects in the same area.
  synth::Motion target;
  target.radius = synth::Motion::uniform(rng, 10.0, 16.0);
  const synth::Rect target_region =
      synth::region_rect(interaction_location ? "near the center" : location, s);
  target.place_and_program(action, target_region, cfg.frames, rng);

  std::vector<synth::Motion> distractors;
  for (long i = 0; i < n_distractors; ++i) {
    synth::Motion d;
    d.radius = synth::Motion::uniform(rng, 8.0, 14.0);
    const synth::Rect reg = (interaction_location && i == 0)
                                ? target_region
                                : synth::region_rect(cfg.locations[rng() % cfg.locations.size()], s);
    d.place_and_program(cfg.actions[rng() % cfg.actions.size()], reg, cfg.frames, rng);
    distractors.push_back(d);
  }

  // Mid-sequence attribute change.
  long change_frame = -1;
  std::string change_kind;
  if (unit(rng) < cfg.change_prob) {
    change_kind = (rng() % 2 == 0) ? "action" : "location";
    const long lo = cfg.frames / 3;
    const long hi = change_kind == "location" ? cfg.frames / 2 : 2 * cfg.frames / 3;
    change_frame = lo + static_cast<long>(rng() % static_cast<std::uint64_t>(std::max<long>(hi - lo, 1)));
    rec.events.emplace_back(change_frame, change_kind);
  }

  // Occlusion window.
  long occl_start = -1;
  if (unit(rng) < cfg.occluder_prob) {
    const long lo = cfg.frames / 3, hi = 2 * cfg.frames / 3;
    occl_start = lo + static_cast<long>(rng() % static_cast<std::uint64_t>(std::max<long>(hi - lo, 1)));
  }

  // Simulate and render: distractors first, target on top, occluder last.
  const Image background = synth::render_background(cfg.frame_size, rng);
  for (long f = 0; f < cfg.frames; ++f) {
    if (f == change_frame) {
      if (change_kind == "action") {
        std::string next = action;
        while (next == action) next = cfg.actions[rng() % cfg.actions.size()];
        target.change_action(next, rng);
      } else {
        std::string next = location;
        while (next == location) next = cfg.locations[rng() % cfg.locations.size()];
        target.change_location(synth::region_rect(next, s), rng);
      }
    }
    Image frame = background;
    for (size_t i = 0; i < distractors.size(); ++i)
      synth::draw_shape(frame, dspec[i].second, distractors[i].x, distractors[i].y,
                        distractors[i].radius, synth::color_value(dspec[i].first));
    synth::draw_shape(frame, shape, target.x, target.y, target.radius,
                      synth::color_value(color));
    if (occl_start >= 0 && f >= occl_start && f < occl_start + 5) {
      const double sweep = static_cast<double>(f - occl_start - 2) * 0.8 * target.radius;
      synth::draw_vertical_bar(frame, target.x + sweep, 0.7 * target.radius);
    }
    rec.frames.push_back(std::move(frame));
    rec.boxes.push_back(synth::shape_bbox(shape, target.x, target.y, target.radius));
    if (f + 1 < cfg.frames) {
      target.step(rng);
      for (auto& d : distractors) d.step(rng);
    }
  }

  // Description and ground-truth attributes.
  std::string desc = shape;
  if (with_appearance) desc = color + " " + desc;
  if (with_action) desc += " " + action;
  if (with_location) desc += " " + location_phrase;
  rec.description = desc;
  rec.attrs.category = {shape};
  if (with_appearance) rec.attrs.appearance = Phrase{color};
  if (with_action) rec.attrs.action = detail::split_lower(action);
  if (with_location) rec.attrs.location = detail::split_lower(location_phrase);

  if (n_distractors > 0) rec.tags.push_back("distractor");
  if (occl_start >= 0) rec.tags.push_back("occlusion");
  if (change_frame >= 0) rec.tags.push_back(change_kind + "-change");
  return rec;
}

struct DatasetSplit {
  std::vector<SequenceRecord> train;
  std::vector<SequenceRecord> test;
};

// Deterministic split with held-out attribute compositions: about a quarter
// of the (color, shape) combinations appear only in the test sequences.
inline DatasetSplit generate_split(const GenConfig& cfg, long n_train, long n_test) {
  cfg.validate();
  ComboPool all;
  for (const auto& c : cfg.colors)
    for (const auto& sh : cfg.shapes) all.emplace_back(c, sh);
  std::mt19937_64 shuffle_rng(synth::mix_seed(cfg.seed, 0xC0FFEE));
  std::shuffle(all.begin(), all.end(), shuffle_rng);
  const size_t n_held = std::max<size_t>(1, all.size() / 4);
  ComboPool test_pool(all.begin(), all.begin() + static_cast<long>(n_held));
  ComboPool train_pool(all.begin() + static_cast<long>(n_held), all.end());

  DatasetSplit split;
  char name[32];
  for (long i = 0; i < n_train; ++i) {
    SequenceRecord r = generate_sequence(cfg, synth::mix_seed(cfg.seed, 1000 + i), &train_pool);
    std::snprintf(name, sizeof(name), "seq_%04ld", i);
    r.name = name;
    split.train.push_back(std::move(r));
  }
  for (long i = 0; i < n_test; ++i) {
    SequenceRecord r =
        generate_sequence(cfg, synth::mix_seed(cfg.seed, 500000 + i), &test_pool);
    std::snprintf(name, sizeof(name), "seq_%04ld", i);
    r.name = name;
    split.test.push_back(std::move(r));
  }
  return split;
}

// ---------------------------------------------------------------------------
// Disk layout: <dir>/<name>/frames/NNN.ppm, boxes.txt (one "x y w h" line per
// frame), meta.json (description, attrs, events, tags).

inline void write_dataset(const std::vector<SequenceRecord>& records, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (const SequenceRecord& rec : records) {
    check(!rec.name.empty(), "write_dataset: record has no name");
    const fs::path base = fs::path(dir) / rec.name;
    fs::create_directories(base / "frames");
    char fname[32];
    for (size_t f = 0; f < rec.frames.size(); ++f) {
      std::snprintf(fname, sizeof(fname), "%03zu.ppm", f);
      write_ppm(rec.frames[f], (base / "frames" / fname).string());
    }
    {
      std::ofstream out(base / "boxes.txt");
      char line[128];
      for (const Box& b : rec.boxes) {
        std::snprintf(line, sizeof(line), "%.17g %.17g %.17g %.17g\n", b.x, b.y, b.w, b.h);
        out << line;
      }
    }
    nlohmann::json meta;
    meta["description"] = rec.description;
    meta["attrs"] = attributes_to_json(rec.attrs);
    meta["events"] = nlohmann::json::array();
    for (const auto& [frame, kind] : rec.events) meta["events"].push_back({frame, kind});
    meta["tags"] = rec.tags;
    std::ofstream out(base / "meta.json");
    out << meta.dump(2) << "\n";
  }
}

inline SequenceRecord read_sequence(const std::string& seq_dir) {
  namespace fs = std::filesystem;
  const fs::path base(seq_dir);
  SequenceRecord rec;
  rec.name = base.filename().string();
  const auto fail = [&](const std::string& what) {
    throw std::runtime_error("dataset sequence '" + rec.name + "': " + what);
  };

  if (!fs::exists(base / "frames")) fail("missing frames directory");
  std::vector<fs::path> frame_files;
  for (const auto& e : fs::directory_iterator(base / "frames"))
    if (e.path().extension() == ".ppm") frame_files.push_back(e.path());
  std::sort(frame_files.begin(), frame_files.end());
  if (frame_files.empty()) fail("no frames");
  for (const auto& p : frame_files) rec.frames.push_back(read_ppm(p.string()));

  if (!fs::exists(base / "boxes.txt")) fail("missing annotation file boxes.txt");
  std::ifstream boxes(base / "boxes.txt");
  std::string line;
  while (std::getline(boxes, line)) {
    if (line.empty()) continue;
    Box b;
    if (std::sscanf(line.c_str(), "%lg %lg %lg %lg", &b.x, &b.y, &b.w, &b.h) != 4)
      fail("malformed box line: " + line);
    rec.boxes.push_back(b);
  }
  if (rec.boxes.size() != rec.frames.size()) fail("box count does not match frame count");

  if (!fs::exists(base / "meta.json")) fail("missing meta.json");
  std::ifstream meta_in(base / "meta.json");
  nlohmann::json meta = nlohmann::json::parse(meta_in, nullptr, /*allow_exceptions=*/true);
  rec.description = meta.at("description").get<std::string>();
  rec.attrs = attributes_from_json(meta.at("attrs"));
  for (const auto& e : meta.at("events"))
    rec.events.emplace_back(e.at(0).get<long>(), e.at(1).get<std::string>());
  for (const auto& t : meta.at("tags")) rec.tags.push_back(t.get<std::string>());
  return rec;
}

inline std::vector<SequenceRecord> read_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir)) throw std::runtime_error("dataset directory not found: " + dir);
  std::vector<fs::path> seq_dirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) seq_dirs.push_back(e.path());
  std::sort(seq_dirs.begin(), seq_dirs.end());
  std::vector<SequenceRecord> out;
  for (const auto& p : seq_dirs) out.push_back(read_sequence(p.string()));
  return out;
}

}  // namespace vltrack
