#pragma once

// Run configuration: one flat key-value text file ("key = value" lines, '#'
// comments). Command-line overrides take precedence over file values, file
// values over defaults. Unknown keys are rejected by name.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vltrack/model.hpp"
#include "vltrack/synthdata.hpp"
#include "vltrack/tracker.hpp"

namespace vltrack {

struct RunConfig {
  ModelConfig model;
  // data
  std::string train_dir = "data/train";
  std::string test_dir = "data/test";
  // optimizer
  double lr = 1e-3;
  double weight_decay = 1e-4;
  long epochs = 30;
  long batch = 8;
  long steps_per_epoch = 8;
  long clip_len = 3;
  long val_sequences = 8;   // held-out sequences scored per epoch
  long val_frames = 12;     // frames per held-out sequence
  // tracker
  TrackerConfig tracker;
  // data generation
  GenConfig gen;
  long n_train = 200;
  long n_test = 50;
  // misc
  std::uint64_t seed = 1;
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  size_t b = s.find_last_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

inline std::vector<std::string> split_csv(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

}  // namespace detail

// Apply one key. Throws naming the key when it is unknown or malformed.
inline void apply_config_kv(RunConfig& c, const std::string& key, const std::string& value) {
  auto as_long = [&]() -> long {
    try {
      return std::stol(value);
    } catch (...) {
      throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" +
                                  value + "'");
    }
  };
  auto as_double = [&]() -> double {
    try {
      return std::stod(value);
    } catch (...) {
      throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + value +
                                  "'");
    }
  };
  auto as_bool = [&]() { return detail::parse_bool(value, key); };

  if (key == "model.channels") c.model.enc.channels = as_long();
  else if (key == "model.patch") c.model.enc.patch = as_long();
  else if (key == "model.search_size") c.model.enc.search_size = as_long();
  else if (key == "model.template_size") c.model.enc.template_size = as_long();
  else if (key == "model.depth") c.model.enc.depth = as_long();
  else if (key == "model.heads") c.model.enc.heads = as_long();
  else if (key == "model.lang_len") c.model.enc.lang_len = as_long();
  else if (key == "model.n_templates") c.model.enc.n_templates = as_long();
  else if (key == "model.alpha") c.model.alpha = as_double();
  else if (key == "model.phi") c.model.phi = as_double();
  else if (key == "loss.lambda1") c.model.loss.lambda1 = as_double();
  else if (key == "loss.lambda2") c.model.loss.lambda2 = as_double();
  else if (key == "ablate.use_fgm") c.model.sw.use_fgm = as_bool();
  else if (key == "ablate.use_vfm") c.model.sw.use_vfm = as_bool();
  else if (key == "ablate.use_lfa") c.model.sw.use_lfa = as_bool();
  else if (key == "ablate.use_vl_token") c.model.sw.use_vl_token = as_bool();
  else if (key == "ablate.token_mode") c.model.sw.token_mode = value;
  else if (key == "ablate.vl_token_parts") c.model.sw.vl_token_parts = value;
  else if (key == "ablate.drop_attributes") c.model.sw.drop_attributes = detail::split_csv(value);
  else if (key == "opt.lr") c.lr = as_double();
  else if (key == "opt.weight_decay") c.weight_decay = as_double();
  else if (key == "opt.epochs") c.epochs = as_long();
  else if (key == "opt.batch") c.batch = as_long();
  else if (key == "opt.steps_per_epoch") c.steps_per_epoch = as_long();
  else if (key == "opt.clip_len") c.clip_len = as_long();
  else if (key == "opt.val_sequences") c.val_sequences = as_long();
  else if (key == "opt.val_frames") c.val_frames = as_long();
  else if (key == "tracker.search_factor") c.tracker.search_factor = as_double();
  else if (key == "tracker.template_factor") c.tracker.template_factor = as_double();
  else if (key == "tracker.update_interval") c.tracker.update_interval = as_long();
  else if (key == "tracker.update_threshold") c.tracker.update_threshold = as_double();
  else if (key == "data.train_dir") c.train_dir = value;
  else if (key == "data.test_dir") c.test_dir = value;
  else if (key == "gen.frame_size") c.gen.frame_size = as_long();
  else if (key == "gen.frames") c.gen.frames = as_long();
  else if (key == "gen.n_train") c.n_train = as_long();
  else if (key == "gen.n_test") c.n_test = as_long();
  else if (key == "gen.distractors_min") c.gen.distractors_min = as_long();
  else if (key == "gen.distractors_max") c.gen.distractors_max = as_long();
  else if (key == "gen.occluder_prob") c.gen.occluder_prob = as_double();
  else if (key == "gen.change_prob") c.gen.change_prob = as_double();
  else if (key == "gen.p_appearance") c.gen.p_appearance = as_double();
  else if (key == "gen.p_action") c.gen.p_action = as_double();
  else if (key == "gen.p_location") c.gen.p_location = as_double();
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(std::stoull(value));
  else
    throw std::invalid_argument("config: unknown key '" + key + "'");
}

inline void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not 'key = value': " + line);
    apply_config_kv(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

// Canonical fully-resolved form; re-applying it reproduces the config.
inline std::string format_config(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  auto kv = [&](const std::string& k, const auto& v) { os << k << " = " << v << "\n"; };
  auto kb = [&](const std::string& k, bool v) { os << k << " = " << (v ? "true" : "false") << "\n"; };
  kv("model.channels", c.model.enc.channels);
  kv("model.patch", c.model.enc.patch);
  kv("model.search_size", c.model.enc.search_size);
  kv("model.template_size", c.model.enc.template_size);
  kv("model.depth", c.model.enc.depth);
  kv("model.heads", c.model.enc.heads);
  kv("model.lang_len", c.model.enc.lang_len);
  kv("model.n_templates", c.model.enc.n_templates);
  kv("model.alpha", c.model.alpha);
  kv("model.phi", c.model.phi);
  kv("loss.lambda1", c.model.loss.lambda1);
  kv("loss.lambda2", c.model.loss.lambda2);
  kb("ablate.use_fgm", c.model.sw.use_fgm);
  kb("ablate.use_vfm", c.model.sw.use_vfm);
  kb("ablate.use_lfa", c.model.sw.use_lfa);
  kb("ablate.use_vl_token", c.model.sw.use_vl_token);
  kv("ablate.token_mode", c.model.sw.token_mode);
  kv("ablate.vl_token_parts", c.model.sw.vl_token_parts);
  {
    std::string joined;
    for (size_t i = 0; i < c.model.sw.drop_attributes.size(); ++i)
      joined += (i ? "," : "") + c.model.sw.drop_attributes[i];
    kv("ablate.drop_attributes", joined);
  }
  kv("opt.lr", c.lr);
  kv("opt.weight_decay", c.weight_decay);
  kv("opt.epochs", c.epochs);
  kv("opt.batch", c.batch);
  kv("opt.steps_per_epoch", c.steps_per_epoch);
  kv("opt.clip_len", c.clip_len);
  kv("opt.val_sequences", c.val_sequences);
  kv("opt.val_frames", c.val_frames);
  kv("tracker.search_factor", c.tracker.search_factor);
  kv("tracker.template_factor", c.tracker.template_factor);
  kv("tracker.update_interval", c.tracker.update_interval);
  kv("tracker.update_threshold", c.tracker.update_threshold);
  kv("data.train_dir", c.train_dir);
  kv("data.test_dir", c.test_dir);
  kv("gen.frame_size", c.gen.frame_size);
  kv("gen.frames", c.gen.frames);
  kv("gen.n_train", c.n_train);
  kv("gen.n_test", c.n_test);
  kv("gen.distractors_min", c.gen.distractors_min);
  kv("gen.distractors_max", c.gen.distractors_max);
  kv("gen.occluder_prob", c.gen.occluder_prob);
  kv("gen.change_prob", c.gen.change_prob);
  kv("gen.p_appearance", c.gen.p_appearance);
  kv("gen.p_action", c.gen.p_action);
  kv("gen.p_location", c.gen.p_location);
  kv("seed", c.seed);
  return os.str();
}

inline void write_resolved_config(const RunConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write resolved config: " + path);
  out << format_config(c);
}

}  // namespace vltrack
