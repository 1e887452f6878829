#pragma once

// Per-sequence orchestration: cropping, template maintenance, per-frame
// inference and the frame-to-frame token handoff.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "vltrack/box.hpp"
#include "vltrack/image.hpp"
#include "vltrack/model.hpp"

namespace vltrack {

struct TrackerConfig {
  double search_factor = 4.0;    // search crop side = factor * sqrt(w*h)
  double template_factor = 2.0;  // template crop side
  long update_interval = 10;     // template refresh cadence, frames
  double update_threshold = 0.6; // confidence gate for template refresh
};

// Square crop of side factor * sqrt(w*h) centered on the box.
inline std::pair<Image, CropParams> crop_search(const Image& frame, const Box& box,
                                                double factor, long out) {
  check(factor >= 1.0, "crop_search: factor must be >= 1");
  const double side = factor * std::sqrt(box.w * box.h);
  CropParams crop{box.cx(), box.cy(), side / static_cast<double>(out), out};
  return {sample_crop(frame, crop), crop};
}

struct TrackerState {
  std::vector<Image> templates;  // newest-first; the init template is pinned last
  Box prev_box;
  VLTokenState vl_state;
  LangFeatures lang;  // encoded once at init, reused every frame
  double confidence_ema = 1.0;
};

// Seed the state: replicate the init template, segment and encode the
// description once, start the token pair at the learned initialization.
inline TrackerState init_tracker(const TrackerModel& model, const Image& frame, const Box& box,
                                 const AttributePhrases& attrs) {
  check(box.w >= 2.0 && box.h >= 2.0, "init: degenerate box");
  NoGradGuard ng;
  TrackerState state;
  TrackerConfig defaults;
  Image tpl =
      crop_search(frame, box, defaults.template_factor, model.cfg.enc.template_size).first;
  state.templates.assign(static_cast<size_t>(model.cfg.enc.n_templates), tpl);
  state.prev_box = box;
  state.vl_state = initial_state(model.vl_init);
  state.lang = model.encode_language(attrs);
  return state;
}

inline TrackerState init_tracker(const TrackerModel& model, const Image& frame, const Box& box,
                                 const std::string& description) {
  return init_tracker(model, frame, box, segment_description(description));
}

// Confidence-gated FIFO refresh: every `update_interval` frames, if the peak
// score clears the gate, push a crop at the predicted box and evict the
// oldest non-init template.
inline void update_templates(const TrackerModel& model, TrackerState& state, const Image& frame,
                             const Box& box, double score, const TrackerConfig& tcfg) {
  if (state.vl_state.frame_index % tcfg.update_interval != 0) return;
  if (score < tcfg.update_threshold) return;
  Image tpl =
      crop_search(frame, box, tcfg.template_factor, model.cfg.enc.template_size).first;
  state.templates.insert(state.templates.begin(), tpl);
  state.templates.erase(state.templates.end() - 2);  // oldest non-init slot
}

struct TrackResult {
  Box box;
  double score = 0.0;
};

// One inference step. The state is advanced in place: new previous box,
// propagated token pair, possibly refreshed templates.
inline TrackResult track_frame(const TrackerModel& model, TrackerState& state,
                               const Image& frame, const TrackerConfig& tcfg = TrackerConfig{}) {
  NoGradGuard ng;
  auto [patch, crop] =
      crop_search(frame, state.prev_box, tcfg.search_factor, model.cfg.enc.search_size);
  std::vector<Tensor> tpl_tensors;
  tpl_tensors.reserve(state.templates.size());
  for (const Image& t : state.templates) tpl_tensors.push_back(image_to_tensor(t));

  FrameOutput out =
      model.forward_frame(state.lang, image_to_tensor(patch), tpl_tensors, state.vl_state);
  Box raw = decode_box(out.maps, crop);
  const double score = peak_score(out.maps);

  // Keep the next crop anchored inside the frame with sane extents.
  Box box = raw;
  box.w = std::clamp(box.w, 4.0, static_cast<double>(frame.w));
  box.h = std::clamp(box.h, 4.0, static_cast<double>(frame.h));
  const double cx = std::clamp(raw.cx(), 0.0, static_cast<double>(frame.w));
  const double cy = std::clamp(raw.cy(), 0.0, static_cast<double>(frame.h));
  box.x = cx - 0.5 * box.w;
  box.y = cy - 0.5 * box.h;

  state.prev_box = box;
  state.vl_state = advance(state.vl_state, out.t_vl);
  state.confidence_ema = 0.8 * state.confidence_ema + 0.2 * score;
  update_templates(model, state, frame, box, score, tcfg);
  return {box, score};
}

}  // namespace vltrack
