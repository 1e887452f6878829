#pragma once

// Tracking evaluation: success AUC (21-threshold convention, strict
// inequality), precision at 20px, normalized precision (51 thresholds), and
// per-challenge-tag breakdowns, plus prediction-file io and SVG curves.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "vltrack/box.hpp"
#include "vltrack/synthdata.hpp"
#include "vltrack/tracker.hpp"

namespace vltrack {

inline const std::set<std::string>& known_tags() {
  static const std::set<std::string> tags{"distractor", "occlusion", "action-change",
                                          "location-change"};
  return tags;
}

// Mean over t in {0, 0.05, ..., 1.0} of the fraction of frames with IoU
// strictly above t.
inline double success_auc(const std::vector<double>& ious) {
  check(!ious.empty(), "success_auc: empty IoU list");
  double acc = 0.0;
  for (int i = 0; i <= 20; ++i) {
    const double t = static_cast<double>(i) * 0.05;
    long hits = 0;
    for (double v : ious) hits += (v > t);
    acc += static_cast<double>(hits) / static_cast<double>(ious.size());
  }
  return acc / 21.0;
}

// Fraction of frames whose center error is within the pixel threshold.
inline double precision(const std::vector<double>& center_errors, double threshold = 20.0) {
  check(!center_errors.empty(), "precision: empty error list");
  long hits = 0;
  for (double e : center_errors) hits += (e <= threshold);
  return static_cast<double>(hits) / static_cast<double>(center_errors.size());
}

inline double norm_center_error(const Box& pred, const Box& gt) {
  check(gt.w > 0 && gt.h > 0, "norm_center_error: ground truth extents must be positive");
  const double ex = (pred.cx() - gt.cx()) / gt.w;
  const double ey = (pred.cy() - gt.cy()) / gt.h;
  return std::hypot(ex, ey);
}

// Mean over t in {0, 0.01, ..., 0.5} of the fraction of frames whose
// gt-normalized center error is within t.
inline double norm_precision_from_errors(const std::vector<double>& norm_errors) {
  check(!norm_errors.empty(), "norm_precision: empty error list");
  double acc = 0.0;
  for (int i = 0; i <= 50; ++i) {
    const double t = static_cast<double>(i) * 0.01;
    long hits = 0;
    for (double e : norm_errors) hits += (e <= t);
    acc += static_cast<double>(hits) / static_cast<double>(norm_errors.size());
  }
  return acc / 51.0;
}

inline double norm_precision(const std::vector<Box>& pred, const std::vector<Box>& gt) {
  check(pred.size() == gt.size(), "norm_precision: box count mismatch");
  std::vector<double> errors;
  errors.reserve(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) errors.push_back(norm_center_error(pred[i], gt[i]));
  return norm_precision_from_errors(errors);
}

struct SequenceEval {
  std::string name;
  std::vector<double> ious;           // frames 1..end (frame 0 is given)
  std::vector<double> center_errors;  // pixels
  std::vector<double> norm_errors;    // normalized by gt extents
  std::vector<std::string> tags;
};

struct EvalReport {
  std::vector<SequenceEval> sequences;
  double auc = 0.0;
  double p = 0.0;
  double p_norm = 0.0;
  std::map<std::string, double> per_tag;  // tag -> AUC over the tagged frames
};

// Per tag, success AUC over the union of frames of sequences carrying the
// tag. Buckets with no sequences are absent from the map.
inline std::map<std::string, double> attribute_breakdown(
    const std::vector<SequenceEval>& sequences) {
  std::map<std::string, std::vector<double>> pools;
  for (const SequenceEval& s : sequences)
    for (const std::string& tag : s.tags) {
      check(known_tags().count(tag) > 0, "attribute_breakdown: unknown tag: " + tag);
      auto& pool = pools[tag];
      pool.insert(pool.end(), s.ious.begin(), s.ious.end());
    }
  std::map<std::string, double> out;
  for (const auto& [tag, pool] : pools)
    if (!pool.empty()) out[tag] = success_auc(pool);
  return out;
}

inline EvalReport finalize_report(std::vector<SequenceEval> sequences) {
  EvalReport rep;
  std::vector<double> all_ious, all_err, all_norm;
  for (const SequenceEval& s : sequences) {
    all_ious.insert(all_ious.end(), s.ious.begin(), s.ious.end());
    all_err.insert(all_err.end(), s.center_errors.begin(), s.center_errors.end());
    all_norm.insert(all_norm.end(), s.norm_errors.begin(), s.norm_errors.end());
  }
  rep.auc = success_auc(all_ious);
  rep.p = precision(all_err);
  rep.p_norm = norm_precision_from_errors(all_norm);
  rep.per_tag = attribute_breakdown(sequences);
  rep.sequences = std::move(sequences);
  return rep;
}

// ---------------------------------------------------------------------------
// Prediction files: one line per frame, "frame x y w h score".

struct PredictionLine {
  long frame = 0;
  Box box;
  double score = 1.0;
};

inline void write_predictions(const std::string& path, const std::vector<PredictionLine>& lines) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write predictions: " + path);
  char buf[192];
  for (const PredictionLine& l : lines) {
    std::snprintf(buf, sizeof(buf), "%ld %.17g %.17g %.17g %.17g %.17g\n", l.frame, l.box.x,
                  l.box.y, l.box.w, l.box.h, l.score);
    out << buf;
  }
}

inline std::vector<PredictionLine> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read predictions: " + path);
  std::vector<PredictionLine> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    PredictionLine l;
    if (std::sscanf(line.c_str(), "%ld %lg %lg %lg %lg %lg", &l.frame, &l.box.x, &l.box.y,
                    &l.box.w, &l.box.h, &l.score) != 6)
      throw std::runtime_error("malformed prediction line in " + path + ": " + line);
    out.push_back(l);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation drivers

inline std::vector<PredictionLine> track_sequence(const TrackerModel& model,
                                                  const SequenceRecord& rec,
                                                  const TrackerConfig& tcfg = TrackerConfig{}) {
  check(!rec.frames.empty() && rec.frames.size() == rec.boxes.size(),
        "track_sequence: malformed record");
  TrackerState state = init_tracker(model, rec.frames[0], rec.boxes[0], rec.attrs);
  std::vector<PredictionLine> out;
  out.push_back({0, rec.boxes[0], 1.0});
  for (size_t f = 1; f < rec.frames.size(); ++f) {
    TrackResult r = track_frame(model, state, rec.frames[f], tcfg);
    out.push_back({static_cast<long>(f), r.box, r.score});
  }
  return out;
}

inline SequenceEval evaluate_sequence(const SequenceRecord& rec,
                                      const std::vector<PredictionLine>& preds) {
  check(preds.size() == rec.boxes.size(), "evaluate_sequence: prediction count mismatch");
  SequenceEval ev;
  ev.name = rec.name;
  ev.tags = rec.tags;
  for (size_t f = 1; f < rec.boxes.size(); ++f) {
    const Box& p = preds[f].box;
    const Box& g = rec.boxes[f];
    ev.ious.push_back(iou(p, g));
    ev.center_errors.push_back(std::hypot(p.cx() - g.cx(), p.cy() - g.cy()));
    ev.norm_errors.push_back(norm_center_error(p, g));
  }
  return ev;
}

struct EvalOutcome {
  EvalReport report;
  std::map<std::string, std::vector<PredictionLine>> predictions;
};

inline EvalOutcome run_eval(const TrackerModel& model,
                            const std::vector<SequenceRecord>& records,
                            const TrackerConfig& tcfg = TrackerConfig{}) {
  EvalOutcome out;
  std::vector<SequenceEval> evs;
  for (const SequenceRecord& rec : records) {
    auto preds = track_sequence(model, rec, tcfg);
    evs.push_back(evaluate_sequence(rec, preds));
    out.predictions.emplace(rec.name, std::move(preds));
  }
  out.report = finalize_report(std::move(evs));
  return out;
}

inline nlohmann::json report_to_json(const EvalReport& rep) {
  nlohmann::json j;
  j["auc"] = rep.auc;
  j["precision"] = rep.p;
  j["norm_precision"] = rep.p_norm;
  j["per_tag"] = rep.per_tag;
  j["sequences"] = nlohmann::json::array();
  for (const SequenceEval& s : rep.sequences) {
    double mean_iou = 0.0;
    for (double v : s.ious) mean_iou += v;
    if (!s.ious.empty()) mean_iou /= static_cast<double>(s.ious.size());
    j["sequences"].push_back({{"name", s.name},
                              {"mean_iou", mean_iou},
                              {"auc", success_auc(s.ious)},
                              {"tags", s.tags}});
  }
  return j;
}

// ---------------------------------------------------------------------------
// Plot curves as standalone SVG files.

inline void write_curve_svg(const std::string& path, const std::vector<double>& xs,
                            const std::vector<double>& ys, const std::string& title,
                            const std::string& x_label) {
  check(xs.size() == ys.size() && !xs.empty(), "write_curve_svg: bad curve");
  const double w = 480, h = 360, ml = 50, mb = 40, mt = 30, mr = 15;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write plot: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const double x_max = xs.back();
  auto px = [&](double x) { return ml + (w - ml - mr) * (x / x_max); };
  auto py = [&](double y) { return h - mb - (h - mt - mb) * y; };
  out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
      << h - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
      << "\" stroke=\"black\"/>\n";
  out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (size_t i = 0; i < xs.size(); ++i) out << px(xs[i]) << "," << py(ys[i]) << " ";
  out << "\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"" << mt - 10 << "\" text-anchor=\"middle\">" << title
      << "</text>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"" << h - 8 << "\" text-anchor=\"middle\">" << x_label
      << "</text>\n";
  out << "</svg>\n";
}

inline void write_report_files(const EvalReport& rep, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "report.json");
    out << report_to_json(rep).dump(2) << "\n";
  }
  std::vector<double> all_ious, all_norm;
  for (const SequenceEval& s : rep.sequences) {
    all_ious.insert(all_ious.end(), s.ious.begin(), s.ious.end());
    all_norm.insert(all_norm.end(), s.norm_errors.begin(), s.norm_errors.end());
  }
  std::vector<double> xs, ys;
  for (int i = 0; i <= 20; ++i) {
    const double t = i * 0.05;
    long hits = 0;
    for (double v : all_ious) hits += (v > t);
    xs.push_back(t);
    ys.push_back(all_ious.empty() ? 0.0
                                  : static_cast<double>(hits) / static_cast<double>(all_ious.size()));
  }
  write_curve_svg((fs::path(dir) / "success_plot.svg").string(), xs, ys, "Success plot",
                  "IoU threshold");
  xs.clear();
  ys.clear();
  for (int i = 0; i <= 50; ++i) {
    const double t = i * 0.01;
    long hits = 0;
    for (double e : all_norm) hits += (e <= t);
    xs.push_back(t);
    ys.push_back(all_norm.empty() ? 0.0
                                  : static_cast<double>(hits) / static_cast<double>(all_norm.size()));
  }
  write_curve_svg((fs::path(dir) / "norm_precision_plot.svg").string(), xs, ys,
                  "Normalized precision plot", "normalized error threshold");
}

}  // namespace vltrack
