#pragma once

// AdamW and the clip-based training loop. Training samples length-`clip_len`
// windows, crops around jittered ground-truth boxes (teacher forcing), and
// truncates gradients at every frame boundary via the token handoff.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vltrack/config.hpp"
#include "vltrack/metrics.hpp"
#include "vltrack/model.hpp"
#include "vltrack/tracker.hpp"

namespace vltrack {

struct AdamW {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 1e-4;
  long t = 0;
  std::map<std::string, std::vector<double>> m, v;

  void step(std::vector<std::pair<std::string, Tensor>>& params, double lr) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (auto& [name, p] : params) {
      auto& data = p.raw();
      auto& mi = m[name];
      auto& vi = v[name];
      if (mi.size() != data.size()) mi.assign(data.size(), 0.0);
      if (vi.size() != data.size()) vi.assign(data.size(), 0.0);
      if (!p.has_grad()) continue;
      const auto& g = p.grad();
      for (size_t i = 0; i < data.size(); ++i) {
        mi[i] = beta1 * mi[i] + (1.0 - beta1) * g[i];
        vi[i] = beta2 * vi[i] + (1.0 - beta2) * g[i] * g[i];
        const double mh = mi[i] / bc1;
        const double vh = vi[i] / bc2;
        data[i] -= lr * (mh / (std::sqrt(vh) + eps) + weight_decay * data[i]);
      }
    }
  }

  std::vector<std::pair<std::string, Tensor>> state_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& [name, buf] : m)
      out.emplace_back("opt.m." + name, Tensor::from({static_cast<long>(buf.size())}, buf));
    for (const auto& [name, buf] : v)
      out.emplace_back("opt.v." + name, Tensor::from({static_cast<long>(buf.size())}, buf));
    out.emplace_back("opt.t", Tensor::from({1}, {static_cast<double>(t)}));
    return out;
  }

  void restore(const std::map<std::string, Tensor>& tensors) {
    for (const auto& [name, tensor] : tensors) {
      if (name.rfind("opt.m.", 0) == 0) m[name.substr(6)] = tensor.values();
      else if (name.rfind("opt.v.", 0) == 0) v[name.substr(6)] = tensor.values();
      else if (name == "opt.t") t = static_cast<long>(tensor[0]);
    }
  }
};

// Cosine decay over the epoch schedule.
inline double lr_at(double base, long epoch, long total_epochs) {
  if (total_epochs <= 1) return base;
  const double f = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return base * 0.5 * (1.0 + std::cos(M_PI * f));
}

struct TrainResult {
  std::vector<std::string> log_lines;  // "epoch E loss L val_iou V"
  double best_val_iou = 0.0;
  long epochs_run = 0;
};

namespace detail {

// Crop window around a jittered ground-truth box.
inline CropParams jittered_crop(const Box& gt, double factor, long out, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> shift(-0.08, 0.08), logscale(-0.12, 0.12);
  const double side = factor * std::sqrt(gt.w * gt.h) * std::exp(logscale(rng));
  CropParams crop{gt.cx() + shift(rng) * side, gt.cy() + shift(rng) * side,
                  side / static_cast<double>(out), out};
  return crop;
}

inline double mean_val_iou(const TrackerModel& model, const std::vector<SequenceRecord>& test,
                           const RunConfig& cfg) {
  if (test.empty() || cfg.val_sequences <= 0) return 0.0;
  double acc = 0.0;
  long count = 0;
  const size_t n = std::min<size_t>(test.size(), static_cast<size_t>(cfg.val_sequences));
  for (size_t s = 0; s < n; ++s) {
    const SequenceRecord& rec = test[s];
    TrackerState state = init_tracker(model, rec.frames[0], rec.boxes[0], rec.attrs);
    const size_t last =
        std::min(rec.frames.size(), static_cast<size_t>(cfg.val_frames) + 1);
    for (size_t f = 1; f < last; ++f) {
      TrackResult r = track_frame(model, state, rec.frames[f], cfg.tracker);
      acc += iou(r.box, rec.boxes[f]);
      ++count;
    }
  }
  return count ? acc / static_cast<double>(count) : 0.0;
}

}  // namespace detail

// One optimizer step over a batch of sampled clips; returns the mean loss.
// Gradients are truncated at frame boundaries by the detached token handoff;
// the language encoding is shared within a clip, so its parameters receive
// the summed per-frame contributions.
inline double train_step(TrackerModel& model,
                         std::vector<std::pair<std::string, Tensor>>& params, AdamW& opt,
                         const std::vector<SequenceRecord>& train, const RunConfig& cfg,
                         double lr_now, std::mt19937_64& rng) {
  model.zero_grad();
  const long h_x = model.cfg.enc.search_size;
  const long h_z = model.cfg.enc.template_size;
  const double frame_weight =
      1.0 / static_cast<double>(cfg.batch * std::max<long>(cfg.clip_len, 1));
  double batch_loss = 0.0;
  for (long b = 0; b < cfg.batch; ++b) {
    const SequenceRecord& rec = train[rng() % train.size()];
    const long max_start = static_cast<long>(rec.frames.size()) - cfg.clip_len;
    const long start = max_start > 0 ? static_cast<long>(rng() % static_cast<std::uint64_t>(max_start + 1)) : 0;

    LangFeatures lang = model.encode_language(rec.attrs);
    TrackerConfig tdefaults;
    std::vector<Image> templates(
        static_cast<size_t>(model.cfg.enc.n_templates),
        crop_search(rec.frames[static_cast<size_t>(start)], rec.boxes[static_cast<size_t>(start)],
                    tdefaults.template_factor, h_z)
            .first);
    VLTokenState vl = initial_state(model.vl_init);

    for (long tstep = 0; tstep < cfg.clip_len; ++tstep) {
      const size_t f = static_cast<size_t>(start + tstep);
      const Box& gt = rec.boxes[f];
      const CropParams crop =
          detail::jittered_crop(gt, cfg.tracker.search_factor, h_x, rng);
      const Image patch = sample_crop(rec.frames[f], crop);
      std::vector<Tensor> tpl_tensors;
      for (const Image& t : templates) tpl_tensors.push_back(image_to_tensor(t));

      FrameOutput out = model.forward_frame(lang, image_to_tensor(patch), tpl_tensors, vl);
      Tensor loss = mul_scalar(
          frame_loss(out.maps, crop.to_crop(gt), h_x, model.cfg.loss), frame_weight);
      loss.backward();
      batch_loss += loss.item();

      vl = advance(vl, out.t_vl);
      if (tstep + 1 < cfg.clip_len) {
        // Teacher-forced template refresh from this frame's ground truth.
        templates.insert(templates.begin(),
                         crop_search(rec.frames[f], gt, tdefaults.template_factor, h_z).first);
        templates.erase(templates.end() - 2);
      }
    }
  }
  opt.step(params, lr_now);
  return batch_loss;
}

// Full loop. Writes per-epoch loss and held-out IoU lines through `emit`,
// checkpoints the best model at `best_path` and the resumable state at
// `last_path` (either may be empty to skip).
inline TrainResult train_model(TrackerModel& model, const std::vector<SequenceRecord>& train,
                               const std::vector<SequenceRecord>& test, const RunConfig& cfg,
                               const std::string& best_path = "",
                               const std::string& last_path = "",
                               const std::function<void(const std::string&)>& emit = {},
                               long start_epoch = 0, AdamW* opt_in = nullptr,
                               double best_so_far = -1.0, long stop_epoch = -1) {
  check(!train.empty() || cfg.epochs == 0, "train: empty training set");
  TrainResult result;
  auto params = model.named_params();
  AdamW local_opt;
  AdamW& opt = opt_in ? *opt_in : local_opt;
  opt.weight_decay = cfg.weight_decay;
  double best = best_so_far;
  // The learning-rate schedule always spans cfg.epochs; stop_epoch only cuts
  // the run short (for interruption/resume).
  const long end_epoch = stop_epoch >= 0 ? std::min(stop_epoch, cfg.epochs) : cfg.epochs;

  auto save_best = [&]() {
    if (!best_path.empty())
      save_checkpoint(best_path, model, {{"kind", "best"}, {"val_iou", best}});
  };
  if (cfg.epochs == 0 || start_epoch >= end_epoch) {
    best = std::max(best, 0.0);
    save_best();  // epochs=0: the checkpoint equals the initialization
    return result;
  }

  for (long epoch = start_epoch; epoch < end_epoch; ++epoch) {
    std::mt19937_64 epoch_rng(synth::mix_seed(cfg.seed, 0xE0000000ULL + static_cast<std::uint64_t>(epoch)));
    const double lr_now = lr_at(cfg.lr, epoch, cfg.epochs);
    double mean_loss = 0.0;
    for (long step = 0; step < cfg.steps_per_epoch; ++step) {
      double loss;
      try {
        loss = train_step(model, params, opt, train, cfg, lr_now, epoch_rng);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("training aborted at epoch " + std::to_string(epoch) +
                                 " step " + std::to_string(step) + " (batch seed " +
                                 std::to_string(synth::mix_seed(cfg.seed, 0xE0000000ULL + static_cast<std::uint64_t>(epoch))) +
                                 "): " + e.what());
      }
      if (!std::isfinite(loss))
        throw std::runtime_error("training aborted: non-finite loss at epoch " +
                                 std::to_string(epoch) + " step " + std::to_string(step) +
                                 " (batch seed " +
                                 std::to_string(synth::mix_seed(cfg.seed, 0xE0000000ULL + static_cast<std::uint64_t>(epoch))) +
                                 ")");
      mean_loss += loss;
    }
    mean_loss /= static_cast<double>(std::max<long>(cfg.steps_per_epoch, 1));
    const double val_iou = detail::mean_val_iou(model, test, cfg);

    char line[160];
    std::snprintf(line, sizeof(line), "epoch %ld loss %.9g val_iou %.9g", epoch, mean_loss,
                  val_iou);
    result.log_lines.emplace_back(line);
    if (emit) emit(line);

    if (val_iou > best) {
      best = val_iou;
      save_best();
    }
    if (!last_path.empty()) {
      nlohmann::json extra{{"kind", "last"}, {"epoch_next", epoch + 1}, {"best_val_iou", best}};
      save_checkpoint(last_path, model, extra, opt.state_tensors());
    }
    result.epochs_run = epoch - start_epoch + 1;
  }
  result.best_val_iou = std::max(best, 0.0);
  if (best < 0.0) save_best();
  return result;
}

}  // namespace vltrack
