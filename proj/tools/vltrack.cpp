// Command-line front end: dataset generation, training, evaluation, the
// ablation grids, attention export and the gradient-check table.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vltrack/ablate.hpp"
#include "vltrack/checks.hpp"
#include "vltrack/config.hpp"
#include "vltrack/metrics.hpp"
#include "vltrack/model.hpp"
#include "vltrack/synthdata.hpp"
#include "vltrack/tracker.hpp"
#include "vltrack/train.hpp"

namespace fs = std::filesystem;
using namespace vltrack;

namespace {

RunConfig resolve_config(const std::string& config_path,
                         const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (!config_path.empty()) apply_config_file(cfg, config_path);
  for (const std::string& kv : overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    apply_config_kv(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  return cfg;
}

std::vector<SequenceRecord> load_sequences(const std::string& dir) {
  if (fs::exists(fs::path(dir) / "test") && !fs::exists(fs::path(dir) / "boxes.txt"))
    throw std::runtime_error("expected a split directory of sequences, got dataset root: " +
                             dir + " (use its train/ or test/ subdirectory)");
  return read_dataset(dir);
}

int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
  DatasetSplit split = generate_split(cfg.gen, cfg.n_train, cfg.n_test);
  write_dataset(split.train, (fs::path(out_dir) / "train").string());
  write_dataset(split.test, (fs::path(out_dir) / "test").string());
  write_resolved_config(cfg, (fs::path(out_dir) / "config_resolved.txt").string());
  std::cout << "wrote " << split.train.size() << " train / " << split.test.size()
            << " test sequences to " << out_dir << "\n";
  return 0;
}

int cmd_train(RunConfig cfg, const std::string& data_dir, const std::string& out_dir,
              bool resume) {
  if (!data_dir.empty()) {
    cfg.train_dir = (fs::path(data_dir) / "train").string();
    cfg.test_dir = (fs::path(data_dir) / "test").string();
  }
  const auto train_set = read_dataset(cfg.train_dir);
  const auto test_set = read_dataset(cfg.test_dir);
  fs::create_directories(out_dir);
  write_resolved_config(cfg, (fs::path(out_dir) / "config_resolved.txt").string());

  const std::string best_path = (fs::path(out_dir) / "best.ckpt").string();
  const std::string last_path = (fs::path(out_dir) / "last.ckpt").string();
  const std::string log_path = (fs::path(out_dir) / "train_log.txt").string();

  long start_epoch = 0;
  double best = -1.0;
  AdamW opt;
  std::unique_ptr<TrackerModel> model;
  std::ios_base::openmode log_mode = std::ios::trunc;
  if (resume && fs::exists(last_path)) {
    LoadedCheckpoint raw;
    model = std::make_unique<TrackerModel>(load_checkpoint(last_path, &raw));
    opt.restore(raw.tensors);
    start_epoch = raw.meta.at("extra").at("epoch_next").get<long>();
    best = raw.meta.at("extra").at("best_val_iou").get<double>();
    log_mode = std::ios::app;
    std::cout << "resuming from epoch " << start_epoch << "\n";
  } else {
    model = std::make_unique<TrackerModel>(cfg.model, Vocabulary::standard(), cfg.seed);
  }

  std::ofstream log(log_path, log_mode);
  TrainResult res = train_model(*model, train_set, test_set, cfg, best_path, last_path,
                                [&](const std::string& line) {
                                  log << line << "\n";
                                  log.flush();
                                  std::cout << line << std::endl;
                                },
                                start_epoch, &opt, best);
  std::cout << "best held-out IoU " << res.best_val_iou << "; checkpoints in " << out_dir
            << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& ckpt_path, const std::string& data_dir,
             const std::string& out_dir) {
  TrackerModel model = load_checkpoint(ckpt_path);
  std::string dir = data_dir;
  if (fs::exists(fs::path(data_dir) / "test")) dir = (fs::path(data_dir) / "test").string();
  const auto records = read_dataset(dir);
  EvalOutcome outcome = run_eval(model, records, cfg.tracker);
  fs::create_directories(out_dir);
  write_report_files(outcome.report, out_dir);
  const fs::path pred_dir = fs::path(out_dir) / "predictions";
  fs::create_directories(pred_dir);
  for (const auto& [name, preds] : outcome.predictions)
    write_predictions((pred_dir / (name + ".txt")).string(), preds);
  write_resolved_config(cfg, (fs::path(out_dir) / "config_resolved.txt").string());
  std::cout << "auc " << outcome.report.auc << " p_norm " << outcome.report.p_norm << " p "
            << outcome.report.p << "\n";
  for (const auto& [tag, auc] : outcome.report.per_tag)
    std::cout << "  tag " << tag << " auc " << auc << "\n";
  return 0;
}

int cmd_ablate(const RunConfig& base, const std::string& data_dir, const std::string& out_dir,
               const std::string& grid, long n_seeds) {
  RunConfig cfg = base;
  if (!data_dir.empty()) {
    cfg.train_dir = (fs::path(data_dir) / "train").string();
    cfg.test_dir = (fs::path(data_dir) / "test").string();
  }
  const auto train_set = read_dataset(cfg.train_dir);
  const auto test_set = read_dataset(cfg.test_dir);
  run_ablation_grid(cfg, grid, train_set, test_set, n_seeds, out_dir,
                    [](const std::string& line) { std::cout << line << "\n"; });
  std::cout << "ablation table written to " << (fs::path(out_dir) / grid / "table.tsv").string()
            << "\n";
  return 0;
}

int cmd_export_attention(const RunConfig& cfg, const std::string& ckpt_path,
                         const std::string& data_dir, const std::string& seq_name, long frame,
                         const std::string& out_dir) {
  TrackerModel model = load_checkpoint(ckpt_path);
  if (!model.cfg.sw.use_vl_token)
    throw std::invalid_argument(
        "this checkpoint was trained with use_vl_token=false; there is no propagated token "
        "pair to visualize");
  if (frame <= 0)
    throw std::invalid_argument(
        "frame 0 carries the learned initial tokens, not a propagated pair; pick a frame >= 1");

  std::string dir = data_dir;
  if (fs::exists(fs::path(data_dir) / "test")) dir = (fs::path(data_dir) / "test").string();
  SequenceRecord rec = read_sequence((fs::path(dir) / seq_name).string());
  check(frame < static_cast<long>(rec.frames.size()), "frame index out of range");

  TrackerState state = init_tracker(model, rec.frames[0], rec.boxes[0], rec.attrs);
  for (long f = 1; f < frame; ++f) track_frame(model, state, rec.frames[static_cast<size_t>(f)]);

  // Re-run the final frame with attention recording enabled.
  NoGradGuard ng;
  TrackerModel& m = model;
  m.cfg.enc.record_attention = true;
  auto [patch, crop] = crop_search(rec.frames[static_cast<size_t>(frame)], state.prev_box,
                                   cfg.tracker.search_factor, m.cfg.enc.search_size);
  std::vector<Tensor> tpls;
  for (const Image& t : state.templates) tpls.push_back(image_to_tensor(t));
  FrameOutput out = m.forward_frame(state.lang, image_to_tensor(patch), tpls, state.vl_state);

  const long n_vl = m.injected_tokens(state.vl_state)->rows();
  const long n_s = m.cfg.enc.search_tokens();
  const long g = m.cfg.enc.grid();
  fs::create_directories(out_dir);
  const Image& frame_img = rec.frames[static_cast<size_t>(frame)];
  for (size_t layer = 0; layer < out.vis.attn_records.size(); ++layer) {
    const Tensor& rec_attn = out.vis.attn_records[layer];
    // Average the injected token rows' attention over search-token columns.
    std::vector<double> heat(static_cast<size_t>(n_s), 0.0);
    for (long r = 0; r < n_vl; ++r)
      for (long c = 0; c < n_s; ++c)
        heat[static_cast<size_t>(c)] += rec_attn(1 + r, 1 + n_vl + c) / static_cast<double>(n_vl);
    double mx = 0.0;
    for (double v : heat) mx = std::max(mx, v);
    if (mx > 0.0)
      for (double& v : heat) v /= mx;  // normalized to [0, 1]

    // Upsample over the search window and alpha-blend onto the frame.
    Image blend = frame_img;
    for (long y = 0; y < blend.h; ++y)
      for (long x = 0; x < blend.w; ++x) {
        const double cx = crop.crop_x(static_cast<double>(x) + 0.5);
        const double cy = crop.crop_y(static_cast<double>(y) + 0.5);
        if (cx < 0 || cy < 0 || cx >= crop.out || cy >= crop.out) continue;
        const long gx = std::min<long>(g - 1, static_cast<long>(cx / (crop.out / g)));
        const long gy = std::min<long>(g - 1, static_cast<long>(cy / (crop.out / g)));
        const double a = 0.55 * heat[static_cast<size_t>(gy * g + gx)];
        blend.set(y, x, 0,
                  static_cast<std::uint8_t>(std::lround((1 - a) * blend.at(y, x, 0) + a * 255)));
        blend.set(y, x, 1, static_cast<std::uint8_t>(std::lround((1 - a) * blend.at(y, x, 1))));
        blend.set(y, x, 2, static_cast<std::uint8_t>(std::lround((1 - a) * blend.at(y, x, 2))));
      }
    write_ppm(blend, (fs::path(out_dir) / ("attention_layer" + std::to_string(layer) + ".ppm"))
                         .string());
  }
  std::cout << "wrote " << out.vis.attn_records.size() << " attention overlays to " << out_dir
            << "\n";
  return 0;
}

int cmd_grad_check(long n_seeds, double tolerance) {
  const auto registry = grad_check_registry();
  bool all_pass = true;
  std::printf("%-24s %-14s %s\n", "op", "max_rel_err", "status");
  for (const GradCheckEntry& entry : registry) {
    const double worst = grad_check_worst(entry, static_cast<int>(n_seeds));
    const bool pass = worst < tolerance;
    all_pass = all_pass && pass;
    std::printf("%-24s %-14.3e %s\n", entry.name.c_str(), worst, pass ? "PASS" : "FAIL");
  }
  std::printf("%zu ops checked, %ld seeds each, tolerance %g\n", registry.size(), n_seeds,
              tolerance);
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vltrack: a trainable vision-language tracker on synthetic shape sequences"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, ckpt_path, seq_name, grid = "modulation";
  std::vector<std::string> overrides;
  bool resume = false;
  long frame = 1, seeds = 1, gc_seeds = 20;
  double gc_tol = 1e-4;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--set", overrides, "override a config key, e.g. --set opt.epochs=5");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen);
  gen->add_option("--out", out_dir, "output dataset directory")->required();

  CLI::App* train = app.add_subcommand("train", "train a tracker");
  add_common(train);
  train->add_option("--data", data_dir, "dataset root (with train/ and test/)");
  train->add_option("--out", out_dir, "run output directory")->required();
  train->add_flag("--resume", resume, "continue from <out>/last.ckpt");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval);
  eval->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  eval->add_option("--data", data_dir, "dataset root or split directory")->required();
  eval->add_option("--out", out_dir, "report output directory")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "train/evaluate an ablation grid");
  add_common(ablate);
  ablate->add_option("--data", data_dir, "dataset root (with train/ and test/)");
  ablate->add_option("--out", out_dir, "output directory")->required();
  ablate->add_option("--grid", grid, "modulation | token | gate | attribute");
  ablate->add_option("--seeds", seeds, "runs per row")->check(CLI::PositiveNumber);

  CLI::App* exa = app.add_subcommand("export-attention",
                                     "overlay the propagated token pair's attention");
  add_common(exa);
  exa->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  exa->add_option("--data", data_dir, "dataset root or split directory")->required();
  exa->add_option("--sequence", seq_name, "sequence name")->required();
  exa->add_option("--frame", frame, "frame index (>= 1)")->required();
  exa->add_option("--out", out_dir, "output directory")->required();

  CLI::App* gc = app.add_subcommand("grad-check", "finite-difference check of every op");
  gc->add_option("--seeds", gc_seeds, "random instances per op");
  gc->add_option("--tolerance", gc_tol, "max relative error allowed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(resolve_config(config_path, overrides), out_dir);
    if (train->parsed())
      return cmd_train(resolve_config(config_path, overrides), data_dir, out_dir, resume);
    if (eval->parsed())
      return cmd_eval(resolve_config(config_path, overrides), ckpt_path, data_dir, out_dir);
    if (ablate->parsed())
      return cmd_ablate(resolve_config(config_path, overrides), data_dir, out_dir, grid, seeds);
    if (exa->parsed())
      return cmd_export_attention(resolve_config(config_path, overrides), ckpt_path, data_dir,
                                  seq_name, frame, out_dir);
    if (gc->parsed()) return cmd_grad_check(gc_seeds, gc_tol);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config/contract error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
