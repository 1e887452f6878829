#pragma once

// Ablation grids: named configuration rows that disable or swap one
// mechanism each, trained and evaluated under identical settings.

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vltrack/config.hpp"
#include "vltrack/metrics.hpp"
#include "vltrack/train.hpp"

namespace vltrack {

struct AblationRowSpec {
  std::string label;
  std::function<void(RunConfig&)> mutate;
};

inline std::vector<AblationRowSpec> ablation_rows(const std::string& grid) {
  auto drop_all = [](RunConfig& c) {
    c.model.sw.drop_attributes = {"cate", "app", "act", "loc"};
    c.model.sw.use_fgm = false;
    c.model.sw.use_vl_token = false;
  };
  if (grid == "modulation")
    return {{"baseline", drop_all},
            {"no-modulation", [](RunConfig& c) { c.model.sw.use_fgm = false; }},
            {"no-vfm", [](RunConfig& c) { c.model.sw.use_vfm = false; }},
            {"no-lfa", [](RunConfig& c) { c.model.sw.use_lfa = false; }},
            {"full", [](RunConfig&) {}}};
  if (grid == "token")
    return {{"no-token", [](RunConfig& c) { c.model.sw.use_vl_token = false; }},
            {"no-visual-token", [](RunConfig& c) { c.model.sw.vl_token_parts = "lang"; }},
            {"no-language-token", [](RunConfig& c) { c.model.sw.vl_token_parts = "vi"; }},
            {"attn", [](RunConfig& c) { c.model.sw.token_mode = "attn"; }},
            {"concat", [](RunConfig&) {}}};
  if (grid == "gate")
    return {{"alpha-500", [](RunConfig& c) { c.model.alpha = 500.0; }},
            {"alpha-100", [](RunConfig& c) { c.model.alpha = 100.0; }},
            {"alpha-50", [](RunConfig& c) { c.model.alpha = 50.0; }},
            {"alpha-25", [](RunConfig& c) { c.model.alpha = 25.0; }}};
  if (grid == "attribute")
    return {{"no-category", [](RunConfig& c) { c.model.sw.drop_attributes = {"cate"}; }},
            {"no-appearance", [](RunConfig& c) { c.model.sw.drop_attributes = {"app"}; }},
            {"no-action", [](RunConfig& c) { c.model.sw.drop_attributes = {"act"}; }},
            {"no-location", [](RunConfig& c) { c.model.sw.drop_attributes = {"loc"}; }},
            {"full", [](RunConfig&) {}}};
  throw std::invalid_argument("unknown ablation grid: " + grid +
                              " (expected modulation, token, gate or attribute)");
}

struct AblationSeedResult {
  std::uint64_t seed = 0;
  double auc = 0.0, p_norm = 0.0, p = 0.0;
  std::map<std::string, double> per_tag;
};

struct AblationRowResult {
  std::string label;
  std::vector<AblationSeedResult> seeds;
  double mean_auc = 0.0, mean_p_norm = 0.0, mean_p = 0.0;
};

struct AblationTable {
  std::string grid;
  std::vector<AblationRowResult> rows;
};

inline nlohmann::json ablation_table_to_json(const AblationTable& t) {
  nlohmann::json j;
  j["grid"] = t.grid;
  j["rows"] = nlohmann::json::array();
  for (const AblationRowResult& row : t.rows) {
    nlohmann::json rj;
    rj["label"] = row.label;
    rj["auc"] = row.mean_auc;
    rj["p_norm"] = row.mean_p_norm;
    rj["p"] = row.mean_p;
    rj["seeds"] = nlohmann::json::array();
    for (const AblationSeedResult& s : row.seeds)
      rj["seeds"].push_back({{"seed", s.seed},
                             {"auc", s.auc},
                             {"p_norm", s.p_norm},
                             {"p", s.p},
                             {"per_tag", s.per_tag}});
    j["rows"].push_back(rj);
  }
  return j;
}

// Train and evaluate every row of a grid. When `out_dir` is nonempty the
// machine-readable table (json + tsv) and per-run artifacts are persisted.
inline AblationTable run_ablation_grid(
    const RunConfig& base, const std::string& grid,
    const std::vector<SequenceRecord>& train_set, const std::vector<SequenceRecord>& test_set,
    long n_seeds, const std::string& out_dir = "",
    const std::function<void(const std::string&)>& progress = {}) {
  namespace fs = std::filesystem;
  AblationTable table;
  table.grid = grid;
  const fs::path grid_dir = out_dir.empty() ? fs::path() : fs::path(out_dir) / grid;
  if (!out_dir.empty()) fs::create_directories(grid_dir);

  for (const AblationRowSpec& row : ablation_rows(grid)) {
    AblationRowResult rr;
    rr.label = row.label;
    for (long si = 0; si < n_seeds; ++si) {
      RunConfig rc = base;
      row.mutate(rc);
      rc.seed = base.seed + static_cast<std::uint64_t>(si);

      std::string best_path, log_path;
      if (!out_dir.empty()) {
        const fs::path run_dir = grid_dir / row.label / ("seed" + std::to_string(si));
        fs::create_directories(run_dir);
        write_resolved_config(rc, (run_dir / "config_resolved.txt").string());
        best_path = (run_dir / "best.ckpt").string();
        log_path = (run_dir / "train_log.txt").string();
      }
      TrackerModel model(rc.model, Vocabulary::standard(), rc.seed);
      std::ofstream log;
      if (!log_path.empty()) log.open(log_path);
      train_model(model, train_set, test_set, rc, best_path, "",
                  [&](const std::string& line) {
                    if (log.is_open()) log << line << "\n";
                  });
      EvalOutcome outcome = run_eval(model, test_set, rc.tracker);
      if (!out_dir.empty())
        write_report_files(outcome.report,
                           (grid_dir / row.label / ("seed" + std::to_string(si)) / "eval").string());

      AblationSeedResult sr;
      sr.seed = rc.seed;
      sr.auc = outcome.report.auc;
      sr.p_norm = outcome.report.p_norm;
      sr.p = outcome.report.p;
      sr.per_tag = outcome.report.per_tag;
      rr.seeds.push_back(sr);
      rr.mean_auc += sr.auc;
      rr.mean_p_norm += sr.p_norm;
      rr.mean_p += sr.p;
      if (progress)
        progress(grid + "/" + row.label + " seed " + std::to_string(rc.seed) + ": auc " +
                 std::to_string(sr.auc));
    }
    const double n = static_cast<double>(n_seeds);
    rr.mean_auc /= n;
    rr.mean_p_norm /= n;
    rr.mean_p /= n;
    table.rows.push_back(std::move(rr));
  }

  if (!out_dir.empty()) {
    std::ofstream jout(grid_dir / "table.json");
    jout << ablation_table_to_json(table).dump(2) << "\n";
    std::ofstream tsv(grid_dir / "table.tsv");
    tsv << "label\tauc\tp_norm\tp\n";
    for (const AblationRowResult& row : table.rows)
      tsv << row.label << "\t" << row.mean_auc << "\t" << row.mean_p_norm << "\t" << row.mean_p
          << "\n";
  }
  return table;
}

}  // namespace vltrack
