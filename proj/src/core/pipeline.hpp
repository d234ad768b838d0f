#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "core/verify.hpp"

namespace fibm {

struct ToleranceConfig {
  double cluster_tol = 0.0;  // 0 = auto: scaled with the grid spacing
  double grad_tol = 0.0;     // 0 = auto: 10 h
  double comm_tol = 1e-6;
  double grad_floor = 0.1;
  double lip_factor = 1.5;
};

struct PipelineConfig {
  std::string model_id;            // "example1" | "example2" | "" (inline)
  nlohmann::json inline_model;     // model definition when model_id empty
  bool domain_set = false;
  DomainSpec domain{};
  std::vector<int> resolutions{32, 64};
  Interval I{-0.1, 0.1};
  Interval Itilde{-0.2, 0.2};
  ToleranceConfig tol;
  bool run_naive = true;
  bool run_modified = true;
  DiffScheme scheme = DiffScheme::Central2;
  std::string covering_mode = "auto";  // auto | analytic | greedy
  bool mourre_window_set = false;
  Interval mourre_window{};
  double mourre_c_target = 0.45;
  int ad_orders = 4;
  std::string output_dir;
  bool embed_figure_data = true;

  static PipelineConfig from_json_text(const std::string& text);
  static PipelineConfig from_file(const std::string& path);
  static PipelineConfig example_config(int id, bool quick);
  nlohmann::ordered_json to_json() const;
};

struct LedgerEntry {
  std::string id;
  std::string description;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
};

struct RunReport {
  nlohmann::ordered_json doc;
  std::vector<LedgerEntry> ledger;

  bool all_passed() const;
  int exit_code() const { return all_passed() ? 0 : 2; }
  std::string to_text() const;
};

// Full pipeline: stratify -> cover -> connect -> assemble -> verify, with
// artifacts written under config.output_dir when set.
RunReport run_pipeline(const PipelineConfig& config);

// Stratification and threshold detection only.
RunReport run_strata(const PipelineConfig& config);

// Re-derive plot data from a written report.
void emit_figure(const std::string& report_path, const std::string& which,
                 const std::string& output_dir);

const char* library_version();

}  // namespace fibm
