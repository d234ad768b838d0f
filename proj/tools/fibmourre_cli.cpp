// Command-line front end; talks to the library exclusively through the
// public C interface.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "fibmourre.h"

namespace {

int report_failure(fibm_status st) {
  std::fprintf(stderr, "error [%s]: %s\n", fibm_status_name(st), fibm_last_error());
  // construction aborts map to exit code 3
  return 3;
}

int finish_run(fibm_pipeline* p, fibm_status st) {
  if (st != FIBM_OK) {
    fibm_pipeline_free(p);
    return report_failure(st);
  }
  const char* ledger = nullptr;
  if (fibm_pipeline_ledger_text(p, &ledger) == FIBM_OK && ledger && ledger[0])
    std::fputs(ledger, stdout);
  const int code = fibm_pipeline_exit_code(p);
  if (code == 0)
    std::puts("all checks passed");
  else
    std::puts("verification checks failed");
  fibm_pipeline_free(p);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conjugate-operator construction and Mourre verification for fibered hamiltonians"};
  app.require_subcommand(1);

  std::string config_path, output_dir, report_path, which;
  int example_id = 2;
  bool quick = false;

  auto* run = app.add_subcommand("run", "run the full pipeline from a config file");
  run->add_option("--config", config_path, "pipeline config (JSON)")->required();

  auto* example = app.add_subcommand("example", "run a built-in model end to end");
  example->add_option("--id", example_id, "model id (1 or 2)")->required();
  example->add_flag("--quick", quick, "reduced resolutions");
  example->add_option("--out", output_dir, "output directory for artifacts");

  auto* strata = app.add_subcommand("strata", "stratification and threshold detection only");
  strata->add_option("--config", config_path, "pipeline config (JSON)")->required();

  auto* figures = app.add_subcommand("figures", "re-derive plot data from a report");
  figures->add_option("--report", report_path, "report.json of a previous run")->required();
  figures->add_option("--which", which, "strata | levelsets | supports | normtable")->required();
  figures->add_option("--out", output_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    fibm_pipeline* p = nullptr;
    fibm_status st = fibm_pipeline_new_from_file(config_path.c_str(), &p);
    if (st != FIBM_OK) return report_failure(st);
    return finish_run(p, fibm_pipeline_run(p));
  }
  if (example->parsed()) {
    fibm_pipeline* p = nullptr;
    fibm_status st = fibm_pipeline_new_example(example_id, quick ? 1 : 0,
                                               output_dir.empty() ? nullptr : output_dir.c_str(), &p);
    if (st != FIBM_OK) return report_failure(st);
    return finish_run(p, fibm_pipeline_run(p));
  }
  if (strata->parsed()) {
    fibm_pipeline* p = nullptr;
    fibm_status st = fibm_pipeline_new_from_file(config_path.c_str(), &p);
    if (st != FIBM_OK) return report_failure(st);
    return finish_run(p, fibm_pipeline_run_strata(p));
  }
  if (figures->parsed()) {
    const fibm_status st = fibm_emit_figure(report_path.c_str(), which.c_str(), output_dir.c_str());
    if (st != FIBM_OK) return report_failure(st);
    std::puts("figure data written");
    return 0;
  }
  return 1;
}
