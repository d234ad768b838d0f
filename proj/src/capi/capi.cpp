#include "fibmourre.h"

#include <cstring>
#include <string>

#include "core/pipeline.hpp"

using fibm::Error;
using fibm::ErrorCode;

namespace {

thread_local std::string g_last_error;

fibm_status map_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return FIBM_E_INVALID_ARGUMENT;
    case ErrorCode::Io: return FIBM_E_IO;
    case ErrorCode::Json: return FIBM_E_JSON;
    case ErrorCode::DimensionMismatch: return FIBM_E_DIMENSION;
    case ErrorCode::NonHermitian: return FIBM_E_NON_HERMITIAN;
    case ErrorCode::BoundaryCollision: return FIBM_E_BOUNDARY_COLLISION;
    case ErrorCode::NagyGap: return FIBM_E_NAGY_GAP;
    case ErrorCode::ThresholdInInterval: return FIBM_E_THRESHOLD_IN_INTERVAL;
    case ErrorCode::NoConvergence: return FIBM_E_NO_CONVERGENCE;
    case ErrorCode::CoverageGap: return FIBM_E_COVERAGE_GAP;
    case ErrorCode::AbsorptionViolation: return FIBM_E_ABSORPTION_VIOLATION;
    case ErrorCode::IncompleteFamily: return FIBM_E_INCOMPLETE_FAMILY;
    case ErrorCode::NonCommuting: return FIBM_E_NON_COMMUTING;
    case ErrorCode::PartitionGap: return FIBM_E_PARTITION_GAP;
    case ErrorCode::FlatDirection: return FIBM_E_FLAT_DIRECTION;
    case ErrorCode::NonCommutingPrincipal: return FIBM_E_NON_COMMUTING_PRINCIPAL;
    case ErrorCode::SupportTouchesBoundary: return FIBM_E_SUPPORT_TOUCHES_BOUNDARY;
    case ErrorCode::MissingStage: return FIBM_E_MISSING_STAGE;
    case ErrorCode::CostGuard: return FIBM_E_COST_GUARD;
    case ErrorCode::Verification: return FIBM_E_VERIFICATION;
    case ErrorCode::Internal: return FIBM_E_INTERNAL;
  }
  return FIBM_E_INTERNAL;
}

template <typename F>
fibm_status guarded(F&& f) {
  try {
    f();
    return FIBM_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return map_code(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FIBM_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return FIBM_E_INTERNAL;
  }
}

}  // namespace

struct fibm_pipeline_s {
  fibm::PipelineConfig config;
  fibm::RunReport report;
  std::string report_json;
  std::string ledger_text;
  bool has_run = false;
};

extern "C" {

const char* fibm_version(void) { return fibm::library_version(); }

const char* fibm_status_name(fibm_status status) {
  switch (status) {
    case FIBM_OK: return "OK";
    case FIBM_E_INVALID_ARGUMENT: return "InvalidArgument";
    case FIBM_E_IO: return "Io";
    case FIBM_E_JSON: return "Json";
    case FIBM_E_DIMENSION: return "DimensionMismatch";
    case FIBM_E_NON_HERMITIAN: return "NonHermitian";
    case FIBM_E_BOUNDARY_COLLISION: return "BoundaryCollision";
    case FIBM_E_NAGY_GAP: return "NagyGap";
    case FIBM_E_THRESHOLD_IN_INTERVAL: return "ThresholdInInterval";
    case FIBM_E_NO_CONVERGENCE: return "NoConvergence";
    case FIBM_E_COVERAGE_GAP: return "CoverageGap";
    case FIBM_E_ABSORPTION_VIOLATION: return "AbsorptionViolation";
    case FIBM_E_INCOMPLETE_FAMILY: return "IncompleteFamily";
    case FIBM_E_NON_COMMUTING: return "NonCommuting";
    case FIBM_E_PARTITION_GAP: return "PartitionGap";
    case FIBM_E_FLAT_DIRECTION: return "FlatDirection";
    case FIBM_E_NON_COMMUTING_PRINCIPAL: return "NonCommutingPrincipal";
    case FIBM_E_SUPPORT_TOUCHES_BOUNDARY: return "SupportTouchesBoundary";
    case FIBM_E_MISSING_STAGE: return "MissingStage";
    case FIBM_E_COST_GUARD: return "CostGuard";
    case FIBM_E_VERIFICATION: return "Verification";
    case FIBM_E_INTERNAL: return "Internal";
  }
  return "Unknown";
}

const char* fibm_last_error(void) { return g_last_error.c_str(); }

fibm_status fibm_pipeline_new_from_file(const char* config_path, fibm_pipeline** out) {
  if (!config_path || !out) {
    g_last_error = "null argument";
    return FIBM_E_INVALID_ARGUMENT;
  }
  *out = nullptr;
  return guarded([&] {
    auto p = new fibm_pipeline_s;
    try {
      p->config = fibm::PipelineConfig::from_file(config_path);
    } catch (...) {
      delete p;
      throw;
    }
    *out = p;
  });
}

fibm_status fibm_pipeline_new_from_json(const char* config_json, fibm_pipeline** out) {
  if (!config_json || !out) {
    g_last_error = "null argument";
    return FIBM_E_INVALID_ARGUMENT;
  }
  *out = nullptr;
  return guarded([&] {
    auto p = new fibm_pipeline_s;
    try {
      p->config = fibm::PipelineConfig::from_json_text(config_json);
    } catch (...) {
      delete p;
      throw;
    }
    *out = p;
  });
}

fibm_status fibm_pipeline_new_example(int example_id, int quick, const char* output_dir,
                                      fibm_pipeline** out) {
  if (!out) {
    g_last_error = "null argument";
    return FIBM_E_INVALID_ARGUMENT;
  }
  *out = nullptr;
  return guarded([&] {
    auto p = new fibm_pipeline_s;
    try {
      p->config = fibm::PipelineConfig::example_config(example_id, quick != 0);
      if (output_dir) p->config.output_dir = output_dir;
    } catch (...) {
      delete p;
      throw;
    }
    *out = p;
  });
}

void fibm_pipeline_free(fibm_pipeline* p) { delete p; }

fibm_status fibm_pipeline_run(fibm_pipeline* p) {
  if (!p) {
    g_last_error = "null pipeline";
    return FIBM_E_INVALID_ARGUMENT;
  }
  return guarded([&] {
    p->report = fibm::run_pipeline(p->config);
    p->report_json = p->report.doc.dump(2) + "\n";
    p->ledger_text = p->report.to_text();
    p->has_run = true;
  });
}

fibm_status fibm_pipeline_run_strata(fibm_pipeline* p) {
  if (!p) {
    g_last_error = "null pipeline";
    return FIBM_E_INVALID_ARGUMENT;
  }
  return guarded([&] {
    p->report = fibm::run_strata(p->config);
    p->report_json = p->report.doc.dump(2) + "\n";
    p->ledger_text = p->report.to_text();
    p->has_run = true;
  });
}

fibm_status fibm_pipeline_report_json(const fibm_pipeline* p, const char** out_json) {
  if (!p || !out_json) {
    g_last_error = "null argument";
    return FIBM_E_INVALID_ARGUMENT;
  }
  if (!p->has_run) {
    g_last_error = "pipeline has not run";
    return FIBM_E_MISSING_STAGE;
  }
  *out_json = p->report_json.c_str();
  return FIBM_OK;
}

fibm_status fibm_pipeline_ledger_text(const fibm_pipeline* p, const char** out_text) {
  if (!p || !out_text) {
    g_last_error = "null argument";
    return FIBM_E_INVALID_ARGUMENT;
  }
  if (!p->has_run) {
    g_last_error = "pipeline has not run";
    return FIBM_E_MISSING_STAGE;
  }
  *out_text = p->ledger_text.c_str();
  return FIBM_OK;
}

int fibm_pipeline_all_passed(const fibm_pipeline* p) {
  if (!p || !p->has_run) return -1;
  return p->report.all_passed() ? 1 : 0;
}

int fibm_pipeline_exit_code(const fibm_pipeline* p) {
  if (!p || !p->has_run) return 3;
  return p->report.exit_code();
}

fibm_status fibm_emit_figure(const char* report_path, const char* which, const char* output_dir) {
  if (!report_path || !which || !output_dir) {
    g_last_error = "null argument";
    return FIBM_E_INVALID_ARGUMENT;
  }
  return guarded([&] { fibm::emit_figure(report_path, which, output_dir); });
}

}  // extern "C"
