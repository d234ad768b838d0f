/* fibmourre: conjugate-operator construction and Mourre-estimate
 * verification for analytically fibered hamiltonians with matrix fibers.
 *
 * C interface of the shared library. All functions return fibm_status;
 * a thread-local message for the last failure is available through
 * fibm_last_error(). Handles are opaque and owned by the caller via the
 * matching _free call.
 */
#ifndef FIBMOURRE_H
#define FIBMOURRE_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fibm_status {
  FIBM_OK = 0,
  FIBM_E_INVALID_ARGUMENT,
  FIBM_E_IO,
  FIBM_E_JSON,
  FIBM_E_DIMENSION,
  FIBM_E_NON_HERMITIAN,
  FIBM_E_BOUNDARY_COLLISION,
  FIBM_E_NAGY_GAP,
  FIBM_E_THRESHOLD_IN_INTERVAL,
  FIBM_E_NO_CONVERGENCE,
  FIBM_E_COVERAGE_GAP,
  FIBM_E_ABSORPTION_VIOLATION,
  FIBM_E_INCOMPLETE_FAMILY,
  FIBM_E_NON_COMMUTING,
  FIBM_E_PARTITION_GAP,
  FIBM_E_FLAT_DIRECTION,
  FIBM_E_NON_COMMUTING_PRINCIPAL,
  FIBM_E_SUPPORT_TOUCHES_BOUNDARY,
  FIBM_E_MISSING_STAGE,
  FIBM_E_COST_GUARD,
  FIBM_E_VERIFICATION,
  FIBM_E_INTERNAL
} fibm_status;

/* library version string, static storage */
const char* fibm_version(void);

/* printable name of a status code, static storage */
const char* fibm_status_name(fibm_status status);

/* message of the last failure on this thread, valid until the next call */
const char* fibm_last_error(void);

/* Opaque pipeline handle: one configured run of
 * stratify -> cover -> connect -> assemble -> verify. */
typedef struct fibm_pipeline_s fibm_pipeline;

fibm_status fibm_pipeline_new_from_file(const char* config_path, fibm_pipeline** out);
fibm_status fibm_pipeline_new_from_json(const char* config_json, fibm_pipeline** out);
/* example_id: 1 or 2; quick != 0 selects reduced resolutions */
fibm_status fibm_pipeline_new_example(int example_id, int quick, const char* output_dir,
                                      fibm_pipeline** out);
void fibm_pipeline_free(fibm_pipeline* p);

/* Full run. FIBM_OK also when verification checks fail (inspect the
 * report); construction aborts surface as error codes. */
fibm_status fibm_pipeline_run(fibm_pipeline* p);

/* Stratification and threshold detection only. */
fibm_status fibm_pipeline_run_strata(fibm_pipeline* p);

/* Report of the last run as JSON; owned by the handle. */
fibm_status fibm_pipeline_report_json(const fibm_pipeline* p, const char** out_json);

/* Human-readable pass/fail ledger of the last run; owned by the handle. */
fibm_status fibm_pipeline_ledger_text(const fibm_pipeline* p, const char** out_text);

/* 1 if every ledger check of the last run passed, 0 if any failed,
 * -1 if the pipeline has not run. */
int fibm_pipeline_all_passed(const fibm_pipeline* p);

/* Process-style exit code of the last run: 0 all checks passed,
 * 2 verification failures, 3 not run / aborted. */
int fibm_pipeline_exit_code(const fibm_pipeline* p);

/* Re-derive plot data (strata | levelsets | supports | normtable) from a
 * written report file. */
fibm_status fibm_emit_figure(const char* report_path, const char* which, const char* output_dir);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* FIBMOURRE_H */
