/* bondflow - age-structured bond turnover coupled to sphere-constrained
 * minimizing movements, with its fast-turnover friction limit.
 *
 * C interface: opaque handles, integer status codes, JSON summaries.
 * Every entry point is safe to call from multiple threads on distinct
 * handles; a loaded problem is immutable and may be shared.
 */
#ifndef BONDFLOW_H
#define BONDFLOW_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define BF_API __declspec(dllexport)
#else
#define BF_API __attribute__((visibility("default")))
#endif

typedef enum bf_status {
  BF_OK = 0,
  BF_ERR_CONFIG = 1,    /* bad usage, config parse or hypothesis failure */
  BF_ERR_INVARIANT = 2, /* a run violated a guaranteed invariant */
  BF_ERR_IO = 3,
  BF_ERR_NUMERIC = 4,   /* solver breakdown (non-convergence, NaN) */
  BF_ERR_INTERNAL = 5
} bf_status;

typedef struct bf_problem bf_problem;
typedef struct bf_report bf_report;

typedef struct bf_options {
  const char* out_dir; /* directory for artifacts; NULL writes nothing */
  const char* format;  /* "csv" (default) or "json" */
  int stride;          /* time-step export stride, >= 1; 0 = config value */
  int threads;         /* sweep workers, >= 1; 0 = config value */
} bf_options;

BF_API const char* bf_version(void);
BF_API void bf_options_init(bf_options* opts);

/* Parse + validate a problem. On failure returns a status and, when err
 * is non-NULL, a message truncated to errlen. */
BF_API bf_status bf_problem_from_string(const char* config_text, bf_problem** out, char* err,
                                        size_t errlen);
BF_API bf_status bf_problem_from_file(const char* path, bf_problem** out, char* err,
                                      size_t errlen);
BF_API void bf_problem_free(bf_problem* p);

/* command: validate | density | flow | limit | layer | sweep-eps |
 * sweep-da | kernel. The report is produced even when checks fail;
 * a non-BF_OK status means the run aborted. */
BF_API bf_status bf_run(const bf_problem* p, const char* command, const bf_options* opts,
                        bf_report** out, char* err, size_t errlen);

BF_API int bf_report_passed(const bf_report* r);
BF_API const char* bf_report_json(const bf_report* r); /* owned by the report */
BF_API void bf_report_free(bf_report* r);

#ifdef __cplusplus
}
#endif

#endif /* BONDFLOW_H */
