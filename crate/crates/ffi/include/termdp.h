#ifndef TERMDP_H
#define TERMDP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of an interface call. Input, numerical and resource errors carry
 the command-line exit codes.
 */
typedef enum TermdpStatus {
  TERMDP_STATUS_OK = 0,
  TERMDP_STATUS_NULL_POINTER = 1,
  TERMDP_STATUS_INPUT_ERROR = 2,
  TERMDP_STATUS_NUMERICAL_ERROR = 3,
  TERMDP_STATUS_RESOURCE_ERROR = 4,
  TERMDP_STATUS_INVALID_UTF8 = 5,
  TERMDP_STATUS_OUT_OF_RANGE = 6,
  TERMDP_STATUS_PANIC = 7,
} TermdpStatus;

/*
 Opaque validated instance.
 */
typedef struct TermdpMdp TermdpMdp;

/*
 Opaque solve report.
 */
typedef struct TermdpReport TermdpReport;

/*
 Solver settings; start from [`termdp_solve_options_default`].
 */
typedef struct TermdpSolveOptions {
  double beta;
  size_t degree;
  size_t max_iters;
  double tol_objective;
  double tol_residual;
  /*
   When set, starts from a perturbed initial policy seeded by `seed`.
   */
  bool seeded;
  uint64_t seed;
  double magnitude;
} TermdpSolveOptions;

/*
 Scalar summary of a report; information in nats.
 */
typedef struct TermdpValues {
  double expected_cost;
  double information;
  double total;
  double residual;
  double free_energy;
  size_t iterations;
  bool converged;
} TermdpValues;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *termdp_last_error(void);

/*
 Parses and validates an instance document.

 # Safety
 `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum TermdpStatus termdp_mdp_from_json(const char *json, struct TermdpMdp **out);

/*
 Reads and validates an instance file.

 # Safety
 `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum TermdpStatus termdp_mdp_load(const char *path, struct TermdpMdp **out);

/*
 Builds a maze from a maze document, or the shipped maze when `json` is null.

 # Safety
 `json` must be null or a NUL-terminated string; `out` must be writable.
 */
enum TermdpStatus termdp_mdp_maze(const char *json, struct TermdpMdp **out);

/*
 The two-step binary instance with a nonconvex objective.

 # Safety
 `out` must be a writable pointer.
 */
enum TermdpStatus termdp_mdp_toy(struct TermdpMdp **out);

/*
 Horizon of an instance, or 0 for a null handle.

 # Safety
 `mdp` must be null or a live handle.
 */
size_t termdp_mdp_horizon(const struct TermdpMdp *mdp);

/*
 Releases an instance; null is ignored.

 # Safety
 `mdp` must be null or a handle not yet released.
 */
void termdp_mdp_free(struct TermdpMdp *mdp);

/*
 Default settings: uniform start, 10000 iterations, tolerances 1e-10
 (objective) and 1e-8 (policy change).
 */
struct TermdpSolveOptions termdp_solve_options_default(double beta, size_t degree);

/*
 Runs the forward-backward iteration.

 # Safety
 `mdp` and `opts` must be live pointers and `out` writable.
 */
enum TermdpStatus termdp_solve(const struct TermdpMdp *mdp,
                               const struct TermdpSolveOptions *opts,
                               struct TermdpReport **out);

/*
 Copies the scalar summary of a report.

 # Safety
 `report` must be a live handle and `out` writable.
 */
enum TermdpStatus termdp_report_values(const struct TermdpReport *report, struct TermdpValues *out);

/*
 Copies the policy slice of time `t` (0-based), row-major over
 `(history, state, action)`. `len` receives the slice length; pass a null
 `buf` to query it.

 # Safety
 `report` must be a live handle, `len` writable, and `buf` null or valid
 for `cap` doubles.
 */
enum TermdpStatus termdp_report_policy(const struct TermdpReport *report,
                                       size_t t,
                                       double *buf,
                                       size_t cap,
                                       size_t *len);

/*
 The report as a JSON string, released with [`termdp_string_free`].

 # Safety
 `report` must be a live handle and `out` writable.
 */
enum TermdpStatus termdp_report_to_json(const struct TermdpReport *report, char **out);

/*
 Releases a string returned by this library; null is ignored.

 # Safety
 `s` must be null or a string from this library not yet released.
 */
void termdp_string_free(char *s);

/*
 Releases a report; null is ignored.

 # Safety
 `report` must be null or a handle not yet released.
 */
void termdp_report_free(struct TermdpReport *report);

/*
 Optimal expected cost of the cost-only problem.

 # Safety
 `mdp` must be a live handle and `out` writable.
 */
enum TermdpStatus termdp_value_iteration(const struct TermdpMdp *mdp, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TERMDP_H */
