#ifndef LPBM_H
#define LPBM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LpbmStatus {
  LPBM_STATUS_OK = 0,
  LPBM_STATUS_NULL_POINTER = 1,
  LPBM_STATUS_VALIDATION = 2,
  LPBM_STATUS_ORACLE_MISMATCH = 3,
  LPBM_STATUS_MARGIN_FAILURE = 4,
  LPBM_STATUS_INFEASIBLE = 5,
  LPBM_STATUS_NUMERICAL = 6,
  LPBM_STATUS_PARSE = 7,
  LPBM_STATUS_PANIC = 8,
} LpbmStatus;

/*
 Opaque log-concave function e^{-phi} on a grid.
 */
typedef struct LpbmFunction LpbmFunction;

/*
 Opaque discrete measure.
 */
typedef struct LpbmMeasure LpbmMeasure;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread (empty if none). The
 pointer stays valid until the next failing call on the same thread.
 */
const char *lpbm_last_error(void);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not be freed twice.
 */
void lpbm_string_free(char *s);

/*
 Reads a function from its JSON grid file.

 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LpbmStatus lpbm_function_from_json(const char *json, struct LpbmFunction **out);

/*
 Writes the JSON grid file of `f`.

 # Safety
 `f` must be a live handle and `out` a valid pointer.
 */
enum LpbmStatus lpbm_function_to_json(const struct LpbmFunction *f, char **out);

/*
 Standard builder e^{-|x|^2/(2s)} on a symmetric grid of `n` nodes per axis.

 # Safety
 `out` must be a valid pointer.
 */
enum LpbmStatus lpbm_function_gaussian(size_t dim,
                                       double radius,
                                       size_t n,
                                       double s,
                                       struct LpbmFunction **out);

/*
 Indicator of the cube [-half_width, half_width]^dim.

 # Safety
 `out` must be a valid pointer.
 */
enum LpbmStatus lpbm_function_box(size_t dim,
                                  double radius,
                                  size_t n,
                                  double half_width,
                                  struct LpbmFunction **out);

/*
 # Safety
 `f` must come from this library and not be freed twice. Null is ignored.
 */
void lpbm_function_free(struct LpbmFunction *f);

/*
 Number of grid nodes of `f`.

 # Safety
 `f` must be a live handle and `out` a valid pointer.
 */
enum LpbmStatus lpbm_function_len(const struct LpbmFunction *f, size_t *out);

/*
 Copies the potential values into `buf` (`len` entries, +inf allowed).

 # Safety
 `buf` must hold `len` doubles.
 */
enum LpbmStatus lpbm_function_values(const struct LpbmFunction *f, double *buf, size_t len);

/*
 J(f) = ∫ e^{-phi}.

 # Safety
 `f` must be a live handle and `out` a valid pointer.
 */
enum LpbmStatus lpbm_total_mass(const struct LpbmFunction *f, double *out);

/*
 Ent(f) = ∫ f log f - J(f) log J(f).

 # Safety
 `f` must be a live handle and `out` a valid pointer.
 */
enum LpbmStatus lpbm_entropy(const struct LpbmFunction *f, double *out);

/*
 e^{-phi*} on the default dual grid.

 # Safety
 `f` must be a live handle and `out` a valid pointer.
 */
enum LpbmStatus lpbm_conjugate(const struct LpbmFunction *f, struct LpbmFunction **out);

/*
 alpha.f (+)_p beta.g

 # Safety
 `f`, `g` must be live handles and `out` a valid pointer.
 */
enum LpbmStatus lpbm_p_sum(const struct LpbmFunction *f,
                           const struct LpbmFunction *g,
                           double alpha,
                           double beta,
                           double p,
                           struct LpbmFunction **out);

/*
 δJ_p(f,g) by difference quotients and extrapolation.

 # Safety
 `f`, `g` must be live handles and `out` a valid pointer.
 */
enum LpbmStatus lpbm_delta_j_numeric(const struct LpbmFunction *f,
                                     const struct LpbmFunction *g,
                                     double p,
                                     double *out);

/*
 Prékopa–Leindler type check. Writes the report JSON and `pass` (0/1).

 # Safety
 `f`, `g` must be live handles; `report_json` must be valid; `pass` may be null.
 */
enum LpbmStatus lpbm_check_prekopa_leindler(const struct LpbmFunction *f,
                                            const struct LpbmFunction *g,
                                            double lambda,
                                            double p,
                                            char **report_json,
                                            int32_t *pass);

/*
 Santaló product check for an even function.

 # Safety
 `f` must be a live handle; `report_json` must be valid; `pass` may be null.
 */
enum LpbmStatus lpbm_check_santalo(const struct LpbmFunction *f, char **report_json, int32_t *pass);

/*
 ν = normalization · μ_p(f,·) with Ω cut `eps_omega` (≤ 0 for the default).

 # Safety
 `f` must be a live handle and `out` a valid pointer.
 */
enum LpbmStatus lpbm_forward_measure(const struct LpbmFunction *f,
                                     double p,
                                     double normalization,
                                     double eps_omega,
                                     struct LpbmMeasure **out);

/*
 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LpbmStatus lpbm_measure_from_json(const char *json, struct LpbmMeasure **out);

/*
 # Safety
 `m` must be a live handle and `out` a valid pointer.
 */
enum LpbmStatus lpbm_measure_to_json(const struct LpbmMeasure *m, char **out);

/*
 # Safety
 `m` must be a live handle and `out` a valid pointer.
 */
enum LpbmStatus lpbm_measure_len(const struct LpbmMeasure *m, size_t *out);

/*
 # Safety
 `m` must come from this library and not be freed twice. Null is ignored.
 */
void lpbm_measure_free(struct LpbmMeasure *m);

/*
 Solves the Lp Minkowski problem for `m`. `config_json` may be null, in
 which case defaults sized from the measure are used with `p` and `seed`.
 Writes the result as JSON.

 # Safety
 `m` must be a live handle; `config_json` null or NUL-terminated;
 `result_json` a valid pointer.
 */
enum LpbmStatus lpbm_solve(const struct LpbmMeasure *m,
                           const char *config_json,
                           double p,
                           uint64_t seed,
                           char **result_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LPBM_H */
