#ifndef KEVO_H
#define KEVO_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call. `KEVO_STATUS_OK` is zero.
typedef enum {
  KEVO_STATUS_OK = 0,
  KEVO_STATUS_NULL_ARGUMENT = 1,
  KEVO_STATUS_INVALID_UTF8 = 2,
  KEVO_STATUS_CONFIG = 3,
  KEVO_STATUS_SCHEMA = 4,
  KEVO_STATUS_PARSE = 5,
  KEVO_STATUS_STATE = 6,
  KEVO_STATUS_INVARIANT = 7,
  KEVO_STATUS_ENVIRONMENT = 8,
  KEVO_STATUS_IO = 9,
  KEVO_STATUS_REFERENCE = 10,
  KEVO_STATUS_EXTRACTION = 11,
  KEVO_STATUS_TEMPLATE = 12,
  KEVO_STATUS_TRANSPORT = 13,
  KEVO_STATUS_PROTOCOL = 14,
  KEVO_STATUS_PANIC = 15,
  KEVO_STATUS_OTHER = 16,
} KevoStatus;

// Opaque evaluation harness.
typedef struct KevoHarness KevoHarness;

// Opaque idea pool.
typedef struct KevoPool KevoPool;

// Distribution of per-task best speedups.
typedef struct {
  double mean;
  double max;
  double p75;
  double p50;
  double p25;
  // Tasks above the success threshold.
  size_t success;
  size_t total;
} KevoSpeedupSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *kevo_version(void);

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *kevo_last_error(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and must not be used afterwards.
void kevo_string_free(char *s);

// Element-wise check `|c - r| / max(|r|, abs_floor) <= epsilon`.
//
// # Safety
// `candidate` and `reference` point to `len` doubles each (may be NULL when
// `len` is 0); the out pointers are writable.
KevoStatus kevo_check_correctness(const double *candidate,
                                  const double *reference,
                                  size_t len,
                                  double epsilon,
                                  double abs_floor,
                                  bool *out_correct,
                                  double *out_max_deviation);

// Mean, max, quartiles and success count of `len` speedups.
//
// # Safety
// `speedups` points to `len` doubles; `out_summary` is writable.
KevoStatus kevo_summarize_speedups(const double *speedups,
                                   size_t len,
                                   KevoSpeedupSummary *out_summary);

// Splits a model reply into its boxed description and its code.
//
// # Safety
// `reply` is a NUL-terminated UTF-8 string; the out pointers are writable.
// On success both outputs must be released with `kevo_string_free`.
KevoStatus kevo_extract_boxed(const char *reply, char **out_description, char **out_code);

// Renders `summarize_idea`, `seed_init` or `eoh_step` with bindings given as
// a JSON object of strings.
//
// # Safety
// String arguments are NUL-terminated UTF-8; the out pointers are writable.
// On success both outputs must be released with `kevo_string_free`.
KevoStatus kevo_render_prompt(const char *template_,
                              const char *bindings_json,
                              char **out_system,
                              char **out_user);

// Parses and validates a pool from JSON text.
//
// # Safety
// `json` is NUL-terminated UTF-8; `out_pool` is writable.
KevoStatus kevo_pool_from_json(const char *json, KevoPool **out_pool);

// Loads and validates a pool file.
//
// # Safety
// `path` is NUL-terminated UTF-8; `out_pool` is writable.
KevoStatus kevo_pool_load(const char *path, KevoPool **out_pool);

// Writes the pool as JSON.
//
// # Safety
// `pool` is a live handle; `path` is NUL-terminated UTF-8.
KevoStatus kevo_pool_save(const KevoPool *pool, const char *path);

// Serializes the pool. Release the result with `kevo_string_free`.
//
// # Safety
// `pool` is a live handle; `out_json` is writable.
KevoStatus kevo_pool_to_json(const KevoPool *pool, char **out_json);

// Number of ideas and of thoughts in the pool.
//
// # Safety
// `pool` is a live handle; the out pointers are writable.
KevoStatus kevo_pool_counts(const KevoPool *pool, size_t *out_ideas, size_t *out_thoughts);

// Draws one idea uniformly, then `count` of its thoughts weighted by a
// softmax of their efficiencies at `temperature`. The same seed gives the
// same draw. The result is JSON:
// `{"idea_id", "principle", "with_replacement", "thoughts": [..]}`.
//
// # Safety
// `pool` is a live handle; `out_json` is writable.
KevoStatus kevo_pool_sample(const KevoPool *pool,
                            uint64_t seed,
                            size_t count,
                            double temperature,
                            char **out_json);

// Blends an observed speedup delta into one thought's efficiency:
// `phi <- (1 - alpha) * phi + alpha * delta`.
//
// # Safety
// `pool` is a live handle; `thought_id` is NUL-terminated UTF-8.
KevoStatus kevo_pool_update_efficiency(KevoPool *pool,
                                       const char *thought_id,
                                       double delta,
                                       double alpha);

// Releases a pool handle. NULL is ignored.
//
// # Safety
// `pool` comes from this library and is not used afterwards.
void kevo_pool_free(KevoPool *pool);

// Creates a harness from an executor configuration in JSON. Missing keys
// take their defaults; `{"kind": "mock"}` needs no toolchain.
//
// # Safety
// `config_json` is NUL-terminated UTF-8; `out_harness` is writable.
KevoStatus kevo_harness_new(const char *config_json, KevoHarness **out_harness);

// Compiles, runs and times `source` against the task file at `task_path`
// and writes the verdict as JSON. A kernel that fails to compile or produces
// wrong values is a successful call with `"correct": false`.
//
// # Safety
// `harness` is a live handle; strings are NUL-terminated UTF-8; `out_json`
// is writable.
KevoStatus kevo_harness_evaluate(const KevoHarness *harness,
                                 const char *task_path,
                                 const char *source,
                                 char **out_json);

// Releases a harness handle. NULL is ignored.
//
// # Safety
// `harness` comes from this library and is not used afterwards.
void kevo_harness_free(KevoHarness *harness);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KEVO_H */
