#ifndef TAINTSYNTH_H
#define TAINTSYNTH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum TsStatus {
  TS_STATUS_OK = 0,
  TS_STATUS_NULL_POINTER = 1,
  TS_STATUS_INVALID_UTF8 = 2,
  TS_STATUS_PARSE_ERROR = 3,
  TS_STATUS_TARGET_ERROR = 4,
  TS_STATUS_NOT_FOUND = 5,
  TS_STATUS_OUT_OF_RANGE = 6,
  TS_STATUS_PANIC = 7,
} TsStatus;

/**
 * How a plain run ended.
 */
typedef enum TsExitKind {
  TS_EXIT_KIND_HALTED = 0,
  TS_EXIT_KIND_CRASHED = 1,
  TS_EXIT_KIND_LIMIT_EXCEEDED = 2,
} TsExitKind;

typedef enum TsFlipStatus {
  TS_FLIP_STATUS_FLIPPED = 0,
  TS_FLIP_STATUS_INFEASIBLE = 1,
  TS_FLIP_STATUS_SYNTHESIS_FAILED = 2,
  TS_FLIP_STATUS_BUDGET_EXHAUSTED = 3,
  TS_FLIP_STATUS_SKIPPED = 4,
} TsFlipStatus;

/**
 * An owned byte buffer.
 */
typedef struct TsBytes TsBytes;

/**
 * A parsed program ready to run.
 */
typedef struct TsProgram TsProgram;

/**
 * A generated benchmark target with its answer key.
 */
typedef struct TsTarget TsTarget;

typedef struct TsExit {
  enum TsExitKind kind;
  /**
   * Bug id when `kind` is `Crashed`, otherwise 0.
   */
  uint32_t crash_id;
} TsExit;

typedef struct TsFlipOptions {
  uint32_t max_iter;
  bool multi_branch;
  uint64_t rng_seed;
} TsFlipOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *ts_last_error(void);

/**
 * Parse program text. `name` is used in diagnostics and may be null.
 *
 * # Safety
 * `source` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TsStatus ts_program_parse(const char *source, const char *name, struct TsProgram **out);

/**
 * # Safety
 * `program` must come from this library and not be used afterwards.
 */
void ts_program_free(struct TsProgram *program);

/**
 * Run `program` once in plain mode.
 *
 * # Safety
 * `program` must be a live handle, `input` must point to `len` bytes and
 * `out` must be valid.
 */
enum TsStatus ts_run(const struct TsProgram *program,
                     const uint8_t *input,
                     uintptr_t len,
                     struct TsExit *out);

/**
 * Ids of the tainted branches observed when running `seed`, in first
 * occurrence order. Writes up to `cap` ids to `ids` and the total count to
 * `count`; pass `cap == 0` to query the count.
 *
 * # Safety
 * `ids` must have room for `cap` values; the other pointers must be valid.
 */
enum TsStatus ts_tainted_branches(const struct TsProgram *program,
                                  const uint8_t *seed,
                                  uintptr_t len,
                                  uint32_t *ids,
                                  uintptr_t cap,
                                  uintptr_t *count);

/**
 * Default flip options.
 */
struct TsFlipOptions ts_flip_options_default(void);

/**
 * Try to flip `branch` starting from `seed`. On `TS_FLIP_STATUS_FLIPPED`
 * the verified input is stored in `input_out`; otherwise it is set to null.
 * `options` may be null for defaults.
 *
 * # Safety
 * Pointers must be valid; `seed` must point to `len` bytes.
 */
enum TsStatus ts_flip(const struct TsProgram *program,
                      const uint8_t *seed,
                      uintptr_t len,
                      uint32_t branch,
                      const struct TsFlipOptions *options,
                      enum TsFlipStatus *status_out,
                      struct TsBytes **input_out);

/**
 * Run a campaign for `execs` executions and return its report as JSON.
 *
 * # Safety
 * Pointers must be valid; `seed` must point to `len` bytes.
 */
enum TsStatus ts_fuzz(const struct TsProgram *program,
                      const uint8_t *seed,
                      uintptr_t len,
                      uint64_t execs,
                      uint64_t rng_seed,
                      bool synth,
                      bool multi_branch,
                      struct TsBytes **report_out);

/**
 * Generate a target from a bundled spec name or spec text.
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TsStatus ts_target_generate(const char *spec, struct TsTarget **out);

/**
 * # Safety
 * `target` must come from this library and not be used afterwards.
 */
void ts_target_free(struct TsTarget *target);

/**
 * Number of injected bugs, or 0 for a null handle.
 *
 * # Safety
 * `target` must be null or a live handle.
 */
uintptr_t ts_target_bug_count(const struct TsTarget *target);

/**
 * A new program handle for the target.
 *
 * # Safety
 * Pointers must be valid.
 */
enum TsStatus ts_target_program(const struct TsTarget *target, struct TsProgram **out);

/**
 * The target's program text, without a trailing NUL.
 *
 * # Safety
 * Pointers must be valid.
 */
enum TsStatus ts_target_source(const struct TsTarget *target, struct TsBytes **out);

/**
 * The answer-key input for the `index`-th bug, and that bug's id.
 *
 * # Safety
 * Pointers must be valid.
 */
enum TsStatus ts_target_answer(const struct TsTarget *target,
                               uintptr_t index,
                               uint32_t *bug_out,
                               struct TsBytes **input_out);

/**
 * # Safety
 * `b` must be null or a live handle.
 */
uintptr_t ts_bytes_len(const struct TsBytes *b);

/**
 * Pointer to the buffer contents, valid until `ts_bytes_free`.
 *
 * # Safety
 * `b` must be null or a live handle.
 */
const uint8_t *ts_bytes_data(const struct TsBytes *b);

/**
 * # Safety
 * `b` must come from this library and not be used afterwards.
 */
void ts_bytes_free(struct TsBytes *b);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TAINTSYNTH_H */
