#ifndef RMPLAN_H
#define RMPLAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RmplanStatus {
  RMPLAN_STATUS_OK = 0,
  RMPLAN_STATUS_NULL_POINTER = 1,
  RMPLAN_STATUS_INVALID_UTF8 = 2,
  RMPLAN_STATUS_INVALID_ARGUMENT = 3,
  RMPLAN_STATUS_INVALID_ACTION = 4,
  RMPLAN_STATUS_TERMINAL = 5,
  RMPLAN_STATUS_PARSE = 6,
  RMPLAN_STATUS_IO = 7,
  RMPLAN_STATUS_DIMENSION_MISMATCH = 8,
  RMPLAN_STATUS_PANIC = 99,
} RmplanStatus;

/**
 * A Game of 24 episode: the environment plus the trajectory so far.
 */
typedef struct RmplanGame24 RmplanGame24;

/**
 * A loaded linear reward model.
 */
typedef struct RmplanRewardModel RmplanRewardModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *rmplan_last_error(void);

/**
 * Library version, statically allocated.
 */
const char *rmplan_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void rmplan_string_free(char *s);

/**
 * Starts an episode on the puzzle `numbers[0..len]` (four integers in 1..=13).
 *
 * # Safety
 * `numbers` must point to `len` readable integers; `out` must be writable.
 */
enum RmplanStatus rmplan_game24_new(const int64_t *numbers, size_t len, struct RmplanGame24 **out);

/**
 * # Safety
 * `game` must be null or a handle from `rmplan_game24_new` not yet freed.
 */
void rmplan_game24_free(struct RmplanGame24 *game);

/**
 * Applies `action` and writes the observation to `*observation` (free it
 * with `rmplan_string_free`). Unparseable steps are answered with the
 * invalid-action observation like any other step; only a finished or
 * full-length episode is refused.
 *
 * # Safety
 * `game` must be a live handle, `action` a NUL-terminated string and
 * `observation` writable.
 */
enum RmplanStatus rmplan_game24_step(struct RmplanGame24 *game_ptr,
                                     const char *action,
                                     char **observation);

/**
 * # Safety
 * `game` must be a live handle and `out` writable.
 */
enum RmplanStatus rmplan_game24_is_terminal(struct RmplanGame24 *game_ptr, bool *out);

/**
 * Oracle reward of the current state: 1 at 24, 0 otherwise.
 *
 * # Safety
 * `game` must be a live handle and `out` writable.
 */
enum RmplanStatus rmplan_game24_reward(struct RmplanGame24 *game_ptr, double *out);

/**
 * Legal steps from the current state as a JSON array of strings.
 *
 * # Safety
 * `game` must be a live handle and `out` writable.
 */
enum RmplanStatus rmplan_game24_valid_actions(struct RmplanGame24 *game_ptr, char **out);

/**
 * The episode so far as one JSON line.
 *
 * # Safety
 * `game` must be a live handle and `out` writable.
 */
enum RmplanStatus rmplan_game24_trajectory(struct RmplanGame24 *game_ptr, char **out);

/**
 * Decides solvability. When solvable and `witness` is non-null, writes the
 * three solving steps as a JSON array of strings; otherwise writes null.
 *
 * # Safety
 * `numbers` must point to `len` readable integers; `solvable` must be
 * writable; `witness` may be null.
 */
enum RmplanStatus rmplan_game24_solve(const int64_t *numbers,
                                      size_t len,
                                      bool *solvable,
                                      char **witness);

/**
 * Checks a trajectory JSON line: it must parse and hold at most
 * `max_actions` steps.
 *
 * # Safety
 * `json` must be a NUL-terminated string.
 */
enum RmplanStatus rmplan_trajectory_validate(const char *json, size_t max_actions);

/**
 * Loads a model file, verifying its digest.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum RmplanStatus rmplan_reward_model_load(const char *path, struct RmplanRewardModel **out);

/**
 * # Safety
 * `model` must be null or a handle from `rmplan_reward_model_load` not yet freed.
 */
void rmplan_reward_model_free(struct RmplanRewardModel *model);

/**
 * Feature dimension of the model.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum RmplanStatus rmplan_reward_model_dim(const struct RmplanRewardModel *model, size_t *out);

/**
 * Scores a trajectory given as one JSON line.
 *
 * # Safety
 * `model` must be a live handle, `trajectory_json` a NUL-terminated string
 * and `out` writable.
 */
enum RmplanStatus rmplan_reward_model_score(const struct RmplanRewardModel *model,
                                            const char *trajectory_json,
                                            double *out);

/**
 * Pairwise loss `-ln σ(delta)` for a score difference `delta = r+ - r-`.
 */
double rmplan_pairwise_loss(double delta);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RMPLAN_H */
