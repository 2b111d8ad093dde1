#ifndef E3B_H
#define E3B_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum E3bStatus {
  E3B_STATUS_OK = 0,
  E3B_STATUS_NULL_POINTER = 1,
  E3B_STATUS_INVALID_ARGUMENT = 2,
  E3B_STATUS_NUMERIC = 3,
  E3B_STATUS_CONTRACT = 4,
  E3B_STATUS_GENERATION = 5,
  E3B_STATUS_CONFIG = 6,
  E3B_STATUS_IO = 7,
  E3B_STATUS_BUFFER_TOO_SMALL = 8,
  E3B_STATUS_PANIC = 9,
} E3bStatus;

/*
 Opaque gridworld plus its latest observation.
 */
typedef struct E3bEnv E3bEnv;

/*
 Opaque inverse-covariance tracker.
 */
typedef struct E3bTracker E3bTracker;

/*
 Observation summary.
 */
typedef struct E3bObservation {
  uint32_t x;
  uint32_t y;
  uint32_t t;
  uint8_t message;
  bool carrying;
} E3bObservation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the calling thread's last error message into `buf` (NUL-terminated,
 truncated to `len`). Returns the full message length in bytes.

 # Safety
 `buf` must be null or valid for `len` bytes.
 */
uintptr_t e3b_last_error(char *buf, uintptr_t len);

/*
 Creates a tracker with `C⁻¹ = I/ridge`.

 # Safety
 `out_tracker` must be valid for one write.
 */
enum E3bStatus e3b_tracker_new(uintptr_t dim, double ridge, struct E3bTracker **out_tracker);

/*
 Releases a tracker. Null is a no-op.

 # Safety
 `tracker` must come from [`e3b_tracker_new`] and not be used afterwards.
 */
void e3b_tracker_free(struct E3bTracker *tracker);

/*
 Restores `C⁻¹ = I/ridge`.

 # Safety
 `tracker` must be a live handle or null.
 */
enum E3bStatus e3b_tracker_reset(struct E3bTracker *tracker);

/*
 Bonus `φᵀC⁻¹φ` without changing the tracker.

 # Safety
 `phi` must be valid for `len` reads, `out_bonus` for one write.
 */
enum E3bStatus e3b_tracker_bonus(const struct E3bTracker *tracker,
                                 const double *phi,
                                 uintptr_t len,
                                 double *out_bonus);

/*
 Absorbs `φ`; writes the bonus it had before the update.

 # Safety
 `phi` must be valid for `len` reads, `out_bonus` for one write.
 */
enum E3bStatus e3b_tracker_update(struct E3bTracker *tracker,
                                  const double *phi,
                                  uintptr_t len,
                                  double *out_bonus);

/*
 Number of updates since creation or the last reset.

 # Safety
 `tracker` must be a live handle or null; `out_count` valid for one write.
 */
enum E3bStatus e3b_tracker_count(const struct E3bTracker *tracker, uint64_t *out_count);

/*
 Copies the row-major `dim×dim` inverse covariance into `buf`.

 # Safety
 `buf` must be valid for `len` writes.
 */
enum E3bStatus e3b_tracker_inv_cov(const struct E3bTracker *tracker, double *buf, uintptr_t len);

/*
 Creates an environment from a spec string such as `multiroom-r3-s13-timer`.

 # Safety
 `spec` must be a NUL-terminated string; `out_env` valid for one write.
 */
enum E3bStatus e3b_env_new(const char *spec, uint64_t noise_seed, struct E3bEnv **out_env);

/*
 Releases an environment. Null is a no-op.

 # Safety
 `env` must come from [`e3b_env_new`] and not be used afterwards.
 */
void e3b_env_free(struct E3bEnv *env);

/*
 Length of the dense network input written by [`e3b_env_input`].

 # Safety
 `env` must be a live handle or null; `out_dim` valid for one write.
 */
enum E3bStatus e3b_env_input_dim(const struct E3bEnv *env, uintptr_t *out_dim);

/*
 Starts an episode in the context with the given seed.

 # Safety
 `env` must be a live handle; `out_obs` null or valid for one write.
 */
enum E3bStatus e3b_env_reset(struct E3bEnv *env,
                             uint64_t context_seed,
                             struct E3bObservation *out_obs);

/*
 Takes action `0..5` (up, down, left, right, interact).

 # Safety
 `env` must be a live handle; output pointers null or valid for one write.
 */
enum E3bStatus e3b_env_step(struct E3bEnv *env,
                            uint32_t action,
                            struct E3bObservation *out_obs,
                            double *out_reward,
                            bool *out_done);

/*
 Writes the dense network input of the latest observation into `buf`.

 # Safety
 `buf` must be valid for `len` writes.
 */
enum E3bStatus e3b_env_input(const struct E3bEnv *env, double *buf, uintptr_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* E3B_H */
