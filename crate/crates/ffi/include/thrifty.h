#ifndef THRIFTY_FFI_H
#define THRIFTY_FFI_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum ThriftyStatus {
  THRIFTY_STATUS_OK = 0,
  THRIFTY_STATUS_NULL_POINTER = 1,
  THRIFTY_STATUS_INVALID_ARGUMENT = 2,
  THRIFTY_STATUS_IO = 3,
  THRIFTY_STATUS_FORMAT = 4,
  THRIFTY_STATUS_VERSION_MISMATCH = 5,
  THRIFTY_STATUS_WRONG_KIND = 6,
  THRIFTY_STATUS_DIMENSION_MISMATCH = 7,
  THRIFTY_STATUS_PANIC = 8,
} ThriftyStatus;

/**
 * Cause reported by `thrifty_gate_intervene`.
 */
typedef enum ThriftySwitchCause {
  THRIFTY_SWITCH_CAUSE_NONE = 0,
  THRIFTY_SWITCH_CAUSE_NOVELTY = 1,
  THRIFTY_SWITCH_CAUSE_RISK = 2,
} ThriftySwitchCause;

typedef struct ThriftyCritic ThriftyCritic;

/**
 * Bottleneck environment plus its own seeded random stream.
 */
typedef struct ThriftyEnv ThriftyEnv;

/**
 * Owns copies of the policy and critic it was built from.
 */
typedef struct ThriftyGate ThriftyGate;

typedef struct ThriftyPolicy ThriftyPolicy;

typedef struct ThriftyThresholds {
  double risk_intervene;
  double risk_cede;
  double novelty_intervene;
  double discrepancy_cede;
  double budget;
} ThriftyThresholds;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length excluding the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t thrifty_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *thrifty_version(void);

/**
 * Creates an environment. `config_json` may be null for the default arena.
 *
 * # Safety
 * `config_json` must be null or a NUL-terminated string; `out` must be valid.
 */
enum ThriftyStatus thrifty_env_new(const char *config_json, uint64_t seed, struct ThriftyEnv **out);

/**
 * # Safety
 * `env` must be null or a handle from `thrifty_env_new` not yet freed.
 */
void thrifty_env_free(struct ThriftyEnv *env);

/**
 * Samples a start state into `out_state[2]`.
 *
 * # Safety
 * Pointers must be valid; `out_state` must hold two doubles.
 */
enum ThriftyStatus thrifty_env_reset(struct ThriftyEnv *env, double *out_state);

/**
 * Advances one step from `state[2]` with `action[2]`.
 *
 * # Safety
 * Pointers must be valid; arrays hold two doubles.
 */
enum ThriftyStatus thrifty_env_step(struct ThriftyEnv *env,
                                    const double *state,
                                    const double *action,
                                    double *out_next_state,
                                    bool *out_reached_goal);

/**
 * # Safety
 * Pointers must be valid; `state` holds two doubles.
 */
enum ThriftyStatus thrifty_env_in_goal(const struct ThriftyEnv *env,
                                       const double *state,
                                       bool *out);

/**
 * Loads a policy-ensemble checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
enum ThriftyStatus thrifty_policy_load(const char *path, struct ThriftyPolicy **out);

/**
 * # Safety
 * `policy` must be null or a live handle.
 */
void thrifty_policy_free(struct ThriftyPolicy *policy);

/**
 * Ensemble-mean action and its novelty at `state[2]`. `out_novelty` may be null.
 *
 * # Safety
 * Pointers must be valid; arrays hold two doubles.
 */
enum ThriftyStatus thrifty_policy_act(const struct ThriftyPolicy *policy,
                                      const double *state,
                                      double *out_action,
                                      double *out_novelty);

/**
 * Loads a critic checkpoint, including any gate thresholds stored with it.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
enum ThriftyStatus thrifty_critic_load(const char *path, struct ThriftyCritic **out);

/**
 * # Safety
 * `critic` must be null or a live handle.
 */
void thrifty_critic_free(struct ThriftyCritic *critic);

/**
 * Risk `1 - Q(s, a)`.
 *
 * # Safety
 * Pointers must be valid; arrays hold two doubles.
 */
enum ThriftyStatus thrifty_critic_risk(const struct ThriftyCritic *critic,
                                       const double *state,
                                       const double *action,
                                       double *out_risk);

/**
 * Builds a gate from a policy and a critic. With `thresholds` null, the
 * thresholds saved in the critic checkpoint are used.
 *
 * # Safety
 * Handles must be live; `thresholds` may be null; `out` must be valid.
 */
enum ThriftyStatus thrifty_gate_new(const struct ThriftyPolicy *policy,
                                    const struct ThriftyCritic *critic,
                                    const struct ThriftyThresholds *thresholds,
                                    struct ThriftyGate **out);

/**
 * # Safety
 * `gate` must be null or a live handle.
 */
void thrifty_gate_free(struct ThriftyGate *gate);

/**
 * # Safety
 * Pointers must be valid.
 */
enum ThriftyStatus thrifty_gate_thresholds(const struct ThriftyGate *gate,
                                           struct ThriftyThresholds *out);

/**
 * Whether the robot should hand control to the supervisor at `state[2]`.
 *
 * # Safety
 * Pointers must be valid; `state` holds two doubles.
 */
enum ThriftyStatus thrifty_gate_intervene(const struct ThriftyGate *gate,
                                          const double *state,
                                          enum ThriftySwitchCause *out_cause);

/**
 * Whether control returns to the robot after the supervisor chose
 * `human_action[2]` at `state[2]`.
 *
 * # Safety
 * Pointers must be valid; arrays hold two doubles.
 */
enum ThriftyStatus thrifty_gate_cede(const struct ThriftyGate *gate,
                                     const double *state,
                                     const double *human_action,
                                     bool *out_cede);

/**
 * Nearest-rank quantile of `values[0..len]`.
 *
 * # Safety
 * `values` must point to `len` doubles; `out` must be valid.
 */
enum ThriftyStatus thrifty_nearest_rank_quantile(const double *values,
                                                 size_t len,
                                                 double q,
                                                 double *out);

/**
 * Supervisor burden `switches * (latency + intervention_length)`.
 *
 * # Safety
 * `out` must be valid.
 */
enum ThriftyStatus thrifty_burden(double switches,
                                  double intervention_length,
                                  double latency,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THRIFTY_FFI_H */
