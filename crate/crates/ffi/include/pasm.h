#ifndef PASM_H
#define PASM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Result code of every fallible call.
 */
typedef enum PasmStatus {
  PASM_STATUS_OK = 0,
  PASM_STATUS_NULL_POINTER = 1,
  PASM_STATUS_INVALID_ARGUMENT = 2,
  PASM_STATUS_DIMENSION_MISMATCH = 3,
  PASM_STATUS_INVALID_CONFIG = 4,
  PASM_STATUS_EPISODE_FINISHED = 5,
  PASM_STATUS_SECOND_MOMENT_BOUND = 6,
  PASM_STATUS_IO = 7,
  PASM_STATUS_PANIC = 8,
} PasmStatus;

/*
 A V2X environment. Create with `pasm_env_new*`, release with `pasm_env_free`.
 */
typedef struct PasmEnv PasmEnv;

/*
 PASM server state (consensus parameters and second moment).
 */
typedef struct PasmServer PasmServer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. Valid until the
 next failing call on the same thread.
 */
const char *pasm_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *pasm_version(void);

/*
 Environment with the default configuration for `scenario` (1 or 2).

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum PasmStatus pasm_env_new(uint8_t scenario,
                             uint64_t seed,
                             uint64_t drop_index,
                             struct PasmEnv **out);

/*
 Environment from a TOML configuration (same schema as the CLI). The
 seed and scenario come from the config.

 # Safety
 `config` must be a NUL-terminated string; `out` as in `pasm_env_new`.
 */
enum PasmStatus pasm_env_new_from_toml(const char *config,
                                       uint64_t drop_index,
                                       struct PasmEnv **out);

/*
 Release an environment; NULL is ignored.

 # Safety
 `env` must come from `pasm_env_new*` and not be used afterwards.
 */
void pasm_env_free(struct PasmEnv *env);

/*
 Agents, actions per agent, observation length and slots per episode.

 # Safety
 All pointers must be valid.
 */
enum PasmStatus pasm_env_dims(const struct PasmEnv *env,
                              uintptr_t *agents,
                              uintptr_t *actions,
                              uintptr_t *observation_len,
                              uintptr_t *horizon);

/*
 Start a new episode. Required before the first step.

 # Safety
 `env` must be a valid handle.
 */
enum PasmStatus pasm_env_reset(struct PasmEnv *env);

/*
 Copy agent `agent`'s observation into `out` (`len` must equal the
 observation length).

 # Safety
 `out` must hold `len` doubles.
 */
enum PasmStatus pasm_env_observe(const struct PasmEnv *env,
                                 uintptr_t agent,
                                 double *out,
                                 uintptr_t len);

/*
 Apply one joint action (`n` must equal the number of agents).

 # Safety
 `actions` must hold `n` entries; `reward` and `done` must be valid.
 */
enum PasmStatus pasm_env_step(struct PasmEnv *env,
                              const uintptr_t *actions,
                              uintptr_t n,
                              double *reward,
                              bool *done);

/*
 Delivery rate (scenario 1) or mean weighted rate in Mbit/s (scenario 2)
 of the current episode.

 # Safety
 Pointers must be valid.
 */
enum PasmStatus pasm_env_episode_metric(const struct PasmEnv *env, double *out);

/*
 `out = theta_c - (lambda + g) / (rho + r_k)`.

 # Safety
 Every buffer must hold `len` doubles.
 */
enum PasmStatus pasm_local_update(const double *theta_c,
                                  const double *lambda,
                                  const double *g,
                                  uintptr_t len,
                                  double rho,
                                  double r_k,
                                  double *out);

/*
 `out = lambda + rho (theta_k - theta_c)`.

 # Safety
 Every buffer must hold `len` doubles.
 */
enum PasmStatus pasm_dual_update(const double *lambda,
                                 const double *theta_k,
                                 const double *theta_c,
                                 uintptr_t len,
                                 double rho,
                                 double *out);

/*
 `out = beta v + (1/k) sum (1 - beta) lambda_i^2`; `lambdas` is `k x len`.

 # Safety
 `v` and `out` hold `len` doubles, `lambdas` holds `k * len`.
 */
enum PasmStatus pasm_second_moment(const double *v,
                                   const double *lambdas,
                                   uintptr_t k,
                                   uintptr_t len,
                                   double beta,
                                   double *out);

/*
 `out = theta_k + lambda / (rho (sqrt(v) + epsilon))`.

 # Safety
 Every buffer must hold `len` doubles.
 */
enum PasmStatus pasm_upload(const double *theta_k,
                            const double *lambda,
                            const double *v,
                            uintptr_t len,
                            double rho,
                            double epsilon,
                            double *out);

/*
 Elementwise mean of the `k x len` matrix `uploads`.

 # Safety
 `uploads` holds `k * len` doubles, `out` holds `len`.
 */
enum PasmStatus pasm_aggregate(const double *uploads, uintptr_t k, uintptr_t len, double *out);

/*
 Server with consensus parameters `theta0` and a zero second moment.

 # Safety
 `theta0` holds `len` doubles; `out` is valid.
 */
enum PasmStatus pasm_server_new(const double *theta0,
                                uintptr_t len,
                                double rho,
                                double epsilon,
                                double beta,
                                struct PasmServer **out);

/*
 Release a server; NULL is ignored.

 # Safety
 `server` must come from `pasm_server_new` and not be used afterwards.
 */
void pasm_server_free(struct PasmServer *server);

/*
 Length of the parameter vectors the server handles.

 # Safety
 Pointers must be valid.
 */
enum PasmStatus pasm_server_len(const struct PasmServer *server, uintptr_t *len);

/*
 Copy the current consensus parameters into `out`.

 # Safety
 `out` holds `len` doubles.
 */
enum PasmStatus pasm_server_theta_c(const struct PasmServer *server, double *out, uintptr_t len);

/*
 Aggregate one round of uploads: `thetas` and `lambdas` are `k x len`
 matrices of the agents' updated primal and dual variables.

 # Safety
 `thetas` and `lambdas` hold `k * len` doubles.
 */
enum PasmStatus pasm_server_aggregate(struct PasmServer *server,
                                      const double *thetas,
                                      const double *lambdas,
                                      uintptr_t k,
                                      uintptr_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PASM_H */
