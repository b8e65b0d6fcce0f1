#ifndef CPREP_H
#define CPREP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CprepStatus {
  CPREP_STATUS_OK = 0,
  CPREP_STATUS_NULL_POINTER = 1,
  CPREP_STATUS_INVALID_UTF8 = 2,
  CPREP_STATUS_PARSE = 3,
  CPREP_STATUS_INVALID_ARGUMENT = 4,
  CPREP_STATUS_PLANNING = 5,
  CPREP_STATUS_TERMINATED = 6,
  CPREP_STATUS_BUFFER_TOO_SMALL = 7,
  CPREP_STATUS_INTERNAL = 8,
} CprepStatus;

// Optimal values and greedy transitions of a reward machine.
typedef struct CprepPlan CprepPlan;

// A parsed reward machine.
typedef struct CprepRewardMachine CprepRewardMachine;

// One gridworld task with an episode in progress.
typedef struct CprepTask CprepTask;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *cprep_version(void);

// Message of the last failed call on this thread (empty if none). The
// pointer stays valid until the next failing call on the same thread.
const char *cprep_last_error(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must come from this library and not have been freed.
void cprep_string_free(char *s);

// Parses reward-machine text into a new handle.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum CprepStatus cprep_rm_parse(const char *text, struct CprepRewardMachine **out);

// # Safety
// `rm` must come from [`cprep_rm_parse`] and not have been freed.
void cprep_rm_free(struct CprepRewardMachine *rm);

// Number of states (0 for a null handle).
//
// # Safety
// `rm` must be null or a live handle.
size_t cprep_rm_num_states(const struct CprepRewardMachine *rm);

// Number of propositional symbols (0 for a null handle).
//
// # Safety
// `rm` must be null or a live handle.
size_t cprep_rm_num_symbols(const struct CprepRewardMachine *rm);

// # Safety
// `rm` and `out` must be valid pointers.
enum CprepStatus cprep_rm_initial_state(const struct CprepRewardMachine *rm, size_t *out);

// # Safety
// `rm` and `out` must be valid pointers.
enum CprepStatus cprep_rm_is_terminal(const struct CprepRewardMachine *rm,
                                      size_t state_index,
                                      bool *out);

// Index of the state called `name`.
//
// # Safety
// Pointers must be valid; `name` NUL-terminated.
enum CprepStatus cprep_rm_state_index(const struct CprepRewardMachine *rm,
                                      const char *name,
                                      size_t *out);

// Index of the symbol called `name`.
//
// # Safety
// Pointers must be valid; `name` NUL-terminated.
enum CprepStatus cprep_rm_symbol_index(const struct CprepRewardMachine *rm,
                                       const char *name,
                                       size_t *out);

// Applies the first matching transition of `state_index` for a label given
// as one byte per symbol (non-zero = true).
//
// # Safety
// `label` must hold `label_len` bytes; output pointers must be valid.
enum CprepStatus cprep_rm_step(const struct CprepRewardMachine *rm,
                               size_t state_index,
                               const uint8_t *label_bits,
                               size_t label_len,
                               size_t *out_next,
                               double *out_reward);

// Graphviz DOT text, or null on failure. Free with [`cprep_string_free`].
//
// # Safety
// `rm` must be null or a live handle.
char *cprep_rm_to_dot(const struct CprepRewardMachine *rm);

// Canonical text form, or null on failure. Free with [`cprep_string_free`].
//
// # Safety
// `rm` must be null or a live handle.
char *cprep_rm_serialize(const struct CprepRewardMachine *rm);

// Solves the machine for discount `gamma`. The plan keeps its own copy of
// the machine.
//
// # Safety
// `rm` and `out` must be valid pointers.
enum CprepStatus cprep_plan_new(const struct CprepRewardMachine *rm,
                                double gamma,
                                struct CprepPlan **out);

// # Safety
// `plan` must come from [`cprep_plan_new`] and not have been freed.
void cprep_plan_free(struct CprepPlan *plan);

// Writes the optimal value of every state into `out` (`len` >= states).
//
// # Safety
// `out` must hold `len` doubles.
enum CprepStatus cprep_plan_values(const struct CprepPlan *plan, double *out, size_t len);

// Writes the desired label of `state_index` (one byte per symbol) into `out`;
// the first optimal transition is used, and terminal states give all zeros.
//
// # Safety
// `out` must hold `len` bytes.
enum CprepStatus cprep_plan_desired_label(const struct CprepPlan *plan,
                                          size_t state_index,
                                          uint8_t *out,
                                          size_t len);

// Machine reward plus potential shaping for one step from `state_index`.
//
// # Safety
// `label` must hold `label_len` bytes; `out` must be valid.
enum CprepStatus cprep_plan_shaped_reward(const struct CprepPlan *plan,
                                          size_t state_index,
                                          const uint8_t *label_bits,
                                          size_t label_len,
                                          double *out);

// Mean time to threshold of an evenly spaced learning curve over a grid of
// `threshold_points` thresholds in [0, 1].
//
// # Safety
// `returns` must hold `n` doubles; `out` must be valid.
enum CprepStatus cprep_ttt_auc(const double *returns,
                               size_t n,
                               size_t threshold_points,
                               double *out);

// Interquartile mean.
//
// # Safety
// `values` must hold `n` doubles; `out` must be valid.
enum CprepStatus cprep_iqm(const double *values, size_t n, double *out);

// Transfer ratio of two curves of equal length; `out_infinite` is set when
// the from-scratch curve has zero area (and `out_value` is then 0).
//
// # Safety
// Both curves must hold `n` doubles; output pointers must be valid.
enum CprepStatus cprep_transfer_ratio(const double *transferred,
                                      const double *target,
                                      size_t n,
                                      double *out_value,
                                      bool *out_infinite);

// Creates a 6x6 task of environment kind `env` ("GN", "MP", "PD", "ON")
// from a JSON context such as `{"space":"EL","payload":[{"row":5,"col":5}]}`.
// `seed` drives episode start positions.
//
// # Safety
// Strings must be NUL-terminated; `out` must be valid.
enum CprepStatus cprep_task_new(const char *env,
                                const char *context_json,
                                uint64_t seed,
                                struct CprepTask **out);

// # Safety
// `task` must come from [`cprep_task_new`] and not have been freed.
void cprep_task_free(struct CprepTask *task);

// Number of discrete actions (0 for a null handle).
//
// # Safety
// `task` must be null or a live handle.
size_t cprep_task_num_actions(const struct CprepTask *task);

// Length of the state feature vector (0 for a null handle).
//
// # Safety
// `task` must be null or a live handle.
size_t cprep_task_state_width(const struct CprepTask *task);

// Starts a new episode at a random non-entity cell; writes the start cell's
// row-major index.
//
// # Safety
// Pointers must be valid.
enum CprepStatus cprep_task_reset(struct CprepTask *task, size_t *out_cell);

// Takes action `action` in the current episode.
//
// # Safety
// Pointers must be valid.
enum CprepStatus cprep_task_step(struct CprepTask *task,
                                 size_t action,
                                 double *out_reward,
                                 bool *out_done,
                                 bool *out_truncated);

// Writes the current state features (cell one-hot then entity status).
//
// # Safety
// `out` must hold `len` doubles.
enum CprepStatus cprep_task_state_features(const struct CprepTask *task, double *out, size_t len);

// ASCII picture of the task with the agent, or null on failure. Free with
// [`cprep_string_free`].
//
// # Safety
// `task` must be null or a live handle.
char *cprep_task_render(const struct CprepTask *task);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CPREP_H */
