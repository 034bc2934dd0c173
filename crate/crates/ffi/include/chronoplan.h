#ifndef CHRONOPLAN_H
#define CHRONOPLAN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ChronoRule {
  CHRONO_RULE_MAX = 0,
  CHRONO_RULE_SUM = 1,
} ChronoRule;

typedef enum ChronoHeuristic {
  CHRONO_HEURISTIC_DIRECT = 0,
  CHRONO_HEURISTIC_RELAXED_PLAN = 1,
} ChronoHeuristic;

typedef enum ChronoStatus {
  CHRONO_STATUS_OK = 0,
  CHRONO_STATUS_NULL_ARGUMENT = 1,
  CHRONO_STATUS_INVALID_UTF8 = 2,
  CHRONO_STATUS_PARSE_ERROR = 3,
  CHRONO_STATUS_INVALID_CONFIG = 4,
  CHRONO_STATUS_UNSOLVABLE = 5,
  CHRONO_STATUS_LIMIT_REACHED = 6,
  CHRONO_STATUS_INVALID_PLAN = 7,
  CHRONO_STATUS_OUT_OF_RANGE = 8,
  CHRONO_STATUS_INTERNAL = 9,
} ChronoStatus;

/**
 * Order-constrained form of a solution.
 */
typedef struct ChronoOrderPlan ChronoOrderPlan;

/**
 * A grounded problem with the metric's action costs applied.
 */
typedef struct ChronoProblem ChronoProblem;

typedef struct ChronoSolution ChronoSolution;

/**
 * Search settings. `lookahead < 0` propagates to the fixpoint;
 * `timeout_seconds <= 0` and `max_expansions == 0` mean no limit.
 */
typedef struct ChronoConfig {
  double alpha;
  int32_t lookahead;
  enum ChronoRule propagation;
  enum ChronoRule aggregation;
  enum ChronoHeuristic heuristic;
  bool mutex_adjust;
  bool resource_adjust;
  double timeout_seconds;
  uint64_t max_expansions;
} ChronoConfig;

/**
 * One scheduled action of a solution.
 */
typedef struct ChronoStep {
  uint32_t action;
  double start;
  double duration;
} ChronoStep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *chrono_last_error(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void chrono_string_free(char *s);

/**
 * Defaults: fixpoint propagation, sum rule, relaxed plan, resource
 * adjustment on, 300 s timeout.
 */
struct ChronoConfig chrono_config_default(double alpha);

/**
 * Parses and grounds a domain and problem given as PDDL text.
 *
 * # Safety
 * `domain` and `problem` must be NUL-terminated strings; `out` must be
 * writable.
 */
enum ChronoStatus chrono_problem_parse(const char *domain,
                                       const char *problem,
                                       struct ChronoProblem **out);

/**
 * # Safety
 * `p` must be NULL or a handle from [`chrono_problem_parse`] not yet freed.
 */
void chrono_problem_free(struct ChronoProblem *p);

/**
 * Alpha implied by the problem's metric, 1.0 without one.
 *
 * # Safety
 * `p` must be a live problem handle.
 */
double chrono_problem_default_alpha(const struct ChronoProblem *p);

/**
 * # Safety
 * `p` must be a live problem handle.
 */
uintptr_t chrono_problem_action_count(const struct ChronoProblem *p);

/**
 * Label `(name args...)` of ground action `index`; free with
 * [`chrono_string_free`]. NULL when out of range.
 *
 * # Safety
 * `p` must be a live problem handle.
 */
char *chrono_problem_action_label(const struct ChronoProblem *p, uint32_t index);

/**
 * Searches for a plan.
 *
 * # Safety
 * `p` and `config` must be valid; `out` must be writable.
 */
enum ChronoStatus chrono_plan(const struct ChronoProblem *p,
                              const struct ChronoConfig *config,
                              struct ChronoSolution **out);

/**
 * # Safety
 * `s` must be NULL or a handle from [`chrono_plan`] not yet freed.
 */
void chrono_solution_free(struct ChronoSolution *s);

/**
 * # Safety
 * `s` must be a live solution handle.
 */
double chrono_solution_cost(const struct ChronoSolution *s);

/**
 * # Safety
 * `s` must be a live solution handle.
 */
double chrono_solution_makespan(const struct ChronoSolution *s);

/**
 * # Safety
 * `s` must be a live solution handle.
 */
uintptr_t chrono_solution_expanded(const struct ChronoSolution *s);

/**
 * # Safety
 * `s` must be a live solution handle.
 */
uintptr_t chrono_solution_step_count(const struct ChronoSolution *s);

/**
 * Step `index` in the order actions were started.
 *
 * # Safety
 * `s` must be a live solution handle and `out` writable.
 */
enum ChronoStatus chrono_solution_step(const struct ChronoSolution *s,
                                       uintptr_t index,
                                       struct ChronoStep *out);

/**
 * The plan as `start: (action) [duration]` lines; free with
 * [`chrono_string_free`].
 *
 * # Safety
 * `p` and `s` must be live handles, `s` solved from `p`.
 */
char *chrono_solution_to_text(const struct ChronoProblem *p, const struct ChronoSolution *s);

/**
 * Lifts a solution to an order-constrained plan.
 *
 * # Safety
 * `p` and `s` must be live handles, `s` solved from `p`; `out` writable.
 */
enum ChronoStatus chrono_partialize(const struct ChronoProblem *p,
                                    const struct ChronoSolution *s,
                                    struct ChronoOrderPlan **out);

/**
 * # Safety
 * `o` must be NULL or a handle from [`chrono_partialize`] not yet freed.
 */
void chrono_order_plan_free(struct ChronoOrderPlan *o);

/**
 * Makespan of the earliest dispatch.
 *
 * # Safety
 * `o` must be a live handle.
 */
double chrono_order_plan_makespan(const struct ChronoOrderPlan *o);

/**
 * # Safety
 * `o` must be a live handle.
 */
uintptr_t chrono_order_plan_link_count(const struct ChronoOrderPlan *o);

/**
 * # Safety
 * `o` must be a live handle.
 */
uintptr_t chrono_order_plan_ordering_count(const struct ChronoOrderPlan *o);

/**
 * Graphviz rendering; free with [`chrono_string_free`].
 *
 * # Safety
 * `p` and `o` must be live handles, `o` built from a solution of `p`.
 */
char *chrono_order_plan_to_dot(const struct ChronoProblem *p, const struct ChronoOrderPlan *o);

/**
 * Replays a plan written as `start: (action) [duration]` lines. On
 * success `makespan` and `cost` (each may be NULL) receive the results.
 *
 * # Safety
 * `p` must be a live handle and `plan_text` NUL-terminated.
 */
enum ChronoStatus chrono_validate(const struct ChronoProblem *p,
                                  const char *plan_text,
                                  double *makespan,
                                  double *cost);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHRONOPLAN_H */
