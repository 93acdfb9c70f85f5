#ifndef REASON_CAPI_H
#define REASON_CAPI_H

/* C interface to the accelerator toolchain. All functions that can fail
 * return a reason_status; on failure the context keeps a human-readable
 * message retrievable with reason_last_error(). Strings returned through
 * char** out-parameters are heap-allocated and must be released with
 * reason_free(). Handles are opaque and freed with their _free function.
 *
 * JSON argument conventions:
 *   assignment  {"1": 0, "2": 1}            variable id -> value
 *   dataset     [assignment, ...]
 *   budget      {"edge_count": 4} or {"flow_threshold": 0.01}
 *   matrix      {"rows": R, "cols": C, "entries": [[r, c, v], ...]}
 */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct reason_ctx_t reason_ctx;
typedef struct reason_dag_t reason_dag;
typedef struct reason_program_t reason_program;

typedef enum reason_status {
  REASON_OK = 0,
  REASON_ERR_INVALID_ARGUMENT = 1, /* bad handle, null pointer, bad enum */
  REASON_ERR_PARSE = 2,            /* malformed input text / JSON */
  REASON_ERR_INVARIANT = 3,        /* validation or hazard check failed */
  REASON_ERR_RESOURCE = 4,         /* capacity exhausted (regs, SRAM, budget) */
  REASON_ERR_BUSY = 5,             /* batch slot already executing */
  REASON_ERR_INTERNAL = 6
} reason_status;

const char* reason_version(void);

reason_ctx* reason_ctx_create(void);
void reason_ctx_destroy(reason_ctx* ctx);
/* Message from the most recent failing call on this context. Owned by the
 * context; valid until the next call on it. */
const char* reason_last_error(const reason_ctx* ctx);
void reason_free(char* s);

/* ---- construction and lowering ---- */

reason_status reason_dag_parse(reason_ctx* ctx, const char* text, reason_dag** out);
reason_status reason_dag_from_pc_text(reason_ctx* ctx, const char* text, reason_dag** out);
reason_status reason_dag_from_hmm_json(reason_ctx* ctx, const char* text, reason_dag** out);
reason_status reason_dag_from_dimacs(reason_ctx* ctx, const char* text, reason_dag** out);
void reason_dag_free(reason_dag* dag);

reason_status reason_dag_serialize(reason_ctx* ctx, const reason_dag* dag, char** out_text);
/* {"ok": bool, "violations": [{"node", "rule", "detail"}, ...]} */
reason_status reason_dag_validate(reason_ctx* ctx, const reason_dag* dag, char** out_json);
/* {"kernel", "nodes", "edges", "depth", "max_fan_in", "smooth", "decomposable"} */
reason_status reason_dag_stats(reason_ctx* ctx, const reason_dag* dag, char** out_json);
reason_status reason_dag_regularize(reason_ctx* ctx, const reason_dag* dag, reason_dag** out);
reason_status reason_dag_evaluate(reason_ctx* ctx, const reason_dag* dag,
                                  const char* assignment_json, int allow_marginalize,
                                  double* out_value);

/* ---- pruning ---- */

reason_status reason_prune_flow(reason_ctx* ctx, const reason_dag* dag,
                                const char* dataset_json, const char* budget_json,
                                reason_dag** out_dag, char** out_report_json);
reason_status reason_prune_literals(reason_ctx* ctx, const char* dimacs_text,
                                    char** out_dimacs, char** out_report_json);
/* dataset: [[obs, ...], ...] observation sequences */
reason_status reason_prune_hmm(reason_ctx* ctx, const char* hmm_json,
                               const char* dataset_json, double eps,
                               char** out_hmm_json, char** out_report_json);

/* ---- compilation ---- */

/* config_json may be NULL or "" for defaults. The dag is regularized to
 * two-input form internally if needed. */
reason_status reason_compile(reason_ctx* ctx, const reason_dag* dag,
                             const char* config_json, reason_program** out);
void reason_program_free(reason_program* prog);
reason_status reason_program_serialize(reason_ctx* ctx, const reason_program* prog,
                                       char** out_json);
reason_status reason_program_deserialize(reason_ctx* ctx, const char* json,
                                         reason_program** out);
reason_status reason_program_stats(reason_ctx* ctx, const reason_program* prog,
                                   char** out_json);

/* ---- simulation ---- */

/* Cycle-level run of a compiled program under a variable assignment.
 * Report JSON: {"root": v, "report": CycleReport, "trace": "..."}.
 * Requires a program produced by reason_compile (the dag travels with it). */
reason_status reason_simulate(reason_ctx* ctx, const reason_program* prog,
                              const char* assignment_json, int allow_marginalize,
                              int trace, char** out_json);
/* Same, but leaf values are given directly: {"<node id>": value, ...}.
 * Works for deserialized programs. */
reason_status reason_simulate_values(reason_ctx* ctx, const reason_program* prog,
                                     const char* leaf_values_json, int trace,
                                     char** out_json);
/* heuristic: "static" or "vsids". Report JSON:
 * {"verdict", "model", "decisions", "propagations", "conflicts",
 *  "learned_clauses", "deleted_clauses", "report", "trace"}. */
reason_status reason_simulate_sat(reason_ctx* ctx, const char* dimacs_text,
                                  const char* config_json, const char* heuristic,
                                  int trace, char** out_json);
/* {"product": matrix, "report": CycleReport} */
reason_status reason_spmspm(reason_ctx* ctx, const char* a_json, const char* b_json,
                            const char* config_json, char** out_json);

/* topology: "tree", "mesh" or "bus". Returns -1 on bad arguments. */
long reason_interconnect_latency(const char* topology, long n);
/* neural_json / symbolic_json: arrays of per-batch latencies.
 * Output: {"makespan", "batches": [{"start_neural", ...}, ...]} */
reason_status reason_pipeline(reason_ctx* ctx, const char* neural_json,
                              const char* symbolic_json, char** out_json);

/* ---- host handshake ---- */

/* Submits a batch to the per-context runtime; fails with REASON_ERR_BUSY if
 * the slot is still executing. */
reason_status reason_host_submit_prob(reason_ctx* ctx, int batch_id,
                                      const reason_dag* dag,
                                      const char* assignment_json,
                                      const char* config_json);
reason_status reason_host_submit_sat(reason_ctx* ctx, int batch_id,
                                     const char* dimacs_text, const char* config_json);
/* out_status: 0 = idle, 1 = executing. */
reason_status reason_host_status(reason_ctx* ctx, int batch_id, int blocking,
                                 int* out_status);
reason_status reason_host_result(reason_ctx* ctx, int batch_id, char** out_json);

/* ---- corpus generation ---- */

/* kind / params:
 *   "pc"        {"num_vars", "components"?, "dead_branch"?}   -> PC text
 *   "dataset"   {"num_vars", "count", "pin_first"?}           -> dataset JSON
 *   "hmm"       {"states", "alphabet", "length"}              -> HMM JSON
 *   "cnf"       {"num_vars", "num_clauses", "k"?}             -> DIMACS
 *   "cnf_mixed" {"num_vars", "num_clauses", "binary_fraction"} -> DIMACS
 *   "uf20"      {}                                            -> DIMACS
 *   "tree"      {"depth"}                                     -> dag text
 * Output is deterministic in (kind, seed, params). */
reason_status reason_generate(reason_ctx* ctx, const char* kind,
                              unsigned long long seed, const char* params_json,
                              char** out_text);

#ifdef __cplusplus
}
#endif

#endif /* REASON_CAPI_H */
