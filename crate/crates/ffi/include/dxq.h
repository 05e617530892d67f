#ifndef DXQ_H
#define DXQ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DxqStatus {
  DXQ_STATUS_OK = 0,
  DXQ_STATUS_NULL_POINTER = 1,
  DXQ_STATUS_INVALID_TOPOLOGY = 2,
  DXQ_STATUS_INVALID_ARGUMENT = 3,
  DXQ_STATUS_CLUSTER_CONFIG = 4,
  DXQ_STATUS_DEADLOCK = 5,
  DXQ_STATUS_PROTOCOL = 6,
  DXQ_STATUS_SCHEMA = 7,
  DXQ_STATUS_PLAN = 8,
  DXQ_STATUS_UNSUPPORTED = 9,
  DXQ_STATUS_MEMORY_CAP = 10,
  DXQ_STATUS_PARSE = 11,
  DXQ_STATUS_IO = 12,
  DXQ_STATUS_PANIC = 13,
} DxqStatus;

typedef enum DxqExchangeKind {
  DXQ_EXCHANGE_KIND_BROADCAST = 0,
  DXQ_EXCHANGE_KIND_SHUFFLE = 1,
} DxqExchangeKind;

typedef enum DxqMode {
  DXQ_MODE_SIMULATED = 0,
  DXQ_MODE_IN_PROCESS = 1,
} DxqMode;

typedef struct DxqDataset DxqDataset;

typedef struct DxqReport DxqReport;

typedef struct DxqTopology DxqTopology;

/**
 * Result of [`dxq_choose_exchange`].
 */
typedef struct DxqExchangeChoice {
  enum DxqExchangeKind kind;
  double predicted_time_broadcast;
  double predicted_time_shuffle;
  bool swapped;
} DxqExchangeChoice;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *dxq_last_error_message(void);

/**
 * Static, lowercase name of a status (`"ok"`, `"memory_cap"`, ...).
 */
const char *dxq_status_name(enum DxqStatus status);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void dxq_string_free(char *s);

/**
 * `k` GPUs on each of `v` machines. Bandwidths in GB/s; `efficiency` scales
 * both of them.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum DxqStatus dxq_topology_new(size_t k,
                                size_t v,
                                double bg_gbps,
                                double bn_gbps,
                                double efficiency,
                                struct DxqTopology **out_topo);

/**
 * # Safety
 * `topo` must be null or a handle from [`dxq_topology_new`], freed once.
 */
void dxq_topology_free(struct DxqTopology *topo);

/**
 * # Safety
 * Pointers must be valid.
 */
enum DxqStatus dxq_broadcast_throughput(const struct DxqTopology *topo, double *out_gbps);

/**
 * # Safety
 * Pointers must be valid.
 */
enum DxqStatus dxq_shuffle_throughput(const struct DxqTopology *topo, double *out_gbps);

/**
 * Seconds to broadcast a table of `bytes`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum DxqStatus dxq_broadcast_time(const struct DxqTopology *topo, double bytes, double *out_s);

/**
 * Seconds to shuffle `bytes` in total.
 *
 * # Safety
 * Pointers must be valid.
 */
enum DxqStatus dxq_shuffle_time(const struct DxqTopology *topo, double bytes, double *out_s);

/**
 * # Safety
 * Pointers must be valid.
 */
enum DxqStatus dxq_choose_exchange(const struct DxqTopology *topo,
                                   double small_bytes,
                                   double large_bytes,
                                   struct DxqExchangeChoice *out_choice);

/**
 * Synthetic TPC-H-style data at scale factor `sf`; `skew` 0 is uniform.
 *
 * # Safety
 * `out_ds` must be valid.
 */
enum DxqStatus dxq_dataset_generate(double sf,
                                    double skew,
                                    uint64_t seed,
                                    struct DxqDataset **out_ds);

/**
 * # Safety
 * `ds` must be null or a handle from [`dxq_dataset_generate`], freed once.
 */
void dxq_dataset_free(struct DxqDataset *ds);

/**
 * # Safety
 * Pointers must be valid; `table` is a NUL-terminated name like `"lineitem"`.
 */
enum DxqStatus dxq_dataset_num_rows(const struct DxqDataset *ds,
                                    const char *table,
                                    uint64_t *out_rows);

/**
 * Runs one query on a fresh cluster. `variant` is `"default"`, `"pa"` or
 * `"pb"`; the data is partitioned on join keys for the default plan and
 * left unpartitioned otherwise.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum DxqStatus dxq_run_query(const struct DxqTopology *topo,
                             const struct DxqDataset *ds,
                             const char *query,
                             const char *variant,
                             enum DxqMode mode,
                             struct DxqReport **out_report);

/**
 * # Safety
 * `report` must be null or a handle from [`dxq_run_query`], freed once.
 */
void dxq_report_free(struct DxqReport *report);

/**
 * Time breakdown in seconds. Any out pointer may be null.
 *
 * # Safety
 * `report` must be valid; non-null out pointers must be writable.
 */
enum DxqStatus dxq_report_times(const struct DxqReport *report,
                                double *out_compute_s,
                                double *out_shuffle_s,
                                double *out_broadcast_s);

/**
 * # Safety
 * Pointers must be valid.
 */
enum DxqStatus dxq_report_exchange_counts(const struct DxqReport *report,
                                          uint32_t *out_shuffles,
                                          uint32_t *out_broadcasts);

/**
 * The full report as JSON; free with [`dxq_string_free`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum DxqStatus dxq_report_json(const struct DxqReport *report, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DXQ_H */
