#ifndef TXFIDELITY_H
#define TXFIDELITY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. 2-5 match the CLI exit codes.
 */
typedef enum TxfStatus {
  TXF_STATUS_OK = 0,
  /**
   * A required pointer was null or a string was not UTF-8.
   */
  TXF_STATUS_INVALID_POINTER = 1,
  /**
   * Bad input file, schema, CSV or argument.
   */
  TXF_STATUS_USAGE = 2,
  /**
   * Not enough data for the requested metric.
   */
  TXF_STATUS_INSUFFICIENT_DATA = 3,
  /**
   * Baseline belongs to a different real table.
   */
  TXF_STATUS_FINGERPRINT_MISMATCH = 4,
  /**
   * Schema, pattern or settings incompatibility.
   */
  TXF_STATUS_INCOMPATIBLE = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  TXF_STATUS_PANIC = 99,
} TxfStatus;

/**
 * Noise-floor baseline scores.
 */
typedef struct TxfBaseline TxfBaseline;

/**
 * Degradation report.
 */
typedef struct TxfReport TxfReport;

/**
 * A schema mapping CSV columns to roles.
 */
typedef struct TxfSchema TxfSchema;

/**
 * An ingested transaction table.
 */
typedef struct TxfTable TxfTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *txf_version(void);

/**
 * Message for the last failure on this thread. Valid until the next failing
 * call on the same thread; never null.
 */
const char *txf_last_error(void);

/**
 * Free a string returned through an out pointer. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void txf_string_free(char *s);

/**
 * Load a `key = value` schema file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum TxfStatus txf_schema_load(const char *path, struct TxfSchema **out);

/**
 * Parse schema text.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum TxfStatus txf_schema_parse(const char *text, struct TxfSchema **out);

/**
 * # Safety
 * `schema` must come from this library and not have been freed.
 */
void txf_schema_free(struct TxfSchema *schema);

/**
 * Load a real table. Every schema-referenced column must exist.
 *
 * # Safety
 * Pointers must be valid; `out` must be writable.
 */
enum TxfStatus txf_table_load(const char *path,
                              const struct TxfSchema *schema,
                              struct TxfTable **out);

/**
 * Load a synthetic table; a missing entity column is allowed.
 *
 * # Safety
 * Pointers must be valid; `out` must be writable.
 */
enum TxfStatus txf_table_load_synthetic(const char *path,
                                        const struct TxfSchema *schema,
                                        struct TxfTable **out);

/**
 * Row count; 0 for a null handle.
 *
 * # Safety
 * `table` must be null or a live handle.
 */
size_t txf_table_n_rows(const struct TxfTable *table);

/**
 * Whether the table has a bound entity column.
 *
 * # Safety
 * `table` must be null or a live handle.
 */
bool txf_table_has_entities(const struct TxfTable *table);

/**
 * Write the table as CSV.
 *
 * # Safety
 * Pointers must be valid.
 */
enum TxfStatus txf_table_write_csv(const struct TxfTable *table, const char *path);

/**
 * # Safety
 * `table` must come from this library and not have been freed.
 */
void txf_table_free(struct TxfTable *table);

/**
 * Row-independent table drawn from the column marginals of `real`.
 *
 * # Safety
 * Pointers must be valid; `out` must be writable.
 */
enum TxfStatus txf_oracle_generate(const struct TxfTable *real,
                                   size_t n_rows,
                                   uint64_t seed,
                                   struct TxfTable **out);

/**
 * Label `syn` with pseudo-entities drawn from the entity sizes of `real`.
 * `permuted` selects the shuffled mode.
 *
 * # Safety
 * Pointers must be valid; `out` must be writable.
 */
enum TxfStatus txf_assign_entities(const struct TxfTable *syn,
                                   const struct TxfTable *real,
                                   uint64_t seed,
                                   bool permuted,
                                   struct TxfTable **out);

/**
 * Noise floor of `real` with default settings and every applicable pattern.
 *
 * # Safety
 * Pointers must be valid; `out` must be writable.
 */
enum TxfStatus txf_baseline_compute(const struct TxfTable *real,
                                    uint64_t seed,
                                    struct TxfBaseline **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum TxfStatus txf_baseline_load(const char *path, struct TxfBaseline **out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum TxfStatus txf_baseline_save(const struct TxfBaseline *baseline, const char *path);

/**
 * Baseline as JSON; free with [`txf_string_free`].
 *
 * # Safety
 * Pointers must be valid; `out` must be writable.
 */
enum TxfStatus txf_baseline_to_json(const struct TxfBaseline *baseline, char **out);

/**
 * # Safety
 * `baseline` must come from this library and not have been freed.
 */
void txf_baseline_free(struct TxfBaseline *baseline);

/**
 * Evaluate `syn` against `real`, using the baseline's settings and patterns.
 *
 * # Safety
 * Pointers must be valid; `out` must be writable.
 */
enum TxfStatus txf_evaluate(const struct TxfTable *real,
                            const struct TxfTable *syn,
                            const struct TxfBaseline *baseline,
                            struct TxfReport **out);

/**
 * Composite score of the report. `InsufficientData` when undefined.
 *
 * # Safety
 * Pointers must be valid.
 */
enum TxfStatus txf_report_composite(const struct TxfReport *report, double *out);

/**
 * Degradation ratio of one sub-metric, by id (e.g. `"p1_autocorr_gap"`).
 * `InsufficientData` when the metric was not computed or its noise floor
 * is zero.
 *
 * # Safety
 * Pointers must be valid.
 */
enum TxfStatus txf_report_ratio(const struct TxfReport *report, const char *metric, double *out);

/**
 * Report as JSON; free with [`txf_string_free`].
 *
 * # Safety
 * Pointers must be valid; `out` must be writable.
 */
enum TxfStatus txf_report_to_json(const struct TxfReport *report, char **out);

/**
 * # Safety
 * `report` must come from this library and not have been freed.
 */
void txf_report_free(struct TxfReport *report);

/**
 * Equal-weight mean of `n` ratios.
 *
 * # Safety
 * `ratios` must point to `n` readable doubles; `out` must be writable.
 */
enum TxfStatus txf_composite(const double *ratios, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TXFIDELITY_H */
