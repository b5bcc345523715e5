#ifndef SENTIXRL_H
#define SENTIXRL_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SxStatus {
  SX_STATUS_OK = 0,
  SX_STATUS_NULL_ARGUMENT = 1,
  SX_STATUS_INVALID_UTF8 = 2,
  SX_STATUS_INVALID_ARGUMENT = 3,
  /**
   * Label configuration, mock script or negotiation options rejected.
   */
  SX_STATUS_CONFIG = 4,
  /**
   * Corpus or trace input rejected.
   */
  SX_STATUS_DATA = 5,
  /**
   * A label is outside the domain and has no alias.
   */
  SX_STATUS_UNMAPPED = 6,
  /**
   * Every backend call failed.
   */
  SX_STATUS_BACKEND = 7,
  SX_STATUS_PANIC = 8,
} SxStatus;

typedef enum SxExtraction {
  SX_EXTRACTION_LAST = 0,
  SX_EXTRACTION_FIRST = 1,
} SxExtraction;

typedef enum SxPolicy {
  SX_POLICY_DISCRIMINATOR_APPROVAL = 0,
  SX_POLICY_CONSECUTIVE_AGREEMENT = 1,
} SxPolicy;

typedef enum SxDeduction {
  SX_DEDUCTION_OFF = 0,
  SX_DEDUCTION_LIVE = 1,
  SX_DEDUCTION_CORPUS = 2,
} SxDeduction;

/**
 * Negotiator bound to a backend and label configuration.
 */
typedef struct SxEngine SxEngine;

/**
 * Label domain plus alias mapping.
 */
typedef struct SxLabelConfig SxLabelConfig;

typedef struct SxNegotiationOptions {
  uint32_t max_rounds;
  enum SxPolicy policy;
  enum SxDeduction deduction;
  enum SxExtraction extraction;
  size_t history_window;
  double temperature;
  uint32_t max_tokens;
} SxNegotiationOptions;

typedef struct SxConsensus {
  double q;
  double p_outlier;
  double p_accepted;
  double p_accepted_correct;
  double mean_rounds;
} SxConsensus;

typedef struct SxEstimate {
  double value;
  double std_error;
} SxEstimate;

typedef struct SxSimulation {
  struct SxEstimate p_accepted;
  struct SxEstimate p_accepted_correct;
  struct SxEstimate p_outlier;
  struct SxEstimate mean_rounds;
} SxSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string. Do not free.
 */
const char *sx_version(void);

/**
 * Message for the most recent failure on this thread, or NULL after a
 * success. Valid until the next call into the library on this thread.
 */
const char *sx_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, freed at most once.
 */
void sx_string_free(char *s);

/**
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum SxStatus sx_label_config_from_toml(const char *toml, struct SxLabelConfig **out);

/**
 * The built-in eight-label unified configuration.
 *
 * # Safety
 * `out` must be writable.
 */
enum SxStatus sx_label_config_unified(struct SxLabelConfig **out);

/**
 * # Safety
 * `cfg` must be NULL or a handle from this library, freed at most once.
 */
void sx_label_config_free(struct SxLabelConfig *cfg);

/**
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum SxStatus sx_label_config_len(const struct SxLabelConfig *cfg, size_t *out);

/**
 * Canonical label at `index` in domain order.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum SxStatus sx_label_config_label(const struct SxLabelConfig *cfg, size_t index, char **out);

/**
 * Maps a raw corpus label to its canonical form.
 *
 * # Safety
 * `cfg` must be a live handle; `raw` NUL-terminated; `out` writable.
 */
enum SxStatus sx_label_config_map(const struct SxLabelConfig *cfg, const char *raw, char **out);

/**
 * Finds a domain label in model output. Succeeds with `*out == NULL` when
 * the text names no label.
 *
 * # Safety
 * `cfg` must be a live handle; `text` NUL-terminated; `out` writable.
 */
enum SxStatus sx_extract_label(const struct SxLabelConfig *cfg,
                               const char *text,
                               enum SxExtraction policy,
                               char **out);

struct SxNegotiationOptions sx_negotiation_options_default(void);

/**
 * Engine over a scripted mock backend. `options` may be NULL for defaults.
 *
 * # Safety
 * `cfg` must be a live handle; `script_toml` NUL-terminated; `options`
 * NULL or readable; `out` writable.
 */
enum SxStatus sx_engine_new_mock(const struct SxLabelConfig *cfg,
                                 const char *script_toml,
                                 const struct SxNegotiationOptions *options,
                                 struct SxEngine **out);

/**
 * Engine over an OpenAI-compatible endpoint. The API key is read from the
 * environment. A `timeout_secs` or `max_in_flight` of 0 keeps the default.
 *
 * # Safety
 * `cfg` must be a live handle; `base_url` and `model` NUL-terminated;
 * `options` NULL or readable; `out` writable.
 */
enum SxStatus sx_engine_new_openai(const struct SxLabelConfig *cfg,
                                   const char *base_url,
                                   const char *model,
                                   const struct SxNegotiationOptions *options,
                                   uint64_t timeout_secs,
                                   size_t max_in_flight,
                                   struct SxEngine **out);

/**
 * # Safety
 * `engine` must be NULL or a handle from this library, freed at most once.
 */
void sx_engine_free(struct SxEngine *engine);

/**
 * Negotiates every labelled utterance of a JSONL corpus and returns the
 * traces as JSONL. Utterances whose backend calls failed appear as skipped
 * traces; the call fails only when all of them did.
 *
 * # Safety
 * `engine` must be a live handle; `corpus_jsonl` NUL-terminated;
 * `traces_out` writable.
 */
enum SxStatus sx_engine_evaluate(const struct SxEngine *engine,
                                 const char *corpus_jsonl,
                                 size_t workers,
                                 char **traces_out);

/**
 * Scores JSONL traces and returns the evaluation report as JSON.
 *
 * # Safety
 * `cfg` must be a live handle; `traces_jsonl` NUL-terminated; `report_out`
 * writable.
 */
enum SxStatus sx_report_from_traces(const struct SxLabelConfig *cfg,
                                    const char *traces_jsonl,
                                    char **report_out);

/**
 * # Safety
 * `out` must be writable.
 */
enum SxStatus sx_focal_loss(double p_t, double alpha, double gamma, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum SxStatus sx_consensus_closed_form(double p_correct,
                                       double accept_correct,
                                       double accept_incorrect,
                                       uint32_t max_rounds,
                                       struct SxConsensus *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum SxStatus sx_consensus_simulate(double p_correct,
                                    double accept_correct,
                                    double accept_incorrect,
                                    uint32_t max_rounds,
                                    uint64_t trials,
                                    uint64_t seed,
                                    struct SxSimulation *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SENTIXRL_H */
