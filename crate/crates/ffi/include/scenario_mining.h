#ifndef SCENARIO_MINING_H
#define SCENARIO_MINING_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SmStatus {
  SM_STATUS_OK = 0,
  SM_STATUS_NULL_ARGUMENT = 1,
  SM_STATUS_INVALID_UTF8 = 2,
  SM_STATUS_PARSE = 3,
  SM_STATUS_CONFIG = 4,
  SM_STATUS_COMPUTE = 5,
  SM_STATUS_OUT_OF_RANGE = 6,
  SM_STATUS_PANIC = 7,
} SmStatus;

typedef enum SmSynthKind {
  SM_SYNTH_KIND_LEADER_FOLLOWER = 0,
  SM_SYNTH_KIND_CROSSING = 1,
  SM_SYNTH_KIND_CUT_IN = 2,
  SM_SYNTH_KIND_STOP_AND_GO = 3,
  SM_SYNTH_KIND_RANDOM_MIX = 4,
} SmSynthKind;

// Pipeline configuration.
typedef struct SmConfig SmConfig;

// An ordered set of scenarios to fit and score together.
typedef struct SmCorpus SmCorpus;

// Fitted anomaly model and normalizer plus the scores of the corpus they
// were fitted on.
typedef struct SmEngine SmEngine;

// One parsed scenario.
typedef struct SmScenario SmScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread (empty if none). The
// pointer stays valid until the next failing call on this thread.
const char *sm_last_error(void);

// Frees a string returned by this library.
//
// # Safety
// `s` must come from this library and not have been freed.
void sm_string_free(char *s);

// Defaults overlaid with `toml` (may be null) and then each `section.key=value`
// entry of `overrides` (may be null when `n_overrides` is 0).
//
// # Safety
// String arguments must be NUL-terminated; `out` must be writable.
enum SmStatus sm_config_new(const char *toml,
                            const char *const *overrides,
                            size_t n_overrides,
                            struct SmConfig **out);

// # Safety
// `cfg` must be null or a live handle from [`sm_config_new`].
void sm_config_free(struct SmConfig *cfg);

// Parses one scenario document (JSON).
//
// # Safety
// `json` must be NUL-terminated; `out` must be writable.
enum SmStatus sm_scenario_parse(const char *json, struct SmScenario **out);

// Deterministic synthetic scenario of the given kind.
//
// # Safety
// `out` must be writable.
enum SmStatus sm_scenario_synth(enum SmSynthKind kind, uint64_t seed, struct SmScenario **out);

// The scenario id, owned by the handle.
//
// # Safety
// `s` must be a live scenario handle.
const char *sm_scenario_id(const struct SmScenario *s);

// # Safety
// `s` must be a live scenario handle; `out` must be writable.
enum SmStatus sm_scenario_agent_count(const struct SmScenario *s, size_t *out);

// Number of structural problems found by validation (0 for a clean scene).
//
// # Safety
// `s` must be a live scenario handle; `out` must be writable.
enum SmStatus sm_scenario_violation_count(const struct SmScenario *s, size_t *out);

// # Safety
// `s` must be null or a live scenario handle.
void sm_scenario_free(struct SmScenario *s);

// # Safety
// `out` must be writable.
enum SmStatus sm_corpus_new(struct SmCorpus **out);

// Appends a copy of `s`; the caller keeps ownership of `s`.
//
// # Safety
// Both handles must be live.
enum SmStatus sm_corpus_push(struct SmCorpus *c, const struct SmScenario *s);

// # Safety
// `c` must be a live corpus handle; `out` must be writable.
enum SmStatus sm_corpus_len(const struct SmCorpus *c, size_t *out);

// # Safety
// `c` must be null or a live corpus handle.
void sm_corpus_free(struct SmCorpus *c);

// Fits the anomaly model and normalizer on `corpus` and scores it.
//
// # Safety
// Handles must be live; `out` must be writable.
enum SmStatus sm_engine_fit(const struct SmCorpus *c,
                            const struct SmConfig *cfg,
                            struct SmEngine **out);

// Number of scored scenes from the fitting corpus.
//
// # Safety
// `e` must be a live engine handle; `out` must be writable.
enum SmStatus sm_engine_scene_count(const struct SmEngine *e, size_t *out);

// Scene score of the `index`-th corpus scenario, in insertion order.
//
// # Safety
// `e` must be a live engine handle; `out` must be writable.
enum SmStatus sm_engine_scene_value(const struct SmEngine *e, size_t index, double *out);

// Scores a further scenario against the fitted model and normalizer.
//
// # Safety
// Handles must be live; `out` must be writable.
enum SmStatus sm_engine_score(const struct SmEngine *e, const struct SmScenario *s, double *out);

// Corpus scores as JSON lines; free the result with [`sm_string_free`].
//
// # Safety
// `e` must be a live engine handle; `out` must be writable.
enum SmStatus sm_engine_scores_jsonl(const struct SmEngine *e, char **out);

// # Safety
// `e` must be null or a live engine handle.
void sm_engine_free(struct SmEngine *e);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCENARIO_MINING_H */
