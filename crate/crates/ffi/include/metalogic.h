/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef METALOGIC_H
#define METALOGIC_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum MlStatus {
  ML_STATUS_OK = 0,
  ML_STATUS_NULL_POINTER = 1,
  ML_STATUS_INVALID_UTF8 = 2,
  ML_STATUS_PARSE_ERROR = 3,
  // The law's pattern does not match the formula root.
  ML_STATUS_NOT_APPLICABLE = 4,
  // Too many distinct atoms for a truth-table check.
  ML_STATUS_BUDGET_EXCEEDED = 5,
  ML_STATUS_INVALID_ARGUMENT = 6,
  ML_STATUS_NOT_FOUND = 7,
  ML_STATUS_INTERNAL = 8,
} MlStatus;

typedef enum MlVariant {
  ML_VARIANT_AND = 0,
  ML_VARIANT_OR = 1,
} MlVariant;

// Opaque parsed formula.
typedef struct MlFormula MlFormula;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ml_version(void);

// Message for the last failed call on this thread, or NULL. Valid until
// the next call into the library from the same thread.
const char *ml_last_error(void);

// # Safety
// `s` must be NULL or a string returned by this library, freed once.
void ml_string_free(char *s);

// Parses the formula DSL, e.g. `cat@left & !(dog | cow#3)`.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum MlStatus ml_formula_parse(const char *text, struct MlFormula **out);

// # Safety
// `f` must be NULL or a formula from this library, freed once.
void ml_formula_free(struct MlFormula *f);

// Canonical DSL text of a formula.
//
// # Safety
// `f` must be a live formula; `out` must be writable.
enum MlStatus ml_formula_to_string(const struct MlFormula *f, char **out);

// Truth-table equivalence.
//
// # Safety
// `a` and `b` must be live formulas; `out` must be writable.
enum MlStatus ml_formula_equivalent(const struct MlFormula *a,
                                    const struct MlFormula *b,
                                    bool *out);

// Applies one law at the root: `law` is one of commutative, associative,
// distributive, complement, demorgan.
//
// # Safety
// `f` must be a live formula, `law` a NUL-terminated string and `out`
// writable.
enum MlStatus ml_formula_apply_law(const struct MlFormula *f,
                                   const char *law,
                                   enum MlVariant variant,
                                   struct MlFormula **out);

// The template registry as a JSON array.
//
// # Safety
// `out` must be writable.
enum MlStatus ml_templates_json(char **out);

// Instantiates a template into a test case (prompts, scene, seeds) as
// JSON. `entities_json` is an array of labels; `count` is 0 for
// non-numbering templates.
//
// # Safety
// String arguments must be NUL-terminated; `out` must be writable.
enum MlStatus ml_case_json(const char *template_id,
                           const char *entities_json,
                           uint8_t count,
                           uint64_t seed,
                           char **out);

// Generates a suite and returns its JSONL manifest. `config_json` may be
// NULL for the default suite.
//
// # Safety
// `config_json` must be NULL or NUL-terminated; `out` must be writable.
enum MlStatus ml_suite_jsonl(const char *config_json, char **out);

// Compares two detection results for a case and returns the classified
// verdict as JSON. `comparator_json` and `classifier_json` may be NULL for
// defaults.
//
// # Safety
// String arguments must be NULL (where allowed) or NUL-terminated; `out`
// must be writable.
enum MlStatus ml_compare_pair_json(const char *case_json,
                                   const char *det_a_json,
                                   const char *det_b_json,
                                   const char *comparator_json,
                                   const char *classifier_json,
                                   char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* METALOGIC_H */
