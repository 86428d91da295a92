#ifndef FEDINV_H
#define FEDINV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FedinvStatus {
  FEDINV_STATUS_OK = 0,
  FEDINV_STATUS_OTHER = 1,
  FEDINV_STATUS_CONFIG = 2,
  FEDINV_STATUS_THRESHOLD_NOT_MET = 3,
  FEDINV_STATUS_NUMERICAL = 4,
  FEDINV_STATUS_NULL_POINTER = 5,
  FEDINV_STATUS_PANIC = 6,
} FedinvStatus;

// Balanced Reed-Solomon generator with its task allocation.
typedef struct FedinvCode FedinvCode;

// Dense real matrix.
typedef struct FedinvMatrix FedinvMatrix;

// Result of one protocol simulation.
typedef struct FedinvSimulation FedinvSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *fedinv_last_error(void);

// Copies `rows·cols` row-major values into a new matrix.
enum FedinvStatus fedinv_matrix_new(size_t rows,
                                    size_t cols,
                                    const double *data,
                                    struct FedinvMatrix **out);

void fedinv_matrix_free(struct FedinvMatrix *m);

enum FedinvStatus fedinv_matrix_shape(const struct FedinvMatrix *m, size_t *rows, size_t *cols);

// Writes the entries row-major into `out`, which must hold `len ≥ rows·cols` doubles.
enum FedinvStatus fedinv_matrix_read(const struct FedinvMatrix *m, double *out, size_t len);

// Column-wise inverse estimate; `solver_json` is a solver config such as
// `{"method":"cg","epsilon":1e-10}`.
enum FedinvStatus fedinv_estimate_inverse(const struct FedinvMatrix *a,
                                          const char *solver_json,
                                          struct FedinvMatrix **out);

// Runs the four-phase protocol with a network config in the CLI's schema.
// A run with too few responders still succeeds; check
// [`fedinv_simulation_estimate`].
enum FedinvStatus fedinv_simulate(const struct FedinvMatrix *a,
                                  const char *config_json,
                                  struct FedinvSimulation **out);

void fedinv_simulation_free(struct FedinvSimulation *s);

// The decoded inverse, or `FEDINV_STATUS_THRESHOLD_NOT_MET`.
enum FedinvStatus fedinv_simulation_estimate(const struct FedinvSimulation *s,
                                             struct FedinvMatrix **out);

// Summary (threshold, errors, communication load) as a JSON string to be
// released with [`fedinv_string_free`].
enum FedinvStatus fedinv_simulation_summary(const struct FedinvSimulation *s, char **out);

void fedinv_string_free(char *s);

// Builds an (n, k) BRS generator; `d = 0` selects `n − k + 1`.
enum FedinvStatus fedinv_code_new(size_t n,
                                  size_t k,
                                  size_t d,
                                  uint64_t seed,
                                  struct FedinvCode **out);

void fedinv_code_free(struct FedinvCode *c);

// Number of nonzeros of the generator.
enum FedinvStatus fedinv_code_nnz(const struct FedinvCode *c, size_t *out);

// Counts invertible k-row restrictions (all of them, or a seeded sample of
// `max_subsets`).
enum FedinvStatus fedinv_code_verify(const struct FedinvCode *c,
                                     size_t max_subsets,
                                     uint64_t seed,
                                     size_t *invertible,
                                     size_t *checked);

// Encodes the k column blocks of `x` (N × kT) for every worker and decodes
// them back from the workers listed in `responders`.
enum FedinvStatus fedinv_code_roundtrip(const struct FedinvCode *c,
                                        const struct FedinvMatrix *x,
                                        const size_t *responders,
                                        size_t count,
                                        struct FedinvMatrix **out);

// Coded left pseudoinverse with 2 or 3 rounds; config in the CLI schema.
enum FedinvStatus fedinv_pseudoinverse(const struct FedinvMatrix *a,
                                       const char *config_json,
                                       uint32_t rounds,
                                       struct FedinvMatrix **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDINV_H */
