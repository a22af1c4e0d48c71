#ifndef NFEC_H
#define NFEC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Success.
 */
#define NFEC_OK 0

/**
 * Null pointer, bad length, or malformed input.
 */
#define NFEC_ERR_INVALID_ARG 1

/**
 * The operation is not supported for this code (guard limits).
 */
#define NFEC_ERR_UNSUPPORTED 2

/**
 * Any other runtime failure; see `nfec_last_error_message`.
 */
#define NFEC_ERR_RUNTIME 3

/**
 * An internal panic was caught.
 */
#define NFEC_ERR_PANIC 4

/**
 * Opaque linear block code handle.
 */
typedef struct NfecCode NfecCode;

/**
 * Opaque trained-decoder handle.
 */
typedef struct NfecModel NfecModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent error on this thread. Valid until the next
 * failing call from the same thread.
 */
const char *nfec_last_error_message(void);

/**
 * Build a code from a JSON spec such as `{"kind":"bch","m":4,"t":2}`.
 * Returns null on failure.
 */
NfecCode *nfec_code_new_json(const char *spec_json);

void nfec_code_free(NfecCode *code);

/**
 * Code length n; 0 for a null handle.
 */
int nfec_code_n(const NfecCode *code);

/**
 * Information length k; 0 for a null handle.
 */
int nfec_code_k(const NfecCode *code);

/**
 * Exact bitwise MAP (codebook enumeration). `gamma` and `out` hold n LLRs.
 */
int nfec_map_decode_enum(const NfecCode *code, const double *gamma, uintptr_t n, double *out);

/**
 * Exact bitwise MAP (syndrome trellis).
 */
int nfec_map_decode_trellis(const NfecCode *code, const double *gamma, uintptr_t n, double *out);

/**
 * Sum-product belief propagation with `iters` flooding iterations.
 */
int nfec_bp_decode(const NfecCode *code, const double *gamma, uintptr_t n, int iters, double *out);

/**
 * Load a trained decoder checkpoint from a file path. Returns null on
 * failure.
 */
NfecModel *nfec_model_load(const char *path);

void nfec_model_free(NfecModel *model);

/**
 * Code length of the model's component code; 0 for a null handle.
 */
int nfec_model_n(const NfecModel *model);

/**
 * Soft-output neural decode of one LLR vector.
 */
int nfec_model_decode(const NfecModel *model, const double *gamma, uintptr_t n, double *out);

/**
 * Monte-Carlo BER/FER with the exact MAP decoder at one SNR point.
 */
int nfec_simulate_map_ber(const NfecCode *code,
                          double esn0_db,
                          uint64_t max_frames,
                          uint64_t target_frame_errors,
                          uint64_t seed,
                          double *ber_out,
                          double *fer_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NFEC_H */
