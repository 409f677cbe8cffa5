#ifndef TDDBP_H
#define TDDBP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Nonlinear step used by [`tddbp_dbp_run`].
 */
typedef enum TddbpNonlinearity {
  TDDBP_NONLINEARITY_TAYLOR1 = 0,
  TDDBP_NONLINEARITY_EXACT = 1,
  TDDBP_NONLINEARITY_OFF = 2,
} TddbpNonlinearity;

typedef enum TddbpStatus {
  TDDBP_STATUS_OK = 0,
  TDDBP_STATUS_NULL_POINTER = 1,
  TDDBP_STATUS_INVALID_ARGUMENT = 2,
  TDDBP_STATUS_SCHEMA = 3,
  TDDBP_STATUS_NUMERICAL = 4,
  TDDBP_STATUS_IO = 5,
  TDDBP_STATUS_LENGTH_UNDERFLOW = 6,
  TDDBP_STATUS_PANIC = 7,
} TddbpStatus;

/*
 Filter bank in floating point.
 */
typedef struct TddbpBank TddbpBank;

/*
 Filter bank with integer taps.
 */
typedef struct TddbpQuantBank TddbpQuantBank;

/*
 Link physics. A NaN noise figure disables amplifier noise.
 */
typedef struct TddbpLink {
  double beta2;
  double gamma;
  double alpha_db_per_km;
  double span_length_m;
  uintptr_t num_spans;
  double noise_figure_db;
  double launch_power_dbm;
} TddbpLink;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread; valid until the next call.
 */
const char *tddbp_last_error(void);

/*
 Default 8 x 100 km link.
 */
enum TddbpStatus tddbp_link_default(struct TddbpLink *out);

/*
 Constrained least-squares bank for one-step-per-span backpropagation over `link`.
 */
enum TddbpStatus tddbp_bank_design_lsco(const struct TddbpLink *link,
                                        uintptr_t num_taps,
                                        double sample_rate,
                                        double passband_fraction,
                                        double magnitude_bound,
                                        struct TddbpBank **out);

enum TddbpStatus tddbp_bank_load(const char *path, struct TddbpBank **out);

enum TddbpStatus tddbp_bank_save(const struct TddbpBank *bank, const char *path);

/*
 Taps per filter and number of filters.
 */
enum TddbpStatus tddbp_bank_shape(const struct TddbpBank *bank,
                                  uintptr_t *num_taps,
                                  uintptr_t *num_filters);

void tddbp_bank_free(struct TddbpBank *bank);

/*
 Per-filter power-of-two coefficient quantization.
 */
enum TddbpStatus tddbp_bank_quantize(const struct TddbpBank *bank,
                                     uint32_t coeff_bits,
                                     struct TddbpQuantBank **out);

/*
 Dequantized float copy of an integer-tap bank.
 */
enum TddbpStatus tddbp_quant_bank_to_float(const struct TddbpQuantBank *qbank,
                                           struct TddbpBank **out);

enum TddbpStatus tddbp_quant_bank_load(const char *path, struct TddbpQuantBank **out);

enum TddbpStatus tddbp_quant_bank_save(const struct TddbpQuantBank *qbank, const char *path);

void tddbp_quant_bank_free(struct TddbpQuantBank *qbank);

/*
 Floating-point backpropagation of `len` complex samples. `output` must hold `2 * len`
 doubles; the nonlinear step gain follows from `link`.
 */
enum TddbpStatus tddbp_dbp_run(const struct TddbpBank *bank,
                               const struct TddbpLink *link,
                               enum TddbpNonlinearity nonlinearity,
                               const double *input,
                               uintptr_t len,
                               double sample_rate,
                               uintptr_t samples_per_symbol,
                               double *output);

/*
 Effective SNR (dB) of `len` equalized symbols against the transmitted ones.
 */
enum TddbpStatus tddbp_effective_snr_db(const double *equalized,
                                        const double *reference,
                                        uintptr_t len,
                                        double *out);

/*
 Relative multiplier cost proxy of one parallel FIR step.
 */
enum TddbpStatus tddbp_cost_proxy(uintptr_t num_taps,
                                  uint32_t signal_bits,
                                  uint32_t coeff_bits,
                                  uintptr_t parallelism,
                                  double *out);

/*
 Smallest odd tap count (up to `max_taps`) at which radix-2 overlap-save filtering in a
 `parallelism`-wide datapath beats direct symmetric filtering; 0 if none.
 */
enum TddbpStatus tddbp_crossover_taps(uintptr_t parallelism, uintptr_t max_taps, uintptr_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TDDBP_H */
