#ifndef RSF_H
#define RSF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum RsfStatus {
  RSF_STATUS_OK = 0,
  /**
   * A required pointer was null.
   */
  RSF_STATUS_NULL_POINTER = 1,
  /**
   * Bad config, parameter or dimension.
   */
  RSF_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Weight file could not be parsed.
   */
  RSF_STATUS_MALFORMED = 3,
  /**
   * Singular or ill-conditioned cone during conversion.
   */
  RSF_STATUS_ILL_CONDITIONED = 4,
  /**
   * The decision function does not have slope -1 in y.
   */
  RSF_STATUS_SLOPE_CHECK = 5,
  /**
   * Input text was not valid UTF-8.
   */
  RSF_STATUS_INVALID_UTF8 = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  RSF_STATUS_PANIC = 7,
} RsfStatus;

/**
 * Projection-layer form of a network.
 */
typedef struct RsfModifiedNetwork RsfModifiedNetwork;

/**
 * Standard ReLU form of a network.
 */
typedef struct RsfReluNetwork RsfReluNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *rsf_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *rsf_version(void);

/**
 * Frees a string returned by this library. Null is ignored.
 */
void rsf_string_free(char *s);

/**
 * Builds a network from a JSON build config.
 */
enum RsfStatus rsf_modified_build(const char *config_json, struct RsfModifiedNetwork **out);

enum RsfStatus rsf_modified_from_json(const char *json, struct RsfModifiedNetwork **out);

/**
 * Serializes to a weight file; free the result with [`rsf_string_free`].
 */
enum RsfStatus rsf_modified_to_json(const struct RsfModifiedNetwork *net, char **out);

/**
 * Input dimension d, or 0 for a null handle.
 */
uintptr_t rsf_modified_dim(const struct RsfModifiedNetwork *net);

/**
 * Number of projection layers, or 0 for a null handle.
 */
uintptr_t rsf_modified_layer_count(const struct RsfModifiedNetwork *net);

/**
 * F(x, y) for `x` of length `len`.
 */
enum RsfStatus rsf_modified_eval(const struct RsfModifiedNetwork *net,
                                 const double *x,
                                 uintptr_t len,
                                 double y,
                                 double *out);

/**
 * Height of the zero contour above `x`.
 */
enum RsfStatus rsf_modified_decision_height(const struct RsfModifiedNetwork *net,
                                            const double *x,
                                            uintptr_t len,
                                            double *out);

/**
 * Converts to the standard form.
 *
 * A `rho` of zero or less selects the network's own evaluation radius.
 */
enum RsfStatus rsf_modified_convert(const struct RsfModifiedNetwork *net,
                                    double rho,
                                    double margin,
                                    struct RsfReluNetwork **out);

/**
 * Releases a handle. Null is ignored.
 */
void rsf_modified_free(struct RsfModifiedNetwork *net);

enum RsfStatus rsf_relu_from_json(const char *json, struct RsfReluNetwork **out);

/**
 * Serializes to a weight file; free the result with [`rsf_string_free`].
 */
enum RsfStatus rsf_relu_to_json(const struct RsfReluNetwork *net, char **out);

/**
 * Input dimension d, or 0 for a null handle.
 */
uintptr_t rsf_relu_dim(const struct RsfReluNetwork *net);

/**
 * Number of ReLU layers, or 0 for a null handle.
 */
uintptr_t rsf_relu_layer_count(const struct RsfReluNetwork *net);

enum RsfStatus rsf_relu_eval(const struct RsfReluNetwork *net,
                             const double *x,
                             uintptr_t len,
                             double y,
                             double *out);

enum RsfStatus rsf_relu_decision_height(const struct RsfReluNetwork *net,
                                        const double *x,
                                        uintptr_t len,
                                        double *out);

/**
 * Releases a handle. Null is ignored.
 */
void rsf_relu_free(struct RsfReluNetwork *net);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSF_H */
