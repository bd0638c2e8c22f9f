/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef CFCOMM_H
#define CFCOMM_H

#include <stddef.h>
#include <stdint.h>

typedef enum CfcPreset {
  Calibration = 0,
  Bit0 = 1,
  Bit1 = 2,
} CfcPreset;

typedef enum CfcStatus {
  Ok = 0,
  NullPointer = 1,
  InvalidUtf8 = 2,
  Config = 3,
  Topology = 4,
  UndefinedPostselection = 5,
  UnknownDetector = 6,
  Parse = 7,
  Io = 8,
  Panic = 9,
} CfcStatus;

/**
 * Opaque device handle.
 */
typedef struct CfcDevice CfcDevice;

/**
 * Terminal probabilities of one photon.
 */
typedef struct CfcProbs {
  double d0;
  double d1;
  double lost;
} CfcProbs;

/**
 * Message for the last failed call on this thread, or NULL. Valid until
 * the next failing call on the same thread.
 */
const char *cfc_last_error_message(void);

/**
 * The built-in reference device. Never NULL.
 */
struct CfcDevice *cfc_device_reference(void);

/**
 * Parses a device from a JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CfcStatus cfc_device_from_json(const char *json, struct CfcDevice **out);

/**
 * # Safety
 * `dev` must be NULL or a handle from `cfc_device_*` not yet freed.
 */
void cfc_device_free(struct CfcDevice *dev);

/**
 * Terminal probabilities for a tuning, sidebands included.
 *
 * # Safety
 * `dev` must be a live handle and `out` a valid pointer.
 */
enum CfcStatus cfc_detection_probs(const struct CfcDevice *dev,
                                   enum CfcPreset preset,
                                   struct CfcProbs *out);

/**
 * Attenuator transmission that nulls D0 with the shutters inserted.
 *
 * # Safety
 * `dev` must be a live handle and `out` a valid pointer.
 */
enum CfcStatus cfc_balance_attenuator(const struct CfcDevice *dev, double *out);

/**
 * Weak trace per arm as a JSON object `{arm: trace}`.
 *
 * # Safety
 * `dev` must be a live handle, `detector` a NUL-terminated string and
 * `out` a valid pointer. Free the result with `cfc_string_free`.
 */
enum CfcStatus cfc_weak_trace_json(const struct CfcDevice *dev,
                                   enum CfcPreset preset,
                                   const char *detector,
                                   char **out);

/**
 * Source cascade report as JSON.
 *
 * # Safety
 * `dev` must be a live handle and `out` a valid pointer. Free the result
 * with `cfc_string_free`.
 */
enum CfcStatus cfc_source_filter_json(const struct CfcDevice *dev, char **out);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void cfc_string_free(char *s);

#endif  /* CFCOMM_H */
