#ifndef EO2SAR_H
#define EO2SAR_H

#include <stddef.h>
#include <stdint.h>

// Pass as `target_class` to explain the predicted class.
#define EO2SAR_PREDICTED_CLASS -1

// Result of every call.
typedef enum Eo2sarStatus {
  EO2SAR_STATUS_OK = 0,
  // A required pointer argument was null.
  EO2SAR_STATUS_NULL_POINTER = 1,
  // An argument is out of range, or a string is not valid UTF-8.
  EO2SAR_STATUS_INVALID_ARGUMENT = 2,
  // File or data could not be read or is malformed.
  EO2SAR_STATUS_DATA = 3,
  // Input or computation produced NaN or infinity.
  EO2SAR_STATUS_NON_FINITE = 4,
  // The checkpoint file does not exist.
  EO2SAR_STATUS_MISSING_CHECKPOINT = 5,
  // The checkpoint exists but is not a valid checkpoint.
  EO2SAR_STATUS_BAD_CHECKPOINT = 6,
  // Internal error, including a caught panic.
  EO2SAR_STATUS_INTERNAL = 7,
} Eo2sarStatus;

typedef enum Eo2sarCamMethod {
  EO2SAR_CAM_METHOD_GRAD_CAM = 0,
  EO2SAR_CAM_METHOD_GAP_CAM = 1,
} Eo2sarCamMethod;

typedef enum Eo2sarAngleBin {
  // (19, 25] degrees.
  EO2SAR_ANGLE_BIN_SMALL = 0,
  // (25, 35] degrees.
  EO2SAR_ANGLE_BIN_MEDIUM = 1,
  // (35, 47] degrees.
  EO2SAR_ANGLE_BIN_LARGE = 2,
} Eo2sarAngleBin;

// Opaque model handle.
typedef struct Eo2sarModel Eo2sarModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Load a checkpoint. On success `*out_model` owns a new handle.
//
// # Safety
// `path` must be a NUL-terminated string and `out_model` a valid pointer.
enum Eo2sarStatus eo2sar_model_load(const char *path, struct Eo2sarModel **out_model);

// Release a handle. Null is ignored.
//
// # Safety
// `model` must come from `eo2sar_model_load` and not be used afterwards.
void eo2sar_model_free(struct Eo2sarModel *model);

// Chip side length `S` the model expects.
//
// # Safety
// `model` must be a live handle and `out_size` a valid pointer.
enum Eo2sarStatus eo2sar_model_input_size(const struct Eo2sarModel *model, size_t *out_size);

// Classify `count` chips stored back to back at `chips`.
//
// Writes `2 · count` logits (no_ship, ship per chip) to `out_logits` and,
// when `out_labels` is not null, `count` class indices (0 = no ship, 1 = ship).
//
// # Safety
// `chips` must hold `count · 3 · S · S` floats, `out_logits` room for
// `2 · count` floats and `out_labels`, if given, room for `count` bytes.
enum Eo2sarStatus eo2sar_model_predict(const struct Eo2sarModel *model,
                                       const float *chips,
                                       size_t count,
                                       float *out_logits,
                                       uint8_t *out_labels);

// Class activation map of one chip, upsampled to `S × S` and scaled to a
// maximum of 1 (all zeros when nothing activates).
//
// `target_class` is 0 (no ship), 1 (ship) or `EO2SAR_PREDICTED_CLASS`.
// The class actually explained is written to `out_class` when it is not null.
//
// # Safety
// `chip` must hold `3 · S · S` floats and `out_map` room for `S · S` floats.
enum Eo2sarStatus eo2sar_model_cam(const struct Eo2sarModel *model,
                                   enum Eo2sarCamMethod method,
                                   const float *chip,
                                   int32_t target_class,
                                   float *out_map,
                                   uint32_t *out_class);

// Incidence-angle stratum of `angle` degrees; defined on (19, 47].
//
// # Safety
// `out_bin` must be a valid pointer.
enum Eo2sarStatus eo2sar_bin_incidence_angle(double angle, enum Eo2sarAngleBin *out_bin);

// Message for the last failed call on this thread, or "" after a success.
// Valid until the next call on the same thread.
const char *eo2sar_last_error_message(void);

// Library version, e.g. "0.1.0". Static storage.
const char *eo2sar_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EO2SAR_H */
