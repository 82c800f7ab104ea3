#ifndef MAYA_H
#define MAYA_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define MAYA_NUM_CLASSES 7

#define MAYA_EMBEDDING_DIM 48

#define MAYA_NUM_POINTS 68

typedef enum MayaStatus {
  MAYA_STATUS_OK = 0,
  MAYA_STATUS_NULL_ARGUMENT = 1,
  MAYA_STATUS_INVALID_ARGUMENT = 2,
  MAYA_STATUS_IO = 3,
  MAYA_STATUS_INVALID_LANDMARKS = 4,
  MAYA_STATUS_MODEL = 5,
  MAYA_STATUS_PHASE = 6,
  MAYA_STATUS_NOT_FOUND = 7,
  MAYA_STATUS_NO_MATCH = 8,
  MAYA_STATUS_STATS = 9,
  MAYA_STATUS_PANIC = 99,
} MayaStatus;

// Enrolled identities.
typedef struct MayaGallery MayaGallery;

// One game session with a deterministic clock.
typedef struct MayaGame MayaGame;

// Loaded expression classifier.
typedef struct MayaModel MayaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *maya_last_error(void);

// Library version as a static string.
const char *maya_version(void);

// Frees a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void maya_string_free(char *s);

// Loads a checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum MayaStatus maya_model_load(const char *path, struct MayaModel **out);

// Untrained network with seeded weights.
//
// # Safety
// `out` must be a writable pointer.
enum MayaStatus maya_model_new(uint64_t seed, struct MayaModel **out);

// # Safety
// `model` must come from `maya_model_load` or `maya_model_new`, or be null.
void maya_model_free(struct MayaModel *model);

// Classifies one face given as `n_points` (x, y) pairs, flattened.
//
// Writes `MAYA_NUM_CLASSES` probabilities to `probs`, the top class code to
// `top` and, when `embedding` is not null, `MAYA_EMBEDDING_DIM` values to it.
//
// # Safety
// `points` must hold `2 * n_points` values; output buffers must have the
// sizes above.
enum MayaStatus maya_model_predict(const struct MayaModel *model,
                                   const double *points,
                                   size_t n_points,
                                   double *probs,
                                   uint8_t *top,
                                   double *embedding);

// Name of an emotion class code, or null for an unknown code.
const char *maya_emotion_name(uint8_t code);

// Empty gallery matching at cosine similarity `threshold` or above.
//
// # Safety
// `out` must be a writable pointer.
enum MayaStatus maya_gallery_new(double threshold, struct MayaGallery **out);

// # Safety
// `gallery` must come from `maya_gallery_new` or be null.
void maya_gallery_free(struct MayaGallery *gallery);

// Enrolls a new person with one unit-norm embedding.
//
// # Safety
// `name` must be NUL-terminated, `embedding` must hold `len` values and
// `person_id` must be writable.
enum MayaStatus maya_gallery_enroll(struct MayaGallery *gallery,
                                    const char *name,
                                    const double *embedding,
                                    size_t len,
                                    uint64_t *person_id);

// Best match at or above the threshold. Returns `NoMatch` when nobody
// qualifies; `person_id` and `similarity` are then left untouched.
//
// # Safety
// `embedding` must hold `len` values; the outputs must be writable.
enum MayaStatus maya_gallery_identify(const struct MayaGallery *gallery,
                                      const double *embedding,
                                      size_t len,
                                      uint64_t *person_id,
                                      double *similarity);

// Starts a game. `config_json` is a game config object or null for the
// defaults with `seed`; a seed inside the JSON wins.
//
// # Safety
// `config_json` must be null or NUL-terminated; `out` must be writable.
enum MayaStatus maya_game_new(const char *config_json, uint64_t seed, struct MayaGame **out);

// # Safety
// `game` must come from `maya_game_new` or be null.
void maya_game_free(struct MayaGame *game);

// Runs one command, e.g. `{"command":"roll"}`. On success `result_json`
// receives `{"events": [...], "result": {...}}`.
//
// # Safety
// `command_json` must be NUL-terminated; `result_json` must be writable or null.
enum MayaStatus maya_game_command(struct MayaGame *game,
                                  const char *command_json,
                                  char **result_json);

// Whole event log as JSON lines.
//
// # Safety
// `out` must be writable.
enum MayaStatus maya_game_events(const struct MayaGame *game, char **out);

// Two-tailed t-test. `paired` selects the paired test; otherwise Welch.
//
// # Safety
// `a` must hold `n_a` values and `b` `n_b`; outputs must be writable.
enum MayaStatus maya_t_test(const double *a,
                            size_t n_a,
                            const double *b,
                            size_t n_b,
                            bool paired,
                            double *t,
                            double *df,
                            double *p);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MAYA_H */
