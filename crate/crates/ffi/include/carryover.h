#ifndef CARRYOVER_H
#define CARRYOVER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CarryoverStatus {
  CARRYOVER_STATUS_OK = 0,
  CARRYOVER_STATUS_NULL_POINTER = 1,
  CARRYOVER_STATUS_INVALID_UTF8 = 2,
  CARRYOVER_STATUS_IO = 3,
  CARRYOVER_STATUS_PARSE = 4,
  CARRYOVER_STATUS_INVALID_INPUT = 5,
  CARRYOVER_STATUS_INTERNAL = 6,
} CarryoverStatus;

/*
 Token embedding table.
 */
typedef struct CarryoverEmbeddings CarryoverEmbeddings;

/*
 A trained model with the embeddings it was trained against.
 */
typedef struct CarryoverPredictor CarryoverPredictor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or null. The pointer
 stays valid until the next call into the library on this thread.
 */
const char *carryover_last_error(void);

/*
 Library version as a static nul-terminated string.
 */
const char *carryover_version(void);

/*
 # Safety
 `s` must be null or a string returned by this library and not yet freed.
 */
void carryover_string_free(char *s);

/*
 Load a whitespace-separated token embedding file. Out-of-vocabulary
 tokens map to the zero vector.

 # Safety
 `path` must be a nul-terminated string; `out` must be writable.
 */
enum CarryoverStatus carryover_embeddings_load(const char *path, struct CarryoverEmbeddings **out);

/*
 Embedding dimension, or 0 for a null handle.

 # Safety
 `emb` must be null or a live handle.
 */
size_t carryover_embeddings_dim(const struct CarryoverEmbeddings *emb);

/*
 Mean embedding of the whitespace tokens of `phrase` into `out[0..len]`;
 `len` must equal the embedding dimension.

 # Safety
 `emb` must be a live handle, `phrase` a nul-terminated string and `out`
 valid for `len` writes.
 */
enum CarryoverStatus carryover_embeddings_embed_phrase(const struct CarryoverEmbeddings *emb,
                                                       const char *phrase,
                                                       double *out,
                                                       size_t len);

/*
 # Safety
 `emb` must be null or a live handle; it is invalid afterwards.
 */
void carryover_embeddings_free(struct CarryoverEmbeddings *emb);

/*
 Load a checkpoint together with its token embeddings and label
 embeddings. Fails if the label file is not the one used in training.

 # Safety
 Paths must be nul-terminated strings; `out` must be writable.
 */
enum CarryoverStatus carryover_predictor_load(const char *checkpoint,
                                              const char *embeddings,
                                              const char *labels,
                                              struct CarryoverPredictor **out);

/*
 Carried slots of user turn `turn` of a dialog given as one native JSON
 record, as a JSON array of `{"key", "value"}` objects written to `out`.

 # Safety
 `predictor` must be a live handle, `dialog_json` a nul-terminated string
 and `out` writable.
 */
enum CarryoverStatus carryover_predictor_predict(const struct CarryoverPredictor *predictor,
                                                 const char *dialog_json,
                                                 size_t turn,
                                                 double tau,
                                                 char **out);

/*
 Every candidate of user turn `turn` with its carryover probability, as a
 JSON array written to `out`.

 # Safety
 As for [`carryover_predictor_predict`].
 */
enum CarryoverStatus carryover_predictor_score(const struct CarryoverPredictor *predictor,
                                               const char *dialog_json,
                                               size_t turn,
                                               char **out);

/*
 # Safety
 `predictor` must be null or a live handle; it is invalid afterwards.
 */
void carryover_predictor_free(struct CarryoverPredictor *predictor);

/*
 Micro precision, recall and F1 of hypothesis slot sets against reference
 slot sets. Both inputs are JSON arrays (one entry per turn) of arrays of
 `{"key", "value"}`; the report is written to `out` as JSON.

 # Safety
 Inputs must be nul-terminated strings; `out` must be writable.
 */
enum CarryoverStatus carryover_score_json(const char *hypotheses,
                                          const char *references,
                                          char **out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* CARRYOVER_H */
