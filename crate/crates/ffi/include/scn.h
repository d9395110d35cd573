/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef SCN_FFI_H
#define SCN_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum ScnStatus {
  SCN_STATUS_OK = 0,
  SCN_STATUS_NULL_ARGUMENT = 1,
  SCN_STATUS_INVALID_ARGUMENT = 2,
  SCN_STATUS_IO = 3,
  SCN_STATUS_FORMAT = 4,
  SCN_STATUS_CONFIG = 5,
  SCN_STATUS_NUMERIC = 6,
  SCN_STATUS_PANIC = 7,
} ScnStatus;

/**
 * Opaque list of graphs.
 */
typedef struct ScnDataset ScnDataset;

/**
 * Opaque trained model.
 */
typedef struct ScnModel ScnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *scn_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *scn_version(void);

/**
 * Generates a synthetic benchmark (`grid`, `grid_house`, `stars` or
 * `house_colour`). A `count` of 0 keeps the default size.
 *
 * # Safety
 * `name` must be a valid C string and `out` a valid pointer.
 */
enum ScnStatus scn_dataset_generate(const char *name,
                                    uint64_t seed,
                                    size_t count,
                                    struct ScnDataset **out);

/**
 * Reads a JSON-lines dataset.
 *
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum ScnStatus scn_dataset_load(const char *path, struct ScnDataset **out);

/**
 * # Safety
 * `ds` must be null or a handle from this library not yet freed.
 */
void scn_dataset_free(struct ScnDataset *ds);

/**
 * Number of graphs; 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t scn_dataset_len(const struct ScnDataset *ds);

/**
 * Node feature width; 0 for a null or empty dataset.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t scn_dataset_num_features(const struct ScnDataset *ds);

/**
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t scn_dataset_num_classes(const struct ScnDataset *ds);

/**
 * Node count and label of graph `index`.
 *
 * # Safety
 * `ds` must be a live handle; `nodes` and `label` valid pointers.
 */
enum ScnStatus scn_dataset_graph_info(const struct ScnDataset *ds,
                                      size_t index,
                                      size_t *nodes,
                                      size_t *label);

/**
 * Loads a checkpoint written by `scn train`.
 *
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum ScnStatus scn_model_load(const char *path, struct ScnModel **out);

/**
 * # Safety
 * `m` must be null or a handle from this library not yet freed.
 */
void scn_model_free(struct ScnModel *m);

/**
 * # Safety
 * `m` must be null or a live handle.
 */
size_t scn_model_num_features(const struct ScnModel *m);

/**
 * # Safety
 * `m` must be null or a live handle.
 */
size_t scn_model_num_classes(const struct ScnModel *m);

/**
 * Predicts a class for every graph of `ds`, writing `scn_dataset_len(ds)`
 * entries into `labels`, whose capacity is `capacity`.
 *
 * # Safety
 * `m` and `ds` must be live handles; `labels` must hold `capacity` entries.
 */
enum ScnStatus scn_model_predict(const struct ScnModel *m,
                                 const struct ScnDataset *ds,
                                 size_t *labels,
                                 size_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCN_FFI_H */
