#ifndef CODINGTREE_H
#define CODINGTREE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum CtStatus {
  CT_STATUS_OK = 0,
  CT_STATUS_NULL_POINTER = 1,
  CT_STATUS_INVALID_UTF8 = 2,
  CT_STATUS_VALIDATION = 3,
  CT_STATUS_PARSE = 4,
  CT_STATUS_CONFIG = 5,
  CT_STATUS_STRUCTURAL = 6,
  CT_STATUS_SHAPE = 7,
  CT_STATUS_SIZE = 8,
  CT_STATUS_MISSING_ARTIFACT = 9,
  CT_STATUS_IO = 10,
  CT_STATUS_BUFFER_TOO_SMALL = 11,
  CT_STATUS_PANIC = 12,
} CtStatus;

// Tree construction method for [`ct_tree_build`].
typedef enum CtTreeMethod {
  CT_TREE_METHOD_SEMA = 0,
  CT_TREE_METHOD_RANDOM = 1,
} CtTreeMethod;

// Word vectors loaded from a text file.
typedef struct CtEmbeddings CtEmbeddings;

// A validated document graph.
typedef struct CtGraph CtGraph;

// A trained model plus the feature settings it was trained with.
typedef struct CtModel CtModel;

// A coding tree with every leaf at level 0.
typedef struct CtTree CtTree;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a success.
// The pointer stays valid until the next `ct_` call on this thread.
const char *ct_last_error(void);

// Library version as a static string.
const char *ct_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void ct_string_free(char *s);

// Parses a graph interchange record.
//
// # Safety
// `json` must be a nul-terminated string; `out` must be writable.
enum CtStatus ct_graph_from_json(const char *json, struct CtGraph **out);

// Reads a graph interchange file.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum CtStatus ct_graph_read(const char *path, struct CtGraph **out);

// Serializes a graph; free the result with [`ct_string_free`].
//
// # Safety
// `graph` must be a live handle; `out` must be writable.
enum CtStatus ct_graph_to_json(const struct CtGraph *graph, char **out);

// Token and edge counts.
//
// # Safety
// `graph` must be a live handle; the out-parameters must be writable.
enum CtStatus ct_graph_size(const struct CtGraph *graph, uintptr_t *nodes, uintptr_t *edges);

// # Safety
// `graph` must be null or a live handle, and is invalid afterwards.
void ct_graph_free(struct CtGraph *graph);

// Builds a coding tree of exactly `height` levels for `graph`.
//
// # Safety
// `graph` must be a live handle; `out` must be writable.
enum CtStatus ct_tree_build(const struct CtGraph *graph,
                            uintptr_t height,
                            enum CtTreeMethod method,
                            uint64_t seed,
                            struct CtTree **out);

// Reads a tree file.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum CtStatus ct_tree_read(const char *path, struct CtTree **out);

// Structural entropy of `graph` under `tree`, in bits.
//
// # Safety
// Both handles must be live; `bits` must be writable.
enum CtStatus ct_tree_entropy(const struct CtGraph *graph, const struct CtTree *tree, double *bits);

// Height and total node count.
//
// # Safety
// `tree` must be a live handle; the out-parameters must be writable.
enum CtStatus ct_tree_size(const struct CtTree *tree, uintptr_t *height, uintptr_t *nodes);

// Tree file record for `tree` over `graph`, entropy included. Free the
// result with [`ct_string_free`].
//
// # Safety
// Both handles must be live; `out` must be writable.
enum CtStatus ct_tree_to_json(const struct CtGraph *graph, const struct CtTree *tree, char **out);

// # Safety
// `tree` must be null or a live handle, and is invalid afterwards.
void ct_tree_free(struct CtTree *tree);

// Loads word vectors (`word v1 .. vd` per line).
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum CtStatus ct_embeddings_read(const char *path, struct CtEmbeddings **out);

// Vector dimension and vocabulary size.
//
// # Safety
// `emb` must be a live handle; the out-parameters must be writable.
enum CtStatus ct_embeddings_size(const struct CtEmbeddings *emb, uintptr_t *dim, uintptr_t *words);

// # Safety
// `emb` must be null or a live handle, and is invalid afterwards.
void ct_embeddings_free(struct CtEmbeddings *emb);

// Loads a model checkpoint written by the `train` command.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum CtStatus ct_model_read(const char *path, struct CtModel **out);

// Parameter count and number of classes.
//
// # Safety
// `model` must be a live handle; the out-parameters must be writable.
enum CtStatus ct_model_size(const struct CtModel *model, uintptr_t *params, uintptr_t *classes);

// Classifies one document. Writes the predicted class to `class` and, when
// `probs` is not null, the class probabilities to `probs[0..probs_len]`
// (`probs_len` must be at least the class count).
//
// # Safety
// Handles must be live; `probs` must be null or hold `probs_len` doubles.
enum CtStatus ct_model_predict(const struct CtModel *model,
                               const struct CtGraph *graph,
                               const struct CtTree *tree,
                               const struct CtEmbeddings *emb,
                               uintptr_t *class_,
                               double *probs,
                               uintptr_t probs_len);

// # Safety
// `model` must be null or a live handle, and is invalid afterwards.
void ct_model_free(struct CtModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CODINGTREE_H */
