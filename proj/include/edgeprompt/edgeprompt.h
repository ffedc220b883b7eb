#ifndef EDGEPROMPT_EDGEPROMPT_H
#define EDGEPROMPT_EDGEPROMPT_H

/* C interface to the edgeprompt library.
 *
 * Every fallible call returns an ep_status. On failure the message is kept in
 * thread-local storage until the next failing call on the same thread and can
 * be read with ep_last_error(). Strings returned through char** out-parameters
 * are owned by the caller and released with ep_string_free(). Handles are
 * released with their matching *_free function; passing NULL is a no-op. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define EP_API __declspec(dllexport)
#else
#define EP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ep_status {
    EP_OK = 0,
    EP_ERR_INVALID_ARGUMENT = 1, /* NULL pointer or malformed call */
    EP_ERR_SHAPE = 2,
    EP_ERR_INDEX = 3,
    EP_ERR_PARSE = 4,
    EP_ERR_VALIDATION = 5,
    EP_ERR_CONFIG = 6,
    EP_ERR_FORMAT = 7,
    EP_ERR_RANGE = 8,
    EP_ERR_COMPATIBILITY = 9,
    EP_ERR_INSUFFICIENT_DATA = 10,
    EP_ERR_STATE = 11,
    EP_ERR_IO = 12,
    EP_ERR_DOMAIN = 13,
    EP_ERR_INTERNAL = 14 /* anything not raised by the library itself */
} ep_status;

typedef struct ep_dataset ep_dataset;
typedef struct ep_checkpoint ep_checkpoint;

EP_API const char* ep_version(void);
EP_API const char* ep_status_name(ep_status status);
/* Process exit code for a status: 0 ok, 2 usage or configuration problems
 * (config, range, parse, compatibility), 1 everything else. */
EP_API int ep_status_exit_code(ep_status status);
/* Message of the last failure on this thread; "" if none. */
EP_API const char* ep_last_error(void);
EP_API void ep_string_free(char* s);

/* Datasets (graph container JSON files). */
EP_API ep_status ep_dataset_load(const char* path, ep_dataset** out);
/* JSON object {task, num_classes, graphs, nodes, edges, feature_dim}. */
EP_API ep_status ep_dataset_info(const ep_dataset* ds, char** json_out);
EP_API void ep_dataset_free(ep_dataset* ds);

/* Checkpoints. */
EP_API ep_status ep_checkpoint_load(const char* path, ep_checkpoint** out);
/* Lower-case hex SHA-256 of the canonical encoding. */
EP_API ep_status ep_checkpoint_digest(const ep_checkpoint* ckpt, char** hex_out);
/* JSON object {kind, dims, strategy, seed, epochs, metadata}. */
EP_API ep_status ep_checkpoint_info(const ep_checkpoint* ckpt, char** json_out);
EP_API void ep_checkpoint_free(ep_checkpoint* ckpt);

/* Parses key=value config text into a JSON object of strings. */
EP_API ep_status ep_settings_parse(const char* text, char** json_out);

/* Runs one command ("pretrain", "tune", "eval", "verify-theorem1",
 * "verify-theorem2", "gen-csbm") with a JSON object of string settings and
 * returns its JSON result. */
EP_API ep_status ep_run(const char* command, const char* settings_json, char** result_json);

/* Theory helpers. */
EP_API ep_status ep_theorem1_max_ratio(double p, double q, double* value_out, int* bounded_out);
EP_API ep_status ep_lemma1_coefficient(const ep_dataset* ds, size_t graph_index, double epsilon,
                                       double* value_out);

#ifdef __cplusplus
}
#endif

#endif /* EDGEPROMPT_EDGEPROMPT_H */
