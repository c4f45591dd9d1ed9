/* C interface to the dag_grow library.
 *
 * Every function returns a dg_status. On failure dg_last_error() returns a
 * thread-local message describing the most recent error on the calling
 * thread. Strings returned through char** outputs are owned by the caller and
 * released with dg_string_free. Handles are released with their *_free
 * function; passing NULL to a *_free function is a no-op.
 */
#ifndef DAG_GROW_H
#define DAG_GROW_H

#include <stddef.h>
#include <stdint.h>

#if defined(DG_BUILDING)
#define DG_API __attribute__((visibility("default")))
#else
#define DG_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dg_status {
  DG_OK = 0,
  DG_ERR_USAGE = 2,   /* bad argument, unknown key, invalid request */
  DG_ERR_DATA = 3,    /* unreadable or malformed input data or model */
  DG_ERR_NUMERIC = 4, /* non-finite values, singular systems */
  DG_ERR_IO = 5,      /* output could not be written */
  DG_ERR_INTERNAL = 6
} dg_status;

typedef struct dg_network dg_network;
typedef struct dg_config dg_config;
typedef struct dg_run dg_run;

DG_API const char* dg_last_error(void);
DG_API const char* dg_version(void);
DG_API void dg_string_free(char* s);

/* ---- networks ---------------------------------------------------------- */

DG_API dg_status dg_network_create_empty(int input_width, int output_width, dg_network** out);
DG_API dg_status dg_network_create_teacher(uint64_t seed, dg_network** out);
DG_API dg_status dg_network_load(const char* path, dg_network** out);
DG_API dg_status dg_network_save(const dg_network* net, const char* path);
DG_API dg_status dg_network_serialize(const dg_network* net, char** out);
DG_API dg_status dg_network_deserialize(const char* document, dg_network** out);
DG_API void dg_network_free(dg_network* net);

DG_API dg_status dg_network_param_count(const dg_network* net, int64_t* out);
DG_API dg_status dg_network_node_count(const dg_network* net, int* out);
DG_API dg_status dg_network_input_width(const dg_network* net, int* out);
DG_API dg_status dg_network_output_width(const dg_network* net, int* out);
/* Number of violations; messages joined by newlines when `messages` != NULL. */
DG_API dg_status dg_network_validate(const dg_network* net, int* violations, char** messages);
/* x: rows x input_width row-major; y: rows x output_width row-major. */
DG_API dg_status dg_network_forward(const dg_network* net, const double* x, int64_t rows,
                                    double* y);

/* ---- configuration ----------------------------------------------------- */

DG_API dg_status dg_config_create(dg_config** out);
DG_API void dg_config_free(dg_config* config);
/* Flat keys such as "strategy", "steps", "epochs", "neurons", "seed", "data". */
DG_API dg_status dg_config_set(dg_config* config, const char* key, const char* value);
DG_API dg_status dg_config_get(const dg_config* config, const char* key, char** value);
/* Newline-separated list of accepted keys. */
DG_API dg_status dg_config_keys(char** out);
/* Effective configuration as a JSON object of strings. */
DG_API dg_status dg_config_effective_json(const dg_config* config, char** out);

/* ---- runs -------------------------------------------------------------- */

/* initial may be NULL (start from the empty network). */
DG_API dg_status dg_run_experiment(const dg_config* config, const dg_network* initial,
                                   dg_run** out);
DG_API void dg_run_free(dg_run* run);
/* Writes PREFIX.csv (metric rows) and PREFIX.json (summary). */
DG_API dg_status dg_run_write(const dg_run* run, const char* prefix);
DG_API dg_status dg_run_summary_json(const dg_run* run, char** out);
DG_API dg_status dg_run_metrics_csv(const dg_run* run, char** out);
/* One applied move per line. */
DG_API dg_status dg_run_selected_sequence(const dg_run* run, char** out);
DG_API dg_status dg_run_final_params(const dg_run* run, int64_t* out);
/* Copy of the final network. */
DG_API dg_status dg_run_network(const dg_run* run, dg_network** out);

/* ---- analysis ---------------------------------------------------------- */

/* Per-node bottleneck CSV on the train-opt split described by `config`. */
DG_API dg_status dg_bottleneck_report_csv(const dg_network* net, const dg_config* config,
                                          char** out);
/* Comparison table over JSON summary files. */
DG_API dg_status dg_report(const char* const* summary_paths, size_t count, char** out);
/* Same table over finished runs held in memory. */
DG_API dg_status dg_report_runs(const dg_run* const* runs, size_t count, char** out);

#ifdef __cplusplus
}
#endif

#endif
