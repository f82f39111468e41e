#ifndef HORD_H
#define HORD_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define HORD_API __declspec(dllexport)
#else
#define HORD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as CLI exit codes. */
typedef enum hord_status {
  HORD_OK = 0,
  HORD_ERR_USAGE = 1,
  HORD_ERR_IO = 2,
  HORD_ERR_NUMERICAL = 3
} hord_status;

typedef struct hord_config hord_config;
typedef struct hord_dataset hord_dataset;
typedef struct hord_model hord_model;

typedef struct hord_metrics {
  double rank1, rank5, rank10;
  double map;
} hord_metrics;

/* Message of the last failed call on this thread; "" after success. */
HORD_API const char* hord_last_error(void);

/* Strings returned through char** out-parameters are released with this. */
HORD_API void hord_string_free(char* s);

/* Config: flat key=value text. */
HORD_API hord_status hord_config_new(hord_config** out);
HORD_API hord_status hord_config_load(const char* path, hord_config** out);
HORD_API hord_status hord_config_parse(const char* text, hord_config** out);
HORD_API hord_status hord_config_set(hord_config* config, const char* key, const char* value);
HORD_API hord_status hord_config_serialize(const hord_config* config, char** out);
HORD_API void hord_config_free(hord_config* config);

/* Synthetic benchmark; every other generator setting keeps its default. */
HORD_API hord_status hord_dataset_generate(size_t ids, size_t per_id, double occlusion_rate,
                                           uint64_t seed, hord_dataset** out);
HORD_API hord_status hord_dataset_load(const char* path, hord_dataset** out);
HORD_API hord_status hord_dataset_save(const hord_dataset* data, const char* path);
HORD_API size_t hord_dataset_size(const hord_dataset* data);
HORD_API void hord_dataset_free(hord_dataset* data);

/* Called after every epoch (counted from 1). */
typedef void (*hord_epoch_fn)(size_t epoch, double mean_loss, void* user);

HORD_API hord_status hord_train(const hord_dataset* data, const hord_config* config,
                                hord_epoch_fn on_epoch, void* user, hord_model** out);
HORD_API hord_status hord_model_load(const char* path, hord_model** out);
HORD_API hord_status hord_model_save(const hord_model* model, const char* path);
/* CSV "epoch,loss"; empty trace for loaded or untrained variants. */
HORD_API hord_status hord_model_save_loss_trace(const hord_model* model, const char* path);
/* Borrowed view of the per-epoch mean losses; valid while the model lives. */
HORD_API hord_status hord_model_loss_trace(const hord_model* model, const double** values,
                                           size_t* count);
HORD_API hord_status hord_model_config(const hord_model* model, char** out);
HORD_API void hord_model_free(hord_model* model);

/* Test-split retrieval. gamma < 0 or top_n == 0 fall back to the model's config. */
HORD_API hord_status hord_evaluate(const hord_model* model, const hord_dataset* data,
                                   double gamma, size_t top_n, hord_metrics* out);
/* The four metric lines, name<TAB>value. */
HORD_API hord_status hord_metrics_format(const hord_metrics* metrics, char** out);

/* Finite-difference suite over seeds first_seed .. first_seed + seeds - 1.
   `report` (optional) gets one "seed<TAB>name<TAB>error" line per check. */
HORD_API hord_status hord_gradcheck(uint64_t first_seed, size_t seeds, double* max_error,
                                    char** report);

/* Toy graph-matching pair with K <= 4 nodes, U next to the brute-force answer. */
HORD_API hord_status hord_gm_demo(size_t keypoints, uint64_t seed, char** report);

#ifdef __cplusplus
}
#endif

#endif
