/* C interface to the dig library. Every call returns a dig_status; on failure
 * dig_last_error() describes the problem for the calling thread. Strings
 * returned through char** out-parameters are owned by the caller and must be
 * released with dig_string_free. */
#ifndef DIG_DIG_H
#define DIG_DIG_H

#include <stddef.h>
#include <stdint.h>

#if defined(DIG_BUILDING_LIBRARY)
#define DIG_API __attribute__((visibility("default")))
#else
#define DIG_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dig_status {
  DIG_OK = 0,
  DIG_ERR_INVALID_ARGUMENT = 1,
  DIG_ERR_IO = 2,
  DIG_ERR_CORRUPT = 3,
  DIG_ERR_MISMATCH = 4,
  DIG_ERR_NUMERICAL = 5,
  DIG_ERR_INTERNAL = 6
} dig_status;

typedef struct dig_config dig_config;

DIG_API const char* dig_version(void);
DIG_API const char* dig_last_error(void);
DIG_API const char* dig_status_name(dig_status status);
DIG_API void dig_string_free(char* s);
/* 0 silences progress output on stderr; warnings are always printed. */
DIG_API void dig_set_verbosity(int level);

/* Run configuration. */
DIG_API dig_status dig_config_new(const char* preset, dig_config** out);
DIG_API dig_status dig_config_load(const char* path, dig_config** out);
/* "section.key=value"; the value parses as JSON, else as a string. Unknown
 * keys are rejected immediately; value ranges are checked by
 * dig_config_validate and by every pipeline stage. */
DIG_API dig_status dig_config_set(dig_config* config, const char* assignment);
DIG_API dig_status dig_config_validate(const dig_config* config);
DIG_API dig_status dig_config_to_json(const dig_config* config, char** out_json);
DIG_API dig_status dig_config_get(const dig_config* config, const char* key, char** out_json);
DIG_API void dig_config_free(dig_config* config);

/* Pipeline stages. Reports are JSON documents. */
DIG_API dig_status dig_render_corpus(const dig_config* config, char** out_report);
DIG_API dig_status dig_pretrain(const dig_config* config, const char* run_dir, char** out_report);
DIG_API dig_status dig_probe(const dig_config* config, const char* run_dir, char** out_report);
DIG_API dig_status dig_finetune(const dig_config* config, const char* run_dir, char** out_report);
DIG_API dig_status dig_eval(const dig_config* config, const char* run_dir, char** out_report);
DIG_API dig_status dig_reconstruct(const dig_config* config, const char* run_dir, char** out_report);

/* Metrics over HWC float images with values in [0,1]. */
DIG_API dig_status dig_psnr(const float* a, const float* b, int height, int width, int channels, double* out);
DIG_API dig_status dig_ssim(const float* a, const float* b, int height, int width, int channels, double* out);
DIG_API dig_status dig_iou(const float* pred, const float* truth, size_t count, double threshold, double* out);

#ifdef __cplusplus
}
#endif

#endif
