#ifndef WUKONG_WUKONG_H
#define WUKONG_WUKONG_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define WK_API __attribute__((visibility("default")))
#else
#define WK_API
#endif

/* Status codes. Values equal the CLI exit codes. */
typedef enum wk_status {
  WK_OK = 0,
  WK_E_INTERNAL = 1,
  WK_E_USAGE = 2,
  WK_E_PARSE = 3,
  WK_E_INTEGRITY = 4,
  WK_E_MISSING_BLOB = 5,
  WK_E_EXTERNAL_TOOL = 6,
  WK_E_CONVERSION = 7,
  WK_E_PROVIDER = 8,
  WK_E_PROVIDER_CONTRACT = 9,
  WK_E_DIMS = 10,
  WK_E_CACHE_FORMAT = 11,
  WK_E_CACHE_VERSION = 12,
  WK_E_CACHE_MISS = 13,
  WK_E_CONFIG = 14,
  WK_E_DOMAIN = 15,
  WK_E_TRAINING_DIVERGED = 16,
  WK_E_BACKEND = 17,
  WK_E_CONTEXT_OVERFLOW = 18,
  WK_E_STRATEGY_UNSATISFIABLE = 19,
  WK_E_TEMPLATE = 20,
  WK_E_GENERATION_PARSE = 21,
  WK_E_SKIP_DOCUMENT = 22,
  WK_E_IO = 23,
  WK_E_EMPTY_RUN = 24,
  WK_E_NOT_FOUND = 25
} wk_status;

typedef struct wk_engine wk_engine;

/*
 * Every call that takes `char **out` stores a heap JSON string there, on
 * success and on failure alike. On failure it has the form
 *   {"error":{"code":N,"name":"...","message":"..."}}
 * and a failed ask also carries "evidence". Release it with wk_free_string.
 */

WK_API wk_status wk_engine_open(const char *config_json, wk_engine **engine, char **out);
WK_API void wk_engine_close(wk_engine *engine);

/* {"path":...} or {"document_xml":..., "blobs":{"sha256:<hex>":"<base64>"}} */
WK_API wk_status wk_ingest(wk_engine *engine, const char *request_json, char **out);
WK_API wk_status wk_list_documents(wk_engine *engine, char **out);
WK_API wk_status wk_get_document(wk_engine *engine, const char *doc_id, char **out);
/* Raw blob bytes in *data (free with wk_free_blob); *out is set only on failure. */
WK_API wk_status wk_get_blob(wk_engine *engine, const char *hash, unsigned char **data, size_t *size, char **out);

/* {"question":..., "k":...} */
WK_API wk_status wk_ask(wk_engine *engine, const char *doc_id, const char *request_json, char **out);
WK_API wk_status wk_sample(wk_engine *engine, const char *doc_id, const char *request_json, char **out);

/* {"corpus_path"|"corpus":[...], "predictions_path"|"predictions":[...], "k":..., "length_edges":[...]} */
WK_API wk_status wk_eval_run(wk_engine *engine, const char *request_json, char **out);
WK_API wk_status wk_build_dataset(wk_engine *engine, const char *request_json, char **out);
WK_API wk_status wk_train_adapter(wk_engine *engine, const char *request_json, char **out);
WK_API wk_status wk_check_store(wk_engine *engine, char **out);

WK_API void wk_free_string(char *s);
WK_API void wk_free_blob(unsigned char *data);

WK_API const char *wk_status_name(int status);
/* HTTP status for a wk_status: 200, 400, 404, 422, 500, 502 or 507. */
WK_API int wk_http_status(int status);
WK_API const char *wk_version(void);

#ifdef __cplusplus
}
#endif

#endif
