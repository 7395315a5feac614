/*
 * C interface to the zero-shot relation extraction engine.
 *
 * Every object is an opaque handle created by a *_create/_load/... call and
 * released with the matching *_destroy. Functions return ZSRE_OK or an error
 * status; zsre_last_error() then holds a one-line message for the calling
 * thread. Strings returned through char** are owned by the caller and must
 * be released with zsre_string_free.
 */
#ifndef ZSRE_H
#define ZSRE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(ZSRE_BUILDING)
#define ZSRE_API __declspec(dllexport)
#else
#define ZSRE_API __declspec(dllimport)
#endif
#else
#define ZSRE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum zsre_status {
  ZSRE_OK = 0,
  ZSRE_ERR_INVALID_ARGUMENT = 1,
  ZSRE_ERR_IO = 2,
  ZSRE_ERR_PARSE = 3,
  ZSRE_ERR_VALIDATION = 4,
  ZSRE_ERR_NUMERIC = 5,
  ZSRE_ERR_VERSION = 6,
  ZSRE_ERR_INTERNAL = 100
} zsre_status;

typedef struct zsre_config zsre_config;
typedef struct zsre_corpus zsre_corpus;
typedef struct zsre_split zsre_split;
typedef struct zsre_model zsre_model;

ZSRE_API const char* zsre_version(void);
ZSRE_API const char* zsre_last_error(void);
ZSRE_API const char* zsre_status_name(zsre_status status);
ZSRE_API void zsre_string_free(char* s);

/* Configuration. `path` and `overrides_json` may be NULL. Overrides win over
 * the file, the file wins over the preset. Referenced paths must exist. */
ZSRE_API zsre_status zsre_config_build(const char* path, const char* overrides_json, zsre_config** out);
ZSRE_API zsre_status zsre_config_to_json(const zsre_config* config, char** out_json);
ZSRE_API void zsre_config_destroy(zsre_config* config);

/* Corpora. */
ZSRE_API zsre_status zsre_corpus_load(const zsre_config* config, zsre_corpus** out);
ZSRE_API zsre_status zsre_corpus_synthesize(const char* synthetic_json, zsre_corpus** out);
/* Writes instances.jsonl, relations.jsonl and, when present, token_embeddings.jsonl. */
ZSRE_API zsre_status zsre_corpus_save(const zsre_corpus* corpus, const char* dir);
ZSRE_API size_t zsre_corpus_instance_count(const zsre_corpus* corpus);
ZSRE_API size_t zsre_corpus_relation_count(const zsre_corpus* corpus);
ZSRE_API void zsre_corpus_destroy(zsre_corpus* corpus);

/* Zero-shot / few-shot splits. */
ZSRE_API zsre_status zsre_split_zero_shot(const zsre_corpus* corpus, size_t m, uint64_t seed, zsre_split** out);
ZSRE_API zsre_status zsre_split_few_shot(const zsre_split* split, const zsre_corpus* corpus, double fraction,
                                         uint64_t seed, zsre_split** out);
ZSRE_API zsre_status zsre_split_load(const char* path, zsre_split** out);
ZSRE_API zsre_status zsre_split_save(const zsre_split* split, const char* path);
ZSRE_API zsre_status zsre_split_to_json(const zsre_split* split, char** out_json);
ZSRE_API void zsre_split_destroy(zsre_split* split);

/* Training. `history_jsonl` may be NULL. */
ZSRE_API zsre_status zsre_train(const zsre_config* config, const zsre_corpus* corpus, const zsre_split* split,
                                zsre_model** out, char** history_jsonl);
ZSRE_API zsre_status zsre_model_save(const zsre_model* model, const char* path);
ZSRE_API zsre_status zsre_model_load(const char* path, zsre_model** out);
ZSRE_API size_t zsre_model_attr_dim(const zsre_model* model);
/* Sentence embedding for one instance given as a JSON object in the
 * instances-file schema. Needs a token-encoder model; writes attr_dim values. */
ZSRE_API zsre_status zsre_model_embed(const zsre_model* model, const char* instance_json, double* out, size_t out_len);
ZSRE_API void zsre_model_destroy(zsre_model* model);

/* Inference and dumps. `hidden_states_path` and `dist` may be NULL; a NULL
 * dist uses the model's configured distance. */
ZSRE_API zsre_status zsre_predict_file(const zsre_model* model, const char* relations_path,
                                       const char* instances_path, const char* hidden_states_path,
                                       const char* dist, const char* out_path);
ZSRE_API zsre_status zsre_dump_embeddings(const zsre_model* model, const char* instances_path,
                                          const char* hidden_states_path, const char* out_path);

/* Protocols, driven by the config. */
ZSRE_API zsre_status zsre_run_experiment(const zsre_config* config, const zsre_corpus* corpus, char** report_json);
ZSRE_API zsre_status zsre_run_fewshot(const zsre_config* config, const zsre_corpus* corpus, char** csv);
ZSRE_API zsre_status zsre_run_sweep(const zsre_config* config, const zsre_corpus* corpus, char** csv);
/* `passed` receives 1 when every tensor is within gradcheck_tol. */
ZSRE_API zsre_status zsre_gradcheck(const zsre_config* config, const zsre_corpus* corpus, char** table, int* passed);

#ifdef __cplusplus
}
#endif

#endif /* ZSRE_H */
