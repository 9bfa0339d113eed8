/*
 * C API for the cosrec shared library.
 *
 * All commands are driven by an opaque config handle holding flat key=value
 * settings (the same keys the CLI exposes as long options). Functions return
 * 0 on success or an error code; cosrec_last_error() describes the most
 * recent failure on the calling thread.
 */
#ifndef COSREC_H
#define COSREC_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#define COSREC_OK 0
#define COSREC_ERR_INTERNAL 1
#define COSREC_ERR_USAGE 2
#define COSREC_ERR_DATA 3
#define COSREC_ERR_NUMERIC 4

typedef struct cosrec_config cosrec_config;
typedef struct cosrec_dataset cosrec_dataset;

const char* cosrec_version(void);
const char* cosrec_last_error(void);

/* Config handles start from the library defaults. */
cosrec_config* cosrec_config_new(void);
void cosrec_config_free(cosrec_config* cfg);
int cosrec_config_set(cosrec_config* cfg, const char* key, const char* value);
int cosrec_config_get(const cosrec_config* cfg, const char* key, char* buf, size_t buf_len);

/* Commands. Output artifacts land under the config's `out` directory. */
int cosrec_preprocess(const cosrec_config* cfg);
int cosrec_train(const cosrec_config* cfg, double* final_loss);
int cosrec_eval(const cosrec_config* cfg, double* ndcg_at_10, double* hit_at_10);
int cosrec_bench(const cosrec_config* cfg);
int cosrec_report(const cosrec_config* cfg, char* table_buf, size_t table_len);

/* Canonical dataset files (written by cosrec_preprocess). */
int cosrec_dataset_open(const char* path, cosrec_dataset** out);
void cosrec_dataset_free(cosrec_dataset* ds);
long long cosrec_dataset_users(const cosrec_dataset* ds);
long long cosrec_dataset_items(const cosrec_dataset* ds);
long long cosrec_dataset_interactions(const cosrec_dataset* ds);
double cosrec_dataset_mean_seq_len(const cosrec_dataset* ds);

#ifdef __cplusplus
}
#endif

#endif /* COSREC_H */
