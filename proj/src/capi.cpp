#include "cosrec.h"

#include <cstring>
#include <string>

#include "cosrec/config.hpp"
#include "cosrec/errors.hpp"
#include "cosrec/pipeline.hpp"

// Opaque handle bodies.
struct cosrec_config {
  cosrec::RunConfig cfg;
};

struct cosrec_dataset {
  cosrec::DatasetStats stats;
};

namespace {

thread_local std::string g_last_error;

int fail(int code, const std::string& message) {
  g_last_error = message;
  return code;
}

template <typename F>
int guarded(F&& fn) {
  try {
    fn();
    return COSREC_OK;
  } catch (const cosrec::UsageError& e) {
    return fail(COSREC_ERR_USAGE, e.what());
  } catch (const cosrec::DataError& e) {
    return fail(COSREC_ERR_DATA, e.what());
  } catch (const cosrec::NumericError& e) {
    return fail(COSREC_ERR_NUMERIC, e.what());
  } catch (const std::exception& e) {
    return fail(COSREC_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(COSREC_ERR_INTERNAL, "unknown error");
  }
}

int copy_out(const std::string& src, char* buf, size_t buf_len) {
  if (buf == nullptr || buf_len == 0)
    return fail(COSREC_ERR_USAGE, "output buffer required");
  if (src.size() + 1 > buf_len)
    return fail(COSREC_ERR_USAGE, "output buffer too small (" + std::to_string(src.size() + 1) +
                                      " bytes needed)");
  std::memcpy(buf, src.c_str(), src.size() + 1);
  return COSREC_OK;
}

}  // namespace

extern "C" {

const char* cosrec_version(void) {
  return "cosrec 1.0.0";
}

const char* cosrec_last_error(void) {
  return g_last_error.c_str();
}

cosrec_config* cosrec_config_new(void) {
  return new (std::nothrow) cosrec_config{};
}

void cosrec_config_free(cosrec_config* cfg) {
  delete cfg;
}

int cosrec_config_set(cosrec_config* cfg, const char* key, const char* value) {
  if (cfg == nullptr || key == nullptr || value == nullptr)
    return fail(COSREC_ERR_USAGE, "config handle, key and value required");
  return guarded([&] { cosrec::set_key(cfg->cfg, key, value); });
}

int cosrec_config_get(const cosrec_config* cfg, const char* key, char* buf, size_t buf_len) {
  if (cfg == nullptr || key == nullptr)
    return fail(COSREC_ERR_USAGE, "config handle and key required");
  std::string value;
  const int rc = guarded([&] { value = cosrec::get_key(cfg->cfg, key); });
  if (rc != COSREC_OK) return rc;
  return copy_out(value, buf, buf_len);
}

int cosrec_preprocess(const cosrec_config* cfg) {
  if (cfg == nullptr) return fail(COSREC_ERR_USAGE, "config handle required");
  return guarded([&] { cosrec::run_preprocess(cfg->cfg); });
}

int cosrec_train(const cosrec_config* cfg, double* final_loss) {
  if (cfg == nullptr) return fail(COSREC_ERR_USAGE, "config handle required");
  return guarded([&] {
    cosrec::TrainSummary sum = cosrec::run_train(cfg->cfg);
    if (final_loss != nullptr) *final_loss = sum.final_loss;
  });
}

int cosrec_eval(const cosrec_config* cfg, double* ndcg_at_10, double* hit_at_10) {
  if (cfg == nullptr) return fail(COSREC_ERR_USAGE, "config handle required");
  return guarded([&] {
    cosrec::EvalSummary sum = cosrec::run_eval(cfg->cfg);
    if (ndcg_at_10 != nullptr) *ndcg_at_10 = sum.result.ndcg_at_k;
    if (hit_at_10 != nullptr) *hit_at_10 = sum.result.hit_at_k;
  });
}

int cosrec_bench(const cosrec_config* cfg) {
  if (cfg == nullptr) return fail(COSREC_ERR_USAGE, "config handle required");
  return guarded([&] { cosrec::run_bench(cfg->cfg); });
}

int cosrec_report(const cosrec_config* cfg, char* table_buf, size_t table_len) {
  if (cfg == nullptr) return fail(COSREC_ERR_USAGE, "config handle required");
  std::string table;
  const int rc = guarded([&] { table = cosrec::run_report(cfg->cfg).table; });
  if (rc != COSREC_OK) return rc;
  if (table_buf == nullptr) return COSREC_OK;  // caller only wanted the csv artifact
  return copy_out(table, table_buf, table_len);
}

int cosrec_dataset_open(const char* path, cosrec_dataset** out) {
  if (path == nullptr || out == nullptr)
    return fail(COSREC_ERR_USAGE, "path and output handle required");
  *out = nullptr;
  return guarded([&] {
    cosrec::InteractionDataset ds = cosrec::load_dataset(path);
    *out = new cosrec_dataset{ds.stats()};
  });
}

void cosrec_dataset_free(cosrec_dataset* ds) {
  delete ds;
}

long long cosrec_dataset_users(const cosrec_dataset* ds) {
  return ds == nullptr ? -1 : static_cast<long long>(ds->stats.users);
}

long long cosrec_dataset_items(const cosrec_dataset* ds) {
  return ds == nullptr ? -1 : static_cast<long long>(ds->stats.items);
}

long long cosrec_dataset_interactions(const cosrec_dataset* ds) {
  return ds == nullptr ? -1 : static_cast<long long>(ds->stats.interactions);
}

double cosrec_dataset_mean_seq_len(const cosrec_dataset* ds) {
  return ds == nullptr ? -1.0 : ds->stats.mean_seq_len;
}

}  // extern "C"
