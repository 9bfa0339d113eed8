// Command-line front end. Talks to the core strictly through the C API in
// cosrec.h; every option maps onto one config key. Precedence per key is
// flag > config file > built-in default.
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cosrec.h"

namespace {

constexpr int kExitUsage = 2;

std::string default_for(const char* key) {
  char buf[256] = {0};
  cosrec_config* defaults = cosrec_config_new();
  cosrec_config_get(defaults, key, buf, sizeof(buf));
  cosrec_config_free(defaults);
  return buf;
}

struct KeyValues {
  std::map<std::string, std::pair<std::string, CLI::Option*>> entries;
  std::string config_file;

  std::string value(const std::string& key) const { return entries.at(key).first; }
};

CLI::Option* opt(CLI::App* cmd, KeyValues& kv, const char* key, const char* help) {
  auto [it, fresh] = kv.entries.emplace(key, std::make_pair(default_for(key), nullptr));
  CLI::Option* o =
      cmd->add_option(std::string("--") + key, it->second.first, help)->capture_default_str();
  it->second.second = o;
  return o;
}

void add_config_option(CLI::App* cmd, KeyValues& kv) {
  cmd->add_option("--config", kv.config_file, "flat key=value config file; flags override");
}

// Applies file values under flag values: a key explicitly passed on the
// command line wins over the same key in the file.
int apply(cosrec_config* cfg, const KeyValues& kv) {
  std::map<std::string, std::string> from_file;
  if (!kv.config_file.empty()) {
    std::ifstream in(kv.config_file);
    if (!in) {
      std::fprintf(stderr, "error: cannot open config file: %s\n", kv.config_file.c_str());
      return COSREC_ERR_DATA;
    }
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        std::fprintf(stderr, "error: config file line is not key=value: %s\n", line.c_str());
        return kExitUsage;
      }
      from_file[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }

  for (const auto& [key, file_value] : from_file) {
    const auto it = kv.entries.find(key);
    const bool flag_given = it != kv.entries.end() && it->second.second != nullptr &&
                            it->second.second->count() > 0;
    if (flag_given) continue;
    const int rc = cosrec_config_set(cfg, key.c_str(), file_value.c_str());
    if (rc != COSREC_OK) {
      std::fprintf(stderr, "error: %s\n", cosrec_last_error());
      return rc;
    }
  }
  for (const auto& [key, entry] : kv.entries) {
    if (from_file.count(key) != 0 && (entry.second == nullptr || entry.second->count() == 0))
      continue;  // keep the file's value
    const int rc = cosrec_config_set(cfg, key.c_str(), entry.first.c_str());
    if (rc != COSREC_OK) {
      std::fprintf(stderr, "error: %s\n", cosrec_last_error());
      return rc;
    }
  }
  return COSREC_OK;
}

std::string resolved(const cosrec_config* cfg, const char* key) {
  char buf[512] = {0};
  cosrec_config_get(cfg, key, buf, sizeof(buf));
  return buf;
}

int print_dataset_stats(const std::string& path) {
  cosrec_dataset* ds = nullptr;
  const int rc = cosrec_dataset_open(path.c_str(), &ds);
  if (rc != COSREC_OK) {
    std::fprintf(stderr, "error: %s\n", cosrec_last_error());
    return rc;
  }
  std::printf("dataset: %s\nusers: %lld\nitems: %lld\ninteractions: %lld\nmean_seq_len: %.4f\n",
              path.c_str(), cosrec_dataset_users(ds), cosrec_dataset_items(ds),
              cosrec_dataset_interactions(ds), cosrec_dataset_mean_seq_len(ds));
  cosrec_dataset_free(ds);
  return COSREC_OK;
}

int fail_with_last_error(int rc) {
  std::fprintf(stderr, "error: %s\n", cosrec_last_error());
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential recommender with interchangeable attention mechanisms"};
  app.require_subcommand(1);

  const char* env_out = std::getenv("COSREC_OUT");

  KeyValues pre_kv, train_kv, eval_kv, bench_kv, report_kv;
  auto add_out = [&](CLI::App* cmd, KeyValues& kv) {
    opt(cmd, kv, "out", "output directory");
    if (env_out != nullptr) kv.entries.at("out").first = env_out;
    add_config_option(cmd, kv);
  };

  CLI::App* pre = app.add_subcommand("preprocess", "parse a raw log into the canonical dataset");
  opt(pre, pre_kv, "dataset", "raw interaction file")->required();
  opt(pre, pre_kv, "format", "movielens_dat | amazon_csv | tsv");
  opt(pre, pre_kv, "min-inter", "drop users with fewer interactions");
  opt(pre, pre_kv, "max-inter", "drop users with more interactions (0 = unbounded)");
  opt(pre, pre_kv, "valid-sample", "sample this many users for validation (0 = none)");
  opt(pre, pre_kv, "dedup", "drop consecutive duplicate items (0/1)");
  opt(pre, pre_kv, "seed", "sampling seed");
  add_out(pre, pre_kv);

  CLI::App* train = app.add_subcommand("train", "train on a canonical dataset");
  opt(train, train_kv, "dataset", "canonical dataset file")->required();
  opt(train, train_kv, "mechanism", "softmax | elu_linear | cosine");
  opt(train, train_kv, "seq-len", "model sequence length");
  opt(train, train_kv, "dim", "embedding dimension");
  opt(train, train_kv, "layers", "transformer blocks");
  opt(train, train_kv, "heads", "attention heads");
  opt(train, train_kv, "mask-prob", "masking probability");
  opt(train, train_kv, "lr", "learning rate");
  opt(train, train_kv, "weight-decay", "decoupled weight decay");
  opt(train, train_kv, "dropout", "dropout rate");
  opt(train, train_kv, "clip-norm", "global gradient clipping threshold");
  opt(train, train_kv, "batch", "batch size");
  opt(train, train_kv, "epochs", "training epochs");
  opt(train, train_kv, "seed", "run seed");
  opt(train, train_kv, "tile", "fused-kernel tile rows");
  opt(train, train_kv, "eps", "normalization epsilon");
  opt(train, train_kv, "alpha", "ELU alpha");
  opt(train, train_kv, "threads", "worker threads");
  opt(train, train_kv, "bert-corruption", "use 80/10/10 mask corruption (0/1)");
  opt(train, train_kv, "linear-denominator", "ELU path denominator (0/1)");
  opt(train, train_kv, "checkpoint", "checkpoint output path");
  add_out(train, train_kv);

  CLI::App* ev = app.add_subcommand("eval", "leave-one-out ranking metrics");
  opt(ev, eval_kv, "dataset", "canonical dataset file")->required();
  opt(ev, eval_kv, "checkpoint", "checkpoint to evaluate");
  opt(ev, eval_kv, "split", "test | valid");
  opt(ev, eval_kv, "tie-rule", "optimistic | strict");
  opt(ev, eval_kv, "exclude-history", "exclude seen items from ranking (0/1)");
  opt(ev, eval_kv, "batch", "evaluation batch size");
  opt(ev, eval_kv, "threads", "worker threads");
  opt(ev, eval_kv, "seed", "seed column fallback for the csv row");
  add_out(ev, eval_kv);

  CLI::App* bench = app.add_subcommand("bench", "attention memory and runtime sweep");
  opt(bench, bench_kv, "bench-n", "sequence lengths, comma separated");
  opt(bench, bench_kv, "bench-d", "model dims, comma separated");
  opt(bench, bench_kv, "bench-seeds", "input seeds, comma separated");
  opt(bench, bench_kv, "bench-reps", "repetitions per configuration");
  opt(bench, bench_kv, "tile", "fused-kernel tile rows");
  opt(bench, bench_kv, "eps", "normalization epsilon");
  opt(bench, bench_kv, "alpha", "ELU alpha");
  opt(bench, bench_kv, "linear-denominator", "ELU path denominator (0/1)");
  add_out(bench, bench_kv);

  CLI::App* report = app.add_subcommand("report", "compare mechanisms against softmax");
  opt(report, report_kv, "report-bench", "bench csv to aggregate")->required();
  opt(report, report_kv, "report-eval", "optional eval csv to join");
  add_out(report, report_kv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  cosrec_config* cfg = cosrec_config_new();
  if (cfg == nullptr) {
    std::fprintf(stderr, "error: out of memory\n");
    return COSREC_ERR_INTERNAL;
  }

  int rc = COSREC_OK;
  if (pre->parsed()) {
    rc = apply(cfg, pre_kv);
    if (rc == COSREC_OK) rc = cosrec_preprocess(cfg);
    if (rc == COSREC_OK) {
      rc = print_dataset_stats(resolved(cfg, "out") + "/dataset.txt");
    } else {
      fail_with_last_error(rc);
    }
  } else if (train->parsed()) {
    rc = apply(cfg, train_kv);
    double final_loss = 0.0;
    if (rc == COSREC_OK) rc = cosrec_train(cfg, &final_loss);
    if (rc == COSREC_OK) {
      const std::string ckpt = resolved(cfg, "checkpoint");
      std::printf("final_loss: %.6f\ncheckpoint: %s\nlog: %s\n", final_loss,
                  ckpt.empty() ? (resolved(cfg, "out") + "/checkpoint.bin").c_str()
                               : ckpt.c_str(),
                  (resolved(cfg, "out") + "/train_log.csv").c_str());
    } else {
      fail_with_last_error(rc);
    }
  } else if (ev->parsed()) {
    rc = apply(cfg, eval_kv);
    double ndcg = 0.0, hit = 0.0;
    if (rc == COSREC_OK) rc = cosrec_eval(cfg, &ndcg, &hit);
    if (rc == COSREC_OK) {
      std::printf("ndcg@10: %.6f\nhit@10: %.6f\ncsv: %s\n", ndcg, hit,
                  (resolved(cfg, "out") + "/eval.csv").c_str());
    } else {
      fail_with_last_error(rc);
    }
  } else if (bench->parsed()) {
    rc = apply(cfg, bench_kv);
    if (rc == COSREC_OK) rc = cosrec_bench(cfg);
    if (rc == COSREC_OK) {
      std::printf("bench csv: %s\nplots: %s/{bytes,seconds}_vs_{n,d}.svg\n",
                  (resolved(cfg, "out") + "/bench.csv").c_str(), resolved(cfg, "out").c_str());
    } else {
      fail_with_last_error(rc);
    }
  } else if (report->parsed()) {
    rc = apply(cfg, report_kv);
    if (rc == COSREC_OK) {
      std::vector<char> table(1 << 20);
      rc = cosrec_report(cfg, table.data(), table.size());
      if (rc == COSREC_OK) {
        std::fputs(table.data(), stdout);
        std::printf("report csv: %s\n", (resolved(cfg, "out") + "/report.csv").c_str());
      } else {
        fail_with_last_error(rc);
      }
    }
  }

  cosrec_config_free(cfg);
  return rc;
}
