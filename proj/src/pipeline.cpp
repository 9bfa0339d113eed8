#include "cosrec/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cosrec/bench.hpp"
#include "cosrec/checkpoint.hpp"
#include "cosrec/errors.hpp"
#include "cosrec/report.hpp"
#include "cosrec/training.hpp"

namespace cosrec {

namespace {

namespace fs = std::filesystem;

std::string prepare_out_dir(const RunConfig& cfg) {
  if (cfg.out.empty()) throw UsageError("config: out directory required");
  fs::create_directories(cfg.out);
  return cfg.out;
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string dataset_label(const std::string& path) {
  return fs::path(path).stem().string();
}

std::string checkpoint_path(const RunConfig& cfg) {
  return cfg.checkpoint.empty() ? join(cfg.out, "checkpoint.bin") : cfg.checkpoint;
}

std::uint64_t seed_from_echo(const std::string& echo, std::uint64_t fallback) {
  const std::string key = "seed=";
  std::size_t pos = echo.find(" " + key);
  if (pos == std::string::npos) return fallback;
  pos += 1 + key.size();
  const std::size_t end = echo.find(' ', pos);
  try {
    return std::stoull(echo.substr(pos, end - pos));
  } catch (...) {
    return fallback;
  }
}

}  // namespace

PreprocessSummary run_preprocess(const RunConfig& cfg) {
  validate(cfg);
  if (cfg.dataset.empty()) throw UsageError("preprocess: --dataset required");
  const std::string out_dir = prepare_out_dir(cfg);

  LoadResult loaded = load_interactions(cfg.dataset, format_from_string(cfg.format));
  InteractionDataset ds = preprocess(loaded.events, cfg.min_inter, cfg.max_inter,
                                     cfg.valid_sample, cfg.seed, cfg.dedup);

  PreprocessSummary sum;
  sum.stats = ds.stats();
  sum.malformed = loaded.malformed;
  sum.dataset_path = join(out_dir, "dataset.txt");
  save_dataset(ds, sum.dataset_path, config_echo(cfg));
  return sum;
}

TrainSummary run_train(const RunConfig& cfg) {
  validate(cfg);
  if (cfg.dataset.empty()) throw UsageError("train: --dataset required (canonical dataset file)");
  const std::string out_dir = prepare_out_dir(cfg);

  InteractionDataset ds = load_dataset(cfg.dataset);
  LooSplit split = leave_one_out_split(ds);

  TrainOptions opt;
  opt.model = model_config_from(cfg, ds.item_count());
  opt.p_mask = cfg.mask_prob;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  opt.clip_norm = cfg.clip_norm;
  opt.batch_size = cfg.batch;
  opt.epochs = cfg.epochs;
  opt.seed = cfg.seed;
  opt.bert_corruption = cfg.bert_corruption;

  TrainSummary sum;
  sum.log_path = join(out_dir, "train_log.csv");
  std::ofstream log(sum.log_path);
  if (!log) throw DataError("cannot write train log: " + sum.log_path);
  log << "# config: " << config_echo(cfg) << "\n";
  log << "epoch,loss,seconds,peak_attn_bytes\n";
  opt.on_epoch = [&log](const EpochLog& e) {
    char loss[64], secs[64];
    std::snprintf(loss, sizeof(loss), "%.17g", e.loss);
    std::snprintf(secs, sizeof(secs), "%.6f", e.seconds);
    log << e.epoch << "," << loss << "," << secs << "," << e.peak_attn_bytes << "\n";
    log.flush();
    std::fprintf(stderr, "epoch %zu loss %.6f (%.2fs, peak attention %lld bytes)\n", e.epoch,
                 e.loss, e.seconds, static_cast<long long>(e.peak_attn_bytes));
  };

  TrainResult result = train(split.train, opt);
  sum.final_loss = result.log.back().loss;
  sum.epochs = result.log.size();
  sum.checkpoint_path = checkpoint_path(cfg);
  save_checkpoint(sum.checkpoint_path, result.params, opt.model, config_echo(cfg));
  return sum;
}

EvalSummary run_eval(const RunConfig& cfg) {
  validate(cfg);
  if (cfg.dataset.empty()) throw UsageError("eval: --dataset required (canonical dataset file)");
  const std::string out_dir = prepare_out_dir(cfg);

  InteractionDataset ds = load_dataset(cfg.dataset);
  LooSplit split = leave_one_out_split(ds);
  Checkpoint ck = load_checkpoint(checkpoint_path(cfg));
  if (ck.model.vocab != ds.item_count())
    throw DataError("eval: checkpoint vocabulary does not match dataset");
  ck.model.threads = cfg.threads;

  EvalOptions opt;
  opt.split = cfg.split == "valid" ? EvalSplit::Validation : EvalSplit::Test;
  opt.k = 10;
  opt.seq_len = ck.model.max_seq;
  opt.batch_size = cfg.batch;
  opt.target_wins_ties = cfg.tie_rule == "optimistic";
  opt.exclude_history = cfg.exclude_history;

  EvalSummary sum;
  sum.result = evaluate(ck.params, ck.model, ds, split, opt);

  EvalRow row;
  row.dataset = dataset_label(cfg.dataset);
  row.mechanism = ck.model.attn.mechanism;
  row.seq_len = ck.model.max_seq;
  row.d = ck.model.dim;
  row.seed = seed_from_echo(ck.config_echo, cfg.seed);
  row.ndcg = sum.result.ndcg_at_k;
  row.hit = sum.result.hit_at_k;
  row.users = sum.result.user_count;
  sum.csv_path = join(out_dir, "eval.csv");
  write_eval_csv({row}, sum.csv_path, config_echo(cfg));
  return sum;
}

BenchSummary run_bench(const RunConfig& cfg) {
  validate(cfg);
  const std::string out_dir = prepare_out_dir(cfg);

  SweepConfig sweep_cfg;
  sweep_cfg.ns = parse_size_list(cfg.bench_n);
  sweep_cfg.ds = parse_size_list(cfg.bench_d);
  sweep_cfg.mechanisms = {Mechanism::Softmax, Mechanism::EluLinear, Mechanism::Cosine};
  sweep_cfg.seeds = parse_seed_list(cfg.bench_seeds);
  sweep_cfg.reps = cfg.bench_reps;
  sweep_cfg.attn.eps = cfg.eps;
  sweep_cfg.attn.alpha = cfg.alpha;
  sweep_cfg.attn.tile_size = cfg.tile;
  sweep_cfg.attn.linear_denominator = cfg.linear_denominator;

  BenchSummary sum;
  std::vector<BenchRecord> records = sweep(sweep_cfg);
  sum.records = records.size();
  sum.csv_path = join(out_dir, "bench.csv");
  write_bench_csv(records, sum.csv_path, config_echo(cfg));
  write_bench_plots(records, out_dir);
  return sum;
}

ReportSummary run_report(const RunConfig& cfg) {
  validate(cfg);
  if (cfg.report_bench.empty()) throw UsageError("report: --report-bench csv required");
  const std::string out_dir = prepare_out_dir(cfg);

  std::vector<BenchRecord> bench = read_bench_csv(cfg.report_bench);
  std::vector<EvalRow> eval_rows;
  if (!cfg.report_eval.empty()) eval_rows = read_eval_csv(cfg.report_eval);

  ReportSummary sum;
  std::vector<ReportRow> rows = build_report(bench, eval_rows);
  sum.csv_path = join(out_dir, "report.csv");
  write_report_csv(rows, sum.csv_path, config_echo(cfg));
  sum.table = format_report_table(rows);
  return sum;
}

}  // namespace cosrec
