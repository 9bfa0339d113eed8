#include "cosrec/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include "cosrec/data.hpp"
#include "cosrec/errors.hpp"

namespace cosrec {

namespace {

// Shortest decimal form that parses back to the same double.
std::string format_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (value.empty() || end == nullptr || *end != '\0')
    throw UsageError("config: bad number for " + key + ": " + value);
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
  if (value.empty() || end == nullptr || *end != '\0' || value[0] == '-')
    throw UsageError("config: bad count for " + key + ": " + value);
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on") return true;
  if (value == "0" || value == "false" || value == "off") return false;
  throw UsageError("config: bad flag for " + key + ": " + value);
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

using FieldMap = std::vector<std::pair<std::string, Field>>;

const FieldMap& fields() {
  static const FieldMap map = [] {
    FieldMap m;
    auto str = [&m](const char* key, std::string RunConfig::* member) {
      m.push_back({key,
                   {[member](RunConfig& c, const std::string& v) { c.*member = v; },
                    [member](const RunConfig& c) { return c.*member; }}});
    };
    auto num = [&m](const char* key, double RunConfig::* member) {
      m.push_back({key,
                   {[key, member](RunConfig& c, const std::string& v) {
                      c.*member = parse_double(key, v);
                    },
                    [member](const RunConfig& c) { return format_double(c.*member); }}});
    };
    auto count = [&m](const char* key, std::size_t RunConfig::* member) {
      m.push_back({key,
                   {[key, member](RunConfig& c, const std::string& v) {
                      c.*member = static_cast<std::size_t>(parse_uint(key, v));
                    },
                    [member](const RunConfig& c) { return std::to_string(c.*member); }}});
    };
    auto flag = [&m](const char* key, bool RunConfig::* member) {
      m.push_back({key,
                   {[key, member](RunConfig& c, const std::string& v) {
                      c.*member = parse_bool(key, v);
                    },
                    [member](const RunConfig& c) { return std::string(c.*member ? "1" : "0"); }}});
    };

    str("dataset", &RunConfig::dataset);
    str("format", &RunConfig::format);
    str("out", &RunConfig::out);
    str("checkpoint", &RunConfig::checkpoint);
    str("mechanism", &RunConfig::mechanism);
    count("seq-len", &RunConfig::seq_len);
    count("dim", &RunConfig::dim);
    count("layers", &RunConfig::layers);
    count("heads", &RunConfig::heads);
    num("mask-prob", &RunConfig::mask_prob);
    num("lr", &RunConfig::lr);
    num("weight-decay", &RunConfig::weight_decay);
    num("dropout", &RunConfig::dropout);
    num("clip-norm", &RunConfig::clip_norm);
    count("batch", &RunConfig::batch);
    count("epochs", &RunConfig::epochs);
    m.push_back({"seed",
                 {[](RunConfig& c, const std::string& v) { c.seed = parse_uint("seed", v); },
                  [](const RunConfig& c) { return std::to_string(c.seed); }}});
    count("tile", &RunConfig::tile);
    num("eps", &RunConfig::eps);
    num("alpha", &RunConfig::alpha);
    count("threads", &RunConfig::threads);
    count("min-inter", &RunConfig::min_inter);
    count("max-inter", &RunConfig::max_inter);
    count("valid-sample", &RunConfig::valid_sample);
    str("split", &RunConfig::split);
    str("tie-rule", &RunConfig::tie_rule);
    flag("exclude-history", &RunConfig::exclude_history);
    flag("dedup", &RunConfig::dedup);
    flag("bert-corruption", &RunConfig::bert_corruption);
    flag("linear-denominator", &RunConfig::linear_denominator);
    str("bench-n", &RunConfig::bench_n);
    str("bench-d", &RunConfig::bench_d);
    str("bench-seeds", &RunConfig::bench_seeds);
    count("bench-reps", &RunConfig::bench_reps);
    str("report-bench", &RunConfig::report_bench);
    str("report-eval", &RunConfig::report_eval);
    return m;
  }();
  return map;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, field] : fields()) keys.push_back(key);
  return keys;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(cfg, value);
      return;
    }
  }
  throw UsageError("config: unknown key: " + key);
}

std::string get_key(const RunConfig& cfg, const std::string& key) {
  for (const auto& [name, field] : fields()) {
    if (name == key) return field.get(cfg);
  }
  throw UsageError("config: unknown key: " + key);
}

std::string config_echo(const RunConfig& cfg) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [name, field] : fields()) {
    if (!first) out << " ";
    out << name << "=" << field.get(cfg);
    first = false;
  }
  return out.str();
}

void validate(const RunConfig& cfg) {
  mechanism_from_string(cfg.mechanism);
  format_from_string(cfg.format);
  if (cfg.seq_len == 0) throw UsageError("config: seq-len must be >= 1");
  if (cfg.dim == 0) throw UsageError("config: dim must be >= 1");
  if (cfg.layers == 0) throw UsageError("config: layers must be >= 1");
  if (cfg.heads == 0) throw UsageError("config: heads must be >= 1");
  if (cfg.dim % cfg.heads != 0) throw UsageError("config: dim must be divisible by heads");
  if (!(cfg.mask_prob > 0.0 && cfg.mask_prob < 1.0))
    throw UsageError("config: mask-prob must be in (0,1)");
  if (!(cfg.lr > 0.0)) throw UsageError("config: lr must be > 0");
  if (cfg.weight_decay < 0.0) throw UsageError("config: weight-decay must be >= 0");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0))
    throw UsageError("config: dropout must be in [0,1)");
  if (!(cfg.clip_norm > 0.0)) throw UsageError("config: clip-norm must be > 0");
  if (cfg.batch == 0) throw UsageError("config: batch must be >= 1");
  if (cfg.epochs == 0) throw UsageError("config: epochs must be >= 1");
  if (cfg.tile == 0) throw UsageError("config: tile must be >= 1");
  if (!(cfg.eps > 0.0)) throw UsageError("config: eps must be > 0");
  if (!(cfg.alpha > 0.0)) throw UsageError("config: alpha must be > 0");
  if (cfg.threads == 0) throw UsageError("config: threads must be >= 1");
  if (cfg.split != "test" && cfg.split != "valid")
    throw UsageError("config: split must be test or valid");
  if (cfg.tie_rule != "optimistic" && cfg.tie_rule != "strict")
    throw UsageError("config: tie-rule must be optimistic or strict");
  if (cfg.bench_reps < 3) throw UsageError("config: bench-reps must be >= 3");
}

std::vector<std::size_t> parse_size_list(const std::string& csv) {
  std::vector<std::size_t> out;
  std::istringstream ss(csv);
  std::string field;
  while (std::getline(ss, field, ','))
    if (!field.empty()) out.push_back(static_cast<std::size_t>(parse_uint("list", field)));
  if (out.empty()) throw UsageError("config: empty list: " + csv);
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> out;
  std::istringstream ss(csv);
  std::string field;
  while (std::getline(ss, field, ','))
    if (!field.empty()) out.push_back(parse_uint("seed list", field));
  if (out.empty()) throw UsageError("config: empty seed list: " + csv);
  return out;
}

ModelConfig model_config_from(const RunConfig& cfg, std::size_t vocab) {
  ModelConfig m;
  m.vocab = vocab;
  m.dim = cfg.dim;
  m.layers = cfg.layers;
  m.max_seq = cfg.seq_len;
  m.dropout = cfg.dropout;
  m.threads = cfg.threads;
  m.attn.mechanism = mechanism_from_string(cfg.mechanism);
  m.attn.eps = cfg.eps;
  m.attn.alpha = cfg.alpha;
  m.attn.tile_size = cfg.tile;
  m.attn.heads = cfg.heads;
  m.attn.linear_denominator = cfg.linear_denominator;
  return m;
}

}  // namespace cosrec
