#include "cosrec/data.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "cosrec/errors.hpp"
#include "cosrec/rng.hpp"

namespace cosrec {

DataFormat format_from_string(const std::string& name) {
  if (name == "movielens_dat") return DataFormat::MovieLensDat;
  if (name == "amazon_csv") return DataFormat::AmazonCsv;
  if (name == "tsv") return DataFormat::Tsv;
  throw UsageError("unknown dataset format: " + name);
}

std::string format_name(DataFormat f) {
  switch (f) {
    case DataFormat::MovieLensDat: return "movielens_dat";
    case DataFormat::AmazonCsv: return "amazon_csv";
    case DataFormat::Tsv: return "tsv";
  }
  throw UsageError("bad format value");
}

namespace {

std::vector<std::string> split(const std::string& line, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
}

bool parse_timestamp(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end == nullptr || *end != '\0' || v < 0) return false;
  out = v;
  return true;
}

// user/item/(rating)/timestamp field layouts; rating is ignored everywhere.
bool parse_line(const std::string& line, DataFormat format, InteractionEvent& ev) {
  std::vector<std::string> f;
  switch (format) {
    case DataFormat::MovieLensDat:
      f = split(line, "::");
      if (f.size() != 4) return false;
      break;
    case DataFormat::AmazonCsv:
      f = split(line, ",");
      if (f.size() != 4) return false;
      break;
    case DataFormat::Tsv:
      f = split(line, "\t");
      if (f.size() != 3 && f.size() != 4) return false;
      break;
  }
  if (f[0].empty() || f[1].empty()) return false;
  ev.user = f[0];
  ev.item = f[1];
  return parse_timestamp(f.back(), ev.timestamp);
}

}  // namespace

LoadResult load_interactions(const std::string& path, DataFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);

  LoadResult res;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    res.lines += 1;
    InteractionEvent ev;
    if (parse_line(line, format, ev)) {
      res.events.push_back(std::move(ev));
    } else {
      res.malformed += 1;
    }
  }
  if (res.lines == 0) throw DataError("dataset file is empty: " + path);
  if (static_cast<double>(res.malformed) > 0.001 * static_cast<double>(res.lines))
    throw DataError("too many malformed lines in " + path + ": " +
                    std::to_string(res.malformed) + " of " + std::to_string(res.lines));
  return res;
}

DatasetStats InteractionDataset::stats() const {
  DatasetStats s;
  s.users = sequences.size();
  s.items = item_count();
  for (const auto& seq : sequences) s.interactions += seq.size();
  if (s.users > 0) s.mean_seq_len = static_cast<double>(s.interactions) / s.users;
  if (s.users > 0 && s.items > 0)
    s.sparsity = 1.0 - static_cast<double>(s.interactions) /
                           (static_cast<double>(s.users) * static_cast<double>(s.items));
  return s;
}

InteractionDataset preprocess(const std::vector<InteractionEvent>& events, std::size_t min_inter,
                              std::size_t max_inter, std::size_t validation_sample,
                              std::uint64_t seed, bool dedup) {
  if (min_inter < 3) throw UsageError("preprocess: min_inter must be >= 3");
  if (max_inter != 0 && max_inter < min_inter)
    throw UsageError("preprocess: max_inter below min_inter");

  // Group per user in first-seen order, keep input order within a user so the
  // chronological sort can break timestamp ties stably.
  std::unordered_map<std::string, std::size_t> user_slot;
  std::vector<std::string> users;
  std::vector<std::vector<const InteractionEvent*>> per_user;
  for (const auto& ev : events) {
    auto [it, fresh] = user_slot.try_emplace(ev.user, users.size());
    if (fresh) {
      users.push_back(ev.user);
      per_user.emplace_back();
    }
    per_user[it->second].push_back(&ev);
  }

  InteractionDataset ds;
  ds.item_external.push_back("");  // id 0 is the pad token
  std::unordered_map<std::string, std::int32_t> item_ids;
  for (std::size_t u = 0; u < users.size(); ++u) {
    auto& evs = per_user[u];
    std::stable_sort(evs.begin(), evs.end(),
                     [](const InteractionEvent* a, const InteractionEvent* b) {
                       return a->timestamp < b->timestamp;
                     });
    std::vector<const InteractionEvent*> kept;
    kept.reserve(evs.size());
    for (const auto* ev : evs) {
      if (dedup && !kept.empty() && kept.back()->item == ev->item) continue;
      kept.push_back(ev);
    }
    if (kept.size() < min_inter) continue;
    if (max_inter != 0 && kept.size() > max_inter) continue;

    std::vector<std::int32_t> seq;
    seq.reserve(kept.size());
    for (const auto* ev : kept) {
      auto [it, fresh] = item_ids.try_emplace(ev->item,
                                              static_cast<std::int32_t>(ds.item_external.size()));
      if (fresh) ds.item_external.push_back(ev->item);
      seq.push_back(it->second);
    }
    ds.sequences.push_back(std::move(seq));
    ds.user_external.push_back(users[u]);
  }
  if (ds.sequences.empty()) throw DataError("preprocess: no users survive the filters");

  if (validation_sample > 0) {
    std::vector<std::uint32_t> idx(ds.sequences.size());
    std::iota(idx.begin(), idx.end(), 0u);
    std::mt19937_64 rng(mix_seed(seed, 0xa11d));
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t take = std::min<std::size_t>(validation_sample, idx.size());
    ds.validation_users.assign(idx.begin(), idx.begin() + take);
    std::sort(ds.validation_users.begin(), ds.validation_users.end());
  }
  return ds;
}

LooSplit leave_one_out_split(const InteractionDataset& ds) {
  LooSplit split;
  split.train.reserve(ds.sequences.size());
  for (const auto& seq : ds.sequences) {
    if (seq.size() < 3) throw DataError("leave_one_out_split: sequence shorter than 3");
    split.train.emplace_back(seq.begin(), seq.end() - 2);
    split.valid_item.push_back(seq[seq.size() - 2]);
    split.test_item.push_back(seq.back());
  }
  return split;
}

std::vector<std::int32_t> fit_sequence(const std::vector<std::int32_t>& items, std::size_t n) {
  if (n == 0) throw UsageError("fit_sequence: length must be >= 1");
  std::vector<std::int32_t> out(n, 0);
  const std::size_t take = std::min(items.size(), n);
  for (std::size_t i = 0; i < take; ++i) out[n - take + i] = items[items.size() - take + i];
  return out;
}

std::vector<Batch> make_batches(const std::vector<std::vector<std::int32_t>>& seqs,
                                std::size_t seq_len, std::size_t batch_size,
                                std::mt19937_64* shuffle_rng) {
  if (batch_size == 0) throw UsageError("make_batches: batch size must be >= 1");
  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_rng != nullptr) std::shuffle(order.begin(), order.end(), *shuffle_rng);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    const std::size_t end = std::min(start + batch_size, order.size());
    for (std::size_t i = start; i < end; ++i) {
      const std::size_t idx = order[i];
      b.indices.push_back(idx);
      b.rows.push_back(fit_sequence(seqs[idx], seq_len));
      b.true_length.push_back(std::min(seqs[idx].size(), seq_len));
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

void save_dataset(const InteractionDataset& ds, const std::string& path,
                  const std::string& config_echo) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file: " + path);
  out << "cosrec-dataset v1\n";
  out << "# config: " << config_echo << "\n";
  const DatasetStats s = ds.stats();
  out << "users " << s.users << "\n";
  out << "items " << s.items << "\n";
  out << "interactions " << s.interactions << "\n";
  out << "validation_users " << ds.validation_users.size();
  for (auto u : ds.validation_users) out << " " << u;
  out << "\n";
  out << "item_map " << s.items << "\n";
  for (std::size_t i = 1; i < ds.item_external.size(); ++i)
    out << i << " " << ds.item_external[i] << "\n";
  out << "user_map " << s.users << "\n";
  for (const auto& u : ds.user_external) out << u << "\n";
  out << "sequences " << s.users << "\n";
  for (const auto& seq : ds.sequences) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i > 0) out << " ";
      out << seq[i];
    }
    out << "\n";
  }
  if (!out) throw DataError("short write on dataset file: " + path);
}

InteractionDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "cosrec-dataset v1")
    throw DataError("not a canonical dataset file: " + path);

  auto expect_count = [&](const std::string& key) -> std::size_t {
    if (!std::getline(in, line)) throw DataError("truncated dataset file: " + path);
    if (line.rfind(key + " ", 0) != 0)
      throw DataError("dataset file: expected '" + key + "' line");
    return std::stoull(line.substr(key.size() + 1));
  };

  if (!std::getline(in, line) || line.rfind("# config:", 0) != 0)
    throw DataError("dataset file missing config echo: " + path);

  InteractionDataset ds;
  const std::size_t users = expect_count("users");
  const std::size_t items = expect_count("items");
  const std::size_t interactions = expect_count("interactions");

  if (!std::getline(in, line) || line.rfind("validation_users ", 0) != 0)
    throw DataError("dataset file: expected validation_users line");
  {
    std::istringstream vs(line.substr(std::string("validation_users ").size()));
    std::size_t count = 0;
    vs >> count;
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t u;
      if (!(vs >> u)) throw DataError("dataset file: truncated validation user list");
      ds.validation_users.push_back(u);
    }
  }

  const std::size_t map_count = expect_count("item_map");
  if (map_count != items) throw DataError("dataset file: item map count mismatch");
  ds.item_external.assign(items + 1, "");
  for (std::size_t i = 0; i < items; ++i) {
    if (!std::getline(in, line)) throw DataError("dataset file: truncated item map");
    const std::size_t sp = line.find(' ');
    if (sp == std::string::npos) throw DataError("dataset file: malformed item map line");
    const std::size_t id = std::stoull(line.substr(0, sp));
    if (id == 0 || id > items) throw DataError("dataset file: item id out of range");
    ds.item_external[id] = line.substr(sp + 1);
  }

  const std::size_t user_count = expect_count("user_map");
  if (user_count != users) throw DataError("dataset file: user map count mismatch");
  for (std::size_t i = 0; i < users; ++i) {
    if (!std::getline(in, line)) throw DataError("dataset file: truncated user map");
    ds.user_external.push_back(line);
  }

  const std::size_t seq_count = expect_count("sequences");
  if (seq_count != users) throw DataError("dataset file: sequence count mismatch");
  std::size_t total = 0;
  for (std::size_t i = 0; i < users; ++i) {
    if (!std::getline(in, line)) throw DataError("dataset file: truncated sequences");
    std::istringstream ss(line);
    std::vector<std::int32_t> seq;
    std::int32_t id;
    while (ss >> id) {
      if (id < 1 || static_cast<std::size_t>(id) > items)
        throw DataError("dataset file: sequence id out of range");
      seq.push_back(id);
    }
    if (seq.size() < 3) throw DataError("dataset file: sequence shorter than 3");
    total += seq.size();
    ds.sequences.push_back(std::move(seq));
  }
  if (total != interactions) throw DataError("dataset file: interaction count mismatch");
  return ds;
}

}  // namespace cosrec
