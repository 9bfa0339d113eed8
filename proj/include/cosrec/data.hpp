#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace cosrec {

enum class DataFormat { MovieLensDat, AmazonCsv, Tsv };

DataFormat format_from_string(const std::string& name);
std::string format_name(DataFormat f);

struct InteractionEvent {
  std::string user;
  std::string item;
  std::int64_t timestamp = 0;
};

struct LoadResult {
  std::vector<InteractionEvent> events;
  std::size_t malformed = 0;
  std::size_t lines = 0;
};

// Parses raw interaction logs. Malformed lines are counted; the run aborts
// when they exceed 0.1% of non-empty lines.
LoadResult load_interactions(const std::string& path, DataFormat format);

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
  double mean_seq_len = 0.0;
  double sparsity = 0.0;  // 1 - interactions / (users * items)
};

struct InteractionDataset {
  std::vector<std::vector<std::int32_t>> sequences;  // per user, chronological
  std::vector<std::string> user_external;            // per sequence
  std::vector<std::string> item_external;            // index 1..items; [0] unused
  std::vector<std::uint32_t> validation_users;       // sorted sequence indices

  std::size_t item_count() const { return item_external.empty() ? 0 : item_external.size() - 1; }
  DatasetStats stats() const;
};

// Drops users outside [min_inter, max_inter] (max_inter 0 = unbounded),
// orders each user's events chronologically (stable on ties) and reindexes
// items over the surviving events to 1..|V|.
InteractionDataset preprocess(const std::vector<InteractionEvent>& events, std::size_t min_inter,
                              std::size_t max_inter, std::size_t validation_sample,
                              std::uint64_t seed, bool dedup = false);

struct LooSplit {
  std::vector<std::vector<std::int32_t>> train;  // per user: all but the last two items
  std::vector<std::int32_t> valid_item;          // second-to-last
  std::vector<std::int32_t> test_item;           // last
};

LooSplit leave_one_out_split(const InteractionDataset& ds);

// Keeps the most recent n items (truncating from the left) and left-pads
// shorter sequences so the final slot is always a real item.
std::vector<std::int32_t> fit_sequence(const std::vector<std::int32_t>& items, std::size_t n);

struct Batch {
  std::vector<std::size_t> indices;                // source sequence index per row
  std::vector<std::vector<std::int32_t>> rows;     // fitted to length n
  std::vector<std::size_t> true_length;            // real items per row
};

std::vector<Batch> make_batches(const std::vector<std::vector<std::int32_t>>& seqs,
                                std::size_t seq_len, std::size_t batch_size,
                                std::mt19937_64* shuffle_rng);

// Canonical dataset file: text header with counts and the id maps, then one
// line of space-separated internal ids per user. Stable across reruns.
void save_dataset(const InteractionDataset& ds, const std::string& path,
                  const std::string& config_echo);
InteractionDataset load_dataset(const std::string& path);

}  // namespace cosrec
