#include "cosrec/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "cosrec/errors.hpp"

namespace cosrec {

double percent_delta(double baseline, double variant) {
  if (baseline == 0.0) throw UsageError("percent_delta: zero baseline");
  return (variant - baseline) / baseline * 100.0;
}

namespace {

std::string fmt(double v, const char* spec = "%.9g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

void write_eval_csv(const std::vector<EvalRow>& rows, const std::string& path,
                    const std::string& config_echo) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write eval csv: " + path);
  out << "# config: " << config_echo << "\n";
  out << "dataset,mechanism,seq_len,d,seed,ndcg@10,hit@10,users\n";
  for (const auto& r : rows)
    out << r.dataset << "," << mechanism_name(r.mechanism) << "," << r.seq_len << "," << r.d
        << "," << r.seed << "," << fmt(r.ndcg, "%.17g") << "," << fmt(r.hit, "%.17g") << ","
        << r.users << "\n";
  if (!out) throw DataError("short write on eval csv: " + path);
}

std::vector<EvalRow> read_eval_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open eval csv: " + path);
  std::vector<EvalRow> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "dataset,mechanism,seq_len,d,seed,ndcg@10,hit@10,users")
        throw DataError("eval csv: unexpected header: " + line);
      header_seen = true;
      continue;
    }
    auto f = split_csv(line);
    if (f.size() != 8) throw DataError("eval csv: bad row: " + line);
    EvalRow r;
    r.dataset = f[0];
    r.mechanism = mechanism_from_string(f[1]);
    r.seq_len = std::stoull(f[2]);
    r.d = std::stoull(f[3]);
    r.seed = std::stoull(f[4]);
    r.ndcg = std::stod(f[5]);
    r.hit = std::stod(f[6]);
    r.users = std::stoull(f[7]);
    rows.push_back(std::move(r));
  }
  if (!header_seen) throw DataError("eval csv: no header found in " + path);
  return rows;
}

std::vector<ReportRow> build_report(const std::vector<BenchRecord>& bench,
                                    const std::vector<EvalRow>& eval_rows) {
  if (bench.empty()) throw UsageError("report: no bench records");

  // (n, d, mechanism) -> worst-case bytes / best-case seconds.
  struct Agg {
    std::int64_t bytes = 0;
    double seconds = HUGE_VAL;
    bool seen = false;
  };
  std::map<std::pair<std::size_t, std::size_t>, std::map<Mechanism, Agg>> cells;
  for (const auto& r : bench) {
    Agg& a = cells[{r.n, r.d}][r.mechanism];
    a.bytes = std::max(a.bytes, r.peak_bytes);
    a.seconds = std::min(a.seconds, r.seconds);
    a.seen = true;
  }

  // (seq_len, d, mechanism) -> ndcg/hit averaged over seeds.
  std::map<std::tuple<std::size_t, std::size_t, Mechanism>, std::pair<double, std::size_t>> ndcg;
  std::map<std::tuple<std::size_t, std::size_t, Mechanism>, double> hit;
  for (const auto& r : eval_rows) {
    auto key = std::make_tuple(r.seq_len, r.d, r.mechanism);
    auto& acc = ndcg[key];
    acc.first += r.ndcg;
    acc.second += 1;
    hit[key] += r.hit;
  }

  std::vector<ReportRow> rows;
  for (const auto& [cell, by_mech] : cells) {
    auto base_it = by_mech.find(Mechanism::Softmax);
    if (base_it == by_mech.end()) continue;
    for (const auto& [mech, agg] : by_mech) {
      if (mech == Mechanism::Softmax) continue;
      ReportRow row;
      row.n = cell.first;
      row.d = cell.second;
      row.mechanism = mech;
      row.mem_pct = percent_delta(static_cast<double>(base_it->second.bytes),
                                  static_cast<double>(agg.bytes));
      row.time_pct = percent_delta(base_it->second.seconds, agg.seconds);
      const auto vkey = std::make_tuple(row.n, row.d, mech);
      const auto bkey = std::make_tuple(row.n, row.d, Mechanism::Softmax);
      if (ndcg.count(vkey) != 0 && ndcg.count(bkey) != 0) {
        const double v_ndcg = ndcg[vkey].first / ndcg[vkey].second;
        const double b_ndcg = ndcg[bkey].first / ndcg[bkey].second;
        const double v_hit = hit[vkey] / ndcg[vkey].second;
        const double b_hit = hit[bkey] / ndcg[bkey].second;
        row.ndcg_pct = percent_delta(b_ndcg, v_ndcg);
        row.hit_pct = percent_delta(b_hit, v_hit);
      }
      rows.push_back(row);
    }
  }
  if (rows.empty()) throw UsageError("report: no variant/baseline pairs to compare");
  return rows;
}

void write_report_csv(const std::vector<ReportRow>& rows, const std::string& path,
                      const std::string& config_echo) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report csv: " + path);
  out << "# config: " << config_echo << "\n";
  out << "n,d,mechanism,mem_pct,time_pct,ndcg_pct,hit_pct\n";
  for (const auto& r : rows) {
    out << r.n << "," << r.d << "," << mechanism_name(r.mechanism) << ","
        << fmt(r.mem_pct, "%.4f") << "," << fmt(r.time_pct, "%.4f") << ",";
    out << (r.ndcg_pct ? fmt(*r.ndcg_pct, "%.4f") : "") << ",";
    out << (r.hit_pct ? fmt(*r.hit_pct, "%.4f") : "") << "\n";
  }
  if (!out) throw DataError("short write on report csv: " + path);
}

std::string format_report_table(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "      n      d  mechanism      MB(%)    Time(%)    NDCG(%)     HIT(%)\n";
  for (const auto& r : rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%7zu %6zu  %-10s %9.2f%% %9.2f%%", r.n, r.d,
                  mechanism_name(r.mechanism).c_str(), r.mem_pct, r.time_pct);
    out << line;
    if (r.ndcg_pct) {
      std::snprintf(line, sizeof(line), " %9.2f%% %9.2f%%", *r.ndcg_pct, *r.hit_pct);
      out << line;
    } else {
      out << "          -          -";
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace cosrec
