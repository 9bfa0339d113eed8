#include "cosrec/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "cosrec/alloc_tracker.hpp"
#include "cosrec/errors.hpp"
#include "cosrec/rng.hpp"
#include "cosrec/svg.hpp"

namespace cosrec {

namespace {

Matrix seeded_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

Matrix run_kernel(Mechanism mech, const Matrix& q, const Matrix& k, const Matrix& v,
                  const AttentionConfig& cfg) {
  switch (mech) {
    case Mechanism::Softmax:
      return softmax_attention(q, k, v);
    case Mechanism::EluLinear:
      return elu_linear_attention(q, k, v, cfg.alpha, cfg.eps, nullptr, nullptr,
                                  cfg.linear_denominator);
    case Mechanism::Cosine:
      return cosine_attention_fused(q, k, v, 1.0, cfg);
  }
  throw UsageError("bad mechanism value");
}

}  // namespace

std::vector<BenchRecord> tracked_run(Mechanism mechanism, std::size_t n, std::size_t d,
                                     std::size_t reps, std::uint64_t seed,
                                     const AttentionConfig& cfg) {
  if (n == 0 || d == 0) throw UsageError("tracked_run: n and d must be >= 1");
  if (reps < 3) throw UsageError("tracked_run: reps must be >= 3");

  std::mt19937_64 rng(mix_seed(seed, n, d));
  Matrix q = seeded_matrix(n, d, rng);
  Matrix k = seeded_matrix(n, d, rng);
  Matrix v = seeded_matrix(n, d, rng);

  run_kernel(mechanism, q, k, v, cfg);  // warm-up, discarded

  std::vector<BenchRecord> records;
  records.reserve(reps);
  for (std::size_t rep = 0; rep < reps; ++rep) {
    BenchRecord rec;
    rec.mechanism = mechanism;
    rec.n = n;
    rec.d = d;
    rec.tile = cfg.tile_size;
    rec.rep = rep;
    AllocTracker scope;
    const auto t0 = std::chrono::steady_clock::now();
    Matrix out = run_kernel(mechanism, q, k, v, cfg);
    const auto t1 = std::chrono::steady_clock::now();
    rec.peak_bytes = scope.peak_bytes();
    rec.seconds = std::chrono::duration<double>(t1 - t0).count();
    records.push_back(rec);
  }
  return records;
}

std::int64_t theoretical_bytes(Mechanism mechanism, std::size_t n, std::size_t d,
                               std::size_t tile) {
  const auto b = static_cast<std::int64_t>(sizeof(double));
  const auto nn = static_cast<std::int64_t>(n);
  const auto dd = static_cast<std::int64_t>(d);
  const auto tt = static_cast<std::int64_t>(tile);
  switch (mechanism) {
    case Mechanism::Softmax:
      return (nn * nn + nn * dd) * b;
    case Mechanism::EluLinear:
      return (2 * nn * dd + dd * dd + nn) * b;
    case Mechanism::Cosine:
      return (tt * dd + dd * dd) * b;
  }
  throw UsageError("bad mechanism value");
}

ScalingFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw UsageError("fit_loglog: need >= 2 points");
  const std::size_t n = x.size();
  double sx = 0, sy = 0;
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw UsageError("fit_loglog: values must be positive");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
    sx += lx[i];
    sy += ly[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw UsageError("fit_loglog: x values must differ");
  ScalingFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (syy == 0.0) {
    fit.r_squared = 1.0;
  } else {
    double ss_res = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = ly[i] - (fit.intercept + fit.slope * lx[i]);
      ss_res += e * e;
    }
    fit.r_squared = 1.0 - ss_res / syy;
  }
  return fit;
}

namespace {

// Aggregate per n: worst-case bytes, best-case seconds.
std::map<std::size_t, std::pair<std::int64_t, double>> aggregate_by_n(
    const std::vector<BenchRecord>& records, Mechanism mechanism) {
  std::map<std::size_t, std::pair<std::int64_t, double>> agg;
  for (const auto& r : records) {
    if (r.mechanism != mechanism) continue;
    auto [it, fresh] = agg.try_emplace(r.n, std::make_pair(r.peak_bytes, r.seconds));
    if (!fresh) {
      it->second.first = std::max(it->second.first, r.peak_bytes);
      it->second.second = std::min(it->second.second, r.seconds);
    }
  }
  return agg;
}

}  // namespace

ScalingFit fit_bytes_slope(const std::vector<BenchRecord>& records, Mechanism mechanism) {
  auto agg = aggregate_by_n(records, mechanism);
  std::vector<double> x, y;
  for (const auto& [n, v] : agg) {
    x.push_back(static_cast<double>(n));
    y.push_back(static_cast<double>(v.first));
  }
  return fit_loglog(x, y);
}

ScalingFit fit_seconds_slope(const std::vector<BenchRecord>& records, Mechanism mechanism) {
  auto agg = aggregate_by_n(records, mechanism);
  std::vector<double> x, y;
  for (const auto& [n, v] : agg) {
    x.push_back(static_cast<double>(n));
    y.push_back(v.second);
  }
  return fit_loglog(x, y);
}

std::vector<BenchRecord> sweep(const SweepConfig& cfg) {
  if (cfg.ns.empty() || cfg.ds.empty() || cfg.mechanisms.empty() || cfg.seeds.empty())
    throw UsageError("sweep: n, d, mechanism and seed lists must be non-empty");
  std::vector<BenchRecord> all;
  for (Mechanism mech : cfg.mechanisms) {
    for (std::size_t n : cfg.ns) {
      for (std::size_t d : cfg.ds) {
        std::size_t rep_base = 0;
        for (std::uint64_t seed : cfg.seeds) {
          auto records = tracked_run(mech, n, d, cfg.reps, seed, cfg.attn);
          for (auto& r : records) r.rep += rep_base;
          rep_base += cfg.reps;
          all.insert(all.end(), records.begin(), records.end());
        }
      }
    }
  }
  return all;
}

void write_bench_csv(const std::vector<BenchRecord>& records, const std::string& path,
                     const std::string& config_echo) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write bench csv: " + path);
  out << "# config: " << config_echo << "\n";
  out << "mechanism,n,d,T,rep,peak_bytes,seconds\n";
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%.9g", r.seconds);
    out << mechanism_name(r.mechanism) << "," << r.n << "," << r.d << "," << r.tile << ","
        << r.rep << "," << r.peak_bytes << "," << buf << "\n";
  }
  if (!out) throw DataError("short write on bench csv: " + path);
}

std::vector<BenchRecord> read_bench_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open bench csv: " + path);
  std::vector<BenchRecord> records;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "mechanism,n,d,T,rep,peak_bytes,seconds")
        throw DataError("bench csv: unexpected header: " + line);
      header_seen = true;
      continue;
    }
    std::istringstream ss(line);
    std::string field;
    BenchRecord r;
    if (!std::getline(ss, field, ',')) throw DataError("bench csv: bad row: " + line);
    r.mechanism = mechanism_from_string(field);
    auto next = [&](const char* what) {
      if (!std::getline(ss, field, ',')) throw DataError(std::string("bench csv: missing ") + what);
      return field;
    };
    r.n = std::stoull(next("n"));
    r.d = std::stoull(next("d"));
    r.tile = std::stoull(next("T"));
    r.rep = std::stoull(next("rep"));
    r.peak_bytes = std::stoll(next("peak_bytes"));
    r.seconds = std::stod(next("seconds"));
    records.push_back(r);
  }
  if (!header_seen) throw DataError("bench csv: no header found in " + path);
  return records;
}

void write_bench_plots(const std::vector<BenchRecord>& records, const std::string& out_dir) {
  if (records.empty()) throw UsageError("write_bench_plots: no records");
  // vs-n plots slice at the smallest d; vs-d plots at the smallest n.
  std::size_t d0 = records.front().d, n0 = records.front().n;
  for (const auto& r : records) {
    d0 = std::min(d0, r.d);
    n0 = std::min(n0, r.n);
  }

  auto series_for = [&](bool vs_n, bool bytes) {
    std::vector<PlotSeries> series;
    for (Mechanism mech : {Mechanism::Softmax, Mechanism::EluLinear, Mechanism::Cosine}) {
      std::map<std::size_t, std::pair<std::int64_t, double>> agg;
      for (const auto& r : records) {
        if (r.mechanism != mech) continue;
        if (vs_n && r.d != d0) continue;
        if (!vs_n && r.n != n0) continue;
        const std::size_t key = vs_n ? r.n : r.d;
        auto [it, fresh] = agg.try_emplace(key, std::make_pair(r.peak_bytes, r.seconds));
        if (!fresh) {
          it->second.first = std::max(it->second.first, r.peak_bytes);
          it->second.second = std::min(it->second.second, r.seconds);
        }
      }
      if (agg.empty()) continue;
      PlotSeries s;
      s.label = mechanism_name(mech);
      for (const auto& [key, v] : agg) {
        s.x.push_back(static_cast<double>(key));
        s.y.push_back(bytes ? static_cast<double>(v.first) : v.second);
      }
      series.push_back(std::move(s));
    }
    return series;
  };

  const std::string sep = out_dir.empty() ? "" : "/";
  write_svg_line_plot(out_dir + sep + "bytes_vs_n.svg", "Peak transient bytes vs sequence length",
                      "n", "bytes", series_for(true, true), true, true);
  write_svg_line_plot(out_dir + sep + "seconds_vs_n.svg", "Forward seconds vs sequence length",
                      "n", "seconds", series_for(true, false), true, true);
  write_svg_line_plot(out_dir + sep + "bytes_vs_d.svg", "Peak transient bytes vs model dim", "d",
                      "bytes", series_for(false, true), true, true);
  write_svg_line_plot(out_dir + sep + "seconds_vs_d.svg", "Forward seconds vs model dim", "d",
                      "seconds", series_for(false, false), true, true);
}

}  // namespace cosrec
