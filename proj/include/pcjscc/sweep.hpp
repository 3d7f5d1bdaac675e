// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pcjscc/model.hpp"
#include "pcjscc/plot.hpp"
#include "pcjscc/training.hpp"

namespace pcjscc {

struct SweepVariant {
  std::string name;  // legend prefix, e.g. "full" or "no_ort"
  ModelParams params;
  int declared_bandwidth = 0;  // 0 = take from the checkpoint
};

struct SweepRow {
  std::string variant;
  int bandwidth = 0;
  double snr_db = 0;
  std::string sample_id;
  MetricsReport rep;
};

struct SweepCell {
  std::string variant;
  int bandwidth = 0;
  double snr_db = 0;
  MetricsReport mean, median;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepCell> cells;
  std::map<std::string, Mat> pools;  // variant -> pool basis, for heatmaps

  bool empty() const { return rows.empty(); }
};

namespace detail {

inline const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols = {
      "d1_ab", "d1_ba", "d2_ab", "d2_ba", "psnr_d1", "psnr_d2", "cd",
      "ortho_metric"};
  return cols;
}

inline double metric_field(const MetricsReport& r, std::size_t col) {
  switch (col) {
    case 0: return r.d1_ab;
    case 1: return r.d1_ba;
    case 2: return r.d2_ab;
    case 3: return r.d2_ba;
    case 4: return r.psnr_d1;
    case 5: return r.psnr_d2;
    case 6: return r.cd;
    default: return r.ortho.value_or(std::numeric_limits<double>::quiet_NaN());
  }
}

inline void set_metric_field(MetricsReport& r, std::size_t col, double v) {
  switch (col) {
    case 0: r.d1_ab = v; break;
    case 1: r.d1_ba = v; break;
    case 2: r.d2_ab = v; break;
    case 3: r.d2_ba = v; break;
    case 4: r.psnr_d1 = v; break;
    case 5: r.psnr_d2 = v; break;
    case 6: r.cd = v; break;
    default: r.ortho = v; break;
  }
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline SweepCell aggregate_cell(const std::string& variant, int bandwidth,
                                double snr_db,
                                const std::vector<const MetricsReport*>& reps) {
  SweepCell cell;
  cell.variant = variant;
  cell.bandwidth = bandwidth;
  cell.snr_db = snr_db;
  for (std::size_t col = 0; col < metric_columns().size(); ++col) {
    std::vector<double> vals;
    vals.reserve(reps.size());
    double sum = 0.0;
    for (const auto* r : reps) {
      const double v = metric_field(*r, col);
      vals.push_back(v);
      sum += v;
    }
    set_metric_field(cell.mean, col, sum / static_cast<double>(vals.size()));
    set_metric_field(cell.median, col, median_of(vals));
  }
  return cell;
}

}  // namespace detail

/// Evaluate every (variant, SNR) cell over the test set. Per-sample noise
/// streams are derived from (seed, variant, snr index, sample index), so the
/// result is identical no matter how cells are ordered or parallelized.
inline SweepResult run_sweep(const std::vector<SweepVariant>& variants,
                             const std::vector<double>& snr_list,
                             const std::vector<PointCloud>& test_set,
                             const std::vector<std::string>& sample_ids,
                             std::uint64_t seed, double psnr_peak = 1.0) {
  if (variants.empty() || snr_list.empty() || test_set.empty())
    throw std::invalid_argument("run_sweep: empty inputs");
  if (sample_ids.size() != test_set.size())
    throw std::invalid_argument("run_sweep: ids/set size mismatch");
  for (const auto& v : variants) {
    if (v.declared_bandwidth != 0 &&
        v.declared_bandwidth != v.params.cfg.latent_n)
      throw std::invalid_argument(
          "run_sweep: checkpoint '" + v.name + "' has bandwidth " +
          std::to_string(v.params.cfg.latent_n) + ", sweep column expects " +
          std::to_string(v.declared_bandwidth));
  }
  SweepResult result;
  for (const auto& v : variants) {
    const int bandwidth = v.params.cfg.latent_n;
    const FeaturePool pool = v.params.feature_pool();
    result.pools[v.name + "-" + std::to_string(bandwidth)] = pool.basis;
    const std::uint64_t vseed = mix_seed(seed, fnv1a(v.name));
    for (std::size_t si = 0; si < snr_list.size(); ++si) {
      const double snr = snr_list[si];
      const ChannelConfig ch{snr, bandwidth, 0};
      std::vector<const MetricsReport*> cell_rows;
      const std::size_t row0 = result.rows.size();
      for (std::size_t k = 0; k < test_set.size(); ++k) {
        Rng rng(mix_seed(mix_seed(vseed, si), k));
        const PointCloud recon =
            model_forward(test_set[k], ch, v.params, rng);
        SweepRow row;
        row.variant = v.name;
        row.bandwidth = bandwidth;
        row.snr_db = snr;
        row.sample_id = sample_ids[k];
        row.rep = evaluate(recon, test_set[k], &pool, psnr_peak);
        result.rows.push_back(std::move(row));
      }
      for (std::size_t k = row0; k < result.rows.size(); ++k)
        cell_rows.push_back(&result.rows[k].rep);
      result.cells.push_back(
          detail::aggregate_cell(v.name, bandwidth, snr, cell_rows));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// File emission

inline void write_per_sample_csv(const SweepResult& result,
                                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "variant," << MetricsReport::csv_header() << '\n';
  for (const auto& row : result.rows)
    out << row.variant << ','
        << row.rep.csv_row(row.sample_id, row.snr_db, row.bandwidth) << '\n';
}

inline void write_aggregate_csv(const SweepResult& result,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "variant,bandwidth,snr_db,stat";
  for (const auto& c : detail::metric_columns()) out << ',' << c;
  out << '\n';
  auto emit = [&](const SweepCell& cell, const char* stat,
                  const MetricsReport& rep) {
    out << cell.variant << ',' << cell.bandwidth << ','
        << fmt_double(cell.snr_db) << ',' << stat;
    for (std::size_t col = 0; col < detail::metric_columns().size(); ++col)
      out << ',' << fmt_double(detail::metric_field(rep, col));
    out << '\n';
  };
  for (const auto& cell : result.cells) {
    emit(cell, "mean", cell.mean);
    emit(cell, "median", cell.median);
  }
}

/// CSVs plus the four metric-vs-SNR panels and one Gram-matrix heatmap per
/// variant. Refuses to start on an empty result, so no partial files.
inline void emit_report(const SweepResult& result, const std::string& out_dir) {
  if (result.empty()) throw std::invalid_argument("emit_report: empty result");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  write_per_sample_csv(result, out_dir + "/per_sample.csv");
  write_aggregate_csv(result, out_dir + "/aggregate.csv");

  struct Panel {
    const char* file;
    const char* title;
    const char* ylabel;
    std::size_t col;
  };
  const Panel panels[] = {
      {"psnr_d1_vs_snr.svg", "D1 PSNR vs SNR", "D1 PSNR (dB)", 4},
      {"psnr_d2_vs_snr.svg", "D2 PSNR vs SNR", "D2 PSNR (dB)", 5},
      {"cd_vs_snr.svg", "Chamfer distance vs SNR", "CD", 6},
      {"ortho_metric_vs_snr.svg", "Pool orthogonality vs SNR",
       "||OO^T - I||_F", 7},
  };
  for (const auto& panel : panels) {
    std::vector<PlotSeries> series;
    std::map<std::string, std::size_t> index;
    for (const auto& cell : result.cells) {
      const std::string label =
          cell.variant + "-" + std::to_string(cell.bandwidth);
      auto [it, fresh] = index.try_emplace(label, series.size());
      if (fresh) series.push_back({label, {}});
      series[it->second].points.emplace_back(
          cell.snr_db, detail::metric_field(cell.mean, panel.col));
    }
    write_line_plot_svg(out_dir + "/" + panel.file, panel.title, "SNR (dB)",
                        panel.ylabel, series);
  }
  for (const auto& [label, basis] : result.pools) {
    const Mat gram = (basis * basis.transpose()).cwiseAbs();
    write_heatmap_svg(out_dir + "/gram_" + label + ".svg",
                      "|OO^T| " + label, gram);
    std::ofstream out(out_dir + "/pool_" + label + ".csv");
    if (!out) throw std::runtime_error("cannot write pool csv");
    for (Eigen::Index i = 0; i < basis.rows(); ++i) {
      for (Eigen::Index j = 0; j < basis.cols(); ++j)
        out << (j ? "," : "") << fmt_double(basis(i, j));
      out << '\n';
    }
  }
}

/// Rebuild a SweepResult from an emitted directory (per-sample + aggregate
/// CSVs + pool dumps), so plots can be re-rendered without the checkpoints.
inline SweepResult load_sweep_dir(const std::string& dir);

// ---------------------------------------------------------------------------
// Aggregate verification: recompute aggregate.csv from per_sample.csv.

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

inline bool numbers_match(double a, double b, double tol = 1e-9) {
  if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
  if (std::isinf(a) || std::isinf(b)) return a == b;
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}
}  // namespace detail

/// Recompute every aggregate row from the per-sample rows; returns a list of
/// mismatches (empty = verified).
inline std::vector<std::string> verify_aggregates(const std::string& dir) {
  std::ifstream per(dir + "/per_sample.csv");
  if (!per) throw std::runtime_error("cannot open " + dir + "/per_sample.csv");
  std::ifstream agg(dir + "/aggregate.csv");
  if (!agg) throw std::runtime_error("cannot open " + dir + "/aggregate.csv");

  std::string line;
  std::getline(per, line);  // header
  struct Key {
    std::string variant;
    std::string bandwidth;
    std::string snr;
    bool operator<(const Key& o) const {
      return std::tie(variant, bandwidth, snr) <
             std::tie(o.variant, o.bandwidth, o.snr);
    }
  };
  std::map<Key, std::vector<std::vector<double>>> groups;  // key -> col values
  const std::size_t n_metrics = detail::metric_columns().size();
  while (std::getline(per, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 4 + n_metrics)
      throw std::runtime_error("per_sample.csv: bad column count");
    Key key{f[0], f[3], f[2]};
    auto& cols = groups[key];
    if (cols.empty()) cols.resize(n_metrics);
    for (std::size_t c = 0; c < n_metrics; ++c)
      cols[c].push_back(f[4 + c].empty()
                            ? std::numeric_limits<double>::quiet_NaN()
                            : parse_double(f[4 + c]));
  }

  std::vector<std::string> mismatches;
  std::getline(agg, line);  // header
  while (std::getline(agg, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 4 + n_metrics)
      throw std::runtime_error("aggregate.csv: bad column count");
    const Key key{f[0], f[1], f[2]};
    const auto it = groups.find(key);
    if (it == groups.end()) {
      mismatches.push_back("aggregate row with no per-sample rows: " + line);
      continue;
    }
    const bool mean = f[3] == "mean";
    for (std::size_t c = 0; c < n_metrics; ++c) {
      const auto& vals = it->second[c];
      double expect;
      if (mean) {
        double sum = 0.0;
        for (double v : vals) sum += v;
        expect = sum / static_cast<double>(vals.size());
      } else {
        expect = detail::median_of(vals);
      }
      const double got = parse_double(f[4 + c]);
      if (!detail::numbers_match(expect, got))
        mismatches.push_back(
            key.variant + " snr=" + key.snr + " " + f[3] + " " +
            detail::metric_columns()[c] + ": file has " + f[4 + c] +
            ", recomputed " + fmt_double(expect));
    }
  }
  return mismatches;
}

inline SweepResult load_sweep_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  SweepResult result;
  const std::size_t n_metrics = detail::metric_columns().size();
  {
    std::ifstream per(dir + "/per_sample.csv");
    if (!per)
      throw std::runtime_error("cannot open " + dir + "/per_sample.csv");
    std::string line;
    std::getline(per, line);
    while (std::getline(per, line)) {
      if (line.empty()) continue;
      const auto f = detail::split_csv_line(line);
      if (f.size() != 4 + n_metrics)
        throw std::runtime_error("per_sample.csv: bad column count");
      SweepRow row;
      row.variant = f[0];
      row.sample_id = f[1];
      row.snr_db = parse_double(f[2]);
      row.bandwidth = static_cast<int>(parse_double(f[3]));
      for (std::size_t c = 0; c < n_metrics; ++c)
        if (!f[4 + c].empty())
          detail::set_metric_field(row.rep, c, parse_double(f[4 + c]));
      result.rows.push_back(std::move(row));
    }
  }
  {
    std::ifstream agg(dir + "/aggregate.csv");
    if (!agg) throw std::runtime_error("cannot open " + dir + "/aggregate.csv");
    std::string line;
    std::getline(agg, line);
    std::map<std::string, std::size_t> index;
    while (std::getline(agg, line)) {
      if (line.empty()) continue;
      const auto f = detail::split_csv_line(line);
      if (f.size() != 4 + n_metrics)
        throw std::runtime_error("aggregate.csv: bad column count");
      const std::string key = f[0] + "," + f[1] + "," + f[2];
      auto [it, fresh] = index.try_emplace(key, result.cells.size());
      if (fresh) {
        SweepCell cell;
        cell.variant = f[0];
        cell.bandwidth = static_cast<int>(parse_double(f[1]));
        cell.snr_db = parse_double(f[2]);
        result.cells.push_back(cell);
      }
      MetricsReport& rep = f[3] == "median" ? result.cells[it->second].median
                                            : result.cells[it->second].mean;
      for (std::size_t c = 0; c < n_metrics; ++c)
        detail::set_metric_field(rep, c, parse_double(f[4 + c]));
    }
  }
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("pool_", 0) != 0 || e.path().extension() != ".csv")
      continue;
    std::ifstream in(e.path());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = detail::split_csv_line(line);
      std::vector<double> vals;
      for (const auto& s : f) vals.push_back(parse_double(s));
      rows.push_back(std::move(vals));
    }
    if (rows.empty()) continue;
    Mat basis(static_cast<Eigen::Index>(rows.size()),
              static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < rows[i].size(); ++j)
        basis(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            rows[i][j];
    const std::string label = name.substr(5, name.size() - 5 - 4);
    result.pools[label] = std::move(basis);
  }
  return result;
}

}  // namespace pcjscc
