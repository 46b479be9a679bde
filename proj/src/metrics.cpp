/* Copyright (c) 2026 The wsiseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#include "wsiseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "wsiseg/error.hpp"
#include "wsiseg/fileio.hpp"

namespace wsiseg {

SlideMetrics slide_dice(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.width() != gt.width() || pred.height() != gt.height())
    throw Error(ErrorCode::kDimensionMismatch, "prediction and ground truth sizes differ");
  const auto p = pred.values();
  const auto g = gt.values();
  std::size_t np = 0, ng = 0, both = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    np += p[i];
    ng += g[i];
    both += p[i] & g[i];
  }
  SlideMetrics m;
  m.gt_positive = ng > 0;
  m.pred_positive = np > 0;
  if (!m.gt_positive && !m.pred_positive) {
    m.dice = 1.0;
  } else if (m.gt_positive != m.pred_positive) {
    m.dice = 0.0;
  } else {
    m.dice = 2.0 * static_cast<double>(both) / static_cast<double>(np + ng);
  }
  return m;
}

double fp_tissue_percentage(const BinaryMask& pred, const BinaryMask& tissue) {
  if (pred.width() != tissue.width() || pred.height() != tissue.height())
    throw Error(ErrorCode::kDimensionMismatch, "prediction and tissue sizes differ");
  const auto p = pred.values();
  const auto t = tissue.values();
  std::size_t nt = 0, hit = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    nt += t[i];
    hit += p[i] & t[i];
  }
  if (nt == 0) throw Error(ErrorCode::kEmptyTissue, "empty tissue mask");
  return 100.0 * static_cast<double>(hit) / static_cast<double>(nt);
}

SlideMetrics evaluate_slide(std::string slide_id, const BinaryMask& pred, const BinaryMask& gt,
                            const BinaryMask& tissue) {
  SlideMetrics m = slide_dice(pred, gt);
  m.slide_id = std::move(slide_id);
  if (!m.gt_positive) m.fp_tissue_pct = fp_tissue_percentage(pred, tissue);
  return m;
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "quantile of an empty list");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return frac == 0.0 ? v[lo] : v[lo] + (v[hi] - v[lo]) * frac;
}

double median(std::span<const double> values) { return quantile(values, 0.5); }

double iqr(std::span<const double> values) {
  return quantile(values, 0.75) - quantile(values, 0.25);
}

MetricsSummary summarize(std::span<const SlideMetrics> per_slide) {
  if (per_slide.empty()) throw Error(ErrorCode::kInvalidArgument, "no slides to summarize");
  std::vector<double> all, pos, fp;
  for (const auto& m : per_slide) {
    all.push_back(m.dice);
    if (m.gt_positive) pos.push_back(m.dice);
    if (!m.gt_positive && m.fp_tissue_pct) fp.push_back(*m.fp_tissue_pct);
  }
  MetricsSummary s;
  s.n_all = static_cast<int>(all.size());
  s.n_positive = static_cast<int>(pos.size());
  s.median_dice_all = median(all);
  s.iqr_all = iqr(all);
  if (!pos.empty()) {
    s.median_dice_pos = median(pos);
    s.iqr_pos = iqr(pos);
  }
  s.n_negative = static_cast<int>(fp.size());
  if (!fp.empty()) {
    std::sort(fp.begin(), fp.end());
    double mean = 0.0;
    for (double v : fp) mean += v;
    mean /= static_cast<double>(fp.size());
    double var = 0.0;
    for (double v : fp) var += (v - mean) * (v - mean);
    s.fp_pct_mean = mean;
    s.fp_pct_std = std::sqrt(var / static_cast<double>(fp.size()));
  }
  return s;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows) {
  std::string out =
      "slide_id,fold,mode,resolution_um,dice,gt_positive,pred_positive,fp_tissue_pct\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out += m.slide_id + "," + std::to_string(r.fold) + "," + r.mode + "," + fmt(r.resolution_um) +
           "," + fmt(m.dice) + "," + (m.gt_positive ? "1" : "0") + "," +
           (m.pred_positive ? "1" : "0") + "," + (m.fp_tissue_pct ? fmt(*m.fp_tissue_pct) : "") +
           "\n";
  }
  write_file_atomic(path, out);
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() == 7) f.emplace_back();
    if (f.size() != 8) throw Error(ErrorCode::kSchemaViolation, path.string() + ": bad row '" + line + "'");
    MetricsRow r;
    r.metrics.slide_id = f[0];
    r.fold = std::stoi(f[1]);
    r.mode = f[2];
    r.resolution_um = std::stod(f[3]);
    r.metrics.dice = std::stod(f[4]);
    r.metrics.gt_positive = f[5] == "1";
    r.metrics.pred_positive = f[6] == "1";
    if (!f[7].empty()) r.metrics.fp_tissue_pct = std::stod(f[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string format_table_cell(double median, double iqr) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3f (%.3f)", median, iqr);
  return buf;
}

}  // namespace wsiseg
