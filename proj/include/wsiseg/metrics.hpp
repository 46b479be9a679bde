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

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wsiseg/image.hpp"

namespace wsiseg {

struct SlideMetrics {
  std::string slide_id;
  double dice = 0.0;
  bool gt_positive = false;
  bool pred_positive = false;
  std::optional<double> fp_tissue_pct;  // negative slides only
};

struct MetricsSummary {
  int n_all = 0;
  int n_positive = 0;
  double median_dice_all = 0.0;
  double iqr_all = 0.0;
  double median_dice_pos = 0.0;
  double iqr_pos = 0.0;
  int n_negative = 0;
  double fp_pct_mean = 0.0;
  double fp_pct_std = 0.0;
};

/// Both empty -> 1, exactly one empty -> 0, else 2|P and G| / (|P| + |G|).
SlideMetrics slide_dice(const BinaryMask& pred, const BinaryMask& gt);

/// 100 |pred and tissue| / |tissue|; throws kEmptyTissue for an empty mask.
double fp_tissue_percentage(const BinaryMask& pred, const BinaryMask& tissue);

/// Dice plus, for a negative ground truth, the false-positive tissue share.
SlideMetrics evaluate_slide(std::string slide_id, const BinaryMask& pred, const BinaryMask& gt,
                            const BinaryMask& tissue);

/// Inclusive linear-interpolation quantile (position q (n - 1) in the
/// sorted values). Throws on empty input.
double quantile(std::span<const double> values, double q);
double median(std::span<const double> values);
double iqr(std::span<const double> values);

/// Positive-only statistics are zero when no slide is positive; FP
/// statistics (population std) are zero when no slide is negative.
MetricsSummary summarize(std::span<const SlideMetrics> per_slide);

struct MetricsRow {
  SlideMetrics metrics;
  int fold = 0;
  std::string mode;
  double resolution_um = 0.0;
};

/// Columns: slide_id, fold, mode, resolution_um, dice, gt_positive,
/// pred_positive, fp_tissue_pct. Rows are written in the given order.
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

std::string format_table_cell(double median, double iqr);

}  // namespace wsiseg
