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

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wsiseg/dataset.hpp"
#include "wsiseg/image.hpp"
#include "wsiseg/slide_store.hpp"

namespace wsiseg {

/// Star-shaped region in level-0 pixel coordinates. The boundary radius is
/// radius * (1 + jitter * sum_k a_k cos(k theta + phi_k)); jitter 0 is a disk.
struct Blob {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
  double jitter = 0.0;
  std::array<double, 3> amplitude{};
  std::array<double, 3> phase{};

  bool contains(double x, double y) const;
};

struct RadiusRange {
  double min = 0.0;  // fraction of min(base_width, base_height)
  double max = 0.0;
};

struct SynthTexture {
  std::array<double, 3> tissue_rgb{236.0, 164.0, 204.0};
  std::array<double, 3> tumour_rgb{146.0, 78.0, 168.0};
  double slide_jitter = 8.0;   // per-slide colour offset, +/- per channel
  double pixel_noise = 10.0;   // per-pixel uniform noise amplitude
  double tumour_stripe_amplitude = 0.12;
  double tumour_stripe_period_px = 12.0;  // level-0 pixels
};

struct SynthSpec {
  std::uint64_t seed = 0;
  int base_width = 4096;
  int base_height = 4096;
  double base_um_per_px = 3.89;
  int n_levels = 3;
  int tile_size = 512;
  int tissue_blobs = 3;
  RadiusRange tissue_radius{0.20, 0.32};
  int tumour_blobs = 2;
  RadiusRange tumour_radius{0.07, 0.14};
  double shape_jitter = 0.15;
  int max_placement_attempts = 200;
  // When non-empty these replace the random placement of that blob kind.
  std::vector<Blob> fixed_tissue;
  std::vector<Blob> fixed_tumour;
  SynthTexture texture;
};

/// Rendered slide held in memory; the oracle for every pipeline test.
struct SynthSlide {
  SlidePyramid slide;                  // metadata; root is set once written
  std::vector<RgbImage> levels;        // level 0 first
  std::vector<BinaryMask> tissue;      // declared tissue, per level
  std::vector<BinaryMask> annotation;  // tumour geometry, per level
};

SynthSlide render_slide(const SynthSpec& spec, const std::string& slide_id,
                        const std::string& patient_id);

/// Renders and writes manifest, tiles and declared masks under `slide_dir`.
SynthSlide generate_slide(const SynthSpec& spec, const std::string& slide_id,
                          const std::string& patient_id,
                          const std::filesystem::path& slide_dir);

struct DatasetSpec {
  int n_patients = 29;
  int slides_per_patient = 2;
  double positive_fraction = 51.0 / 58.0;
  std::uint64_t seed = 0;
  SynthSpec slide_template;  // seed and tumour count are set per slide
};

/// Writes `slides/<slide_id>/...` for every slide plus `index.json`.
/// Negative slides are assigned patient by patient in a seeded order.
DatasetIndex generate_dataset(const DatasetSpec& spec,
                              const std::filesystem::path& out_dir);

}  // namespace wsiseg
