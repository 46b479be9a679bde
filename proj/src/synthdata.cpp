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

#include "wsiseg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "wsiseg/error.hpp"
#include "wsiseg/png_io.hpp"
#include "wsiseg/rng.hpp"

namespace wsiseg {
namespace {

Blob random_blob(Rng& rng, double cx, double cy, double radius, double jitter) {
  Blob b;
  b.cx = cx;
  b.cy = cy;
  b.radius = radius;
  b.jitter = jitter;
  for (std::size_t k = 0; k < b.amplitude.size(); ++k) {
    b.amplitude[k] = rng.uniform(-1.0, 1.0) / 3.0;
    b.phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  return b;
}

double blob_extent(const Blob& b) {
  double total = 0.0;
  for (double a : b.amplitude) total += std::abs(a);
  return b.radius * (1.0 + b.jitter * total);
}

struct Box {
  int x0, y0, x1, y1;  // half-open
};

Box bounding_box(const Blob& b, int width, int height) {
  const double r = blob_extent(b) + 1.0;
  return {std::clamp(static_cast<int>(std::floor(b.cx - r)), 0, width),
          std::clamp(static_cast<int>(std::floor(b.cy - r)), 0, height),
          std::clamp(static_cast<int>(std::ceil(b.cx + r)), 0, width),
          std::clamp(static_cast<int>(std::ceil(b.cy + r)), 0, height)};
}

void rasterize(const Blob& b, BinaryMask& mask) {
  const Box box = bounding_box(b, mask.width(), mask.height());
  for (int y = box.y0; y < box.y1; ++y)
    for (int x = box.x0; x < box.x1; ++x)
      if (b.contains(x + 0.5, y + 0.5)) mask.set(x, y, 1);
}

// Deterministic per-pixel noise in [-1, 1], independent of render order.
double pixel_noise(std::uint64_t seed, int x, int y, int channel) {
  const std::uint64_t key = (static_cast<std::uint64_t>(y) << 32) ^
                            static_cast<std::uint64_t>(x) ^
                            (static_cast<std::uint64_t>(channel) << 62);
  const std::uint64_t h = splitmix64(seed ^ splitmix64(key));
  return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

bool Blob::contains(double x, double y) const {
  const double dx = x - cx;
  const double dy = y - cy;
  const double d2 = dx * dx + dy * dy;
  if (jitter == 0.0) return d2 <= radius * radius;
  const double reach = blob_extent(*this);
  if (d2 > reach * reach) return false;
  const double theta = std::atan2(dy, dx);
  double wobble = 0.0;
  for (std::size_t k = 0; k < amplitude.size(); ++k)
    wobble += amplitude[k] * std::cos(static_cast<double>(k + 2) * theta + phase[k]);
  const double boundary = radius * (1.0 + jitter * wobble);
  return d2 <= boundary * boundary;
}

SynthSlide render_slide(const SynthSpec& spec, const std::string& slide_id,
                        const std::string& patient_id) {
  if (spec.base_width < 1 || spec.base_height < 1 || spec.n_levels < 1 ||
      spec.tile_size < 1 || !(spec.base_um_per_px > 0.0))
    throw Error(ErrorCode::kInvalidSpec, "invalid synthetic slide spec for " + slide_id);
  if (spec.tissue_blobs < 0 || spec.tumour_blobs < 0 ||
      spec.tissue_radius.min > spec.tissue_radius.max ||
      spec.tumour_radius.min > spec.tumour_radius.max)
    throw Error(ErrorCode::kInvalidSpec, "invalid blob ranges for " + slide_id);

  Rng rng(derive_seed(spec.seed, 0x5eed));
  const int w = spec.base_width;
  const int h = spec.base_height;
  const double extent = std::min(w, h);

  std::vector<Blob> tissue = spec.fixed_tissue;
  if (tissue.empty()) {
    for (int i = 0; i < spec.tissue_blobs; ++i) {
      const double r = extent * rng.uniform(spec.tissue_radius.min, spec.tissue_radius.max);
      const double cx = w * rng.uniform(0.3, 0.7);
      const double cy = h * rng.uniform(0.3, 0.7);
      tissue.push_back(random_blob(rng, cx, cy, r, spec.shape_jitter));
    }
  }
  auto in_tissue = [&](double x, double y) {
    return std::any_of(tissue.begin(), tissue.end(),
                       [&](const Blob& b) { return b.contains(x, y); });
  };

  std::vector<Blob> tumour = spec.fixed_tumour;
  if (tumour.empty() && spec.tumour_blobs > 0) {
    if (tissue.empty())
      throw Error(ErrorCode::kPlacementFailed, "no tissue to place tumour in " + slide_id);
    for (int i = 0; i < spec.tumour_blobs; ++i) {
      bool placed = false;
      for (int attempt = 0; attempt < spec.max_placement_attempts; ++attempt) {
        const Blob& host = tissue[rng.below(tissue.size())];
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double dist = 0.6 * host.radius * std::sqrt(rng.uniform());
        const double cx = host.cx + dist * std::cos(angle);
        const double cy = host.cy + dist * std::sin(angle);
        const double r =
            extent * rng.uniform(spec.tumour_radius.min, spec.tumour_radius.max);
        if (!in_tissue(cx, cy) || cx < 0 || cy < 0 || cx >= w || cy >= h) continue;
        tumour.push_back(random_blob(rng, cx, cy, r, spec.shape_jitter));
        placed = true;
        break;
      }
      if (!placed)
        throw Error(ErrorCode::kPlacementFailed,
                    "could not place tumour blob " + std::to_string(i) + " in " +
                        slide_id + " after " +
                        std::to_string(spec.max_placement_attempts) + " attempts");
    }
  }

  BinaryMask tissue_mask(w, h, 0, MaskRole::kTissue);
  for (const auto& b : tissue) rasterize(b, tissue_mask);
  BinaryMask tumour_mask(w, h, 0, MaskRole::kAnnotation);
  for (const auto& b : tumour) rasterize(b, tumour_mask);
  tumour_mask = apply_tissue_mask(tumour_mask, tissue_mask);

  const SynthTexture& tex = spec.texture;
  std::array<double, 3> tissue_rgb = tex.tissue_rgb;
  std::array<double, 3> tumour_rgb = tex.tumour_rgb;
  for (int c = 0; c < 3; ++c) {
    const double offset = rng.uniform(-tex.slide_jitter, tex.slide_jitter);
    tissue_rgb[static_cast<std::size_t>(c)] += offset;
    tumour_rgb[static_cast<std::size_t>(c)] += offset;
  }
  const double stripe_angle = rng.uniform(0.0, std::numbers::pi);
  const double kx = std::cos(stripe_angle) * 2.0 * std::numbers::pi / tex.tumour_stripe_period_px;
  const double ky = std::sin(stripe_angle) * 2.0 * std::numbers::pi / tex.tumour_stripe_period_px;
  const std::uint64_t noise_seed = derive_seed(spec.seed, 0x401ce);

  RgbImage base(w, h, 255);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!tissue_mask.at(x, y)) continue;
      std::uint8_t* p = base.pixel(x, y);
      const bool is_tumour = tumour_mask.at(x, y) != 0;
      const double gain =
          is_tumour ? 1.0 + tex.tumour_stripe_amplitude * std::sin(kx * x + ky * y) : 1.0;
      for (int c = 0; c < 3; ++c) {
        const double colour = (is_tumour ? tumour_rgb : tissue_rgb)[static_cast<std::size_t>(c)];
        p[c] = to_byte(colour * gain + tex.pixel_noise * pixel_noise(noise_seed, x, y, c));
      }
    }
  }

  SynthSlide out;
  out.slide.slide_id = slide_id;
  out.slide.patient_id = patient_id;
  out.slide.label = tumour_mask.any() ? SlideLabel::kPositive : SlideLabel::kNegative;
  out.levels.push_back(std::move(base));
  out.tissue.push_back(std::move(tissue_mask));
  out.annotation.push_back(std::move(tumour_mask));
  for (int k = 1; k < spec.n_levels; ++k) {
    out.levels.push_back(downsample_rgb(out.levels.back()));
    out.tissue.push_back(downsample_mask(out.tissue.back()));
    out.annotation.push_back(downsample_mask(out.annotation.back()));
  }
  for (int k = 0; k < spec.n_levels; ++k) {
    PyramidLevel level;
    level.index = k;
    level.um_per_px = spec.base_um_per_px * std::ldexp(1.0, k);
    level.width = out.levels[static_cast<std::size_t>(k)].width();
    level.height = out.levels[static_cast<std::size_t>(k)].height();
    level.tile_dir = "level_" + std::to_string(k);
    level.tile_size = spec.tile_size;
    out.slide.levels.push_back(level);
  }
  return out;
}

SynthSlide generate_slide(const SynthSpec& spec, const std::string& slide_id,
                          const std::string& patient_id,
                          const std::filesystem::path& slide_dir) {
  SynthSlide out = render_slide(spec, slide_id, patient_id);
  out.slide.root = slide_dir;
  std::filesystem::create_directories(slide_dir);
  for (int k = 0; k < static_cast<int>(out.levels.size()); ++k) {
    write_level_tiles(out.slide, k, out.levels[static_cast<std::size_t>(k)]);
    write_mask(out.slide, out.tissue[static_cast<std::size_t>(k)]);
    write_mask(out.slide, out.annotation[static_cast<std::size_t>(k)]);
  }
  write_manifest(out.slide);
  return out;
}

DatasetIndex generate_dataset(const DatasetSpec& spec,
                              const std::filesystem::path& out_dir) {
  if (spec.n_patients < 5)
    throw Error(ErrorCode::kInvalidArgument, "n_patients must be >= 5");
  if (spec.slides_per_patient < 1)
    throw Error(ErrorCode::kInvalidArgument, "slides_per_patient must be >= 1");
  if (!(spec.positive_fraction >= 0.0 && spec.positive_fraction <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "positive_fraction must be in [0, 1]");
  if (spec.slide_template.tumour_blobs < 1 && spec.slide_template.fixed_tumour.empty() &&
      spec.positive_fraction > 0.0)
    throw Error(ErrorCode::kInvalidArgument,
                "positive slides requested but the template has no tumour blobs");

  const int n_slides = spec.n_patients * spec.slides_per_patient;
  const int n_positive = static_cast<int>(std::lround(spec.positive_fraction * n_slides));
  int n_negative = n_slides - n_positive;

  std::vector<int> order(static_cast<std::size_t>(spec.n_patients));
  for (int i = 0; i < spec.n_patients; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(derive_seed(spec.seed, 0xda7a));
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<char> negative(static_cast<std::size_t>(n_slides), 0);
  for (int patient : order) {
    for (int s = 0; s < spec.slides_per_patient && n_negative > 0; ++s, --n_negative)
      negative[static_cast<std::size_t>(patient * spec.slides_per_patient + s)] = 1;
  }

  DatasetIndex index;
  index.seed = spec.seed;
  for (int p = 0; p < spec.n_patients; ++p) {
    char patient_id[32];
    std::snprintf(patient_id, sizeof(patient_id), "patient_%03d", p);
    for (int s = 0; s < spec.slides_per_patient; ++s) {
      const int slide_index = p * spec.slides_per_patient + s;
      const std::string slide_id = std::string(patient_id) + "_s" + std::to_string(s);
      SynthSpec slide_spec = spec.slide_template;
      slide_spec.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(slide_index));
      if (negative[static_cast<std::size_t>(slide_index)]) {
        slide_spec.tumour_blobs = 0;
        slide_spec.fixed_tumour.clear();
      }
      const std::string rel = "slides/" + slide_id;
      const SynthSlide slide = generate_slide(slide_spec, slide_id, patient_id, out_dir / rel);
      index.slides.push_back({slide_id, patient_id, slide.slide.label,
                              rel + "/" + std::string(kManifestName)});
    }
  }
  write_dataset_index(out_dir, index);
  return index;
}

}  // namespace wsiseg
