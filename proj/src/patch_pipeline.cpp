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

#include "wsiseg/patch_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "wsiseg/error.hpp"

namespace wsiseg {
namespace {

float white_or(const RgbImage& raster, int x, int y, int c) {
  if (x < 0 || y < 0 || x >= raster.width() || y >= raster.height()) return 255.0f;
  return raster.pixel(x, y)[c];
}

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
  const float hi = std::max({r, g, b});
  const float lo = std::min({r, g, b});
  const float delta = hi - lo;
  v = hi;
  s = hi > 0.0f ? delta / hi : 0.0f;
  if (delta <= 0.0f) {
    h = 0.0f;
    return;
  }
  float hue;
  if (hi == r) {
    hue = (g - b) / delta;
  } else if (hi == g) {
    hue = 2.0f + (b - r) / delta;
  } else {
    hue = 4.0f + (r - g) / delta;
  }
  hue /= 6.0f;
  if (hue < 0.0f) hue += 1.0f;
  h = hue;
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
  const float sector = h * 6.0f;
  const int i = static_cast<int>(std::floor(sector)) % 6;
  const float f = sector - std::floor(sector);
  const float p = v * (1.0f - s);
  const float q = v * (1.0f - s * f);
  const float t = v * (1.0f - s * (1.0f - f));
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

void gaussian_blur(PatchSample& sample, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-(i * i) / (2.0 * sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = static_cast<float>(w);
    total += w;
  }
  for (auto& w : kernel) w = static_cast<float>(w / total);

  const int n = sample.size;
  std::vector<float> tmp(static_cast<std::size_t>(n) * n);
  for (int c = 0; c < 3; ++c) {
    float* plane = sample.image.data() + static_cast<std::size_t>(c) * n * n;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k) {
          const int sx = std::clamp(x + k, 0, n - 1);
          acc += kernel[static_cast<std::size_t>(k + radius)] * plane[y * n + sx];
        }
        tmp[static_cast<std::size_t>(y) * n + x] = acc;
      }
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k) {
          const int sy = std::clamp(y + k, 0, n - 1);
          acc += kernel[static_cast<std::size_t>(k + radius)] * tmp[static_cast<std::size_t>(sy) * n + x];
        }
        plane[y * n + x] = acc;
      }
  }
}

template <typename T>
void flip_plane(T* plane, int n, bool horizontal) {
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const int tx = horizontal ? n - 1 - x : x;
      const int ty = horizontal ? y : n - 1 - y;
      if (ty * n + tx <= y * n + x) continue;
      std::swap(plane[y * n + x], plane[ty * n + tx]);
    }
  }
}

std::vector<std::uint32_t> pixels_where(const BinaryMask& mask, const BinaryMask* exclude) {
  std::vector<std::uint32_t> out;
  const auto v = mask.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i]) continue;
    if (exclude && exclude->values()[i]) continue;
    out.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

}  // namespace

std::string_view criterion_name(LabelCriterion criterion) {
  return criterion == LabelCriterion::kCl1 ? "CL1" : "CL2";
}

LabelCriterion parse_criterion(std::string_view text) {
  if (text == "CL1" || text == "cl1") return LabelCriterion::kCl1;
  if (text == "CL2" || text == "cl2") return LabelCriterion::kCl2;
  throw Error(ErrorCode::kConfig, "unknown label criterion '" + std::string(text) + "'");
}

int assign_label_cl1(std::span<const std::uint8_t> mask) {
  std::size_t positive = 0;
  for (auto v : mask) positive += v != 0;
  return 100 * positive >= 51 * mask.size() && !mask.empty() ? 1 : 0;
}

int assign_label_cl2(std::span<const std::uint8_t> mask) {
  return std::any_of(mask.begin(), mask.end(), [](std::uint8_t v) { return v != 0; }) ? 1 : 0;
}

int assign_label(LabelCriterion criterion, std::span<const std::uint8_t> mask) {
  return criterion == LabelCriterion::kCl1 ? assign_label_cl1(mask) : assign_label_cl2(mask);
}

AugmentationConfig AugmentationConfig::disabled() {
  AugmentationConfig c;
  c.flip_h = c.flip_v = false;
  c.flip_prob = 0.0;
  c.blur_prob = 0.0;
  c.hsv_prob = 0.0;
  c.contrast_prob = 0.0;
  c.brightness_prob = 0.0;
  return c;
}

void AugmentationConfig::validate() const {
  for (double p : {flip_prob, blur_prob, hsv_prob, contrast_prob, brightness_prob})
    if (!(p >= 0.0 && p <= 1.0))
      throw Error(ErrorCode::kConfig, "augmentation probabilities must be in [0, 1]");
  for (double v : {blur_max_sigma, hue_shift, saturation_shift, value_shift, contrast_min,
                   contrast_max, brightness_min, brightness_max})
    if (!std::isfinite(v)) throw Error(ErrorCode::kConfig, "augmentation ranges must be finite");
  if (blur_max_sigma < 0.0 || contrast_min > contrast_max || brightness_min > brightness_max ||
      hue_shift < 0.0 || saturation_shift < 0.0 || value_shift < 0.0)
    throw Error(ErrorCode::kConfig, "augmentation ranges are inverted or negative");
}

void SamplerConfig::validate() const {
  if (!(class_balance >= 0.0 && class_balance <= 1.0))
    throw Error(ErrorCode::kConfig, "class_balance must be in [0, 1]");
  if (patch_px < 32 || patch_px % 32 != 0)
    throw Error(ErrorCode::kConfig, "patch_px must be >= 32 and divisible by 32");
  if (!(target_um > 0.0)) throw Error(ErrorCode::kConfig, "target_um must be positive");
  augmentations.validate();
}

AugmentParams draw_augment_params(const AugmentationConfig& config, Rng& rng) {
  AugmentParams p;
  const bool fh = rng.bernoulli(config.flip_prob);
  const bool fv = rng.bernoulli(config.flip_prob);
  p.flip_h = config.flip_h && fh;
  p.flip_v = config.flip_v && fv;
  const bool blur = rng.bernoulli(config.blur_prob);
  const double sigma = rng.uniform(0.0, config.blur_max_sigma);
  if (blur && sigma > 0.0) p.blur_sigma = sigma;
  p.hsv = rng.bernoulli(config.hsv_prob);
  const double dh = rng.uniform(-config.hue_shift, config.hue_shift);
  const double ds = rng.uniform(-config.saturation_shift, config.saturation_shift);
  const double dv = rng.uniform(-config.value_shift, config.value_shift);
  if (p.hsv) {
    p.hue = dh;
    p.saturation = ds;
    p.value = dv;
  }
  const bool contrast = rng.bernoulli(config.contrast_prob);
  const double c = rng.uniform(config.contrast_min, config.contrast_max);
  if (contrast) p.contrast = c;
  const bool bright = rng.bernoulli(config.brightness_prob);
  const double b = rng.uniform(config.brightness_min, config.brightness_max);
  if (bright) p.brightness = b;
  return p;
}

void apply_augment(PatchSample& sample, const AugmentParams& params,
                   LabelCriterion criterion) {
  const int n = sample.size;
  const std::size_t plane = static_cast<std::size_t>(n) * n;
  for (bool horizontal : {true, false}) {
    if (horizontal ? !params.flip_h : !params.flip_v) continue;
    for (int c = 0; c < 3; ++c) flip_plane(sample.image.data() + c * plane, n, horizontal);
    flip_plane(sample.mask.data(), n, horizontal);
  }
  if (params.blur_sigma > 0.0) gaussian_blur(sample, params.blur_sigma);
  if (params.hsv) {
    float* r = sample.image.data();
    float* g = r + plane;
    float* b = g + plane;
    for (std::size_t i = 0; i < plane; ++i) {
      float h, s, v;
      rgb_to_hsv(std::clamp(r[i], 0.0f, 1.0f), std::clamp(g[i], 0.0f, 1.0f),
                 std::clamp(b[i], 0.0f, 1.0f), h, s, v);
      h += static_cast<float>(params.hue);
      h -= std::floor(h);
      s = std::clamp(s + static_cast<float>(params.saturation), 0.0f, 1.0f);
      v = std::clamp(v + static_cast<float>(params.value), 0.0f, 1.0f);
      hsv_to_rgb(h, s, v, r[i], g[i], b[i]);
    }
  }
  const bool photometric = params.blur_sigma > 0.0 || params.hsv ||
                           params.contrast != 1.0 || params.brightness != 0.0;
  if (photometric) {
    const float contrast = static_cast<float>(params.contrast);
    const float brightness = static_cast<float>(params.brightness);
    for (auto& v : sample.image) v = std::clamp(v * contrast + brightness, 0.0f, 1.0f);
  }
  sample.label = assign_label(criterion, sample.mask);
}

PatchSample augment(PatchSample sample, const AugmentationConfig& config,
                    LabelCriterion criterion, Rng& rng) {
  apply_augment(sample, draw_augment_params(config, rng), criterion);
  return sample;
}

SlideLevelData prepare_slide(const SlidePyramid& slide, LevelChoice choice,
                             RgbImage raster, const BinaryMask& annotation,
                             const TissueDetectorConfig& detector) {
  SlideLevelData data;
  data.slide = slide;
  data.choice = choice;
  data.tissue = detect_tissue(raster, choice.level, detector);
  data.raster = std::move(raster);
  data.annotation = apply_tissue_mask(annotation, data.tissue);
  data.cancer_pixels = pixels_where(data.annotation, nullptr);
  data.normal_pixels = pixels_where(data.tissue, &data.annotation);
  return data;
}

SlideLevelData prepare_slide(const SlidePyramid& slide, double target_um,
                             const TissueDetectorConfig& detector) {
  const LevelChoice choice = level_for_resolution(slide, target_um);
  RgbImage raster = read_level(slide, choice.level);
  BinaryMask annotation(raster.width(), raster.height(), choice.level,
                        MaskRole::kAnnotation);
  if (slide.label == SlideLabel::kPositive)
    annotation = read_mask(slide, MaskRole::kAnnotation, choice.level);
  return prepare_slide(slide, choice, std::move(raster), annotation, detector);
}

PatchSample extract_patch(const SlideLevelData& data, Point origin, int patch_px,
                          LabelCriterion criterion) {
  PatchSample out;
  out.size = patch_px;
  const std::size_t plane = static_cast<std::size_t>(patch_px) * patch_px;
  out.image.resize(3 * plane);
  out.mask.assign(plane, 0);
  out.source.slide_id = data.slide.slide_id;
  out.source.level = data.choice.level;
  out.source.origin = origin;
  out.source.rescale = data.choice.rescale;

  const double r = data.choice.rescale;
  const RgbImage& img = data.raster;
  const BinaryMask& ann = data.annotation;
  for (int j = 0; j < patch_px; ++j) {
    const double sy = (origin.y + j + 0.5) * r - 0.5;
    const int y0 = static_cast<int>(std::floor(sy));
    const float fy = static_cast<float>(sy - y0);
    const int my = static_cast<int>(std::floor((origin.y + j + 0.5) * r));
    for (int i = 0; i < patch_px; ++i) {
      const double sx = (origin.x + i + 0.5) * r - 0.5;
      const int x0 = static_cast<int>(std::floor(sx));
      const float fx = static_cast<float>(sx - x0);
      const std::size_t idx = static_cast<std::size_t>(j) * patch_px + i;
      for (int c = 0; c < 3; ++c) {
        float v;
        if (fx == 0.0f && fy == 0.0f) {
          v = white_or(img, x0, y0, c);
        } else {
          const float top = white_or(img, x0, y0, c) * (1.0f - fx) + white_or(img, x0 + 1, y0, c) * fx;
          const float bottom =
              white_or(img, x0, y0 + 1, c) * (1.0f - fx) + white_or(img, x0 + 1, y0 + 1, c) * fx;
          v = top * (1.0f - fy) + bottom * fy;
        }
        out.image[c * plane + idx] = v / 255.0f;
      }
      const int mx = static_cast<int>(std::floor((origin.x + i + 0.5) * r));
      if (mx >= 0 && my >= 0 && mx < ann.width() && my < ann.height())
        out.mask[idx] = ann.at(mx, my);
    }
  }
  out.label = assign_label(criterion, out.mask);
  return out;
}

namespace {

PatchSample patch_at(const SlideLevelData& data, std::uint32_t pixel, SampledClass cls,
                     const SamplerConfig& config) {
  const int w = data.raster.width();
  const Point center{static_cast<int>(pixel % static_cast<std::uint32_t>(w)),
                     static_cast<int>(pixel / static_cast<std::uint32_t>(w))};
  const double r = data.choice.rescale;
  const Point center_t{static_cast<int>(std::floor((center.x + 0.5) / r)),
                       static_cast<int>(std::floor((center.y + 0.5) / r))};
  const Point origin{center_t.x - config.patch_px / 2, center_t.y - config.patch_px / 2};
  PatchSample sample = extract_patch(data, origin, config.patch_px, config.label_criterion);
  sample.source.center = center;
  sample.sampled_class = cls;
  return sample;
}

SampledClass other(SampledClass c) {
  return c == SampledClass::kCancer ? SampledClass::kNormal : SampledClass::kCancer;
}

}  // namespace

PatchSample sample_patch(const SlideLevelData& data, const SamplerConfig& config, Rng& rng) {
  SampledClass cls = rng.bernoulli(config.class_balance) ? SampledClass::kCancer
                                                         : SampledClass::kNormal;
  if (data.pool(cls).empty()) cls = other(cls);
  const auto& pool = data.pool(cls);
  if (pool.empty())
    throw Error(ErrorCode::kEmptyTissue, "empty tissue in slide " + data.slide.slide_id);
  return patch_at(data, pool[rng.below(pool.size())], cls, config);
}

PatchSampler::PatchSampler(std::vector<const SlideLevelData*> slides, SamplerConfig config,
                           int workers)
    : slides_(std::move(slides)), config_(std::move(config)) {
  config_.validate();
  if (slides_.empty()) throw Error(ErrorCode::kInvalidArgument, "sampler needs at least one slide");
  if (workers < 1) throw Error(ErrorCode::kInvalidArgument, "workers must be >= 1");
  for (int w = 0; w < workers; ++w)
    streams_.emplace_back(config_.seed ^ static_cast<std::uint64_t>(w));
}

PatchSample PatchSampler::draw(Rng& rng) const {
  SampledClass cls = rng.bernoulli(config_.class_balance) ? SampledClass::kCancer
                                                          : SampledClass::kNormal;
  std::vector<const SlideLevelData*> eligible;
  for (int attempt = 0; attempt < 2 && eligible.empty(); ++attempt) {
    if (attempt == 1) cls = other(cls);
    for (const auto* s : slides_)
      if (!s->pool(cls).empty()) eligible.push_back(s);
  }
  if (eligible.empty()) throw Error(ErrorCode::kEmptyTissue, "empty tissue in every sampled slide");
  const SlideLevelData& data = *eligible[rng.below(eligible.size())];
  const auto& pool = data.pool(cls);
  PatchSample sample = patch_at(data, pool[rng.below(pool.size())], cls, config_);
  apply_augment(sample, draw_augment_params(config_.augmentations, rng), config_.label_criterion);
  return sample;
}

std::vector<PatchSample> PatchSampler::next_batch(int batch_size) {
  std::vector<PatchSample> batch(static_cast<std::size_t>(batch_size));
  const int workers = static_cast<int>(streams_.size());
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(workers));
  auto run_worker = [&](int w) {
    try {
      for (int i = w; i < batch_size; i += workers)
        batch[static_cast<std::size_t>(i)] = draw(streams_[static_cast<std::size_t>(w)]);
    } catch (...) {
      failures[static_cast<std::size_t>(w)] = std::current_exception();
    }
  };
  if (workers == 1) {
    run_worker(0);
  } else {
    std::vector<std::jthread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(run_worker, w);
  }
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);
  for (const auto& s : batch) provenance_.push_back(s.source.slide_id);
  return batch;
}

}  // namespace wsiseg
