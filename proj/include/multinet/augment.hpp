// Training-time augmentation. Every spatial transform is applied to the
// image, the mask, the boxes and the don't-care regions together, so labels
// stay consistent; the exposed primitives are deterministic and the random
// pipeline draws from an explicit stream.
#pragma once

#include <cmath>
#include <vector>

#include "multinet/data_io.hpp"
#include "multinet/rng.hpp"

namespace multinet {

struct AugmentConfig {
  bool enabled = true;
  bool color = true;       // brightness offset + contrast scale
  bool flip = true;        // horizontal, probability 0.5
  bool scale_crop = true;  // resize by [0.8, 1.2], crop/pad back
  double min_box_visibility = 0.25;
};

inline Sample flip_horizontal(const Sample& s) {
  Sample out = s;
  const size_t hw = static_cast<size_t>(s.width) * s.height;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x)
        out.image[c * hw + static_cast<size_t>(y) * s.width + x] =
            s.image[c * hw + static_cast<size_t>(y) * s.width + (s.width - 1 - x)];
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      out.mask[static_cast<size_t>(y) * s.width + x] = s.mask[static_cast<size_t>(y) * s.width + (s.width - 1 - x)];
  for (auto& b : out.boxes) b.x = s.width - b.x;
  for (auto& r : out.dont_care) {
    const double x0 = s.width - r.x1, x1 = s.width - r.x0;
    r.x0 = x0;
    r.x1 = x1;
  }
  return out;
}

inline Sample adjust_brightness(const Sample& s, double delta) {
  Sample out = s;
  for (float& v : out.image) v = clamp(static_cast<float>(v + delta), 0.0f, 1.0f);
  return out;
}

// Scales contrast around the image mean.
inline Sample adjust_contrast(const Sample& s, double factor) {
  Sample out = s;
  double mean = 0;
  for (float v : s.image) mean += v;
  mean /= static_cast<double>(s.image.size());
  for (float& v : out.image) v = clamp(static_cast<float>((v - mean) * factor + mean), 0.0f, 1.0f);
  return out;
}

// Bilinear image resample, nearest-neighbor mask, scaled geometry.
inline Sample resize_sample(const Sample& s, int new_w, int new_h) {
  check_arg(new_w >= 1 && new_h >= 1, "resize_sample: target dims must be positive");
  Sample out;
  out.id = s.id;
  out.scene_class = s.scene_class;
  out.width = new_w;
  out.height = new_h;
  const size_t hw = static_cast<size_t>(s.width) * s.height;
  const size_t nhw = static_cast<size_t>(new_w) * new_h;
  out.image.resize(3 * nhw);
  out.mask.resize(nhw);
  const double sx = static_cast<double>(s.width) / new_w;
  const double sy = static_cast<double>(s.height) / new_h;
  for (int y = 0; y < new_h; ++y) {
    const double v = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(v));
    const double fy = v - y0;
    const int y1 = clamp(y0 + 1, 0, s.height - 1);
    y0 = clamp(y0, 0, s.height - 1);
    for (int x = 0; x < new_w; ++x) {
      const double u = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(u));
      const double fx = u - x0;
      const int x1 = clamp(x0 + 1, 0, s.width - 1);
      x0 = clamp(x0, 0, s.width - 1);
      for (int c = 0; c < 3; ++c) {
        const float* plane = s.image.data() + c * hw;
        const double a = plane[static_cast<size_t>(y0) * s.width + x0];
        const double b = plane[static_cast<size_t>(y0) * s.width + x1];
        const double d = plane[static_cast<size_t>(y1) * s.width + x0];
        const double e = plane[static_cast<size_t>(y1) * s.width + x1];
        out.image[c * nhw + static_cast<size_t>(y) * new_w + x] =
            static_cast<float>((1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * d + fx * e));
      }
      const int my = clamp(static_cast<int>((y + 0.5) * sy), 0, s.height - 1);
      const int mx = clamp(static_cast<int>((x + 0.5) * sx), 0, s.width - 1);
      out.mask[static_cast<size_t>(y) * new_w + x] = s.mask[static_cast<size_t>(my) * s.width + mx];
    }
  }
  const double bx = static_cast<double>(new_w) / s.width;
  const double by = static_cast<double>(new_h) / s.height;
  for (const auto& b : s.boxes) out.boxes.push_back({b.x * bx, b.y * by, b.w * bx, b.h * by, b.confidence, b.cell});
  for (const auto& r : s.dont_care) out.dont_care.push_back({r.x0 * bx, r.y0 * by, r.x1 * bx, r.y1 * by});
  return out;
}

// Extracts the window whose top-left corner sits at (ox, oy) in the source;
// areas outside the source become zero pixels / background mask. Boxes whose
// visible area falls below min_visibility of their original area are
// dropped, the rest are clipped.
inline Sample crop_sample(const Sample& s, int ox, int oy, int out_w, int out_h, double min_visibility = 0.25) {
  check_arg(out_w >= 1 && out_h >= 1, "crop_sample: target dims must be positive");
  Sample out;
  out.id = s.id;
  out.scene_class = s.scene_class;
  out.width = out_w;
  out.height = out_h;
  const size_t hw = static_cast<size_t>(s.width) * s.height;
  const size_t nhw = static_cast<size_t>(out_w) * out_h;
  out.image.assign(3 * nhw, 0.0f);
  out.mask.assign(nhw, 0);
  for (int y = 0; y < out_h; ++y) {
    const int sy = y + oy;
    if (sy < 0 || sy >= s.height) continue;
    for (int x = 0; x < out_w; ++x) {
      const int sx = x + ox;
      if (sx < 0 || sx >= s.width) continue;
      for (int c = 0; c < 3; ++c)
        out.image[c * nhw + static_cast<size_t>(y) * out_w + x] =
            s.image[c * hw + static_cast<size_t>(sy) * s.width + sx];
      out.mask[static_cast<size_t>(y) * out_w + x] = s.mask[static_cast<size_t>(sy) * s.width + sx];
    }
  }
  for (const auto& b : s.boxes) {
    Rect r = b.rect();
    const double area = r.area();
    Rect c{clamp(r.x0 - ox, 0.0, static_cast<double>(out_w)), clamp(r.y0 - oy, 0.0, static_cast<double>(out_h)),
           clamp(r.x1 - ox, 0.0, static_cast<double>(out_w)), clamp(r.y1 - oy, 0.0, static_cast<double>(out_h))};
    if (area <= 0 || c.area() / area < min_visibility) continue;
    out.boxes.push_back({(c.x0 + c.x1) / 2, (c.y0 + c.y1) / 2, c.width(), c.height(), b.confidence, b.cell});
  }
  for (const auto& r : s.dont_care) {
    Rect c{clamp(r.x0 - ox, 0.0, static_cast<double>(out_w)), clamp(r.y0 - oy, 0.0, static_cast<double>(out_h)),
           clamp(r.x1 - ox, 0.0, static_cast<double>(out_w)), clamp(r.y1 - oy, 0.0, static_cast<double>(out_h))};
    if (c.area() > 0) out.dont_care.push_back(c);
  }
  return out;
}

// Color jitter, coin-flip horizontal mirror, then a scale jitter cropped or
// padded back to the original dimensions.
inline Sample augment(const Sample& s, const AugmentConfig& cfg, Rng rng) {
  if (!cfg.enabled) return s;
  Sample out = s;
  if (cfg.color) {
    out = adjust_brightness(out, rng.uniform(-0.2, 0.2));
    out = adjust_contrast(out, rng.uniform(0.8, 1.2));
  }
  if (cfg.flip && rng.bernoulli(0.5)) out = flip_horizontal(out);
  if (cfg.scale_crop) {
    const double f = rng.uniform(0.8, 1.2);
    const int new_w = std::max(1, static_cast<int>(std::lround(s.width * f)));
    const int new_h = std::max(1, static_cast<int>(std::lround(s.height * f)));
    out = resize_sample(out, new_w, new_h);
    const int range_x = std::abs(new_w - s.width), range_y = std::abs(new_h - s.height);
    int ox = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(range_x) + 1));
    int oy = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(range_y) + 1));
    if (new_w < s.width) ox = -ox;
    if (new_h < s.height) oy = -oy;
    out = crop_sample(out, ox, oy, s.width, s.height, cfg.min_box_visibility);
  }
  return out;
}

}  // namespace multinet
