// RoI align with one bilinear sample per output bin.
//
// Boxes are (cx, cy, w, h) in the pixel coordinates of the feature map being
// pooled, and the output is differentiable in both the feature values and the
// box coordinates, so box regressions upstream of the pooling receive
// gradient. A feature cell (ix, iy) covers the unit square whose center is at
// (ix + 0.5, iy + 0.5); a box of size 1 centered on that point pools back
// exactly that cell's value at any resolution.
#pragma once

#include <cmath>
#include <vector>

#include "multinet/common.hpp"
#include "multinet/tensor.hpp"

namespace multinet {

struct RoiAlignStats {
  // Boxes whose width or height was raised to the minimum size.
  long long degenerate_boxes = 0;
};

// features (N, C, H, W), rois (M, 4), batch_index (M) -> (M, C, R, R).
// Boxes narrower or shorter than min_size feature pixels are clamped up to it
// (counted in stats); samples falling outside the map are clamped to the
// border.
template <typename T>
Tensor<T> roi_align(const Tensor<T>& features, const Tensor<T>& rois, const std::vector<int>& batch_index, int R,
                    RoiAlignStats* stats = nullptr, T min_size = T(1)) {
  check_arg(features.rank() == 4, "roi_align: rank-4 features required, got " + shape_str(features.shape()));
  check_arg(rois.rank() == 2 && rois.dim(1) == 4,
            "roi_align: rois must be (M, 4), got " + shape_str(rois.shape()));
  check_arg(R >= 1, "roi_align: resolution must be >= 1, got " + std::to_string(R));
  check_arg(min_size > T(0), "roi_align: min_size must be positive");
  const int n = features.dim(0), c = features.dim(1), h = features.dim(2), w = features.dim(3);
  const int m = rois.dim(0);
  check_arg(static_cast<int>(batch_index.size()) == m,
            "roi_align: batch_index size " + std::to_string(batch_index.size()) + " != roi count " +
                std::to_string(m));
  for (int b : batch_index)
    check_arg(b >= 0 && b < n, "roi_align: batch index " + std::to_string(b) + " outside [0, " + std::to_string(n) + ")");

  // Per-sample interpolation record, kept for the backward pass.
  struct SampleRec {
    int ix0, iy0;   // top-left cell of the 2x2 neighborhood (clamped)
    T fx, fy;       // interpolation fractions in [0, 1]
    T dsx, dsy;     // 1 inside the map, 0 where the sample hit the border clamp
  };
  struct RoiRec {
    T dw, dh;  // 1 for a free size, 0 where the size clamp engaged
  };
  std::vector<SampleRec> samples(static_cast<size_t>(m) * R * R);
  std::vector<RoiRec> roi_recs(m);

  std::vector<T> out(static_cast<size_t>(m) * c * R * R);
  const T* f = features.data();
  const T* rp = rois.data();
  for (int r = 0; r < m; ++r) {
    const T cx = rp[static_cast<size_t>(r) * 4 + 0];
    const T cy = rp[static_cast<size_t>(r) * 4 + 1];
    T bw = rp[static_cast<size_t>(r) * 4 + 2];
    T bh = rp[static_cast<size_t>(r) * 4 + 3];
    const bool cw = bw < min_size, ch = bh < min_size;
    if (cw) bw = min_size;
    if (ch) bh = min_size;
    if ((cw || ch) && stats) ++stats->degenerate_boxes;
    roi_recs[r] = {cw ? T(0) : T(1), ch ? T(0) : T(1)};

    const T x0 = cx - bw / T(2);
    const T y0 = cy - bh / T(2);
    const T* plane0 = f + static_cast<size_t>(batch_index[r]) * c * h * w;
    for (int by = 0; by < R; ++by) {
      for (int bx = 0; bx < R; ++bx) {
        const T sx = x0 + (T(bx) + T(0.5)) * bw / T(R);
        const T sy = y0 + (T(by) + T(0.5)) * bh / T(R);
        // Cell-center coordinates; clamping kills the positional derivative.
        T ux = sx - T(0.5), uy = sy - T(0.5);
        T dsx = T(1), dsy = T(1);
        if (ux <= T(0)) { ux = T(0); dsx = T(0); }
        if (ux >= T(w - 1)) { ux = T(w - 1); dsx = T(0); }
        if (uy <= T(0)) { uy = T(0); dsy = T(0); }
        if (uy >= T(h - 1)) { uy = T(h - 1); dsy = T(0); }
        int ix0 = static_cast<int>(std::floor(ux));
        int iy0 = static_cast<int>(std::floor(uy));
        if (ix0 > w - 2) ix0 = w - 2;
        if (iy0 > h - 2) iy0 = h - 2;
        if (w == 1) ix0 = 0;
        if (h == 1) iy0 = 0;
        const T fx = ux - T(ix0);
        const T fy = uy - T(iy0);
        samples[(static_cast<size_t>(r) * R + by) * R + bx] = {ix0, iy0, fx, fy, dsx, dsy};

        const int ix1 = (w == 1) ? ix0 : ix0 + 1;
        const int iy1 = (h == 1) ? iy0 : iy0 + 1;
        for (int ci = 0; ci < c; ++ci) {
          const T* plane = plane0 + static_cast<size_t>(ci) * h * w;
          const T a = plane[static_cast<size_t>(iy0) * w + ix0];
          const T b = plane[static_cast<size_t>(iy0) * w + ix1];
          const T d = plane[static_cast<size_t>(iy1) * w + ix0];
          const T e = plane[static_cast<size_t>(iy1) * w + ix1];
          out[((static_cast<size_t>(r) * c + ci) * R + by) * R + bx] =
              (T(1) - fy) * ((T(1) - fx) * a + fx * b) + fy * ((T(1) - fx) * d + fx * e);
        }
      }
    }
  }

  auto fn = features.node();
  auto rn = rois.node();
  return Tensor<T>::make_op(
      {m, c, R, R}, std::move(out), {features, rois},
      [fn, rn, samples = std::move(samples), roi_recs = std::move(roi_recs), batch_index, m, c, h, w, R](auto& outn) {
        const T* go = outn.grad.data();
        for (int r = 0; r < m; ++r) {
          T* fplane0 = fn->requires_grad ? fn->ensure_grad() + static_cast<size_t>(batch_index[r]) * c * h * w : nullptr;
          const T* vplane0 = fn->value.data() + static_cast<size_t>(batch_index[r]) * c * h * w;
          T dcx = T(0), dcy = T(0), dbw = T(0), dbh = T(0);
          for (int by = 0; by < R; ++by) {
            for (int bx = 0; bx < R; ++bx) {
              const auto& sr = samples[(static_cast<size_t>(r) * R + by) * R + bx];
              const int ix1 = (w == 1) ? sr.ix0 : sr.ix0 + 1;
              const int iy1 = (h == 1) ? sr.iy0 : sr.iy0 + 1;
              T dval_dsx = T(0), dval_dsy = T(0);
              for (int ci = 0; ci < c; ++ci) {
                const T g = go[((static_cast<size_t>(r) * c + ci) * R + by) * R + bx];
                if (g == T(0)) continue;
                const T* vplane = vplane0 + static_cast<size_t>(ci) * h * w;
                const T a = vplane[static_cast<size_t>(sr.iy0) * w + sr.ix0];
                const T b = vplane[static_cast<size_t>(sr.iy0) * w + ix1];
                const T d = vplane[static_cast<size_t>(iy1) * w + sr.ix0];
                const T e = vplane[static_cast<size_t>(iy1) * w + ix1];
                if (fplane0) {
                  T* gp = fplane0 + static_cast<size_t>(ci) * h * w;
                  gp[static_cast<size_t>(sr.iy0) * w + sr.ix0] += g * (T(1) - sr.fy) * (T(1) - sr.fx);
                  gp[static_cast<size_t>(sr.iy0) * w + ix1] += g * (T(1) - sr.fy) * sr.fx;
                  gp[static_cast<size_t>(iy1) * w + sr.ix0] += g * sr.fy * (T(1) - sr.fx);
                  gp[static_cast<size_t>(iy1) * w + ix1] += g * sr.fy * sr.fx;
                }
                dval_dsx += g * ((T(1) - sr.fy) * (b - a) + sr.fy * (e - d));
                dval_dsy += g * ((T(1) - sr.fx) * (d - a) + sr.fx * (e - b));
              }
              if (rn->requires_grad) {
                const T dsx = dval_dsx * sr.dsx;
                const T dsy = dval_dsy * sr.dsy;
                dcx += dsx;
                dcy += dsy;
                // sx = cx - w/2 + (bx + .5) w / R, so dsx/dw = (bx + .5)/R - .5.
                dbw += dsx * ((T(bx) + T(0.5)) / T(R) - T(0.5)) * roi_recs[r].dw;
                dbh += dsy * ((T(by) + T(0.5)) / T(R) - T(0.5)) * roi_recs[r].dh;
              }
            }
          }
          if (rn->requires_grad) {
            T* gr = rn->ensure_grad() + static_cast<size_t>(r) * 4;
            gr[0] += dcx;
            gr[1] += dcy;
            gr[2] += dbw;
            gr[3] += dbh;
          }
        }
      });
}

}  // namespace multinet
