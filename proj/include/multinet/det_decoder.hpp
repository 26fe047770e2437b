// Proposal-free detection decoder.
//
// The image is partitioned into 32x32 cells; each cell predicts two
// confidence logits and a box (c_x, c_y, c_w, c_h) encoded relative to the
// cell center in cell-size units. A first stage predicts from the stride-32
// features through a 500-channel 1x1 bottleneck; a second stage decodes each
// cell's rough box, pools stride-8 features over it with RoI align,
// concatenates the pooled values with the bottleneck and predicts a residual
// correction. The whole refinement path is differentiable, including the box
// coordinates feeding the pooling.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "multinet/conv.hpp"
#include "multinet/encoder.hpp"
#include "multinet/ops.hpp"
#include "multinet/params.hpp"
#include "multinet/roi_align.hpp"

namespace multinet {

struct Rect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
};

struct BoundingBox {
  double x = 0, y = 0;  // center, pixels
  double w = 0, h = 0;  // size, pixels
  double confidence = 1.0;
  int cell = -1;  // source cell index, -1 when not decoder-produced

  Rect rect() const { return {x - w / 2, y - h / 2, x + w / 2, y + h / 2}; }
};

inline double box_iou(const BoundingBox& a, const BoundingBox& b) {
  const Rect ra = a.rect(), rb = b.rect();
  const double ix = std::min(ra.x1, rb.x1) - std::max(ra.x0, rb.x0);
  const double iy = std::min(ra.y1, rb.y1) - std::max(ra.y0, rb.y0);
  if (ix <= 0 || iy <= 0) return 0.0;
  const double inter = ix * iy;
  const double uni = ra.area() + rb.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

struct GridGeometry {
  int rows = 0, cols = 0;
  static constexpr double cell_size = 32.0;

  double center_x(int col) const { return (col + 0.5) * cell_size; }
  double center_y(int row) const { return (row + 0.5) * cell_size; }
  int cell_count() const { return rows * cols; }
  double image_w() const { return cols * cell_size; }
  double image_h() const { return rows * cell_size; }

  static GridGeometry for_image(int width, int height) {
    check_arg(width % 32 == 0 && height % 32 == 0,
              "grid: image " + std::to_string(width) + "x" + std::to_string(height) + " not a multiple of 32");
    return {height / 32, width / 32};
  }
};

struct CellLabel {
  bool positive = false;
  bool dont_care = false;
  int row = 0, col = 0;
  // Defined only when positive; the loss mask keeps them unread otherwise.
  double cx = 0, cy = 0, cw = 0, ch = 0;
};

struct CellGrid {
  GridGeometry geom;
  std::vector<CellLabel> cells;  // row-major

  const CellLabel& at(int row, int col) const { return cells[static_cast<size_t>(row) * geom.cols + col]; }
  CellLabel& at(int row, int col) { return cells[static_cast<size_t>(row) * geom.cols + col]; }
};

struct CellPrediction {
  double logit_neg = 0, logit_pos = 0;
  double cx = 0, cy = 0, cw = 0, ch = 0;

  double confidence() const { return 1.0 / (1.0 + std::exp(logit_neg - logit_pos)); }
};

struct DecodeStats {
  long long dropped_nonpositive_size = 0;
};

// Positive iff the cell square strictly overlaps at least one box; the box
// whose center is closest to the cell center provides the encoding. Cells
// overlapping only don't-care regions are flagged dont_care. Boxes are
// clipped to the image before assignment.
inline CellGrid assign_cells(const std::vector<BoundingBox>& boxes, const std::vector<Rect>& dont_care,
                             const GridGeometry& geom) {
  CellGrid grid{geom, std::vector<CellLabel>(static_cast<size_t>(geom.cell_count()))};
  std::vector<BoundingBox> clipped;
  clipped.reserve(boxes.size());
  for (const auto& b : boxes) {
    Rect r = b.rect();
    r.x0 = std::max(r.x0, 0.0);
    r.y0 = std::max(r.y0, 0.0);
    r.x1 = std::min(r.x1, geom.image_w());
    r.y1 = std::min(r.y1, geom.image_h());
    if (r.width() <= 0 || r.height() <= 0) continue;
    clipped.push_back({(r.x0 + r.x1) / 2, (r.y0 + r.y1) / 2, r.width(), r.height(), b.confidence, b.cell});
  }
  auto overlaps = [](const Rect& a, const Rect& b) {
    return a.x0 < b.x1 && a.x1 > b.x0 && a.y0 < b.y1 && a.y1 > b.y0;
  };
  for (int row = 0; row < geom.rows; ++row) {
    for (int col = 0; col < geom.cols; ++col) {
      CellLabel& cell = grid.at(row, col);
      cell.row = row;
      cell.col = col;
      const Rect cr{col * geom.cell_size, row * geom.cell_size, (col + 1) * geom.cell_size,
                    (row + 1) * geom.cell_size};
      const double xc = geom.center_x(col), yc = geom.center_y(row);
      int best = -1;
      double best_d2 = 0;
      for (size_t i = 0; i < clipped.size(); ++i) {
        if (!overlaps(cr, clipped[i].rect())) continue;
        const double dx = clipped[i].x - xc, dy = clipped[i].y - yc;
        const double d2 = dx * dx + dy * dy;
        if (best < 0 || d2 < best_d2) {
          best = static_cast<int>(i);
          best_d2 = d2;
        }
      }
      if (best >= 0) {
        const BoundingBox& b = clipped[static_cast<size_t>(best)];
        cell.positive = true;
        cell.cx = (b.x - xc) / geom.cell_size;
        cell.cy = (b.y - yc) / geom.cell_size;
        cell.cw = b.w / geom.cell_size;
        cell.ch = b.h / geom.cell_size;
        continue;
      }
      for (const Rect& dc : dont_care) {
        if (overlaps(cr, dc)) {
          cell.dont_care = true;
          break;
        }
      }
    }
  }
  return grid;
}

// Inverse of the cell encoding for every cell above the confidence threshold.
// Predictions with non-positive width or height decode to nothing and are
// counted instead.
inline std::vector<BoundingBox> decode_cells(const std::vector<CellPrediction>& preds, const GridGeometry& geom,
                                             double conf_threshold, DecodeStats* stats = nullptr) {
  check_arg(static_cast<int>(preds.size()) == geom.cell_count(),
            "decode_cells: " + std::to_string(preds.size()) + " predictions for a " + std::to_string(geom.rows) +
                "x" + std::to_string(geom.cols) + " grid");
  std::vector<BoundingBox> out;
  for (int row = 0; row < geom.rows; ++row) {
    for (int col = 0; col < geom.cols; ++col) {
      const CellPrediction& p = preds[static_cast<size_t>(row) * geom.cols + col];
      const double conf = p.confidence();
      if (conf < conf_threshold) continue;
      if (p.cw <= 0 || p.ch <= 0) {
        if (stats) ++stats->dropped_nonpositive_size;
        continue;
      }
      BoundingBox b;
      b.x = p.cx * geom.cell_size + geom.center_x(col);
      b.y = p.cy * geom.cell_size + geom.center_y(row);
      b.w = p.cw * geom.cell_size;
      b.h = p.ch * geom.cell_size;
      b.confidence = conf;
      b.cell = row * geom.cols + col;
      out.push_back(b);
    }
  }
  return out;
}

// Reads image `n` of a (N, 6, rows, cols) prediction tensor into cell records.
// Channels: 0-1 confidence logits (negative, positive), 2-5 box fields.
template <typename T>
std::vector<CellPrediction> cell_predictions(const Tensor<T>& pred, int n) {
  check_arg(pred.rank() == 4 && pred.dim(1) == 6,
            "cell_predictions: expected (N, 6, rows, cols), got " + shape_str(pred.shape()));
  check_arg(n >= 0 && n < pred.dim(0), "cell_predictions: image index out of range");
  const int rows = pred.dim(2), cols = pred.dim(3);
  std::vector<CellPrediction> out(static_cast<size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      CellPrediction& p = out[static_cast<size_t>(r) * cols + c];
      p.logit_neg = static_cast<double>(pred.at(n, 0, r, c));
      p.logit_pos = static_cast<double>(pred.at(n, 1, r, c));
      p.cx = static_cast<double>(pred.at(n, 2, r, c));
      p.cy = static_cast<double>(pred.at(n, 3, r, c));
      p.cw = static_cast<double>(pred.at(n, 4, r, c));
      p.ch = static_cast<double>(pred.at(n, 5, r, c));
    }
  }
  return out;
}

template <typename T>
std::vector<BoundingBox> decode_cells(const Tensor<T>& pred, int n, double conf_threshold,
                                      DecodeStats* stats = nullptr) {
  GridGeometry geom{pred.dim(2), pred.dim(3)};
  return decode_cells(cell_predictions(pred, n), geom, conf_threshold, stats);
}

// Greedy non-max suppression, descending confidence (ties broken by cell
// index); a box is removed when its IoU with an already kept box exceeds the
// threshold.
inline std::vector<BoundingBox> nms(std::vector<BoundingBox> boxes, double iou_threshold) {
  std::stable_sort(boxes.begin(), boxes.end(), [](const BoundingBox& a, const BoundingBox& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.cell < b.cell;
  });
  std::vector<BoundingBox> kept;
  for (const auto& b : boxes) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (box_iou(b, k) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(b);
  }
  return kept;
}

struct DetConfig {
  int bottleneck_channels = 500;
  int roi_resolution = 3;
  double reg_weight = 1.0;
};

template <typename T>
struct DetForward {
  Tensor<T> initial;  // (N, 6, rows, cols)
  Tensor<T> refined;  // initial + residual delta
};

template <typename T>
void det_register(ParamStore<T>& params, const DetConfig& cfg, const EncoderConfig& enc) {
  check_arg(cfg.bottleneck_channels > 0 && cfg.roi_resolution >= 1, "det: invalid head dims");
  const int c32 = encoder_out_channels(enc);
  const int pooled = encoder_f8_channels(enc) * cfg.roi_resolution * cfg.roi_resolution;
  params.add("det.bottleneck.weight", {cfg.bottleneck_channels, c32, 1, 1});
  params.add("det.bottleneck.bias", {cfg.bottleneck_channels});
  params.add("det.initial.weight", {6, cfg.bottleneck_channels, 1, 1});
  params.add("det.initial.bias", {6});
  params.add("det.refine.weight", {6, cfg.bottleneck_channels + pooled, 1, 1});
  params.add("det.refine.bias", {6});
}

template <typename T>
void det_init(ParamStore<T>& params, const DetConfig&, Rng rng) {
  he_init(params.at("det.bottleneck.weight"), rng.split("det.bottleneck.weight"));
  he_init(params.at("det.initial.weight"), rng.split("det.initial.weight"));
  // Residual stage starts at zero: refined == initial until training moves it.
}

// Decodes every cell of an initial prediction into an RoI on the stride-8
// feature grid, differentiably. Output rois are (N*rows*cols, 4) in stride-8
// pixel coordinates, ordered image-major then row-major; batch_index maps
// each roi to its image.
template <typename T>
std::pair<Tensor<T>, std::vector<int>> cells_to_rois(const Tensor<T>& pred, int feature_stride) {
  check_arg(pred.rank() == 4 && pred.dim(1) == 6,
            "cells_to_rois: expected (N, 6, rows, cols), got " + shape_str(pred.shape()));
  check_arg(feature_stride > 0, "cells_to_rois: stride must be positive");
  const int n = pred.dim(0), rows = pred.dim(2), cols = pred.dim(3);
  const long long cells = static_cast<long long>(rows) * cols;
  const T scale = T(GridGeometry::cell_size) / T(feature_stride);

  std::vector<T> out(static_cast<size_t>(n) * cells * 4);
  std::vector<int> batch_index(static_cast<size_t>(n) * cells);
  const T* pp = pred.data();
  for (int i = 0; i < n; ++i) {
    const T* img = pp + static_cast<size_t>(i) * 6 * cells;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const long long cell = static_cast<long long>(r) * cols + c;
        const long long m = i * cells + cell;
        batch_index[static_cast<size_t>(m)] = i;
        T* roi = out.data() + static_cast<size_t>(m) * 4;
        const T xc = T((c + 0.5) * GridGeometry::cell_size / feature_stride);
        const T yc = T((r + 0.5) * GridGeometry::cell_size / feature_stride);
        roi[0] = img[2 * cells + cell] * scale + xc;
        roi[1] = img[3 * cells + cell] * scale + yc;
        roi[2] = img[4 * cells + cell] * scale;
        roi[3] = img[5 * cells + cell] * scale;
      }
    }
  }

  auto pn = pred.node();
  Tensor<T> rois = Tensor<T>::make_op({static_cast<int>(n * cells), 4}, std::move(out), {pred},
                                      [pn, n, cells, scale](auto& outn) {
                                        if (!pn->requires_grad) return;
                                        T* gp = pn->ensure_grad();
                                        const T* go = outn.grad.data();
                                        for (long long m = 0; m < n * cells; ++m) {
                                          const long long i = m / cells, cell = m % cells;
                                          T* img = gp + static_cast<size_t>(i) * 6 * cells;
                                          for (int f = 0; f < 4; ++f)
                                            img[(2 + f) * cells + cell] += go[m * 4 + f] * scale;
                                        }
                                      });
  return {std::move(rois), std::move(batch_index)};
}

template <typename T>
DetForward<T> det_forward(const ParamStore<T>& params, const DetConfig& cfg, const EncoderConfig& enc,
                          const FeaturePyramid<T>& pyr, RoiAlignStats* stats = nullptr) {
  const int c32 = encoder_out_channels(enc);
  check_arg(pyr.f32.rank() == 4 && pyr.f32.dim(1) == c32,
            "det_forward: pyramid f32 " + shape_str(pyr.f32.shape()) + " does not match encoder config");
  check_arg(pyr.f8.rank() == 4 && pyr.f8.dim(1) == encoder_f8_channels(enc),
            "det_forward: pyramid f8 " + shape_str(pyr.f8.shape()) + " does not match encoder config");
  const int n = pyr.f32.dim(0), rows = pyr.f32.dim(2), cols = pyr.f32.dim(3);

  ConvSpec bspec{1, 1, 1, 0, c32, cfg.bottleneck_channels};
  Tensor<T> bottleneck = conv2d(pyr.f32, params.at("det.bottleneck.weight"), params.at("det.bottleneck.bias"), bspec);
  ConvSpec ispec{1, 1, 1, 0, cfg.bottleneck_channels, 6};
  Tensor<T> initial = conv2d(bottleneck, params.at("det.initial.weight"), params.at("det.initial.bias"), ispec);

  auto [rois, batch_index] = cells_to_rois(initial, 8);
  const int R = cfg.roi_resolution;
  Tensor<T> pooled = roi_align(pyr.f8, rois, batch_index, R, stats);  // (N*cells, C8, R, R)
  const int c8 = encoder_f8_channels(enc);
  Tensor<T> per_cell = reshape(pooled, {n, rows * cols, c8 * R * R});
  Tensor<T> pooled_map = reshape(transpose_12(per_cell), {n, c8 * R * R, rows, cols});

  Tensor<T> cat = concat_channels(std::vector<Tensor<T>>{bottleneck, pooled_map});
  ConvSpec rspec{1, 1, 1, 0, cfg.bottleneck_channels + c8 * R * R, 6};
  Tensor<T> delta = conv2d(cat, params.at("det.refine.weight"), params.at("det.refine.bias"), rspec);
  return {initial, add(initial, delta)};
}

namespace detail {

// Builds the per-batch loss targets from cell labels: confidence class ids,
// the don't-care mask, box field targets and the positive-cell box mask
// (replicated over the four box channels).
template <typename T>
struct DetTargets {
  std::vector<int> conf_target;
  std::vector<uint8_t> conf_ignore;
  Tensor<T> box_target;
  Tensor<T> box_mask;
};

template <typename T>
DetTargets<T> det_targets(const std::vector<CellGrid>& labels, int rows, int cols) {
  const int n = static_cast<int>(labels.size());
  const long long cells = static_cast<long long>(rows) * cols;
  DetTargets<T> t{std::vector<int>(n * cells, 0), std::vector<uint8_t>(n * cells, 0),
                  Tensor<T>({n, 4, rows, cols}, T(0)), Tensor<T>({n, 4, rows, cols}, T(0))};
  for (int i = 0; i < n; ++i) {
    check_arg(labels[i].geom.rows == rows && labels[i].geom.cols == cols,
              "det_loss: label grid " + std::to_string(labels[i].geom.rows) + "x" +
                  std::to_string(labels[i].geom.cols) + " does not match prediction " + std::to_string(rows) + "x" +
                  std::to_string(cols));
    for (long long cell = 0; cell < cells; ++cell) {
      const CellLabel& l = labels[i].cells[static_cast<size_t>(cell)];
      const long long flat = i * cells + cell;
      if (l.dont_care) t.conf_ignore[static_cast<size_t>(flat)] = 1;
      if (!l.positive) continue;
      t.conf_target[static_cast<size_t>(flat)] = 1;
      const double fields[4] = {l.cx, l.cy, l.cw, l.ch};
      for (int f = 0; f < 4; ++f) {
        t.box_target.data()[(static_cast<size_t>(i) * 4 + f) * cells + cell] = static_cast<T>(fields[f]);
        t.box_mask.data()[(static_cast<size_t>(i) * 4 + f) * cells + cell] = T(1);
      }
    }
  }
  return t;
}

}  // namespace detail

// Mean over all cells of: confidence cross-entropy + reg_weight * L1 box
// error on positive cells. Don't-care cells contribute exactly zero but stay
// in the denominator.
template <typename T>
Tensor<T> det_loss_single(const Tensor<T>& pred, const std::vector<CellGrid>& labels, double reg_weight) {
  check_arg(pred.rank() == 4 && pred.dim(1) == 6, "det_loss: expected (N, 6, rows, cols), got " + shape_str(pred.shape()));
  const int n = pred.dim(0), rows = pred.dim(2), cols = pred.dim(3);
  check_arg(static_cast<int>(labels.size()) == n,
            "det_loss: " + std::to_string(labels.size()) + " label grids for batch of " + std::to_string(n));
  auto targets = detail::det_targets<T>(labels, rows, cols);

  Tensor<T> conf = channel_slice(pred, 0, 2);
  Tensor<T> ce_map = softmax_cross_entropy_map(conf, targets.conf_target, targets.conf_ignore);
  Tensor<T> box = channel_slice(pred, 2, 4);
  Tensor<T> reg = mul(abs(sub(box, targets.box_target)), targets.box_mask);

  Tensor<T> total = add(reduce_sum(ce_map), scale(reduce_sum(reg), static_cast<T>(reg_weight)));
  return scale(total, T(1) / static_cast<T>(static_cast<long long>(n) * rows * cols));
}

// Supervises both stages; total = loss(initial) + loss(refined).
template <typename T>
Tensor<T> det_loss(const DetForward<T>& out, const std::vector<CellGrid>& labels, double reg_weight) {
  return add(det_loss_single(out.initial, labels, reg_weight), det_loss_single(out.refined, labels, reg_weight));
}

}  // namespace multinet
