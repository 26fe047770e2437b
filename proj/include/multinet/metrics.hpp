// Evaluation metrics: PASCAL-style AP with KITTI difficulty tiers, MaxF1
// over a 101-point threshold sweep, classification accuracy/precision/recall.
//
// Undefined results (no ground truth, no predicted positives) are reported
// as empty optionals, never as zero.
#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "multinet/data_io.hpp"
#include "multinet/det_decoder.hpp"

namespace multinet {

struct PrPoint {
  double recall = 0, precision = 0;
};

// Pooled average precision over per-image detection/ground-truth lists:
// detections ranked by confidence across all images, each matched greedily
// to its image's best-IoU unmatched ground truth, TP iff IoU >= threshold.
// All-point interpolation. Empty ground truth -> no result.
inline std::optional<double> average_precision(const std::vector<std::vector<BoundingBox>>& detections,
                                               const std::vector<std::vector<BoundingBox>>& ground_truth,
                                               double iou_threshold, std::vector<PrPoint>* curve = nullptr) {
  check_arg(detections.size() == ground_truth.size(),
            "average_precision: " + std::to_string(detections.size()) + " detection lists vs " +
                std::to_string(ground_truth.size()) + " ground-truth lists");
  long long total_gt = 0;
  for (const auto& g : ground_truth) total_gt += static_cast<long long>(g.size());
  if (total_gt == 0) return std::nullopt;

  struct Ranked {
    double confidence;
    int image;
    int index;
  };
  std::vector<Ranked> ranked;
  for (size_t img = 0; img < detections.size(); ++img)
    for (size_t d = 0; d < detections[img].size(); ++d)
      ranked.push_back({detections[img][d].confidence, static_cast<int>(img), static_cast<int>(d)});
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Ranked& a, const Ranked& b) { return a.confidence > b.confidence; });

  std::vector<std::vector<char>> matched(ground_truth.size());
  for (size_t img = 0; img < ground_truth.size(); ++img) matched[img].assign(ground_truth[img].size(), 0);

  std::vector<char> is_tp(ranked.size(), 0);
  for (size_t k = 0; k < ranked.size(); ++k) {
    const BoundingBox& det = detections[static_cast<size_t>(ranked[k].image)][static_cast<size_t>(ranked[k].index)];
    const auto& gts = ground_truth[static_cast<size_t>(ranked[k].image)];
    int best = -1;
    double best_iou = 0;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (matched[static_cast<size_t>(ranked[k].image)][g]) continue;
      const double iou = box_iou(det, gts[g]);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && best_iou >= iou_threshold) {
      is_tp[k] = 1;
      matched[static_cast<size_t>(ranked[k].image)][static_cast<size_t>(best)] = 1;
    }
  }

  std::vector<double> recall(ranked.size()), precision(ranked.size());
  long long tp = 0;
  for (size_t k = 0; k < ranked.size(); ++k) {
    tp += is_tp[k];
    recall[k] = static_cast<double>(tp) / static_cast<double>(total_gt);
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  if (curve) {
    curve->clear();
    for (size_t k = 0; k < ranked.size(); ++k) curve->push_back({recall[k], precision[k]});
  }

  // Precision envelope, then area under the stepwise curve.
  double ap = 0, env = 0, prev_recall = 0;
  std::vector<double> envelope(ranked.size());
  for (size_t k = ranked.size(); k-- > 0;) {
    env = std::max(env, precision[k]);
    envelope[k] = env;
  }
  for (size_t k = 0; k < ranked.size(); ++k) {
    if (is_tp[k]) {
      ap += (recall[k] - prev_recall) * envelope[k];
      prev_recall = recall[k];
    }
  }
  return ap;
}

inline std::optional<double> average_precision(const std::vector<BoundingBox>& detections,
                                               const std::vector<BoundingBox>& ground_truth, double iou_threshold) {
  return average_precision(std::vector<std::vector<BoundingBox>>{detections},
                           std::vector<std::vector<BoundingBox>>{ground_truth}, iou_threshold);
}

enum class Difficulty { easy, moderate, hard };

inline const char* difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::moderate: return "moderate";
    default: return "hard";
  }
}

// Standard KITTI tier bounds on box height, occlusion and truncation.
inline bool in_difficulty(const KittiObjectRecord& r, Difficulty d) {
  switch (d) {
    case Difficulty::easy: return r.height() >= 40 && r.occluded <= 0 && r.truncated <= 0.15;
    case Difficulty::moderate: return r.height() >= 25 && r.occluded <= 1 && r.truncated <= 0.30;
    default: return r.height() >= 25 && r.occluded <= 2 && r.truncated <= 0.50;
  }
}

// Minimum box height evaluated in a tier; detections below it are ignored by
// that tier's ranking instead of counting as false positives.
inline double tier_min_height(Difficulty d) { return d == Difficulty::easy ? 40.0 : 25.0; }

inline std::vector<KittiObjectRecord> difficulty_filter(const std::vector<KittiObjectRecord>& records,
                                                        Difficulty d) {
  std::vector<KittiObjectRecord> out;
  for (const auto& r : records)
    if (in_difficulty(r, d)) out.push_back(r);
  return out;
}

struct SegEval {
  double max_f1 = 0;
  double ap = 0;
  double threshold = 0;  // first threshold attaining max_f1
};

// Sweeps thresholds 0.00, 0.01, ..., 1.00 over pixel probabilities; a pixel
// counts as predicted road when probability >= threshold. Ground truth with
// no road pixels -> no result.
inline std::optional<SegEval> max_f1(const std::vector<float>& probability, const std::vector<uint8_t>& gt_mask) {
  check_arg(probability.size() == gt_mask.size(), "max_f1: probability and mask sizes differ");
  long long total_pos = 0;
  for (uint8_t v : gt_mask) total_pos += v ? 1 : 0;
  if (total_pos == 0) return std::nullopt;

  // Sort descending so every threshold is a prefix; comparisons then agree
  // bit for bit with a direct per-pixel scan.
  struct Px {
    float p;
    uint8_t gt;
  };
  std::vector<Px> px(probability.size());
  for (size_t i = 0; i < probability.size(); ++i) px[i] = {probability[i], gt_mask[i] ? uint8_t(1) : uint8_t(0)};
  std::sort(px.begin(), px.end(), [](const Px& a, const Px& b) { return a.p > b.p; });
  std::vector<long long> prefix_tp(px.size() + 1, 0);
  for (size_t i = 0; i < px.size(); ++i) prefix_tp[i + 1] = prefix_tp[i] + (px[i].gt ? 1 : 0);

  SegEval best;
  double best_f1 = -1;
  std::vector<PrPoint> points;
  for (int i = 0; i <= 100; ++i) {
    const double t = i / 100.0;
    // First index with p < t; all before it are predicted positive.
    size_t lo = 0, hi = px.size();
    while (lo < hi) {
      const size_t mid = (lo + hi) / 2;
      if (static_cast<double>(px[mid].p) >= t) lo = mid + 1;
      else hi = mid;
    }
    const long long predicted = static_cast<long long>(lo);
    const long long tp = prefix_tp[lo];
    const long long fp = predicted - tp;
    const long long fn = total_pos - tp;
    const double f1 = tp > 0 ? 2.0 * tp / static_cast<double>(2 * tp + fp + fn) : 0.0;
    if (f1 > best_f1) {
      best_f1 = f1;
      best.max_f1 = f1;
      best.threshold = t;
    }
    if (predicted > 0) points.push_back({static_cast<double>(tp) / total_pos, static_cast<double>(tp) / predicted});
  }

  // All-point AP over the swept PR samples.
  std::sort(points.begin(), points.end(), [](const PrPoint& a, const PrPoint& b) { return a.recall < b.recall; });
  double ap = 0, prev_recall = 0;
  for (size_t i = 0; i < points.size(); ++i) {
    double env = points[i].precision;
    for (size_t j = i; j < points.size(); ++j) env = std::max(env, points[j].precision);
    if (points[i].recall > prev_recall) {
      ap += (points[i].recall - prev_recall) * env;
      prev_recall = points[i].recall;
    }
  }
  best.ap = ap;
  return best;
}

struct ClsMetrics {
  double accuracy = 0;
  std::optional<double> precision;  // empty when nothing was predicted positive
  std::optional<double> recall;     // empty when ground truth has no positives
};

inline ClsMetrics cls_metrics(const std::vector<int>& predictions, const std::vector<int>& labels) {
  check_arg(predictions.size() == labels.size(), "cls_metrics: prediction and label counts differ");
  check_arg(!predictions.empty(), "cls_metrics: empty input");
  long long correct = 0, tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    check_arg((predictions[i] == 0 || predictions[i] == 1) && (labels[i] == 0 || labels[i] == 1),
              "cls_metrics: binary labels required");
    correct += predictions[i] == labels[i] ? 1 : 0;
    tp += (predictions[i] == 1 && labels[i] == 1) ? 1 : 0;
    fp += (predictions[i] == 1 && labels[i] == 0) ? 1 : 0;
    fn += (predictions[i] == 0 && labels[i] == 1) ? 1 : 0;
  }
  ClsMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(predictions.size());
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return m;
}

}  // namespace multinet
