// Brute-force metric twins, written as directly as possible: quadratic
// scans, no prefix tricks, no envelopes precomputed in reverse. The library
// implementations must agree with these on random instances.
#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include <multinet/det_decoder.hpp>
#include <multinet/metrics.hpp>

namespace oracle {

using multinet::BoundingBox;
using multinet::box_iou;

struct RankRef {
  double confidence;
  size_t image, index;
};

// Pooled PASCAL AP: rank all detections by confidence, greedily match each
// to the best-IoU unmatched ground truth of its image, then integrate the
// stepwise precision envelope over recall.
inline std::optional<double> average_precision(const std::vector<std::vector<BoundingBox>>& dets,
                                               const std::vector<std::vector<BoundingBox>>& gts,
                                               double iou_threshold) {
  size_t total_gt = 0;
  for (const auto& g : gts) total_gt += g.size();
  if (total_gt == 0) return std::nullopt;

  std::vector<RankRef> order;
  for (size_t i = 0; i < dets.size(); ++i)
    for (size_t d = 0; d < dets[i].size(); ++d) order.push_back({dets[i][d].confidence, i, d});
  std::stable_sort(order.begin(), order.end(),
                   [](const RankRef& a, const RankRef& b) { return a.confidence > b.confidence; });

  std::vector<std::vector<bool>> used(gts.size());
  for (size_t i = 0; i < gts.size(); ++i) used[i].assign(gts[i].size(), false);
  std::vector<bool> tp(order.size(), false);
  for (size_t k = 0; k < order.size(); ++k) {
    const BoundingBox& d = dets[order[k].image][order[k].index];
    double best = 0;
    int pick = -1;
    for (size_t g = 0; g < gts[order[k].image].size(); ++g) {
      if (used[order[k].image][g]) continue;
      const double iou = box_iou(d, gts[order[k].image][g]);
      if (iou > best) {
        best = iou;
        pick = static_cast<int>(g);
      }
    }
    if (pick >= 0 && best >= iou_threshold) {
      tp[k] = true;
      used[order[k].image][static_cast<size_t>(pick)] = true;
    }
  }

  double ap = 0, prev_recall = 0;
  for (size_t k = 0; k < order.size(); ++k) {
    if (!tp[k]) continue;
    size_t tp_here = 0;
    for (size_t j = 0; j <= k; ++j) tp_here += tp[j] ? 1 : 0;
    const double recall = static_cast<double>(tp_here) / static_cast<double>(total_gt);
    // Highest precision achievable at recall >= this one.
    double env = 0;
    size_t running_tp = 0;
    for (size_t j = 0; j < order.size(); ++j) {
      running_tp += tp[j] ? 1 : 0;
      if (j >= k) env = std::max(env, static_cast<double>(running_tp) / static_cast<double>(j + 1));
    }
    ap += (recall - prev_recall) * env;
    prev_recall = recall;
  }
  return ap;
}

struct SegSweep {
  double max_f1 = 0;
  double ap = 0;
  double threshold = 0;
};

// Direct 101-threshold sweep, each threshold counted with a full pixel scan.
inline std::optional<SegSweep> max_f1(const std::vector<float>& prob, const std::vector<uint8_t>& mask) {
  size_t total_pos = 0;
  for (uint8_t v : mask) total_pos += v ? 1 : 0;
  if (total_pos == 0) return std::nullopt;

  SegSweep out;
  double best = -1;
  std::vector<double> recalls, precisions;
  for (int i = 0; i <= 100; ++i) {
    const double t = i / 100.0;
    size_t tp = 0, fp = 0, fn = 0;
    for (size_t p = 0; p < prob.size(); ++p) {
      const bool pred = static_cast<double>(prob[p]) >= t;
      const bool gt = mask[p] != 0;
      tp += (pred && gt) ? 1 : 0;
      fp += (pred && !gt) ? 1 : 0;
      fn += (!pred && gt) ? 1 : 0;
    }
    const double f1 = tp > 0 ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn) : 0.0;
    if (f1 > best) {
      best = f1;
      out.max_f1 = f1;
      out.threshold = t;
    }
    if (tp + fp > 0) {
      recalls.push_back(static_cast<double>(tp) / static_cast<double>(total_pos));
      precisions.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    }
  }

  // Area under the envelope of the swept PR points, walked over distinct
  // recalls in ascending order.
  std::vector<size_t> idx(recalls.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return recalls[a] < recalls[b]; });
  double ap = 0, prev = 0;
  for (size_t i = 0; i < idx.size(); ++i) {
    const double r = recalls[idx[i]];
    if (r <= prev) continue;
    double env = 0;
    for (size_t j = 0; j < recalls.size(); ++j)
      if (recalls[j] >= r) env = std::max(env, precisions[j]);
    ap += (r - prev) * env;
    prev = r;
  }
  out.ap = ap;
  return out;
}

struct ClsCounts {
  double accuracy = 0;
  std::optional<double> precision, recall;
};

inline ClsCounts cls_metrics(const std::vector<int>& pred, const std::vector<int>& label) {
  size_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 1 && label[i] == 1) ++tp;
    if (pred[i] == 0 && label[i] == 0) ++tn;
    if (pred[i] == 1 && label[i] == 0) ++fp;
    if (pred[i] == 0 && label[i] == 1) ++fn;
  }
  ClsCounts out;
  out.accuracy = static_cast<double>(tp + tn) / static_cast<double>(pred.size());
  if (tp + fp > 0) out.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) out.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return out;
}

}  // namespace oracle
