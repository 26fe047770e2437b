// Acceptance gate. Runs nine end-to-end checks, prints one [PASS]/[FAIL]
// line per criterion with the measured numbers, and exits with the count of
// failed criteria. Tolerances are pinned below next to each criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <multinet/multinet.hpp>

#include "gradcheck_util.hpp"
#include "metric_oracles.hpp"

using namespace multinet;
namespace fs = std::filesystem;
using TD = Tensor<double>;

namespace {

// Criterion tolerances.
constexpr double kGradTol = 1e-4;        // 1: finite-difference relative error
constexpr double kGradBudgetSec = 120;   // 1: wall-clock budget
constexpr int kGradSeeds = 21;           // 1: seeds per op family
constexpr double kRoundTol = 1e-9;       // 2: encode/decode roundtrip
constexpr double kMaskTol = 1e-9;        // 2: reg-weight linearity
constexpr double kJointTol = 1e-10;      // 3: joint-gradient equivalence
constexpr double kSegAccMin = 0.99;      // 4: pixel accuracy
constexpr double kConfAccMin = 0.95;     // 4: positive-cell confidence accuracy
constexpr double kIoUMin = 0.7;          // 4: mean decoded-box IoU
constexpr int kOverfitMaxSteps = 2000;   // 4
constexpr double kOverfitBudgetMin = 15; // 4: minutes
constexpr double kMetricTol = 1e-12;     // 6: oracle agreement
constexpr double kFreshSkipTol = 1e-2;   // 7: skip perturbation bound
constexpr double kZeroSkipTol = 1e-6;    // 7: skips zeroed
constexpr double kJointMsBound = 500;    // 8: joint forward on 256x128

struct Check {
  bool ok = false;
  std::string detail;
};

double now_ms() {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof(buf), pattern, args);
  va_end(args);
  return buf;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

// ---------------------------------------------------------------------------
// 1. Gradient integrity: every differentiable op passes central-difference
// checks at <= 1e-4 relative error in double precision, 21 seeds per family,
// inside a two-minute budget.

void fill_distinct(TD& t, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(t.size()));
  for (auto& x : v) x = rng.uniform(-1, 1);
  std::sort(v.begin(), v.end());
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] - v[i - 1] < 1e-3) v[i] = v[i - 1] + 1e-3;
  Rng shuffle = rng.split("shuffle");
  for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[shuffle.uniform_int(i)]);
  for (long long i = 0; i < t.size(); ++i) t.data()[i] = v[static_cast<size_t>(i)];
}

Check criterion1() {
  using gradcheck::fd_check;
  using gradcheck::fill_uniform;
  const double t0 = now_ms();
  double worst = 0;
  long long checked = 0;
  std::string worst_where;
  auto track = [&](const char* name, const gradcheck::FdResult& r) {
    checked += r.checked;
    if (r.worst_rel > worst) {
      worst = r.worst_rel;
      worst_where = std::string(name) + ": " + r.where;
    }
  };

  for (int seed = 0; seed < kGradSeeds; ++seed) {
    {
      Rng rng(1000 + seed);
      TD x({2, 3, 6, 6}, 0.0, true), w({4, 3, 3, 3}, 0.0, true), b({4}, 0.0, true);
      fill_uniform(x, rng);
      fill_uniform(w, rng);
      fill_uniform(b, rng);
      ConvSpec spec{3, 3, seed % 2 + 1, 1, 3, 4};
      track("conv3x3", fd_check({&x, &w, &b}, [&] { return reduce_mean(conv2d(x, w, b, spec)); }));
    }
    {
      Rng rng(2000 + seed);
      TD x({1, 5, 4, 4}, 0.0, true), w({3, 5, 1, 1}, 0.0, true), b({3}, 0.0, true);
      fill_uniform(x, rng);
      fill_uniform(w, rng);
      fill_uniform(b, rng);
      track("conv1x1", fd_check({&x, &w, &b}, [&] { return reduce_mean(conv2d(x, w, b, ConvSpec{1, 1, 1, 0, 5, 3})); }));
    }
    {
      Rng rng(3000 + seed);
      TD x({1, 3, 4, 4}, 0.0, true), w({3, 2, 4, 4}, 0.0, true);
      fill_uniform(x, rng);
      fill_uniform(w, rng);
      track("transposed_conv",
            fd_check({&x, &w}, [&] { return reduce_mean(transposed_conv2d(x, w, ConvSpec{4, 4, 2, 1, 3, 2})); }));
    }
    {
      Rng rng(4000 + seed);
      TD x({1, 2, 6, 6}, 0.0, true);
      fill_distinct(x, rng);
      track("max_pool", fd_check({&x}, [&] { return reduce_mean(max_pool(x, 2, 2)); }));
    }
    {
      Rng rng(5000 + seed);
      TD feat({2, 3, 7, 7}, 0.0, true);
      fill_uniform(feat, rng);
      TD rois({3, 4}, 0.0, true);
      for (int r = 0; r < 3; ++r) {
        rois.at(r, 0) = rng.uniform(2.2, 4.6) + 0.013 * r;
        rois.at(r, 1) = rng.uniform(2.2, 4.6) + 0.017 * r;
        rois.at(r, 2) = rng.uniform(1.3, 2.7);
        rois.at(r, 3) = rng.uniform(1.3, 2.7);
      }
      std::vector<int> batch{0, 1, 1};
      track("roi_align", fd_check({&feat, &rois}, [&] { return reduce_mean(roi_align(feat, rois, batch, 3)); }));
    }
    {
      Rng rng(7000 + seed);
      TD x({4, 6}, 0.0, true), w({3, 6}, 0.0, true), b({3}, 0.0, true);
      fill_uniform(x, rng);
      fill_uniform(w, rng);
      fill_uniform(b, rng);
      track("linear", fd_check({&x, &w, &b}, [&] { return reduce_mean(linear(x, w, b)); }));
    }
    {
      Rng rng(8000 + seed);
      TD logits({2, 3, 4, 4}, 0.0, true);
      fill_uniform(logits, rng, -2, 2);
      std::vector<int> targets(32);
      std::vector<uint8_t> ignore(32);
      for (auto& t : targets) t = static_cast<int>(rng.uniform_int(3));
      for (auto& m : ignore) m = rng.bernoulli(0.3);
      track("cross_entropy", fd_check({&logits}, [&] { return softmax_cross_entropy(logits, targets, ignore); }));
      track("cross_entropy_map",
            fd_check({&logits}, [&] { return reduce_mean(softmax_cross_entropy_map(logits, targets, ignore)); }));
    }
    {
      Rng rng(9000 + seed);
      TD x({1, 40}, 0.0, true);
      fill_uniform(x, rng);
      track("dropout", fd_check({&x}, [&, seed] {
              Rng mask_rng(100 + seed);
              return reduce_mean(dropout(x, 0.5, true, mask_rng));
            }));
    }
    {
      Rng rng(10000 + seed);
      GridGeometry geom = GridGeometry::for_image(96, 64);
      std::vector<BoundingBox> boxes;
      boxes.push_back({rng.uniform(20, 70), rng.uniform(15, 50), rng.uniform(18, 40), rng.uniform(14, 30)});
      std::vector<Rect> dc;
      if (seed % 3 == 0) dc.push_back({0.0, 0.0, 96.0, 16.0});
      CellGrid labels = assign_cells(boxes, dc, geom);
      TD pred({1, 6, geom.rows, geom.cols}, 0.0, true);
      gradcheck::fill_uniform(pred, rng);
      for (int r = 0; r < geom.rows; ++r)
        for (int c = 0; c < geom.cols; ++c)
          for (int ch = 2; ch < 6; ++ch)
            if (std::abs(pred.at(0, ch, r, c)) < 0.05) pred.at(0, ch, r, c) += 0.1;
      track("det_loss", fd_check({&pred}, [&] { return det_loss_single(pred, {labels}, 1.7); }));
    }
    {
      Rng rng(11000 + seed);
      TD pred({1, 6, 2, 2}, 0.0, true);
      TD feat({1, 2, 8, 8}, 0.0, true);
      fill_uniform(feat, rng);
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
          pred.at(0, 0, r, c) = rng.uniform(-1, 1);
          pred.at(0, 1, r, c) = rng.uniform(-1, 1);
          pred.at(0, 2, r, c) = rng.uniform(-0.2, 0.2) + 0.037;
          pred.at(0, 3, r, c) = rng.uniform(-0.2, 0.2) + 0.021;
          pred.at(0, 4, r, c) = rng.uniform(0.6, 1.1) + 0.013;
          pred.at(0, 5, r, c) = rng.uniform(0.6, 1.1) + 0.029;
        }
      track("rois_from_cells", fd_check({&pred, &feat}, [&] {
              auto [rois, batch] = cells_to_rois(pred, 8);
              return reduce_mean(roi_align(feat, rois, batch, 3));
            }));
    }
    {
      Rng rng(6000 + seed);
      TD a({1, 2, 4, 4}, 0.0, true), b({1, 2, 4, 4}, 0.0, true);
      for (long long i = 0; i < a.size(); ++i) {
        double v = rng.uniform(0.1, 1.0);
        a.data()[i] = rng.bernoulli(0.5) ? v : -v;
      }
      fill_uniform(b, rng);
      track("elementwise_chain", fd_check({&a, &b}, [&] {
              TD cat = concat_channels(std::vector<TD>{relu(a), mul(a, b)});
              TD s = channel_slice(cat, 1, 2);
              TD t = transpose_12(reshape(s, {1, 2, 16}));
              return add(reduce_mean(multinet::abs(t)), reduce_sum(scale(sub(a, b), 0.01)));
            }));
    }
  }
  const double secs = (now_ms() - t0) / 1000.0;
  Check c;
  c.ok = worst <= kGradTol && secs < kGradBudgetSec;
  c.detail = fmt("worst rel %.2e over %lld checks, %d seeds/op, %.1fs", worst, checked, kGradSeeds, secs);
  if (!c.ok && worst > kGradTol) c.detail += " at " + worst_where;
  return c;
}

// ---------------------------------------------------------------------------
// 2. assign/decode roundtrip to 1e-9 on 1000 random boxes; loss masking
// exact: don't-care cells and negative-cell box channels multiply the loss
// by zero, and the regression weight acts linearly.

Check criterion2() {
  Rng rng(4242);
  const int dims[4][2] = {{256, 128}, {384, 128}, {96, 64}, {512, 256}};
  double worst = 0;
  long long decoded = 0;
  for (int t = 0; t < 1000; ++t) {
    const int W = dims[t % 4][0], H = dims[t % 4][1];
    GridGeometry geom = GridGeometry::for_image(W, H);
    BoundingBox box;
    box.w = rng.uniform(4.0, W / 2.0);
    box.h = rng.uniform(4.0, H / 2.0);
    box.x = rng.uniform(box.w / 2, W - box.w / 2);  // inside: clipping is the identity
    box.y = rng.uniform(box.h / 2, H - box.h / 2);
    CellGrid labels = assign_cells({box}, {}, geom);
    TD pred({1, 6, geom.rows, geom.cols});
    long long positives = 0;
    for (int r = 0; r < geom.rows; ++r)
      for (int c = 0; c < geom.cols; ++c) {
        const CellLabel& L = labels.at(r, c);
        pred.at(0, 0, r, c) = L.positive ? -20.0 : 20.0;
        pred.at(0, 1, r, c) = L.positive ? 20.0 : -20.0;
        if (L.positive) {
          pred.at(0, 2, r, c) = L.cx;
          pred.at(0, 3, r, c) = L.cy;
          pred.at(0, 4, r, c) = L.cw;
          pred.at(0, 5, r, c) = L.ch;
          ++positives;
        }
      }
    std::vector<BoundingBox> back = decode_cells(pred, 0, 0.5);
    if (static_cast<long long>(back.size()) != positives || positives == 0)
      return {false, fmt("trial %d: %zu decoded boxes for %lld positive cells", t, back.size(), positives)};
    for (const BoundingBox& b : back) {
      worst = std::max({worst, std::abs(b.x - box.x), std::abs(b.y - box.y), std::abs(b.w - box.w),
                        std::abs(b.h - box.h)});
      ++decoded;
    }
  }

  // Masking properties on a 3x2 grid with a deterministic layout: box in the
  // left column, a don't-care strip over cell (1,2), cell (0,2) negative.
  double worst_lin = 0;
  bool exact = true;
  for (int t = 0; t < 60; ++t) {
    GridGeometry geom = GridGeometry::for_image(96, 64);
    std::vector<BoundingBox> boxes{{rng.uniform(10, 30), rng.uniform(10, 22), rng.uniform(8, 18), rng.uniform(8, 16)}};
    std::vector<Rect> dc{{64.0, 32.0, 96.0, 64.0}};
    CellGrid labels = assign_cells(boxes, dc, geom);
    if (!labels.at(1, 2).dont_care || labels.at(0, 2).positive || labels.at(0, 2).dont_care)
      return {false, fmt("masking trial %d: unexpected label layout", t)};
    TD pred({1, 6, geom.rows, geom.cols});
    for (long long i = 0; i < pred.size(); ++i) pred.data()[i] = rng.uniform(-1.5, 1.5);
    auto loss = [&](double w) { return det_loss_single(pred, {labels}, w).scalar(); };
    const double l0 = loss(0), l1 = loss(1), l2 = loss(2);
    worst_lin = std::max(worst_lin, std::abs((l2 - l1) - (l1 - l0)));
    const double base = l1;
    for (int ch = 2; ch < 6; ++ch) pred.at(0, ch, 0, 2) += 3.7;  // negative cell, box channels
    if (loss(1) != base) exact = false;
    for (int ch = 2; ch < 6; ++ch) pred.at(0, ch, 0, 2) -= 3.7;
    for (int ch = 0; ch < 6; ++ch) pred.at(0, ch, 1, 2) += 2.5;  // don't-care cell, every channel
    if (loss(1) != base) exact = false;
    for (int ch = 0; ch < 6; ++ch) pred.at(0, ch, 1, 2) -= 2.5;
  }

  Check c;
  c.ok = worst <= kRoundTol && worst_lin <= kMaskTol && exact;
  c.detail = fmt("roundtrip worst %.2e over %lld boxes, reg-weight linearity %.2e, masked-cell perturbations %s",
                 worst, decoded, worst_lin, exact ? "loss-invariant" : "CHANGED THE LOSS");
  return c;
}

// ---------------------------------------------------------------------------
// 3. Joint-gradient equivalence: one accumulation over all three tasks equals
// the sum of three single-task backward passes, <= 1e-10 in double.

Check criterion3() {
  ModelConfig mc;
  mc.encoder.input_w = 64;
  mc.encoder.input_h = 32;
  mc.encoder.stage_channels = {4, 4, 8, 8, 8};
  mc.det.bottleneck_channels = 16;
  mc.cls.bottleneck_channels = 6;
  SynthConfig sc;
  sc.width = 64;
  sc.height = 32;
  sc.max_vehicles = 2;
  TrainConfig tc;

  double worst = 0;
  for (int seed = 5; seed <= 6; ++seed) {
    MultiNet<double> m(mc);
    m.init(seed);
    std::vector<Sample> data = generate_synthetic(4, 300 + seed, sc);
    TaskBatches all;
    all.seg = {&data[0], &data[1]};
    all.det = {&data[1], &data[2]};
    all.cls = {&data[0], &data[3]};

    auto grads = [&]() {
      std::map<std::string, std::vector<double>> out;
      for (const auto& [name, t] : m.params) {
        const double* g = t.grad_data();
        out[name] = g ? std::vector<double>(g, g + t.size()) : std::vector<double>(static_cast<size_t>(t.size()), 0.0);
      }
      return out;
    };

    m.params.zero_grad();
    joint_accumulate(m, all, tc, Rng(9).split("step"));
    auto joint = grads();

    std::map<std::string, std::vector<double>> summed;
    for (int task = 0; task < 3; ++task) {
      TaskBatches one;
      if (task == 0) one.seg = all.seg;
      if (task == 1) one.det = all.det;
      if (task == 2) one.cls = all.cls;
      m.params.zero_grad();
      joint_accumulate(m, one, tc, Rng(9).split("step"));
      for (auto& [name, vec] : grads()) {
        auto& acc = summed[name];
        if (acc.empty()) acc.assign(vec.size(), 0.0);
        for (size_t i = 0; i < vec.size(); ++i) acc[i] += vec[i];
      }
    }
    for (const auto& [name, vec] : joint) {
      const auto& s = summed.at(name);
      for (size_t i = 0; i < vec.size(); ++i) worst = std::max(worst, rel_diff(vec[i], s[i]));
    }
  }
  Check c;
  c.ok = worst <= kJointTol;
  c.detail = fmt("worst rel %.2e across 2 seeds (double)", worst);
  return c;
}

// ---------------------------------------------------------------------------
// 4. Overfit closure: 8 synthetic 256x128 samples, <= 2000 joint Adam steps
// at lr 1e-3 reach seg pixel acc >= 99%, scene acc 100%, positive-cell
// confidence acc >= 95%, mean decoded-box IoU >= 0.7, under 15 minutes.

struct OverfitEval {
  double pix_acc = 0, cls_acc = 0, conf_acc = 0, mean_iou = 0;
};

OverfitEval eval_overfit(const MultiNet<float>& m, const std::vector<Sample>& data) {
  OverfitEval ev;
  long long pix_ok = 0, pix_all = 0, conf_ok = 0, conf_all = 0;
  int cls_ok = 0;
  double iou_sum = 0;
  long long iou_n = 0;
  for (const Sample& s : data) {
    Tensor<float> img = samples_to_batch<float>({&s});
    JointOutputs<float> out = joint_forward(m, img, true, true, true);
    Tensor<float> prob = seg_probability(*out.seg);
    const size_t hw = static_cast<size_t>(s.width) * s.height;
    const float* p1 = prob.data() + hw;  // class-1 plane
    for (size_t i = 0; i < hw; ++i) pix_ok += ((p1[i] >= 0.5f) == (s.mask[i] != 0)) ? 1 : 0;
    pix_all += static_cast<long long>(hw);

    const Tensor<float>& logits = out.cls->logits;
    int best = 0;
    for (int k = 1; k < logits.dim(1); ++k)
      if (logits.at(0, k) > logits.at(0, best)) best = k;
    cls_ok += best == s.scene_class ? 1 : 0;

    GridGeometry geom = GridGeometry::for_image(s.width, s.height);
    CellGrid labels = assign_cells(s.boxes, s.dont_care, geom);
    std::vector<CellPrediction> cells = cell_predictions(out.det->refined, 0);
    for (size_t i = 0; i < cells.size(); ++i) {
      if (!labels.cells[i].positive) continue;
      ++conf_all;
      conf_ok += cells[i].confidence() >= 0.5 ? 1 : 0;
    }
    std::vector<BoundingBox> det = nms(decode_cells(out.det->refined, 0, 0.5), 0.5);
    for (const BoundingBox& gt : s.boxes) {
      double best_iou = 0;
      for (const BoundingBox& d : det) best_iou = std::max(best_iou, box_iou(d, gt));
      iou_sum += best_iou;
      ++iou_n;
    }
  }
  ev.pix_acc = pix_all ? static_cast<double>(pix_ok) / pix_all : 0;
  ev.cls_acc = data.empty() ? 0 : static_cast<double>(cls_ok) / data.size();
  ev.conf_acc = conf_all ? static_cast<double>(conf_ok) / conf_all : 0;
  ev.mean_iou = iou_n ? iou_sum / iou_n : 0;
  return ev;
}

Check criterion4() {
  const double t0 = now_ms();
  std::vector<Sample> data = generate_synthetic(8, 7, SynthConfig{});
  MultiNet<float> m{ModelConfig{}};
  m.init(7);
  TrainConfig tc;
  tc.seed = 7;
  tc.seg_augment.enabled = tc.det_augment.enabled = tc.cls_augment.enabled = false;  // memorization run
  Trainer<float> trainer(m, data, tc);

  OverfitEval ev;
  int steps = 0;
  bool reached = false;
  while (steps < kOverfitMaxSteps) {
    trainer.run(50, nullptr, nullptr);
    steps += 50;
    ev = eval_overfit(m, data);
    if (ev.pix_acc >= kSegAccMin && ev.cls_acc == 1.0 && ev.conf_acc >= kConfAccMin && ev.mean_iou >= kIoUMin) {
      reached = true;
      break;
    }
  }
  const double mins = (now_ms() - t0) / 60000.0;
  Check c;
  c.ok = reached && mins < kOverfitBudgetMin;
  c.detail = fmt("step %d: pixel acc %.4f, scene acc %.2f, conf acc %.4f, mean IoU %.3f, %.1f min", steps,
                 ev.pix_acc, ev.cls_acc, ev.conf_acc, ev.mean_iou, mins);
  return c;
}

// ---------------------------------------------------------------------------
// 5. Refinement trend: moderate-tier AP of the refined stage >= the initial
// stage on a 64-sample synthetic val set, for 3 seeds, same trained model.

Check criterion5() {
  bool all = true;
  std::string detail;
  // Moderate tier on both sides of the match, as in KITTI evaluation: ground
  // truth and detections below the tier's height bound are ignored, not
  // counted against the ranking. No confidence cut so the full sweep ranks.
  auto tier = [](const std::vector<BoundingBox>& in) {
    std::vector<BoundingBox> out;
    for (const BoundingBox& b : in)
      if (b.h >= tier_min_height(Difficulty::moderate)) out.push_back(b);
    return out;
  };
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    SynthConfig sc;
    sc.width = 128;
    sc.height = 64;
    sc.max_vehicles = 3;
    std::vector<Sample> train_data = generate_synthetic(256, 1000 + seed, sc);
    std::vector<Sample> val = generate_synthetic(64, 2000 + seed, sc);

    ModelConfig mc;
    mc.encoder.input_w = 128;
    mc.encoder.input_h = 64;
    mc.encoder.stage_channels = {8, 16, 32, 64, 128};
    mc.det.bottleneck_channels = 128;
    MultiNet<float> m(mc);
    m.init(seed);
    TrainConfig tc;
    tc.seed = seed;
    tc.seg_batch = 0;
    tc.cls_batch = 0;
    tc.det_batch = 4;
    tc.seg_augment.enabled = tc.det_augment.enabled = tc.cls_augment.enabled = false;
    Trainer<float> trainer(m, train_data, tc);
    trainer.run(1500, nullptr, nullptr);

    std::vector<std::vector<BoundingBox>> det_initial, det_refined, gts;
    for (const Sample& s : val) {
      Tensor<float> img = samples_to_batch<float>({&s});
      JointOutputs<float> out = joint_forward(m, img, false, true, false);
      det_initial.push_back(tier(nms(decode_cells(out.det->initial, 0, 0.0), 0.5)));
      det_refined.push_back(tier(nms(decode_cells(out.det->refined, 0, 0.0), 0.5)));
      gts.push_back(tier(s.boxes));
    }
    std::optional<double> ap_i = average_precision(det_initial, gts, 0.5);
    std::optional<double> ap_r = average_precision(det_refined, gts, 0.5);
    if (!ap_i || !ap_r) return {false, fmt("seed %llu: no moderate-tier ground truth", (unsigned long long)seed)};
    const bool ok = *ap_r >= *ap_i;
    all = all && ok;
    detail += fmt("%sseed %llu: refined %.4f vs initial %.4f", seed == 1 ? "" : "; ", (unsigned long long)seed,
                  *ap_r, *ap_i);
  }
  return {all, detail};
}

// ---------------------------------------------------------------------------
// 6. Metric-oracle equivalence on >= 100 random instances per metric. The
// NMS check verifies the greedy characterization: a box is kept exactly when
// no higher-ranked kept box overlaps it above the threshold.

Check criterion6() {
  Rng rng(20202);
  auto rand_box = [&](double lim) {
    BoundingBox b;
    b.w = rng.uniform(5, 40);
    b.h = rng.uniform(5, 40);
    b.x = rng.uniform(0, lim);
    b.y = rng.uniform(0, lim);
    b.confidence = rng.uniform(0, 1);
    return b;
  };

  int ap_checked = 0;
  double ap_worst = 0;
  for (int t = 0; t < 120; ++t) {
    const int images = 1 + static_cast<int>(rng.uniform_int(3));
    std::vector<std::vector<BoundingBox>> dets(images), gts(images);
    for (int i = 0; i < images; ++i) {
      const int ng = static_cast<int>(rng.uniform_int(6));
      const int nd = static_cast<int>(rng.uniform_int(10));
      for (int g = 0; g < ng; ++g) gts[i].push_back(rand_box(100));
      for (int d = 0; d < nd; ++d) dets[i].push_back(rand_box(100));
    }
    const double thr = std::vector<double>{0.3, 0.5, 0.7}[rng.uniform_int(3)];
    std::optional<double> got = average_precision(dets, gts, thr);
    std::optional<double> want = oracle::average_precision(dets, gts, thr);
    if (got.has_value() != want.has_value()) return {false, fmt("AP trial %d: presence mismatch", t)};
    if (got) {
      ap_worst = std::max(ap_worst, std::abs(*got - *want));
      ++ap_checked;
    }
  }

  int f1_checked = 0;
  double f1_worst = 0;
  for (int t = 0; t < 110; ++t) {
    const int w = 8 + static_cast<int>(rng.uniform_int(25));
    const int h = 8 + static_cast<int>(rng.uniform_int(25));
    std::vector<float> prob(static_cast<size_t>(w) * h);
    std::vector<uint8_t> mask(prob.size());
    for (size_t i = 0; i < prob.size(); ++i) {
      prob[i] = static_cast<float>(rng.uniform());
      mask[i] = rng.bernoulli(0.3) ? 1 : 0;
    }
    std::optional<SegEval> got = max_f1(prob, mask);
    std::optional<oracle::SegSweep> want = oracle::max_f1(prob, mask);
    if (got.has_value() != want.has_value()) return {false, fmt("MaxF1 trial %d: presence mismatch", t)};
    if (!got) continue;
    f1_worst = std::max({f1_worst, std::abs(got->max_f1 - want->max_f1), std::abs(got->ap - want->ap),
                         std::abs(got->threshold - want->threshold)});
    ++f1_checked;
  }

  int cls_checked = 0;
  bool cls_ok = true;
  for (int t = 0; t < 120; ++t) {
    const int n = 1 + static_cast<int>(rng.uniform_int(40));
    std::vector<int> pred(n), label(n);
    for (int i = 0; i < n; ++i) {
      pred[i] = rng.bernoulli(0.5) ? 1 : 0;
      label[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    ClsMetrics got = cls_metrics(pred, label);
    oracle::ClsCounts want = oracle::cls_metrics(pred, label);
    cls_ok = cls_ok && got.accuracy == want.accuracy && got.precision == want.precision && got.recall == want.recall;
    ++cls_checked;
  }

  int nms_checked = 0;
  bool nms_ok = true;
  for (int t = 0; t < 120 && nms_ok; ++t) {
    const int n = 1 + static_cast<int>(rng.uniform_int(12));
    std::vector<BoundingBox> boxes;
    for (int i = 0; i < n; ++i) {
      BoundingBox b = rand_box(60);
      b.cell = i;
      if (rng.bernoulli(0.25) && i > 0) b.confidence = boxes[static_cast<size_t>(i) - 1].confidence;  // force ties
      boxes.push_back(b);
    }
    const double thr = std::vector<double>{0.2, 0.4, 0.6}[rng.uniform_int(3)];
    std::vector<BoundingBox> kept = nms(boxes, thr);
    // Rank order is part of the documented interface: confidence descending,
    // cell index ascending on ties.
    std::vector<BoundingBox> ranked = boxes;
    std::stable_sort(ranked.begin(), ranked.end(), [](const BoundingBox& a, const BoundingBox& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      return a.cell < b.cell;
    });
    auto is_kept = [&](const BoundingBox& b) {
      for (const BoundingBox& k : kept)
        if (k.cell == b.cell) return true;
      return false;
    };
    std::vector<const BoundingBox*> kept_so_far;
    for (const BoundingBox& b : ranked) {
      bool blocked = false;
      for (const BoundingBox* k : kept_so_far)
        if (box_iou(*k, b) > thr) blocked = true;
      if (is_kept(b) != !blocked) nms_ok = false;
      if (!blocked) kept_so_far.push_back(&b);
    }
    // The returned order must be exactly the surviving ranked prefix order.
    if (kept.size() != kept_so_far.size()) nms_ok = false;
    for (size_t i = 0; nms_ok && i < kept.size(); ++i)
      if (kept[i].cell != kept_so_far[i]->cell) nms_ok = false;
    ++nms_checked;
  }

  Check c;
  c.ok = ap_checked >= 100 && f1_checked >= 100 && cls_checked >= 100 && nms_checked >= 100 &&
         ap_worst <= kMetricTol && f1_worst <= kMetricTol && cls_ok && nms_ok;
  c.detail = fmt("AP %d instances (worst %.1e), MaxF1 %d (worst %.1e), cls %d (%s), NMS %d (%s)", ap_checked,
                 ap_worst, f1_checked, f1_worst, cls_checked, cls_ok ? "exact" : "MISMATCH", nms_checked,
                 nms_ok ? "exact" : "MISMATCH");
  return c;
}

// ---------------------------------------------------------------------------
// 7. Bilinear init: at a fresh init the segmentation logits match an
// independent gather-based bilinear x32 upsample of the stride-32 scores
// within 1e-2 relative (tiny skip perturbation); with the skip weights
// zeroed, within 1e-6.

std::vector<double> gather_upsample(const std::vector<double>& in, int h, int w, int f) {
  const int H = h * f, W = w * f;
  std::vector<double> out(static_cast<size_t>(H) * W, 0.0);
  for (int y = 0; y < H; ++y) {
    const double sy = (y + 0.5) / f - 0.5;
    const int y0 = static_cast<int>(std::floor(sy));
    const double wy = sy - y0;
    for (int x = 0; x < W; ++x) {
      const double sx = (x + 0.5) / f - 0.5;
      const int x0 = static_cast<int>(std::floor(sx));
      const double wx = sx - x0;
      double acc = 0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const int yy = y0 + dy, xx = x0 + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;  // zero boundary, as in the decoder
          acc += ((dy ? wy : 1 - wy) * (dx ? wx : 1 - wx)) * in[static_cast<size_t>(yy) * w + xx];
        }
      out[static_cast<size_t>(y) * W + x] = acc;
    }
  }
  return out;
}

Check criterion7() {
  MultiNet<float> m{ModelConfig{}};
  m.init(3);
  const int W = m.cfg.encoder.input_w, H = m.cfg.encoder.input_h;
  Tensor<float> img({1, 3, H, W});
  Rng rng(77);
  for (long long i = 0; i < img.size(); ++i) img.data()[i] = static_cast<float>(rng.uniform());

  auto compare = [&]() {
    FeaturePyramid<float> pyr = m.encode(img);
    SegOutput<float> out = m.seg(pyr);
    const int k = out.scores32.dim(1), h = out.scores32.dim(2), w = out.scores32.dim(3);
    double worst = 0;
    for (int c = 0; c < k; ++c) {
      std::vector<double> plane(static_cast<size_t>(h) * w);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) plane[static_cast<size_t>(y) * w + x] = out.scores32.at(0, c, y, x);
      // Staged exactly like the decoder: x2, x2, x8.
      std::vector<double> u = gather_upsample(plane, h, w, 2);
      u = gather_upsample(u, h * 2, w * 2, 2);
      u = gather_upsample(u, h * 4, w * 4, 8);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          worst = std::max(worst, rel_diff(out.logits.at(0, c, y, x), u[static_cast<size_t>(y) * W + x]));
    }
    return worst;
  };

  const double fresh = compare();
  for (const char* name : {"seg.skip16.weight", "seg.skip16.bias", "seg.skip8.weight", "seg.skip8.bias"}) {
    Tensor<float>& t = m.params.at(name);
    std::fill(t.data(), t.data() + t.size(), 0.0f);
  }
  const double zeroed = compare();

  Check c;
  c.ok = fresh <= kFreshSkipTol && zeroed <= kZeroSkipTol;
  c.detail = fmt("fresh init worst rel %.2e (<= %.0e), skips zeroed %.2e (<= %.0e)", fresh, kFreshSkipTol, zeroed,
                 kZeroSkipTol);
  return c;
}

// ---------------------------------------------------------------------------
// 8. Shared-encoder speed: joint forward wall-time below the sum of the
// per-task times, exactly one encoder execution per joint pass, and the
// joint pass on 256x128 under 500 ms.

Check criterion8() {
  MultiNet<float> m{ModelConfig{}};
  m.init(0);
  const int iters = 5;
  BenchReport rep = run_benchmark(m, iters, 1, true, true, true);
  double task_sum = 0, joint_ms = 0;
  for (const BenchRow& r : rep.rows) {
    if (r.name == "joint") joint_ms = r.ms;
    else task_sum += r.ms;
  }
  Check c;
  c.ok = joint_ms < task_sum && rep.joint_encoder_calls == iters && joint_ms < kJointMsBound;
  c.detail = fmt("joint %.1f ms vs task sum %.1f ms, %lld encoder calls in %d joint passes", joint_ms, task_sum,
                 rep.joint_encoder_calls, iters);
  return c;
}

// ---------------------------------------------------------------------------
// 9. Determinism: identical seeds give byte-identical datasets, checkpoints
// and logs across two independent runs.

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool dirs_equal(const fs::path& a, const fs::path& b, std::string& why) {
  std::vector<fs::path> rel;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), a));
  std::sort(rel.begin(), rel.end());
  size_t b_count = 0;
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) ++b_count;
  if (b_count != rel.size()) {
    why = "file count differs";
    return false;
  }
  for (const auto& r : rel) {
    if (!fs::exists(b / r)) {
      why = r.string() + " missing";
      return false;
    }
    if (slurp(a / r) != slurp(b / r)) {
      why = r.string() + " differs";
      return false;
    }
  }
  return true;
}

Check criterion9() {
  const fs::path base = fs::temp_directory_path() / ("multinet_accept_" + std::to_string(::getpid()));
  fs::remove_all(base);
  std::ostringstream sink;
  for (const char* run : {"a", "b"}) {
    const fs::path dir = base / run;
    fs::create_directories(dir);
    SynthOptions so;
    so.out_dir = (dir / "data").string();
    so.count = 6;
    so.seed = 11;
    so.width = 64;
    so.height = 32;
    run_synth(so, sink);
    std::ofstream cfg(dir / "model.cfg");
    cfg << "encoder.input_w = 64\nencoder.input_h = 32\nencoder.stage_channels = 4,4,8,8,8\n"
           "det.bottleneck_channels = 16\ncls.bottleneck_channels = 6\n";
    cfg.close();
    TrainOptions to;
    to.data_dir = so.out_dir;
    to.config_file = (dir / "model.cfg").string();
    to.out_checkpoint = (dir / "model.ckpt").string();
    to.steps = 3;
    to.seed = 5;
    run_train(to, sink);
  }
  std::string why;
  const bool ok = dirs_equal(base / "a", base / "b", why);
  size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(base / "a"))
    if (e.is_regular_file()) ++files;
  fs::remove_all(base);
  Check c;
  c.ok = ok;
  c.detail = ok ? fmt("%zu files byte-identical across two synth+train runs", files) : why;
  return c;
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    std::function<Check()> run;
  };
  const std::vector<Entry> criteria = {
      {"gradient integrity", criterion1},
      {"cell encoding roundtrip and loss masking", criterion2},
      {"joint gradient equivalence", criterion3},
      {"overfit closure", criterion4},
      {"refinement trend", criterion5},
      {"metric oracle equivalence", criterion6},
      {"bilinear initialization", criterion7},
      {"shared encoder speed", criterion8},
      {"determinism", criterion9},
  };
  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      c = criteria[i].run();
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] %zu. %s (%s)\n", c.ok ? "PASS" : "FAIL", i + 1, criteria[i].name, c.detail.c_str());
    std::fflush(stdout);
    if (!c.ok) ++failures;
  }
  return failures;
}
