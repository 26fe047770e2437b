// Joint training loop: Adam with decoupled weight decay, gradient
// accumulation across the three task losses through the shared encoder, and
// a deterministic trainer that cycles each task through its data
// independently.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "multinet/augment.hpp"
#include "multinet/checkpoint.hpp"
#include "multinet/model.hpp"

namespace multinet {

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 5e-4;
  double dropout_p = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double reg_weight = 1.0;
  int seg_batch = 1;
  int det_batch = 1;
  int cls_batch = 1;
  AugmentConfig seg_augment{};
  AugmentConfig det_augment{};
  AugmentConfig cls_augment{};
  uint64_t seed = 0;
  int max_steps = 200;
};

inline void validate_train_config(const TrainConfig& c) {
  check_arg(c.learning_rate > 0, "learning_rate must be positive");
  check_arg(c.weight_decay >= 0, "weight_decay must be non-negative");
  check_arg(c.dropout_p >= 0 && c.dropout_p < 1, "dropout_p must be in [0, 1)");
  check_arg(c.beta1 >= 0 && c.beta1 < 1 && c.beta2 >= 0 && c.beta2 < 1, "adam betas must be in [0, 1)");
  check_arg(c.epsilon > 0, "adam epsilon must be positive");
  check_arg(c.reg_weight >= 0, "reg_weight must be non-negative");
  check_arg(c.seg_batch >= 0 && c.det_batch >= 0 && c.cls_batch >= 0, "batch sizes must be non-negative");
  check_arg(c.seg_batch + c.det_batch + c.cls_batch > 0, "at least one task batch must be non-zero");
  check_arg(c.max_steps >= 0, "max_steps must be non-negative");
}

// One Adam step over every registered parameter. A parameter with no stored
// gradient counts as gradient zero (its moments still decay). Weight decay
// is decoupled and skips biases.
template <typename T>
void adam_update(ParamStore<T>& params, AdamState<T>& state, const TrainConfig& cfg) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    const size_t n = static_cast<size_t>(p.size());
    if (m.size() != n) m.assign(n, T(0));
    if (v.size() != n) v.assign(n, T(0));
    const T* g = p.grad_data();
    const bool decay = cfg.weight_decay > 0 && !name.ends_with(".bias");
    T* theta = p.data();
    for (size_t i = 0; i < n; ++i) {
      const double gi = g ? static_cast<double>(g[i]) : 0.0;
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      double upd = cfg.learning_rate * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.epsilon);
      if (decay) upd += cfg.learning_rate * cfg.weight_decay * static_cast<double>(theta[i]);
      theta[i] = static_cast<T>(static_cast<double>(theta[i]) - upd);
    }
  }
}

struct StepReport {
  double seg_loss = 0, det_loss = 0, cls_loss = 0, total = 0;
  bool has_seg = false, has_det = false, has_cls = false;
  bool aborted = false;  // non-finite loss; parameters were left untouched
};

// Pointers into caller-owned samples; an empty vector disables that task for
// the step.
struct TaskBatches {
  std::vector<const Sample*> seg;
  std::vector<const Sample*> det;
  std::vector<const Sample*> cls;
};

// Runs forward and backward for every present task without touching the
// parameters. Gradients of the shared encoder accumulate across the three
// backward passes; callers must zero_grad() first.
template <typename T>
StepReport joint_accumulate(const MultiNet<T>& model, const TaskBatches& batches, const TrainConfig& cfg,
                            Rng step_rng) {
  StepReport r;
  if (!batches.seg.empty()) {
    auto pyr = model.encode(samples_to_batch<T>(batches.seg));
    auto loss = seg_loss(model.seg(pyr), batch_mask_targets(batches.seg));
    r.seg_loss = static_cast<double>(loss.scalar());
    r.has_seg = true;
    loss.backward();
  }
  if (!batches.det.empty()) {
    auto pyr = model.encode(samples_to_batch<T>(batches.det));
    auto loss = det_loss(model.det(pyr), batch_cell_labels(batches.det), cfg.reg_weight);
    r.det_loss = static_cast<double>(loss.scalar());
    r.has_det = true;
    loss.backward();
  }
  if (!batches.cls.empty()) {
    auto pyr = model.encode(samples_to_batch<T>(batches.cls));
    ClsConfig cc = model.cfg.cls;
    cc.dropout_p = cfg.dropout_p;
    auto out = cls_forward_bottleneck(model.params, cc, model.cfg.encoder, pyr, true, step_rng.split("dropout"));
    auto loss = cls_loss(out, batch_scene_labels(batches.cls));
    r.cls_loss = static_cast<double>(loss.scalar());
    r.has_cls = true;
    loss.backward();
  }
  r.total = r.seg_loss + r.det_loss + r.cls_loss;
  return r;
}

// Full optimization step. A non-finite total loss aborts before the
// parameter update, so model and optimizer state stay at their last good
// values.
template <typename T>
StepReport joint_step(MultiNet<T>& model, const TaskBatches& batches, AdamState<T>& state, const TrainConfig& cfg,
                      Rng step_rng) {
  model.params.zero_grad();
  StepReport r = joint_accumulate(model, batches, cfg, step_rng);
  if (!std::isfinite(r.total)) {
    r.aborted = true;
    return r;
  }
  adam_update(model.params, state, cfg);
  return r;
}

// Cycles the training set once per task, each at its own pace; every sample
// draw advances a per-task cursor, and the augmentation stream is keyed by
// (seed, task, cursor) so a step's data does not depend on batch grouping.
template <typename T = float>
class Trainer {
 public:
  Trainer(MultiNet<T>& model, std::vector<Sample> data, TrainConfig cfg)
      : model_(model), data_(std::move(data)), cfg_(cfg) {
    validate_train_config(cfg_);
    check_arg(!data_.empty(), "trainer: empty training set");
  }

  AdamState<T>& optimizer() { return opt_; }
  const TrainConfig& config() const { return cfg_; }
  long long step_index() const { return opt_.step; }

  StepReport step() {
    holder_.clear();
    // One reservation before any push keeps the sample addresses stable.
    holder_.reserve(static_cast<size_t>(cfg_.seg_batch) + cfg_.det_batch + cfg_.cls_batch);
    TaskBatches batches;
    const long long idx = opt_.step;  // 0-based step about to run
    fill_batch(batches.seg, cfg_.seg_batch, "seg", cfg_.seg_augment, cursor_seg_);
    fill_batch(batches.det, cfg_.det_batch, "det", cfg_.det_augment, cursor_det_);
    fill_batch(batches.cls, cfg_.cls_batch, "cls", cfg_.cls_augment, cursor_cls_);
    Rng step_rng = Rng(cfg_.seed).split("step").split(static_cast<uint64_t>(idx));
    StepReport r = joint_step(model_, batches, opt_, cfg_, step_rng);
    if (r.aborted)
      throw numeric_error("non-finite loss at step " + std::to_string(idx) +
                          "; parameters kept at the last finite state");
    return r;
  }

  // Appends one deterministic record per step to `log` (loss values only; no
  // timing, so reruns produce identical files). Progress with wall time goes
  // to `console` when given.
  void run(int steps, std::ostream* log, std::ostream* console = nullptr) {
    for (int i = 0; i < steps; ++i) {
      const long long idx = opt_.step;
      const auto t0 = std::chrono::steady_clock::now();
      StepReport r = step();
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (log) *log << format_log_line(idx, r) << "\n";
      if (console) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), " [%.1f ms]", ms);
        *console << format_log_line(idx, r) << buf << "\n";
      }
    }
    if (log) log->flush();
  }

  static std::string format_log_line(long long step, const StepReport& r) {
    char buf[192];
    auto fmt = [](bool has, double v, char* out, size_t cap) {
      if (has) std::snprintf(out, cap, "%.6f", v);
      else std::snprintf(out, cap, "n/a");
    };
    char s[32], d[32], c[32];
    fmt(r.has_seg, r.seg_loss, s, sizeof(s));
    fmt(r.has_det, r.det_loss, d, sizeof(d));
    fmt(r.has_cls, r.cls_loss, c, sizeof(c));
    std::snprintf(buf, sizeof(buf), "step=%lld seg=%s det=%s cls=%s total=%.6f", step, s, d, c, r.total);
    return buf;
  }

 private:
  void fill_batch(std::vector<const Sample*>& out, int count, const char* task, const AugmentConfig& aug,
                  long long& cursor) {
    for (int i = 0; i < count; ++i) {
      const Sample& src = data_[static_cast<size_t>(cursor % static_cast<long long>(data_.size()))];
      Rng rng = Rng(cfg_.seed).split("augment").split(task).split(static_cast<uint64_t>(cursor));
      holder_.push_back(augment(src, aug, rng));
      out.push_back(&holder_.back());
      ++cursor;
    }
  }

  MultiNet<T>& model_;
  std::vector<Sample> data_;
  TrainConfig cfg_;
  AdamState<T> opt_;
  long long cursor_seg_ = 0, cursor_det_ = 0, cursor_cls_ = 0;
  std::vector<Sample> holder_;
};

}  // namespace multinet
