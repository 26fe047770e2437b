// Command layer shared by the CLI binary and the end-to-end tests. Each
// run_* function takes an options struct, performs one subcommand worth of
// work, writes human-readable progress to the given stream and returns a
// structured summary. Errors surface as usage_error / data_error /
// numeric_error and are mapped to exit codes by the binary.
#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "multinet/bench.hpp"
#include "multinet/metrics.hpp"
#include "multinet/training.hpp"

namespace multinet {

// ---------------------------------------------------------------------------
// Config files: `key = value` lines, '#' starts a comment, blank lines are
// skipped. Keys are validated against the model + training vocabulary.

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw data_error(origin + " line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw data_error(origin + " line " + std::to_string(lineno) + ": empty key or value");
    if (out.count(key))
      throw data_error(origin + " line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    out[key] = value;
  }
  return out;
}

inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw data_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str(), path);
}

namespace detail {

inline double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw data_error("config key '" + key + "': not a number: '" + v + "'");
  }
}

inline long long to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw data_error("config key '" + key + "': not an integer: '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw data_error("config key '" + key + "': expected 0/1/true/false, got '" + v + "'");
}

}  // namespace detail

// Splits a parsed config into the training part (applied here) and the model
// part (handed to model_config_from_map). Unknown keys are rejected.
inline void apply_config(const std::map<std::string, std::string>& kv, TrainConfig& train, ModelConfig& model) {
  const auto model_keys = model_config_to_map(ModelConfig{});
  std::map<std::string, std::string> model_part;
  for (const auto& [key, value] : kv) {
    if (model_keys.count(key)) {
      model_part[key] = value;
    } else if (key == "learning_rate") {
      train.learning_rate = detail::to_double(key, value);
    } else if (key == "weight_decay") {
      train.weight_decay = detail::to_double(key, value);
    } else if (key == "dropout_p") {
      train.dropout_p = detail::to_double(key, value);
    } else if (key == "beta1") {
      train.beta1 = detail::to_double(key, value);
    } else if (key == "beta2") {
      train.beta2 = detail::to_double(key, value);
    } else if (key == "epsilon") {
      train.epsilon = detail::to_double(key, value);
    } else if (key == "reg_weight") {
      train.reg_weight = detail::to_double(key, value);
    } else if (key == "seg_batch") {
      train.seg_batch = static_cast<int>(detail::to_int(key, value));
    } else if (key == "det_batch") {
      train.det_batch = static_cast<int>(detail::to_int(key, value));
    } else if (key == "cls_batch") {
      train.cls_batch = static_cast<int>(detail::to_int(key, value));
    } else if (key == "max_steps") {
      train.max_steps = static_cast<int>(detail::to_int(key, value));
    } else if (key == "seed") {
      train.seed = static_cast<uint64_t>(detail::to_int(key, value));
    } else if (key == "augment") {
      const bool on = detail::to_bool(key, value);
      train.seg_augment.enabled = train.det_augment.enabled = train.cls_augment.enabled = on;
    } else if (key == "seg_augment") {
      train.seg_augment.enabled = detail::to_bool(key, value);
    } else if (key == "det_augment") {
      train.det_augment.enabled = detail::to_bool(key, value);
    } else if (key == "cls_augment") {
      train.cls_augment.enabled = detail::to_bool(key, value);
    } else {
      throw data_error("unknown config key '" + key + "'");
    }
  }
  if (!model_part.empty()) {
    // Re-apply on top of the current model config, not the defaults.
    auto merged = model_config_to_map(model);
    for (const auto& [k, v] : model_part) merged[k] = v;
    model = model_config_from_map(merged);
  }
}

// ---------------------------------------------------------------------------
// Prediction plumbing

struct Prediction {
  std::optional<std::vector<float>> seg;  // per-pixel probability of class 1
  std::optional<std::vector<BoundingBox>> det;
  std::optional<int> cls;
};

using PredictFn = std::function<Prediction(const Sample&)>;

struct PredictOptions {
  bool seg = true, det = true, cls = true;
  double conf_threshold = 0.1;
  double nms_iou = 0.5;
  bool use_nms = true;
  bool use_refined = true;  // false evaluates the first detection stage
};

inline Prediction predict_image(const MultiNet<float>& model, const std::vector<float>& chw, int width, int height,
                                const PredictOptions& opt) {
  check_arg(opt.seg || opt.det || opt.cls, "predict: no task requested");
  const size_t hw = static_cast<size_t>(width) * height;
  check_arg(chw.size() == 3 * hw, "predict: image buffer does not match dimensions");
  Tensor<float> img({1, 3, height, width});
  for (size_t i = 0; i < 3 * hw; ++i) img.data()[i] = chw[i];
  JointOutputs<float> out = joint_forward(model, img, opt.seg, opt.det, opt.cls);
  Prediction p;
  if (opt.seg) {
    Tensor<float> prob = seg_probability(*out.seg);
    std::vector<float> plane(hw);
    const float* src = prob.data() + hw;  // channel 1 of image 0
    for (size_t i = 0; i < hw; ++i) plane[i] = src[i];
    p.seg = std::move(plane);
  }
  if (opt.det) {
    const Tensor<float>& stage = opt.use_refined ? out.det->refined : out.det->initial;
    std::vector<BoundingBox> boxes = decode_cells(stage, 0, opt.conf_threshold);
    if (opt.use_nms) boxes = nms(std::move(boxes), opt.nms_iou);
    p.det = std::move(boxes);
  }
  if (opt.cls) {
    const Tensor<float>& logits = out.cls->logits;
    int best = 0;
    for (int k = 1; k < logits.dim(1); ++k)
      if (logits.at(0, k) > logits.at(0, best)) best = k;
    p.cls = best;
  }
  return p;
}

inline PredictFn model_predictor(const MultiNet<float>& model, const PredictOptions& opt) {
  return [&model, opt](const Sample& s) { return predict_image(model, s.image, s.width, s.height, opt); };
}

// Loads a checkpoint into a freshly built model of the stored configuration.
inline MultiNet<float> load_model(const std::string& checkpoint_path, AdamState<float>* adam = nullptr,
                                  CheckpointInfo* info_out = nullptr) {
  CheckpointInfo info = peek_checkpoint(checkpoint_path);
  MultiNet<float> model(model_config_from_map(info.config));
  load_checkpoint(checkpoint_path, model.params, adam);
  if (info_out) *info_out = info;
  return model;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  std::string out_dir;
  int count = 20;
  uint64_t seed = 0;
  int width = 256;
  int height = 128;
  int max_vehicles = 4;
  double train_fraction = 0.8;
  bool force = false;
};

struct SynthSummary {
  int count = 0, train = 0, val = 0;
};

inline SynthSummary run_synth(const SynthOptions& opt, std::ostream& out) {
  namespace fs = std::filesystem;
  check_arg(!opt.out_dir.empty(), "synth: --out directory is required");
  check_arg(opt.count >= 0, "synth: count must be >= 0");
  check_arg(opt.width >= 32 && opt.height >= 32 && opt.width % 32 == 0 && opt.height % 32 == 0,
            "synth: width and height must be positive multiples of 32 (pad or pick e.g. 256x128), got " +
                std::to_string(opt.width) + "x" + std::to_string(opt.height));
  check_arg(opt.train_fraction >= 0 && opt.train_fraction <= 1, "synth: train fraction must be in [0, 1]");
  if (fs::exists(opt.out_dir) && !fs::is_directory(opt.out_dir))
    throw data_error("synth: output path exists and is not a directory: " + opt.out_dir);
  if (fs::is_directory(opt.out_dir) && !fs::is_empty(opt.out_dir) && !opt.force)
    throw data_error("synth: output directory is not empty (pass --force to overwrite): " + opt.out_dir);

  SynthConfig cfg;
  cfg.width = opt.width;
  cfg.height = opt.height;
  cfg.max_vehicles = opt.max_vehicles;
  std::vector<Sample> samples = generate_synthetic(opt.count, opt.seed, cfg);
  save_dataset(opt.out_dir, samples, opt.train_fraction);
  SynthSummary sum;
  sum.count = opt.count;
  sum.train = static_cast<int>(static_cast<size_t>(static_cast<double>(samples.size()) * opt.train_fraction));
  sum.val = sum.count - sum.train;
  out << "wrote " << sum.count << " samples to " << opt.out_dir << " (" << sum.train << " train, " << sum.val
      << " val), seed " << opt.seed << "\n";
  return sum;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string data_dir;
  std::string config_file;
  std::string out_checkpoint = "model.ckpt";
  std::string log_file;         // default: out_checkpoint + ".log"
  std::string init_checkpoint;  // resume / fine-tune
  std::optional<int> steps;
  std::optional<uint64_t> seed;
  std::optional<double> learning_rate, weight_decay, reg_weight, dropout_p;
  std::optional<int> seg_batch, det_batch, cls_batch;
  std::optional<bool> augment;
};

struct TrainSummary {
  long long steps_run = 0;
  StepReport last;
  std::string checkpoint_path;
  std::string log_path;
};

inline TrainSummary run_train(const TrainOptions& opt, std::ostream& out) {
  check_arg(!opt.data_dir.empty(), "train: --data directory is required");
  TrainConfig tc;
  ModelConfig mc;
  if (!opt.config_file.empty()) apply_config(parse_config_file(opt.config_file), tc, mc);
  if (opt.steps) tc.max_steps = *opt.steps;
  if (opt.seed) tc.seed = *opt.seed;
  if (opt.learning_rate) tc.learning_rate = *opt.learning_rate;
  if (opt.weight_decay) tc.weight_decay = *opt.weight_decay;
  if (opt.reg_weight) tc.reg_weight = *opt.reg_weight;
  if (opt.dropout_p) tc.dropout_p = *opt.dropout_p;
  if (opt.seg_batch) tc.seg_batch = *opt.seg_batch;
  if (opt.det_batch) tc.det_batch = *opt.det_batch;
  if (opt.cls_batch) tc.cls_batch = *opt.cls_batch;
  if (opt.augment) tc.seg_augment.enabled = tc.det_augment.enabled = tc.cls_augment.enabled = *opt.augment;
  validate_train_config(tc);

  std::vector<Sample> data = load_dataset(opt.data_dir, "train");
  if (data.empty()) throw data_error("train: split 'train' of " + opt.data_dir + " is empty");

  std::optional<MultiNet<float>> model;
  AdamState<float> resumed;
  bool has_resumed = false;
  if (!opt.init_checkpoint.empty()) {
    model.emplace(load_model(opt.init_checkpoint, &resumed));
    has_resumed = true;
  } else {
    model.emplace(mc);
    model->init(tc.seed);
  }
  const EncoderConfig& ec = model->cfg.encoder;
  for (const Sample& s : data)
    if (s.width != ec.input_w || s.height != ec.input_h)
      throw data_error("train: sample '" + s.id + "' is " + std::to_string(s.width) + "x" + std::to_string(s.height) +
                       " but the model expects " + std::to_string(ec.input_w) + "x" + std::to_string(ec.input_h));

  Trainer<float> trainer(*model, std::move(data), tc);
  if (has_resumed) trainer.optimizer() = std::move(resumed);

  TrainSummary sum;
  sum.checkpoint_path = opt.out_checkpoint;
  sum.log_path = opt.log_file.empty() ? opt.out_checkpoint + ".log" : opt.log_file;
  std::ofstream log(sum.log_path);
  if (!log) throw data_error("train: cannot open log file for writing: " + sum.log_path);

  auto save = [&]() {
    save_checkpoint(opt.out_checkpoint, model->params, trainer.optimizer(), model_config_to_map(model->cfg),
                    trainer.step_index());
  };
  try {
    for (int i = 0; i < tc.max_steps; ++i) {
      trainer.run(1, &log, &out);
      sum.steps_run = trainer.step_index();
    }
  } catch (const numeric_error&) {
    save();  // parameters are still the last finite state
    out << "training aborted; last good checkpoint written to " << opt.out_checkpoint << "\n";
    throw;
  }
  save();
  out << "trained " << tc.max_steps << " steps, checkpoint " << opt.out_checkpoint << ", log " << sum.log_path
      << "\n";
  return sum;
}

// ---------------------------------------------------------------------------
// infer

struct InferOptions {
  std::string checkpoint;
  std::string image_path;
  std::string out_prefix = "P";
  bool seg = true, det = true, cls = true;
  double conf_threshold = 0.1;
  double nms_iou = 0.5;
  bool use_nms = true;
  bool use_refined = true;
};

struct InferSummary {
  int boxes = 0;
  std::optional<int> scene_class;
  std::vector<std::string> files;
  long long encoder_calls = 0;
};

inline InferSummary run_infer(const InferOptions& opt, std::ostream& out) {
  check_arg(!opt.checkpoint.empty(), "infer: --ckpt is required");
  check_arg(!opt.image_path.empty(), "infer: --image is required");
  check_arg(opt.seg || opt.det || opt.cls, "infer: at least one task must be requested");
  MultiNet<float> model = load_model(opt.checkpoint);
  ImageU8 img = read_ppm(opt.image_path);
  if (img.width % 32 != 0 || img.height % 32 != 0)
    throw data_error("infer: image dimensions " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                     " must be multiples of 32 (pad the image)");
  if (opt.cls && (img.width != model.cfg.encoder.input_w || img.height != model.cfg.encoder.input_h))
    throw data_error("infer: the scene head is tied to " + std::to_string(model.cfg.encoder.input_w) + "x" +
                     std::to_string(model.cfg.encoder.input_h) + " inputs, got " + std::to_string(img.width) + "x" +
                     std::to_string(img.height) + " (drop cls from --tasks or resize)");
  std::vector<float> chw = image_to_float(img);

  PredictOptions popt;
  popt.seg = opt.seg;
  popt.det = opt.det;
  popt.cls = opt.cls;
  popt.conf_threshold = opt.conf_threshold;
  popt.nms_iou = opt.nms_iou;
  popt.use_nms = opt.use_nms;
  popt.use_refined = opt.use_refined;
  const long long before = model.encode_count;
  Prediction p = predict_image(model, chw, img.width, img.height, popt);

  InferSummary sum;
  sum.encoder_calls = model.encode_count - before;
  if (p.seg) {
    const std::string path = opt.out_prefix + "_seg.ppm";
    write_ppm(path, render_seg_overlay(img.width, img.height, chw, *p.seg));
    sum.files.push_back(path);
  }
  if (p.det) {
    const std::string path = opt.out_prefix + "_det.ppm";
    write_ppm(path, render_box_overlay(img.width, img.height, chw, *p.det));
    sum.files.push_back(path);
    sum.boxes = static_cast<int>(p.det->size());
  }
  if (p.det || p.cls) {
    const std::string path = opt.out_prefix + "_result.txt";
    std::ofstream res(path);
    if (!res) throw data_error("infer: cannot write " + path);
    if (p.cls) {
      res << "scene " << *p.cls << "\n";
      sum.scene_class = *p.cls;
    }
    if (p.det)
      for (const auto& b : *p.det) res << format_kitti_det_line(b) << "\n";
    sum.files.push_back(path);
  }
  out << "infer: wrote";
  for (const auto& f : sum.files) out << " " << f;
  out << "\n";
  if (p.det) out << "infer: " << sum.boxes << " boxes\n";
  if (p.cls) out << "infer: scene class " << *p.cls << "\n";
  return sum;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string checkpoint;
  std::string data_dir;
  std::string split = "val";
  bool seg = true, det = true, cls = true;
  double conf_threshold = 0.1;
  double nms_iou = 0.5;
  bool use_refined = true;
  double det_iou = 0.5;        // matching threshold for AP
  PredictFn predictor;         // test hook; built from the checkpoint when empty
};

struct EvalReport {
  std::optional<SegEval> seg;
  std::optional<double> ap_easy, ap_moderate, ap_hard;
  std::optional<ClsMetrics> cls;
  int samples = 0;
};

namespace detail {

inline KittiObjectRecord pseudo_record(const BoundingBox& b) {
  KittiObjectRecord r;
  r.type = "Car";
  r.truncated = 0;
  r.occluded = 0;
  const Rect rect = b.rect();
  r.left = rect.x0;
  r.top = rect.y0;
  r.right = rect.x1;
  r.bottom = rect.y1;
  return r;
}

inline std::string opt_metric(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

}  // namespace detail

// Pools segmentation pixels and detection rankings across the whole split.
// Ground-truth boxes carry no occlusion or truncation (the synthetic world
// has none), so the difficulty tiers differ by object height only; detections
// below a tier's height bound are dropped from that tier's ranking rather
// than counted against it, following the KITTI protocol.
inline EvalReport evaluate_samples(const std::vector<Sample>& samples, const PredictFn& predict, bool want_seg,
                                   bool want_det, bool want_cls) {
  check_arg(want_seg || want_det || want_cls, "eval: no task requested");
  check_arg(static_cast<bool>(predict), "eval: missing predictor");
  EvalReport rep;
  rep.samples = static_cast<int>(samples.size());
  std::vector<float> pooled_prob;
  std::vector<uint8_t> pooled_gt;
  std::vector<std::vector<BoundingBox>> dets;
  std::vector<std::vector<KittiObjectRecord>> gt_records;
  std::vector<int> cls_pred, cls_gt;
  for (const Sample& s : samples) {
    Prediction p = predict(s);
    if (want_seg) {
      check_arg(p.seg && p.seg->size() == s.mask.size(), "eval: predictor returned no usable segmentation");
      pooled_prob.insert(pooled_prob.end(), p.seg->begin(), p.seg->end());
      pooled_gt.insert(pooled_gt.end(), s.mask.begin(), s.mask.end());
    }
    if (want_det) {
      check_arg(static_cast<bool>(p.det), "eval: predictor returned no detections");
      dets.push_back(*p.det);
      std::vector<KittiObjectRecord> recs;
      for (const auto& b : s.boxes) recs.push_back(detail::pseudo_record(b));
      gt_records.push_back(std::move(recs));
    }
    if (want_cls) {
      check_arg(static_cast<bool>(p.cls), "eval: predictor returned no scene class");
      cls_pred.push_back(*p.cls);
      cls_gt.push_back(s.scene_class);
    }
  }
  if (want_seg) rep.seg = max_f1(pooled_prob, pooled_gt);
  if (want_det) {
    auto tier_ap = [&](Difficulty d) {
      std::vector<std::vector<BoundingBox>> gts(gt_records.size());
      for (size_t i = 0; i < gt_records.size(); ++i)
        for (const auto& r : gt_records[i])
          if (in_difficulty(r, d))
            gts[i].push_back({(r.left + r.right) / 2, (r.top + r.bottom) / 2, r.right - r.left, r.bottom - r.top});
      std::vector<std::vector<BoundingBox>> tier_dets(dets.size());
      for (size_t i = 0; i < dets.size(); ++i)
        for (const auto& b : dets[i])
          if (b.h >= tier_min_height(d)) tier_dets[i].push_back(b);
      return average_precision(tier_dets, gts, 0.5);
    };
    rep.ap_easy = tier_ap(Difficulty::easy);
    rep.ap_moderate = tier_ap(Difficulty::moderate);
    rep.ap_hard = tier_ap(Difficulty::hard);
  }
  if (want_cls && !cls_pred.empty()) rep.cls = cls_metrics(cls_pred, cls_gt);
  return rep;
}

inline std::string format_eval_report(const EvalReport& rep, bool want_seg, bool want_det, bool want_cls) {
  std::ostringstream os;
  if (want_seg) {
    os << "[seg]\n";
    if (rep.seg) {
      os << "MaxF1 = " << detail::opt_metric(rep.seg->max_f1) << "\n";
      os << "AP = " << detail::opt_metric(rep.seg->ap) << "\n";
    } else {
      os << "MaxF1 = n/a\n";
      os << "AP = n/a\n";
    }
  }
  if (want_det) {
    os << "[det]\n";
    os << "AP(easy) = " << detail::opt_metric(rep.ap_easy) << "\n";
    os << "AP(moderate) = " << detail::opt_metric(rep.ap_moderate) << "\n";
    os << "AP(hard) = " << detail::opt_metric(rep.ap_hard) << "\n";
  }
  if (want_cls) {
    os << "[cls]\n";
    os << "Accuracy = " << (rep.cls ? detail::opt_metric(rep.cls->accuracy) : "n/a") << "\n";
    os << "Precision = " << (rep.cls ? detail::opt_metric(rep.cls->precision) : "n/a") << "\n";
    os << "Recall = " << (rep.cls ? detail::opt_metric(rep.cls->recall) : "n/a") << "\n";
  }
  return os.str();
}

inline EvalReport run_eval(const EvalOptions& opt, std::ostream& out) {
  check_arg(!opt.data_dir.empty(), "eval: --data directory is required");
  std::vector<Sample> samples = load_dataset(opt.data_dir, opt.split);
  if (samples.empty()) throw data_error("eval: split '" + opt.split + "' of " + opt.data_dir + " is empty");
  PredictFn predict = opt.predictor;
  std::optional<MultiNet<float>> model;
  if (!predict) {
    check_arg(!opt.checkpoint.empty(), "eval: --ckpt is required");
    model.emplace(load_model(opt.checkpoint));
    PredictOptions popt;
    popt.seg = opt.seg;
    popt.det = opt.det;
    popt.cls = opt.cls;
    popt.conf_threshold = opt.conf_threshold;
    popt.nms_iou = opt.nms_iou;
    popt.use_refined = opt.use_refined;
    predict = model_predictor(*model, popt);
  }
  EvalReport rep = evaluate_samples(samples, predict, opt.seg, opt.det, opt.cls);
  out << format_eval_report(rep, opt.seg, opt.det, opt.cls);
  return rep;
}

// ---------------------------------------------------------------------------
// bench

struct BenchOptions {
  std::string checkpoint;  // empty: fresh random-initialized model
  int width = 256, height = 128;
  uint64_t seed = 0;
  int iterations = 20;
  int warmup = 3;
  bool seg = true, det = true, cls = true;
};

inline BenchReport run_bench(const BenchOptions& opt, std::ostream& out) {
  std::optional<MultiNet<float>> model;
  if (!opt.checkpoint.empty()) {
    model.emplace(load_model(opt.checkpoint));
  } else {
    check_arg(opt.width >= 32 && opt.height >= 32 && opt.width % 32 == 0 && opt.height % 32 == 0,
              "bench: width and height must be positive multiples of 32");
    ModelConfig mc;
    mc.encoder.input_w = opt.width;
    mc.encoder.input_h = opt.height;
    model.emplace(mc);
    model->init(opt.seed);
  }
  BenchReport rep = run_benchmark(*model, opt.iterations, opt.warmup, opt.seg, opt.det, opt.cls);
  out << format_bench_report(rep);
  return rep;
}

}  // namespace multinet
