// The joint model: one encoder, three decoders, one parameter store.
//
// encode() is the only way features are produced, and it counts its calls;
// joint inference runs it once and feeds the pyramid to every requested
// decoder, which is the architectural point of the whole design.
#pragma once

#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "multinet/cls_decoder.hpp"
#include "multinet/det_decoder.hpp"
#include "multinet/encoder.hpp"
#include "multinet/seg_decoder.hpp"

namespace multinet {

struct ModelConfig {
  EncoderConfig encoder;
  SegConfig seg;
  DetConfig det;
  ClsConfig cls;
  bool with_vanilla_cls = false;
};

template <typename T = float>
class MultiNet {
 public:
  ModelConfig cfg;
  ParamStore<T> params;
  mutable long long encode_count = 0;

  explicit MultiNet(ModelConfig c = {}) : cfg(std::move(c)) {
    encoder_register(params, cfg.encoder);
    seg_register(params, cfg.seg, cfg.encoder);
    det_register(params, cfg.det, cfg.encoder);
    cls_register(params, cfg.cls, cfg.encoder);
    if (cfg.with_vanilla_cls) cls_vanilla_register(params, cfg.cls, cfg.encoder);
  }

  void init(uint64_t seed) {
    Rng rng(seed);
    encoder_init(params, cfg.encoder, rng.split("init.encoder"));
    seg_init(params, cfg.seg, rng.split("init.seg"));
    det_init(params, cfg.det, rng.split("init.det"));
    cls_init(params, cfg.cls, rng.split("init.cls"));
    if (cfg.with_vanilla_cls) cls_vanilla_init(params, cfg.cls, rng.split("init.vanilla"));
  }

  FeaturePyramid<T> encode(const Tensor<T>& image) const {
    return encoder_forward(params, cfg.encoder, image, &encode_count);
  }
  SegOutput<T> seg(const FeaturePyramid<T>& pyr) const { return seg_forward(params, cfg.seg, cfg.encoder, pyr); }
  DetForward<T> det(const FeaturePyramid<T>& pyr, RoiAlignStats* stats = nullptr) const {
    return det_forward(params, cfg.det, cfg.encoder, pyr, stats);
  }
  ClsOutput<T> cls(const FeaturePyramid<T>& pyr, bool training = false, Rng rng = Rng(0)) const {
    return cls_forward_bottleneck(params, cfg.cls, cfg.encoder, pyr, training, rng);
  }
};

template <typename T>
struct JointOutputs {
  std::optional<SegOutput<T>> seg;
  std::optional<DetForward<T>> det;
  std::optional<ClsOutput<T>> cls;
};

// One encoder pass serving every requested decoder (inference mode).
template <typename T>
JointOutputs<T> joint_forward(const MultiNet<T>& model, const Tensor<T>& image, bool want_seg, bool want_det,
                              bool want_cls, RoiAlignStats* stats = nullptr) {
  check_arg(want_seg || want_det || want_cls, "joint_forward: no decoder requested");
  FeaturePyramid<T> pyr = model.encode(image);
  JointOutputs<T> out;
  if (want_seg) out.seg = model.seg(pyr);
  if (want_det) out.det = model.det(pyr, stats);
  if (want_cls) out.cls = model.cls(pyr);
  return out;
}

// Config snapshot as flat key/value text, used by the checkpoint format so a
// saved model can be rebuilt without the original config file.
inline std::map<std::string, std::string> model_config_to_map(const ModelConfig& c) {
  std::map<std::string, std::string> m;
  std::ostringstream ch;
  for (size_t i = 0; i < c.encoder.stage_channels.size(); ++i) {
    if (i) ch << ',';
    ch << c.encoder.stage_channels[i];
  }
  m["encoder.stage_channels"] = ch.str();
  m["encoder.in_channels"] = std::to_string(c.encoder.in_channels);
  m["encoder.input_h"] = std::to_string(c.encoder.input_h);
  m["encoder.input_w"] = std::to_string(c.encoder.input_w);
  m["encoder.use_fc_as_conv"] = c.encoder.use_fc_as_conv ? "1" : "0";
  m["encoder.fc_channels"] = std::to_string(c.encoder.fc_channels);
  m["seg.classes"] = std::to_string(c.seg.classes);
  m["det.bottleneck_channels"] = std::to_string(c.det.bottleneck_channels);
  m["det.roi_resolution"] = std::to_string(c.det.roi_resolution);
  m["cls.classes"] = std::to_string(c.cls.classes);
  m["cls.bottleneck_channels"] = std::to_string(c.cls.bottleneck_channels);
  m["cls.vanilla_h"] = std::to_string(c.cls.vanilla_h);
  m["cls.vanilla_w"] = std::to_string(c.cls.vanilla_w);
  m["with_vanilla_cls"] = c.with_vanilla_cls ? "1" : "0";
  return m;
}

inline ModelConfig model_config_from_map(const std::map<std::string, std::string>& m) {
  ModelConfig c;
  auto get = [&](const std::string& key) -> const std::string* {
    auto it = m.find(key);
    return it == m.end() ? nullptr : &it->second;
  };
  auto get_int = [&](const std::string& key, int& out) {
    if (const std::string* v = get(key)) out = std::stoi(*v);
  };
  if (const std::string* v = get("encoder.stage_channels")) {
    std::vector<int> ch;
    std::istringstream in(*v);
    std::string tok;
    while (std::getline(in, tok, ',')) ch.push_back(std::stoi(tok));
    c.encoder.stage_channels = std::move(ch);
  }
  get_int("encoder.in_channels", c.encoder.in_channels);
  get_int("encoder.input_h", c.encoder.input_h);
  get_int("encoder.input_w", c.encoder.input_w);
  if (const std::string* v = get("encoder.use_fc_as_conv")) c.encoder.use_fc_as_conv = (*v == "1");
  get_int("encoder.fc_channels", c.encoder.fc_channels);
  get_int("seg.classes", c.seg.classes);
  get_int("det.bottleneck_channels", c.det.bottleneck_channels);
  get_int("det.roi_resolution", c.det.roi_resolution);
  get_int("cls.classes", c.cls.classes);
  get_int("cls.bottleneck_channels", c.cls.bottleneck_channels);
  get_int("cls.vanilla_h", c.cls.vanilla_h);
  get_int("cls.vanilla_w", c.cls.vanilla_w);
  if (const std::string* v = get("with_vanilla_cls")) c.with_vanilla_cls = (*v == "1");
  return c;
}

}  // namespace multinet
