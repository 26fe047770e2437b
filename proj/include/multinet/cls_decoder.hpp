// Scene classification heads.
//
// The bottleneck head reduces the stride-32 features with a 30-channel 1x1
// convolution (grid-size independent), then flattens and maps to class
// logits with an affine layer sized to the configured training grid. The
// vanilla head is the fully-connected baseline: it flattens the features of
// a fixed small input directly, which is why its parameter count grows
// quadratically with the input side length and why it cannot share joint
// inference with the other decoders.
#pragma once

#include <string>
#include <vector>

#include "multinet/conv.hpp"
#include "multinet/encoder.hpp"
#include "multinet/ops.hpp"
#include "multinet/params.hpp"

namespace multinet {

struct ClsConfig {
  int classes = 2;
  int bottleneck_channels = 30;
  double dropout_p = 0.5;
  int vanilla_h = 64;  // fixed input size of the vanilla baseline head
  int vanilla_w = 64;
};

template <typename T>
struct ClsOutput {
  Tensor<T> logits;  // (N, classes)
};

template <typename T>
Tensor<T> cls_probability(const ClsOutput<T>& out) {
  return softmax_channels(out.logits);
}

template <typename T>
void cls_register(ParamStore<T>& params, const ClsConfig& cfg, const EncoderConfig& enc) {
  check_arg(cfg.classes >= 2 && cfg.bottleneck_channels > 0, "cls: invalid head dims");
  check_arg(cfg.dropout_p >= 0 && cfg.dropout_p < 1, "cls: dropout must be in [0, 1)");
  const int grid = (enc.input_h / 32) * (enc.input_w / 32);
  params.add("cls.bottleneck.weight", {cfg.bottleneck_channels, encoder_out_channels(enc), 1, 1});
  params.add("cls.bottleneck.bias", {cfg.bottleneck_channels});
  params.add("cls.fc.weight", {cfg.classes, cfg.bottleneck_channels * grid});
  params.add("cls.fc.bias", {cfg.classes});
}

template <typename T>
void cls_init(ParamStore<T>& params, const ClsConfig&, Rng rng) {
  he_init(params.at("cls.bottleneck.weight"), rng.split("cls.bottleneck.weight"));
  he_init(params.at("cls.fc.weight"), rng.split("cls.fc.weight"));
}

// training enables dropout on the bottleneck activations; rng drives it.
template <typename T>
ClsOutput<T> cls_forward_bottleneck(const ParamStore<T>& params, const ClsConfig& cfg, const EncoderConfig& enc,
                                    const FeaturePyramid<T>& pyr, bool training, Rng rng) {
  const int c32 = encoder_out_channels(enc);
  check_arg(pyr.f32.rank() == 4 && pyr.f32.dim(1) == c32,
            "cls_forward: pyramid f32 " + shape_str(pyr.f32.shape()) + " does not match encoder config");
  const int grid = pyr.f32.dim(2) * pyr.f32.dim(3);
  const int expect = (enc.input_h / 32) * (enc.input_w / 32);
  check_arg(grid == expect, "cls_forward: affine layer sized for a " + std::to_string(enc.input_h / 32) + "x" +
                                std::to_string(enc.input_w / 32) + " grid, got " + std::to_string(pyr.f32.dim(2)) +
                                "x" + std::to_string(pyr.f32.dim(3)));

  ConvSpec bspec{1, 1, 1, 0, c32, cfg.bottleneck_channels};
  Tensor<T> x = relu(conv2d(pyr.f32, params.at("cls.bottleneck.weight"), params.at("cls.bottleneck.bias"), bspec));
  x = dropout(x, static_cast<T>(cfg.dropout_p), training, rng);
  x = flatten(x);
  return {linear(x, params.at("cls.fc.weight"), params.at("cls.fc.bias"))};
}

// Parameter count of the vanilla head for an input of side (h, w): the
// affine layer alone, weights plus biases. Quadratic in the side length.
inline long long cls_vanilla_param_count(const ClsConfig& cfg, const EncoderConfig& enc, int h, int w) {
  check_arg(h % 32 == 0 && w % 32 == 0, "cls vanilla: input dims must be multiples of 32");
  const long long flat = static_cast<long long>(encoder_out_channels(enc)) * (h / 32) * (w / 32);
  return static_cast<long long>(cfg.classes) * flat + cfg.classes;
}

template <typename T>
void cls_vanilla_register(ParamStore<T>& params, const ClsConfig& cfg, const EncoderConfig& enc) {
  check_arg(cfg.vanilla_h % 32 == 0 && cfg.vanilla_w % 32 == 0, "cls vanilla: input dims must be multiples of 32");
  const long long flat =
      static_cast<long long>(encoder_out_channels(enc)) * (cfg.vanilla_h / 32) * (cfg.vanilla_w / 32);
  params.add("cls_vanilla.weight", {cfg.classes, static_cast<int>(flat)});
  params.add("cls_vanilla.bias", {cfg.classes});
}

template <typename T>
void cls_vanilla_init(ParamStore<T>& params, const ClsConfig&, Rng rng) {
  he_init(params.at("cls_vanilla.weight"), rng.split("cls_vanilla.weight"));
}

// features: the stride-32 encoding of an input of exactly the configured
// vanilla size; anything else is rejected.
template <typename T>
ClsOutput<T> cls_forward_vanilla(const ParamStore<T>& params, const ClsConfig& cfg, const EncoderConfig& enc,
                                 const Tensor<T>& features) {
  check_arg(features.rank() == 4 && features.dim(1) == encoder_out_channels(enc),
            "cls vanilla: features " + shape_str(features.shape()) + " do not match encoder config");
  check_arg(features.dim(2) == cfg.vanilla_h / 32 && features.dim(3) == cfg.vanilla_w / 32,
            "cls vanilla: head fixed to " + std::to_string(cfg.vanilla_w) + "x" + std::to_string(cfg.vanilla_h) +
                " inputs (grid " + std::to_string(cfg.vanilla_w / 32) + "x" + std::to_string(cfg.vanilla_h / 32) +
                "), got grid " + std::to_string(features.dim(3)) + "x" + std::to_string(features.dim(2)));
  return {linear(flatten(features), params.at("cls_vanilla.weight"), params.at("cls_vanilla.bias"))};
}

// labels: one class index per batch row.
template <typename T>
Tensor<T> cls_loss(const ClsOutput<T>& out, const std::vector<int>& labels) {
  check_arg(static_cast<int>(labels.size()) == out.logits.dim(0),
            "cls_loss: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(out.logits.dim(0)));
  return softmax_cross_entropy(out.logits, labels, {});
}

}  // namespace multinet
