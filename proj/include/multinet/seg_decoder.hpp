// FCN-style segmentation decoder.
//
// A 1x1 convolution scores the stride-32 features, then three transposed
// convolutions upsample x2, x2, x8 back to input resolution. Skip features
// from strides 16 and 8 enter through 1x1 convolutions added after the first
// two upsamplings. At init the transposed convolutions are exact bilinear
// upsamplers and the skip weights are tiny, so the decoder starts out as a
// bilinear resize of the score map.
#pragma once

#include <string>
#include <vector>

#include "multinet/conv.hpp"
#include "multinet/encoder.hpp"
#include "multinet/ops.hpp"
#include "multinet/params.hpp"

namespace multinet {

struct SegConfig {
  int classes = 2;
  double skip_init_std = 1e-4;
};

template <typename T>
struct SegOutput {
  Tensor<T> logits;    // (N, classes, H, W)
  Tensor<T> scores32;  // (N, classes, H/32, W/32), pre-upsampling
};

template <typename T>
void seg_register(ParamStore<T>& params, const SegConfig& cfg, const EncoderConfig& enc) {
  check_arg(cfg.classes >= 2, "seg: at least 2 classes required");
  const int k = cfg.classes;
  params.add("seg.score.weight", {k, encoder_out_channels(enc), 1, 1});
  params.add("seg.score.bias", {k});
  params.add("seg.up1.weight", {k, k, 4, 4});
  params.add("seg.skip16.weight", {k, encoder_f16_channels(enc), 1, 1});
  params.add("seg.skip16.bias", {k});
  params.add("seg.up2.weight", {k, k, 4, 4});
  params.add("seg.skip8.weight", {k, encoder_f8_channels(enc), 1, 1});
  params.add("seg.skip8.bias", {k});
  params.add("seg.up3.weight", {k, k, 16, 16});
}

template <typename T>
void seg_init(ParamStore<T>& params, const SegConfig& cfg, Rng rng) {
  he_init(params.at("seg.score.weight"), rng.split("seg.score.weight"));
  bilinear_init(params.at("seg.up1.weight"), 2);
  bilinear_init(params.at("seg.up2.weight"), 2);
  bilinear_init(params.at("seg.up3.weight"), 8);
  gaussian_init(params.at("seg.skip16.weight"), rng.split("seg.skip16.weight"), cfg.skip_init_std);
  gaussian_init(params.at("seg.skip8.weight"), rng.split("seg.skip8.weight"), cfg.skip_init_std);
}

template <typename T>
SegOutput<T> seg_forward(const ParamStore<T>& params, const SegConfig& cfg, const EncoderConfig& enc,
                         const FeaturePyramid<T>& pyr) {
  const int k = cfg.classes;
  check_arg(pyr.f32.rank() == 4 && pyr.f32.dim(1) == encoder_out_channels(enc),
            "seg_forward: pyramid f32 " + shape_str(pyr.f32.shape()) + " does not match encoder config");
  check_arg(pyr.f16.dim(1) == encoder_f16_channels(enc) && pyr.f8.dim(1) == encoder_f8_channels(enc),
            "seg_forward: pyramid skip channels do not match encoder config");

  ConvSpec score_spec{1, 1, 1, 0, encoder_out_channels(enc), k};
  Tensor<T> scores = conv2d(pyr.f32, params.at("seg.score.weight"), params.at("seg.score.bias"), score_spec);

  ConvSpec up2_spec{4, 4, 2, 1, k, k};
  Tensor<T> x = transposed_conv2d(scores, params.at("seg.up1.weight"), up2_spec);
  ConvSpec skip16_spec{1, 1, 1, 0, encoder_f16_channels(enc), k};
  x = add(x, conv2d(pyr.f16, params.at("seg.skip16.weight"), params.at("seg.skip16.bias"), skip16_spec));

  x = transposed_conv2d(x, params.at("seg.up2.weight"), up2_spec);
  ConvSpec skip8_spec{1, 1, 1, 0, encoder_f8_channels(enc), k};
  x = add(x, conv2d(pyr.f8, params.at("seg.skip8.weight"), params.at("seg.skip8.bias"), skip8_spec));

  ConvSpec up8_spec{16, 16, 8, 4, k, k};
  x = transposed_conv2d(x, params.at("seg.up3.weight"), up8_spec);
  return {std::move(x), std::move(scores)};
}

// Per-pixel class probabilities; channel softmax of the logits.
template <typename T>
Tensor<T> seg_probability(const SegOutput<T>& out) {
  return softmax_channels(out.logits);
}

// mask: per-pixel class indices, length N*H*W, row-major per image.
template <typename T>
Tensor<T> seg_loss(const SegOutput<T>& out, const std::vector<int>& mask) {
  check_arg(static_cast<long long>(mask.size()) == static_cast<long long>(out.logits.dim(0)) * out.logits.dim(2) * out.logits.dim(3),
            "seg_loss: mask size " + std::to_string(mask.size()) + " does not match logits " +
                shape_str(out.logits.shape()));
  return softmax_cross_entropy(out.logits, mask, {});
}

}  // namespace multinet
