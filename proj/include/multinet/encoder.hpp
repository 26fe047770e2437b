// Shared stride-32 encoder.
//
// Five downsampling stages: a stride-2 convolution, then four max-pool +
// convolution blocks, each halving the resolution. Feature taps are exposed
// at strides 8, 16 and 32; all three decoders consume the same pyramid.
// With use_fc_as_conv set, two 1x1 convolutions extend the stride-32 tail,
// mirroring a fully-connected head applied at every grid cell.
#pragma once

#include <string>
#include <vector>

#include "multinet/conv.hpp"
#include "multinet/ops.hpp"
#include "multinet/params.hpp"
#include "multinet/tensor.hpp"

namespace multinet {

struct EncoderConfig {
  int in_channels = 3;
  std::vector<int> stage_channels{16, 32, 64, 128, 256};
  int input_h = 128;  // nominal training dims; encode accepts any /32 size
  int input_w = 256;
  bool use_fc_as_conv = false;
  int fc_channels = 512;
};

inline void validate_encoder_config(const EncoderConfig& c) {
  check_arg(c.stage_channels.size() == 5,
            "encoder: exactly 5 downsampling stages required (stride 32), got " +
                std::to_string(c.stage_channels.size()));
  for (int ch : c.stage_channels) check_arg(ch > 0, "encoder: stage channels must be positive");
  check_arg(c.in_channels > 0, "encoder: input channels must be positive");
  check_arg(c.input_h % 32 == 0 && c.input_w % 32 == 0,
            "encoder: input dims " + std::to_string(c.input_w) + "x" + std::to_string(c.input_h) +
                " must be multiples of 32 (pad to " + std::to_string((c.input_w + 31) / 32 * 32) + "x" +
                std::to_string((c.input_h + 31) / 32 * 32) + ")");
  if (c.use_fc_as_conv) check_arg(c.fc_channels > 0, "encoder: fc channels must be positive");
}

// Channel count of the stride-32 output, after the optional 1x1 tail.
inline int encoder_out_channels(const EncoderConfig& c) {
  return c.use_fc_as_conv ? c.fc_channels : c.stage_channels[4];
}
inline int encoder_f8_channels(const EncoderConfig& c) { return c.stage_channels[2]; }
inline int encoder_f16_channels(const EncoderConfig& c) { return c.stage_channels[3]; }

template <typename T>
struct FeaturePyramid {
  Tensor<T> f8;   // stride 8
  Tensor<T> f16;  // stride 16
  Tensor<T> f32;  // stride 32, the shared encoding
};

template <typename T>
void encoder_register(ParamStore<T>& params, const EncoderConfig& cfg) {
  validate_encoder_config(cfg);
  int in = cfg.in_channels;
  for (int s = 0; s < 5; ++s) {
    const std::string base = "encoder.stage" + std::to_string(s + 1);
    params.add(base + ".weight", {cfg.stage_channels[s], in, 3, 3});
    params.add(base + ".bias", {cfg.stage_channels[s]});
    in = cfg.stage_channels[s];
  }
  if (cfg.use_fc_as_conv) {
    params.add("encoder.fc6.weight", {cfg.fc_channels, cfg.stage_channels[4], 1, 1});
    params.add("encoder.fc6.bias", {cfg.fc_channels});
    params.add("encoder.fc7.weight", {cfg.fc_channels, cfg.fc_channels, 1, 1});
    params.add("encoder.fc7.bias", {cfg.fc_channels});
  }
}

template <typename T>
void encoder_init(ParamStore<T>& params, const EncoderConfig& cfg, Rng rng) {
  validate_encoder_config(cfg);
  for (int s = 0; s < 5; ++s) {
    const std::string base = "encoder.stage" + std::to_string(s + 1);
    he_init(params.at(base + ".weight"), rng.split(base + ".weight"));
  }
  if (cfg.use_fc_as_conv) {
    he_init(params.at("encoder.fc6.weight"), rng.split("encoder.fc6.weight"));
    he_init(params.at("encoder.fc7.weight"), rng.split("encoder.fc7.weight"));
  }
}

// image (N, C, H, W) with H, W multiples of 32. exec_counter, when given, is
// incremented once per call; tests use it to prove the encoder is shared.
template <typename T>
FeaturePyramid<T> encoder_forward(const ParamStore<T>& params, const EncoderConfig& cfg, const Tensor<T>& image,
                                  long long* exec_counter = nullptr) {
  validate_encoder_config(cfg);
  check_arg(image.rank() == 4, "encode: rank-4 image batch required, got " + shape_str(image.shape()));
  check_arg(image.dim(1) == cfg.in_channels,
            "encode: image has " + std::to_string(image.dim(1)) + " channels, config expects " +
                std::to_string(cfg.in_channels));
  const int h = image.dim(2), w = image.dim(3);
  check_arg(h % 32 == 0 && w % 32 == 0,
            "encode: dims " + std::to_string(w) + "x" + std::to_string(h) +
                " must be multiples of 32 (pad to " + std::to_string((w + 31) / 32 * 32) + "x" +
                std::to_string((h + 31) / 32 * 32) + ")");
  if (exec_counter) ++*exec_counter;

  auto stage_conv = [&](const Tensor<T>& x, int s, int stride) {
    const std::string base = "encoder.stage" + std::to_string(s + 1);
    ConvSpec spec{3, 3, stride, 1, x.dim(1), cfg.stage_channels[s]};
    return relu(conv2d(x, params.at(base + ".weight"), params.at(base + ".bias"), spec));
  };

  Tensor<T> x = stage_conv(image, 0, 2);           // stride 2
  x = stage_conv(max_pool(x, 2, 2), 1, 1);         // stride 4
  x = stage_conv(max_pool(x, 2, 2), 2, 1);         // stride 8
  Tensor<T> f8 = x;
  x = stage_conv(max_pool(x, 2, 2), 3, 1);         // stride 16
  Tensor<T> f16 = x;
  x = stage_conv(max_pool(x, 2, 2), 4, 1);         // stride 32
  if (cfg.use_fc_as_conv) {
    ConvSpec s6{1, 1, 1, 0, cfg.stage_channels[4], cfg.fc_channels};
    x = relu(conv2d(x, params.at("encoder.fc6.weight"), params.at("encoder.fc6.bias"), s6));
    ConvSpec s7{1, 1, 1, 0, cfg.fc_channels, cfg.fc_channels};
    x = relu(conv2d(x, params.at("encoder.fc7.weight"), params.at("encoder.fc7.bias"), s7));
  }
  return {std::move(f8), std::move(f16), std::move(x)};
}

}  // namespace multinet
