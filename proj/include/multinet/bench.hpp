// Inference timing. Each task row times one encoder pass plus that task's
// decoder; the joint row times one encoder pass feeding every requested
// decoder, which is the number the shared-encoder design exists for.
#pragma once

#include <chrono>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "multinet/model.hpp"
#include "multinet/rng.hpp"

namespace multinet {

struct BenchRow {
  std::string name;
  double ms = 0;
  double fps = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  int iterations = 0;
  int warmup = 0;
  int width = 0, height = 0;
  long long joint_encoder_calls = 0;  // encoder invocations inside the timed joint loop
};

inline BenchReport run_benchmark(const MultiNet<float>& model, int iterations, int warmup, bool want_seg,
                                 bool want_det, bool want_cls) {
  check_arg(iterations >= 1, "bench: iterations must be >= 1");
  check_arg(warmup >= 0, "bench: warmup must be >= 0");
  check_arg(want_seg || want_det || want_cls, "bench: no task requested");
  BenchReport rep;
  rep.iterations = iterations;
  rep.warmup = warmup;
  rep.width = model.cfg.encoder.input_w;
  rep.height = model.cfg.encoder.input_h;

  Tensor<float> img({1, model.cfg.encoder.in_channels, rep.height, rep.width});
  Rng rng(1234);
  Rng fill = rng.split("bench");
  for (long long i = 0; i < img.size(); ++i) img.data()[i] = static_cast<float>(fill.uniform());

  auto time_case = [&](bool s, bool d, bool c) -> double {
    for (int i = 0; i < warmup; ++i) (void)joint_forward(model, img, s, d, c);
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < iterations; ++i) (void)joint_forward(model, img, s, d, c);
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / iterations;
  };

  auto push = [&](const std::string& name, double ms) {
    rep.rows.push_back({name, ms, ms > 0 ? 1000.0 / ms : 0.0});
  };

  if (want_seg) push("seg", time_case(true, false, false));
  if (want_det) push("det", time_case(false, true, false));
  if (want_cls) push("cls", time_case(false, false, true));
  for (int i = 0; i < warmup; ++i) (void)joint_forward(model, img, want_seg, want_det, want_cls);
  const long long before = model.encode_count;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < iterations; ++i) (void)joint_forward(model, img, want_seg, want_det, want_cls);
  const auto t1 = std::chrono::steady_clock::now();
  rep.joint_encoder_calls = model.encode_count - before;
  push("joint", std::chrono::duration<double, std::milli>(t1 - t0).count() / iterations);
  return rep;
}

inline std::string format_bench_report(const BenchReport& rep) {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "input %dx%d, %d iterations, %d warmup\n", rep.width, rep.height, rep.iterations,
                rep.warmup);
  os << buf;
  std::snprintf(buf, sizeof(buf), "%-8s %14s %14s\n", "task", "speed [msec]", "speed [fps]");
  os << buf;
  for (const auto& r : rep.rows) {
    std::snprintf(buf, sizeof(buf), "%-8s %14.2f %14.2f\n", r.name.c_str(), r.ms, r.fps);
    os << buf;
  }
  return os.str();
}

}  // namespace multinet
