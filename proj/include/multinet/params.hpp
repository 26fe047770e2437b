// Named parameter collection plus weight initializers.
//
// Parameters live in a sorted map so every traversal (checkpointing, Adam,
// gradient sums) sees one canonical order. Initialization derives one RNG
// stream per parameter name, so adding or removing a parameter never shifts
// the draws of the others.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "multinet/common.hpp"
#include "multinet/rng.hpp"
#include "multinet/tensor.hpp"

namespace multinet {

template <typename T>
class ParamStore {
 public:
  Tensor<T>& add(const std::string& name, const std::vector<int>& shape) {
    check_arg(!map_.contains(name), "parameter '" + name + "' registered twice");
    auto [it, ok] = map_.emplace(name, Tensor<T>(shape, T(0), true));
    return it->second;
  }

  bool contains(const std::string& name) const { return map_.contains(name); }

  Tensor<T>& at(const std::string& name) {
    auto it = map_.find(name);
    check_arg(it != map_.end(), "unknown parameter '" + name + "'");
    return it->second;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = map_.find(name);
    check_arg(it != map_.end(), "unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(map_.size());
    for (const auto& [k, v] : map_) out.push_back(k);
    return out;
  }

  size_t count() const { return map_.size(); }
  long long total_values() const {
    long long n = 0;
    for (const auto& [k, v] : map_) n += v.size();
    return n;
  }

  void zero_grad() {
    for (auto& [k, v] : map_) v.zero_grad();
  }

  auto begin() { return map_.begin(); }
  auto end() { return map_.end(); }
  auto begin() const { return map_.begin(); }
  auto end() const { return map_.end(); }

 private:
  std::map<std::string, Tensor<T>> map_;
};

template <typename T>
void gaussian_init(Tensor<T>& t, Rng rng, double stddev) {
  for (long long i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(rng.gaussian() * stddev);
}

// fan_in: per-output input count. Rank 4 (Cout, Cin, kh, kw) -> Cin*kh*kw;
// rank 2 (K, D) -> D.
template <typename T>
void he_init(Tensor<T>& t, Rng rng) {
  long long fan_in = 0;
  if (t.rank() == 4) fan_in = static_cast<long long>(t.dim(1)) * t.dim(2) * t.dim(3);
  else if (t.rank() == 2) fan_in = t.dim(1);
  else check_arg(false, "he_init: expected rank-2 or rank-4 weights, got " + shape_str(t.shape()));
  gaussian_init(t, rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

// Interpolation weights of a factor-f bilinear upsampler, kernel length 2f.
inline std::vector<double> bilinear_kernel(int factor) {
  check_arg(factor >= 1, "bilinear_kernel: factor must be >= 1");
  std::vector<double> k(static_cast<size_t>(2) * factor);
  for (int i = 0; i < 2 * factor; ++i) k[i] = 1.0 - std::abs((i + 0.5) / factor - 1.0);
  return k;
}

// Channel-diagonal separable bilinear kernel for a (C, C, 2f, 2f) transposed
// conv: upsamples each channel independently, exactly bilinear at start.
template <typename T>
void bilinear_init(Tensor<T>& t, int factor) {
  check_arg(t.rank() == 4 && t.dim(0) == t.dim(1), "bilinear_init: square channel map required, got " + shape_str(t.shape()));
  check_arg(t.dim(2) == 2 * factor && t.dim(3) == 2 * factor,
            "bilinear_init: kernel " + shape_str(t.shape()) + " does not match factor " + std::to_string(factor));
  const auto k = bilinear_kernel(factor);
  const int c = t.dim(0), kk = 2 * factor;
  std::fill(t.data(), t.data() + t.size(), T(0));
  for (int ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < kk; ++ky)
      for (int kx = 0; kx < kk; ++kx)
        t.data()[((static_cast<size_t>(ci) * c + ci) * kk + ky) * kk + kx] = static_cast<T>(k[ky] * k[kx]);
}

}  // namespace multinet
