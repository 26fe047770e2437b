// Elementwise and structural tensor ops, the linear layer, softmax and the
// cross-entropy losses. Each op records a backward closure on its result.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "multinet/common.hpp"
#include "multinet/gemm.hpp"
#include "multinet/rng.hpp"
#include "multinet/tensor.hpp"

namespace multinet {

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> v(x.data(), x.data() + x.size());
  for (T& e : v) e = e > T(0) ? e : T(0);
  auto xn = x.node();
  return Tensor<T>::make_op(x.shape(), std::move(v), {x}, [xn](auto& out) {
    if (!xn->requires_grad) return;
    T* gx = xn->ensure_grad();
    const T* go = out.grad.data();
    const T* ov = out.value.data();
    for (size_t i = 0; i < out.value.size(); ++i)
      if (ov[i] > T(0)) gx[i] += go[i];
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_arg(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> v(a.data(), a.data() + a.size());
  const T* pb = b.data();
  for (size_t i = 0; i < v.size(); ++i) v[i] += pb[i];
  auto an = a.node();
  auto bn = b.node();
  return Tensor<T>::make_op(a.shape(), std::move(v), {a, b}, [an, bn](auto& out) {
    const T* go = out.grad.data();
    if (an->requires_grad) {
      T* g = an->ensure_grad();
      for (size_t i = 0; i < out.value.size(); ++i) g[i] += go[i];
    }
    if (bn->requires_grad) {
      T* g = bn->ensure_grad();
      for (size_t i = 0; i < out.value.size(); ++i) g[i] += go[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_arg(a.shape() == b.shape(), "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> v(a.data(), a.data() + a.size());
  const T* pb = b.data();
  for (size_t i = 0; i < v.size(); ++i) v[i] -= pb[i];
  auto an = a.node();
  auto bn = b.node();
  return Tensor<T>::make_op(a.shape(), std::move(v), {a, b}, [an, bn](auto& out) {
    const T* go = out.grad.data();
    if (an->requires_grad) {
      T* g = an->ensure_grad();
      for (size_t i = 0; i < out.value.size(); ++i) g[i] += go[i];
    }
    if (bn->requires_grad) {
      T* g = bn->ensure_grad();
      for (size_t i = 0; i < out.value.size(); ++i) g[i] -= go[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  std::vector<T> v(x.data(), x.data() + x.size());
  for (T& e : v) e *= s;
  auto xn = x.node();
  return Tensor<T>::make_op(x.shape(), std::move(v), {x}, [xn, s](auto& out) {
    if (!xn->requires_grad) return;
    T* g = xn->ensure_grad();
    const T* go = out.grad.data();
    for (size_t i = 0; i < out.value.size(); ++i) g[i] += s * go[i];
  });
}

// Hadamard product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_arg(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> v(a.data(), a.data() + a.size());
  const T* pb = b.data();
  for (size_t i = 0; i < v.size(); ++i) v[i] *= pb[i];
  auto an = a.node();
  auto bn = b.node();
  return Tensor<T>::make_op(a.shape(), std::move(v), {a, b}, [an, bn](auto& out) {
    const T* go = out.grad.data();
    if (an->requires_grad) {
      T* g = an->ensure_grad();
      const T* vb = bn->value.data();
      for (size_t i = 0; i < out.value.size(); ++i) g[i] += go[i] * vb[i];
    }
    if (bn->requires_grad) {
      T* g = bn->ensure_grad();
      const T* va = an->value.data();
      for (size_t i = 0; i < out.value.size(); ++i) g[i] += go[i] * va[i];
    }
  });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  std::vector<T> v(x.data(), x.data() + x.size());
  for (T& e : v) e = e < T(0) ? -e : e;
  auto xn = x.node();
  return Tensor<T>::make_op(x.shape(), std::move(v), {x}, [xn](auto& out) {
    if (!xn->requires_grad) return;
    T* g = xn->ensure_grad();
    const T* go = out.grad.data();
    const T* xv = xn->value.data();
    for (size_t i = 0; i < out.value.size(); ++i) {
      if (xv[i] > T(0)) g[i] += go[i];
      else if (xv[i] < T(0)) g[i] -= go[i];
    }
  });
}

// Concatenates rank-4 tensors along the channel dimension.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  check_arg(!parts.empty(), "concat_channels: no operands");
  const auto& s0 = parts[0].shape();
  check_arg(s0.size() == 4, "concat_channels: rank-4 tensors required, got " + shape_str(s0));
  int ctotal = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    check_arg(s.size() == 4 && s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3],
              "concat_channels: non-channel dims differ, " + shape_str(s0) + " vs " + shape_str(s));
    ctotal += s[1];
  }
  const int n = s0[0], hw = s0[2] * s0[3];
  std::vector<T> v(static_cast<size_t>(n) * ctotal * hw);
  size_t coff = 0;
  for (const auto& p : parts) {
    const int c = p.shape()[1];
    for (int i = 0; i < n; ++i) {
      const T* src = p.data() + static_cast<size_t>(i) * c * hw;
      T* dst = v.data() + (static_cast<size_t>(i) * ctotal + coff) * hw;
      for (long long e = 0; e < static_cast<long long>(c) * hw; ++e) dst[e] = src[e];
    }
    coff += static_cast<size_t>(c);
  }
  std::vector<std::shared_ptr<detail::TensorNode<T>>> nodes;
  nodes.reserve(parts.size());
  for (const auto& p : parts) nodes.push_back(p.node());
  return Tensor<T>::make_op({n, ctotal, s0[2], s0[3]}, std::move(v), parts, [nodes, n, ctotal, hw](auto& out) {
    const T* go = out.grad.data();
    size_t coff = 0;
    for (auto& pn : nodes) {
      const int c = pn->shape[1];
      if (pn->requires_grad) {
        T* g = pn->ensure_grad();
        for (int i = 0; i < n; ++i) {
          const T* src = go + (static_cast<size_t>(i) * ctotal + coff) * hw;
          T* dst = g + static_cast<size_t>(i) * c * hw;
          for (long long e = 0; e < static_cast<long long>(c) * hw; ++e) dst[e] += src[e];
        }
      }
      coff += static_cast<size_t>(c);
    }
  });
}

// Channels [c0, c0+count) of a rank-4 tensor.
template <typename T>
Tensor<T> channel_slice(const Tensor<T>& x, int c0, int count) {
  const auto& s = x.shape();
  check_arg(s.size() == 4, "channel_slice: rank-4 tensor required, got " + shape_str(s));
  check_arg(c0 >= 0 && count > 0 && c0 + count <= s[1],
            "channel_slice: range [" + std::to_string(c0) + ", " + std::to_string(c0 + count) +
                ") out of " + std::to_string(s[1]) + " channels");
  const int n = s[0], c = s[1], hw = s[2] * s[3];
  std::vector<T> v(static_cast<size_t>(n) * count * hw);
  for (int i = 0; i < n; ++i) {
    const T* src = x.data() + (static_cast<size_t>(i) * c + c0) * hw;
    T* dst = v.data() + static_cast<size_t>(i) * count * hw;
    for (long long e = 0; e < static_cast<long long>(count) * hw; ++e) dst[e] = src[e];
  }
  auto xn = x.node();
  return Tensor<T>::make_op({n, count, s[2], s[3]}, std::move(v), {x}, [xn, c0, count, n, c, hw](auto& out) {
    if (!xn->requires_grad) return;
    T* g = xn->ensure_grad();
    const T* go = out.grad.data();
    for (int i = 0; i < n; ++i) {
      T* dst = g + (static_cast<size_t>(i) * c + c0) * hw;
      const T* src = go + static_cast<size_t>(i) * count * hw;
      for (long long e = 0; e < static_cast<long long>(count) * hw; ++e) dst[e] += src[e];
    }
  });
}

// Inverted dropout. In eval mode this is the identity.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Rng& rng) {
  check_arg(p >= 0.0 && p < 1.0, "dropout: p must be in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const T inv_keep = T(1.0 / (1.0 - p));
  std::vector<uint8_t> keep(static_cast<size_t>(x.size()));
  std::vector<T> v(x.data(), x.data() + x.size());
  for (size_t i = 0; i < v.size(); ++i) {
    keep[i] = rng.uniform() >= p;
    v[i] = keep[i] ? v[i] * inv_keep : T(0);
  }
  auto xn = x.node();
  return Tensor<T>::make_op(x.shape(), std::move(v), {x}, [xn, keep = std::move(keep), inv_keep](auto& out) {
    if (!xn->requires_grad) return;
    T* g = xn->ensure_grad();
    const T* go = out.grad.data();
    for (size_t i = 0; i < out.value.size(); ++i)
      if (keep[i]) g[i] += go[i] * inv_keep;
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> shape) {
  check_arg(numel(shape) == x.size(),
            "reshape: element count mismatch " + shape_str(x.shape()) + " -> " + shape_str(shape));
  std::vector<T> v(x.data(), x.data() + x.size());
  auto xn = x.node();
  return Tensor<T>::make_op(std::move(shape), std::move(v), {x}, [xn](auto& out) {
    if (!xn->requires_grad) return;
    T* g = xn->ensure_grad();
    const T* go = out.grad.data();
    for (size_t i = 0; i < out.value.size(); ++i) g[i] += go[i];
  });
}

// (N, C, H, W) -> (N, C*H*W)
template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  check_arg(x.rank() >= 2, "flatten: rank >= 2 required, got " + shape_str(x.shape()));
  int rest = 1;
  for (int i = 1; i < x.rank(); ++i) rest *= x.dim(i);
  return reshape(x, {x.dim(0), rest});
}

// (A, B, C) -> (A, C, B)
template <typename T>
Tensor<T> transpose_12(const Tensor<T>& x) {
  check_arg(x.rank() == 3, "transpose_12: rank-3 tensor required, got " + shape_str(x.shape()));
  const int a = x.dim(0), b = x.dim(1), c = x.dim(2);
  std::vector<T> v(static_cast<size_t>(x.size()));
  const T* src = x.data();
  for (int i = 0; i < a; ++i)
    for (int j = 0; j < b; ++j)
      for (int k = 0; k < c; ++k)
        v[(static_cast<size_t>(i) * c + k) * b + j] = src[(static_cast<size_t>(i) * b + j) * c + k];
  auto xn = x.node();
  return Tensor<T>::make_op({a, c, b}, std::move(v), {x}, [xn, a, b, c](auto& out) {
    if (!xn->requires_grad) return;
    T* g = xn->ensure_grad();
    const T* go = out.grad.data();
    for (int i = 0; i < a; ++i)
      for (int j = 0; j < b; ++j)
        for (int k = 0; k < c; ++k)
          g[(static_cast<size_t>(i) * b + j) * c + k] += go[(static_cast<size_t>(i) * c + k) * b + j];
  });
}

// y = x * w^T + bias with x (N, D), w (K, D), bias (K).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  check_arg(x.rank() == 2 && w.rank() == 2, "linear: rank-2 operands required");
  check_arg(x.dim(1) == w.dim(1),
            "linear: input width " + shape_str(x.shape()) + " does not match weight " + shape_str(w.shape()));
  const int n = x.dim(0), d = x.dim(1), k = w.dim(0);
  check_arg(bias.size() == k, "linear: bias size " + std::to_string(bias.size()) + " != " + std::to_string(k));
  std::vector<T> v(static_cast<size_t>(n) * k);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) v[static_cast<size_t>(i) * k + j] = bias.data()[j];
  gemm_nt(n, k, d, x.data(), w.data(), v.data());
  auto xn = x.node();
  auto wn = w.node();
  auto bn = bias.node();
  return Tensor<T>::make_op({n, k}, std::move(v), {x, w, bias}, [xn, wn, bn, n, d, k](auto& out) {
    const T* go = out.grad.data();
    if (xn->requires_grad) gemm_nn(n, d, k, go, wn->value.data(), xn->ensure_grad());
    if (wn->requires_grad) gemm_tn(k, d, n, go, xn->value.data(), wn->ensure_grad());
    if (bn->requires_grad) {
      T* g = bn->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) g[j] += go[static_cast<size_t>(i) * k + j];
    }
  });
}

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x) {
  T acc = T(0);
  const T* p = x.data();
  for (long long i = 0; i < x.size(); ++i) acc += p[i];
  auto xn = x.node();
  return Tensor<T>::make_op({1}, {acc}, {x}, [xn](auto& out) {
    if (!xn->requires_grad) return;
    T* g = xn->ensure_grad();
    const T go = out.grad[0];
    for (size_t i = 0; i < xn->value.size(); ++i) g[i] += go;
  });
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& x) {
  return scale(reduce_sum(x), T(1) / static_cast<T>(x.size()));
}

namespace detail {

// Resolves (N, K, spatial) from rank-2 or rank-4 logits.
inline void ce_dims(const std::vector<int>& s, int& n, int& k, int& hw) {
  check_arg(s.size() == 2 || s.size() == 4, "cross-entropy: rank-2 or rank-4 logits required, got " + shape_str(s));
  n = s[0];
  k = s[1];
  hw = s.size() == 4 ? s[2] * s[3] : 1;
}

}  // namespace detail

// Per-position softmax cross-entropy. Result has one entry per spatial
// position (shape (N, H, W) for rank-4 logits, (N) for rank-2). Ignored
// positions contribute an exact zero and pass no gradient.
template <typename T>
Tensor<T> softmax_cross_entropy_map(const Tensor<T>& logits, const std::vector<int>& targets,
                                    const std::vector<uint8_t>& ignore = {}) {
  int n, k, hw;
  detail::ce_dims(logits.shape(), n, k, hw);
  const size_t positions = static_cast<size_t>(n) * hw;
  check_arg(targets.size() == positions,
            "cross-entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(positions) +
                " positions of logits " + shape_str(logits.shape()));
  check_arg(ignore.empty() || ignore.size() == positions, "cross-entropy: ignore mask size mismatch");

  std::vector<T> probs(static_cast<size_t>(logits.size()));
  std::vector<T> losses(positions, T(0));
  const T* lp = logits.data();
  for (int i = 0; i < n; ++i) {
    for (int pos = 0; pos < hw; ++pos) {
      const size_t pi = static_cast<size_t>(i) * hw + pos;
      const size_t base = static_cast<size_t>(i) * k * hw + pos;
      T mx = lp[base];
      for (int c = 1; c < k; ++c) mx = std::max(mx, lp[base + static_cast<size_t>(c) * hw]);
      T sum = T(0);
      for (int c = 0; c < k; ++c) {
        const T e = std::exp(lp[base + static_cast<size_t>(c) * hw] - mx);
        probs[base + static_cast<size_t>(c) * hw] = e;
        sum += e;
      }
      for (int c = 0; c < k; ++c) probs[base + static_cast<size_t>(c) * hw] /= sum;
      if (!ignore.empty() && ignore[pi]) continue;
      const int t = targets[pi];
      check_arg(t >= 0 && t < k,
                "cross-entropy: target " + std::to_string(t) + " out of range for " + std::to_string(k) + " classes");
      losses[pi] = std::log(sum) + mx - lp[base + static_cast<size_t>(t) * hw];
    }
  }

  std::vector<int> out_shape = logits.rank() == 4 ? std::vector<int>{n, logits.dim(2), logits.dim(3)}
                                                  : std::vector<int>{n};
  auto ln = logits.node();
  return Tensor<T>::make_op(
      out_shape, std::move(losses), {logits},
      [ln, probs = std::move(probs), targets, ignore, n, k, hw](auto& out) {
        if (!ln->requires_grad) return;
        T* g = ln->ensure_grad();
        const T* go = out.grad.data();
        for (int i = 0; i < n; ++i) {
          for (int pos = 0; pos < hw; ++pos) {
            const size_t pi = static_cast<size_t>(i) * hw + pos;
            if (!ignore.empty() && ignore[pi]) continue;
            const T gpos = go[pi];
            if (gpos == T(0)) continue;
            const size_t base = static_cast<size_t>(i) * k * hw + pos;
            const int t = targets[pi];
            for (int c = 0; c < k; ++c) {
              T d = probs[base + static_cast<size_t>(c) * hw];
              if (c == t) d -= T(1);
              g[base + static_cast<size_t>(c) * hw] += gpos * d;
            }
          }
        }
      });
}

// Mean negative log softmax probability over the non-ignored positions.
// With every position ignored the loss is zero and *all_ignored is set.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets,
                                const std::vector<uint8_t>& ignore = {}, bool* all_ignored = nullptr) {
  int n, k, hw;
  detail::ce_dims(logits.shape(), n, k, hw);
  long long live = static_cast<long long>(n) * hw;
  if (!ignore.empty())
    for (uint8_t m : ignore) live -= (m != 0);
  if (all_ignored) *all_ignored = (live == 0);
  Tensor<T> map = softmax_cross_entropy_map(logits, targets, ignore);
  if (live == 0) return scale(reduce_sum(map), T(0));
  return scale(reduce_sum(map), T(1) / static_cast<T>(live));
}

// Softmax over the channel dimension of rank-2 or rank-4 input.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
  int n, k, hw;
  detail::ce_dims(x.shape(), n, k, hw);
  std::vector<T> v(static_cast<size_t>(x.size()));
  const T* p = x.data();
  for (int i = 0; i < n; ++i) {
    for (int pos = 0; pos < hw; ++pos) {
      const size_t base = static_cast<size_t>(i) * k * hw + pos;
      T mx = p[base];
      for (int c = 1; c < k; ++c) mx = std::max(mx, p[base + static_cast<size_t>(c) * hw]);
      T sum = T(0);
      for (int c = 0; c < k; ++c) {
        const T e = std::exp(p[base + static_cast<size_t>(c) * hw] - mx);
        v[base + static_cast<size_t>(c) * hw] = e;
        sum += e;
      }
      for (int c = 0; c < k; ++c) v[base + static_cast<size_t>(c) * hw] /= sum;
    }
  }
  auto xn = x.node();
  return Tensor<T>::make_op(x.shape(), std::move(v), {x}, [xn, n, k, hw](auto& out) {
    if (!xn->requires_grad) return;
    T* g = xn->ensure_grad();
    const T* go = out.grad.data();
    const T* pv = out.value.data();
    for (int i = 0; i < n; ++i) {
      for (int pos = 0; pos < hw; ++pos) {
        const size_t base = static_cast<size_t>(i) * k * hw + pos;
        T dot = T(0);
        for (int c = 0; c < k; ++c) {
          const size_t idx = base + static_cast<size_t>(c) * hw;
          dot += go[idx] * pv[idx];
        }
        for (int c = 0; c < k; ++c) {
          const size_t idx = base + static_cast<size_t>(c) * hw;
          g[idx] += pv[idx] * (go[idx] - dot);
        }
      }
    }
  });
}

}  // namespace multinet
