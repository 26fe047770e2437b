// Convolution, transposed convolution and max pooling.
//
// conv2d lowers each image to a column matrix and runs the matrix kernels
// from gemm.hpp; the column matrix is rebuilt in the backward pass instead of
// being kept alive with the graph. The transposed convolution is a direct
// scatter loop; it only ever runs on the narrow segmentation score maps.
#pragma once

#include <limits>
#include <vector>

#include "multinet/common.hpp"
#include "multinet/gemm.hpp"
#include "multinet/tensor.hpp"

namespace multinet {

struct ConvSpec {
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int padding = 0;
  int in_channels = 1;
  int out_channels = 1;
};

namespace detail {

inline void validate_conv_spec(const ConvSpec& s) {
  check_arg(s.kernel_h > 0 && s.kernel_w > 0, "conv: kernel dims must be positive");
  check_arg(s.stride > 0, "conv: stride must be positive, got " + std::to_string(s.stride));
  check_arg(s.padding >= 0, "conv: padding must be non-negative");
  check_arg(s.in_channels > 0 && s.out_channels > 0, "conv: channel counts must be positive");
}

// x (C, H, W) -> col (C*kh*kw, OH*OW), zero outside the padded input.
template <typename T>
void im2col(const T* x, int c, int h, int w, const ConvSpec& s, int oh, int ow, T* col) {
  const int kh = s.kernel_h, kw = s.kernel_w;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* dst = col + (static_cast<size_t>(ci) * kh * kw + static_cast<size_t>(ky) * kw + kx) *
                           (static_cast<size_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride - s.padding + ky;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < ow; ++ox) dst[static_cast<size_t>(oy) * ow + ox] = T(0);
            continue;
          }
          const T* src = x + (static_cast<size_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s.stride - s.padding + kx;
            dst[static_cast<size_t>(oy) * ow + ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adds col (C*kh*kw, OH*OW) back into x (C, H, W).
template <typename T>
void col2im_add(const T* col, int c, int h, int w, const ConvSpec& s, int oh, int ow, T* x) {
  const int kh = s.kernel_h, kw = s.kernel_w;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* src = col + (static_cast<size_t>(ci) * kh * kw + static_cast<size_t>(ky) * kw + kx) *
                                 (static_cast<size_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride - s.padding + ky;
          if (iy < 0 || iy >= h) continue;
          T* dst = x + (static_cast<size_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s.stride - s.padding + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[static_cast<size_t>(oy) * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// input (N, Cin, H, W) * weights (Cout, Cin, kh, kw) + bias (Cout).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias, const ConvSpec& spec) {
  detail::validate_conv_spec(spec);
  check_arg(input.rank() == 4, "conv2d: rank-4 input required, got " + shape_str(input.shape()));
  check_arg(input.dim(1) == spec.in_channels,
            "conv2d: input " + shape_str(input.shape()) + " has " + std::to_string(input.dim(1)) +
                " channels, spec expects " + std::to_string(spec.in_channels));
  const std::vector<int> wshape{spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w};
  check_arg(weights.shape() == wshape,
            "conv2d: weights " + shape_str(weights.shape()) + " do not match spec " + shape_str(wshape));
  check_arg(bias.size() == spec.out_channels,
            "conv2d: bias size " + std::to_string(bias.size()) + " != " + std::to_string(spec.out_channels));

  const int n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int oh = (h + 2 * spec.padding - spec.kernel_h) / spec.stride + 1;
  const int ow = (w + 2 * spec.padding - spec.kernel_w) / spec.stride + 1;
  check_arg(h + 2 * spec.padding >= spec.kernel_h && w + 2 * spec.padding >= spec.kernel_w,
            "conv2d: kernel " + std::to_string(spec.kernel_h) + "x" + std::to_string(spec.kernel_w) +
                " does not fit input " + shape_str(input.shape()) + " with padding " + std::to_string(spec.padding));

  const int cout = spec.out_channels;
  const int q = cin * spec.kernel_h * spec.kernel_w;  // column rows
  const long long p = static_cast<long long>(oh) * ow;
  const bool pointwise = spec.kernel_h == 1 && spec.kernel_w == 1 && spec.stride == 1 && spec.padding == 0;

  std::vector<T> out(static_cast<size_t>(n) * cout * p);
  std::vector<T> col;
  if (!pointwise) col.resize(static_cast<size_t>(q) * p);
  for (int i = 0; i < n; ++i) {
    const T* x = input.data() + static_cast<size_t>(i) * cin * h * w;
    T* y = out.data() + static_cast<size_t>(i) * cout * p;
    for (int o = 0; o < cout; ++o)
      for (long long e = 0; e < p; ++e) y[static_cast<size_t>(o) * p + e] = bias.data()[o];
    const T* cols = x;
    if (!pointwise) {
      detail::im2col(x, cin, h, w, spec, oh, ow, col.data());
      cols = col.data();
    }
    gemm_nn(cout, static_cast<int>(p), q, weights.data(), cols, y);
  }

  auto xn = input.node();
  auto wn = weights.node();
  auto bn = bias.node();
  return Tensor<T>::make_op(
      {n, cout, oh, ow}, std::move(out), {input, weights, bias},
      [xn, wn, bn, spec, n, cin, h, w, oh, ow, q, p, pointwise](auto& outn) {
        const int cout = spec.out_channels;
        std::vector<T> col, dcol;
        if (!pointwise) {
          col.resize(static_cast<size_t>(q) * p);
          dcol.resize(static_cast<size_t>(q) * p);
        }
        for (int i = 0; i < n; ++i) {
          const T* dy = outn.grad.data() + static_cast<size_t>(i) * cout * p;
          const T* x = xn->value.data() + static_cast<size_t>(i) * cin * h * w;
          if (wn->requires_grad) {
            const T* cols = x;
            if (!pointwise) {
              detail::im2col(x, cin, h, w, spec, oh, ow, col.data());
              cols = col.data();
            }
            gemm_nt(cout, q, static_cast<int>(p), dy, cols, wn->ensure_grad());
          }
          if (bn->requires_grad) {
            T* db = bn->ensure_grad();
            for (int o = 0; o < cout; ++o) {
              T acc = T(0);
              for (long long e = 0; e < p; ++e) acc += dy[static_cast<size_t>(o) * p + e];
              db[o] += acc;
            }
          }
          if (xn->requires_grad) {
            T* dx = xn->ensure_grad() + static_cast<size_t>(i) * cin * h * w;
            if (pointwise) {
              gemm_tn(q, static_cast<int>(p), cout, wn->value.data(), dy, dx);
            } else {
              std::fill(dcol.begin(), dcol.end(), T(0));
              gemm_tn(q, static_cast<int>(p), cout, wn->value.data(), dy, dcol.data());
              detail::col2im_add(dcol.data(), cin, h, w, spec, oh, ow, dx);
            }
          }
        }
      });
}

// input (N, Cin, H, W) * weights (Cin, Cout, kh, kw); output spatial dims are
// (H-1)*stride - 2*padding + kernel. With kernel = 2*stride and padding =
// stride/2 that is exactly H*stride.
template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& input, const Tensor<T>& weights, const ConvSpec& spec) {
  check_arg(spec.stride > 0, "transposed_conv2d: stride must be positive, got " + std::to_string(spec.stride));
  detail::validate_conv_spec(spec);
  check_arg(spec.kernel_h >= spec.stride && spec.kernel_w >= spec.stride,
            "transposed_conv2d: kernel must be at least the stride");
  check_arg(input.rank() == 4, "transposed_conv2d: rank-4 input required");
  check_arg(input.dim(1) == spec.in_channels,
            "transposed_conv2d: input " + shape_str(input.shape()) + " vs in_channels " +
                std::to_string(spec.in_channels));
  const std::vector<int> wshape{spec.in_channels, spec.out_channels, spec.kernel_h, spec.kernel_w};
  check_arg(weights.shape() == wshape,
            "transposed_conv2d: weights " + shape_str(weights.shape()) + " do not match spec " + shape_str(wshape));

  const int n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int cout = spec.out_channels, kh = spec.kernel_h, kw = spec.kernel_w, s = spec.stride, pd = spec.padding;
  const int oh = (h - 1) * s - 2 * pd + kh;
  const int ow = (w - 1) * s - 2 * pd + kw;
  check_arg(oh > 0 && ow > 0, "transposed_conv2d: empty output for input " + shape_str(input.shape()));

  std::vector<T> out(static_cast<size_t>(n) * cout * oh * ow, T(0));
  const T* xp = input.data();
  const T* wp = weights.data();
  for (int i = 0; i < n; ++i) {
    for (int ci = 0; ci < cin; ++ci) {
      for (int iy = 0; iy < h; ++iy) {
        for (int ix = 0; ix < w; ++ix) {
          const T v = xp[((static_cast<size_t>(i) * cin + ci) * h + iy) * w + ix];
          if (v == T(0)) continue;
          for (int co = 0; co < cout; ++co) {
            const T* wk = wp + (static_cast<size_t>(ci) * cout + co) * kh * kw;
            T* dst = out.data() + (static_cast<size_t>(i) * cout + co) * oh * ow;
            for (int ky = 0; ky < kh; ++ky) {
              const int oy = iy * s - pd + ky;
              if (oy < 0 || oy >= oh) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ox = ix * s - pd + kx;
                if (ox >= 0 && ox < ow) dst[static_cast<size_t>(oy) * ow + ox] += v * wk[static_cast<size_t>(ky) * kw + kx];
              }
            }
          }
        }
      }
    }
  }

  auto xn = input.node();
  auto wn = weights.node();
  return Tensor<T>::make_op(
      {n, cout, oh, ow}, std::move(out), {input, weights},
      [xn, wn, n, cin, cout, h, w, oh, ow, kh, kw, s, pd](auto& outn) {
        const T* go = outn.grad.data();
        for (int i = 0; i < n; ++i) {
          for (int ci = 0; ci < cin; ++ci) {
            for (int iy = 0; iy < h; ++iy) {
              for (int ix = 0; ix < w; ++ix) {
                const size_t xi = ((static_cast<size_t>(i) * cin + ci) * h + iy) * w + ix;
                const T xv = xn->value[xi];
                T dx = T(0);
                for (int co = 0; co < cout; ++co) {
                  const T* gdst = go + (static_cast<size_t>(i) * cout + co) * oh * ow;
                  const size_t wbase = (static_cast<size_t>(ci) * cout + co) * kh * kw;
                  for (int ky = 0; ky < kh; ++ky) {
                    const int oy = iy * s - pd + ky;
                    if (oy < 0 || oy >= oh) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                      const int ox = ix * s - pd + kx;
                      if (ox < 0 || ox >= ow) continue;
                      const T g = gdst[static_cast<size_t>(oy) * ow + ox];
                      if (xn->requires_grad) dx += g * wn->value[wbase + static_cast<size_t>(ky) * kw + kx];
                      if (wn->requires_grad) wn->ensure_grad()[wbase + static_cast<size_t>(ky) * kw + kx] += g * xv;
                    }
                  }
                }
                if (xn->requires_grad) xn->ensure_grad()[xi] += dx;
              }
            }
          }
        }
      });
}

// Per-window maximum; gradient goes to the first maximal element per window.
template <typename T>
Tensor<T> max_pool(const Tensor<T>& input, int window, int stride) {
  check_arg(window >= 1 && stride >= 1, "max_pool: window and stride must be >= 1");
  check_arg(input.rank() == 4, "max_pool: rank-4 input required, got " + shape_str(input.shape()));
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  check_arg(window <= h && window <= w,
            "max_pool: window " + std::to_string(window) + " larger than input " + shape_str(input.shape()));
  const int oh = (h - window) / stride + 1;
  const int ow = (w - window) / stride + 1;

  std::vector<T> out(static_cast<size_t>(n) * c * oh * ow);
  std::vector<int> argmax(out.size());
  const T* x = input.data();
  for (int i = 0; i < n; ++i) {
    for (int ci = 0; ci < c; ++ci) {
      const T* plane = x + (static_cast<size_t>(i) * c + ci) * h * w;
      const size_t obase = (static_cast<size_t>(i) * c + ci) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          T best = -std::numeric_limits<T>::infinity();
          int pos = 0;
          for (int ky = 0; ky < window; ++ky) {
            const int iy = oy * stride + ky;
            for (int kx = 0; kx < window; ++kx) {
              const int ix = ox * stride + kx;
              const T v = plane[static_cast<size_t>(iy) * w + ix];
              if (v > best) {
                best = v;
                pos = iy * w + ix;
              }
            }
          }
          out[obase + static_cast<size_t>(oy) * ow + ox] = best;
          argmax[obase + static_cast<size_t>(oy) * ow + ox] = pos;
        }
      }
    }
  }

  auto xn = input.node();
  return Tensor<T>::make_op({n, c, oh, ow}, std::move(out), {input},
                            [xn, argmax = std::move(argmax), n, c, h, w, oh, ow](auto& outn) {
                              if (!xn->requires_grad) return;
                              T* g = xn->ensure_grad();
                              const T* go = outn.grad.data();
                              for (long long plane = 0; plane < static_cast<long long>(n) * c; ++plane) {
                                const size_t obase = static_cast<size_t>(plane) * oh * ow;
                                const size_t ibase = static_cast<size_t>(plane) * h * w;
                                for (long long e = 0; e < static_cast<long long>(oh) * ow; ++e)
                                  g[ibase + argmax[obase + e]] += go[obase + e];
                              }
                            });
}

}  // namespace multinet
