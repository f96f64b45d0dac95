#pragma once

// Direct-loop reference kernels. They share no code with the library
// kernels and accumulate in the documented order:
// bias, then input channel, then kernel offsets in scan order.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "voxelprior/layers.hpp"
#include "voxelprior/tensor.hpp"

namespace oracle {

using voxelprior::Padding;
using voxelprior::Shape;
using voxelprior::Tensor;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

struct Axis {
  long out;
  long before;
};

inline Axis axis(long in, long k, long stride, Padding padding) {
  if (padding == Padding::valid) return {(in - k) / stride + 1, 0};
  const long out = (in + stride - 1) / stride;
  const long total = std::max((out - 1) * stride + k - in, 0L);
  return {out, total / 2};
}

inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
                     Padding padding) {
  const long cin = x.extent(0), h = x.extent(1), wd = x.extent(2);
  const long cout = w.extent(0), kh = w.extent(2), kw = w.extent(3);
  const Axis ay = axis(h, kh, 1, padding), ax = axis(wd, kw, 1, padding);
  Tensor y(Shape{static_cast<std::size_t>(cout), static_cast<std::size_t>(ay.out),
                 static_cast<std::size_t>(ax.out)});
  for (long co = 0; co < cout; ++co) {
    for (long oy = 0; oy < ay.out; ++oy) {
      for (long ox = 0; ox < ax.out; ++ox) {
        double sum = b[co];
        for (long ci = 0; ci < cin; ++ci) {
          for (long ky = 0; ky < kh; ++ky) {
            for (long kx = 0; kx < kw; ++kx) {
              const long iy = oy + ky - ay.before;
              const long ix = ox + kx - ax.before;
              if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
              sum += w[((co * cin + ci) * kh + ky) * kw + kx] *
                     x[(ci * h + iy) * wd + ix];
            }
          }
        }
        y[(co * ay.out + oy) * ax.out + ox] = sum;
      }
    }
  }
  return y;
}

inline Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b,
                     Padding padding, long stride) {
  const long cin = x.extent(0);
  const long n[3] = {static_cast<long>(x.extent(1)), static_cast<long>(x.extent(2)),
                     static_cast<long>(x.extent(3))};
  const long cout = w.extent(0), k = w.extent(2);
  Axis a[3];
  for (int i = 0; i < 3; ++i) a[i] = axis(n[i], k, stride, padding);
  Tensor y(Shape{static_cast<std::size_t>(cout), static_cast<std::size_t>(a[0].out),
                 static_cast<std::size_t>(a[1].out), static_cast<std::size_t>(a[2].out)});
  std::size_t idx = 0;
  for (long co = 0; co < cout; ++co)
    for (long o0 = 0; o0 < a[0].out; ++o0)
      for (long o1 = 0; o1 < a[1].out; ++o1)
        for (long o2 = 0; o2 < a[2].out; ++o2) {
          double sum = b[co];
          for (long ci = 0; ci < cin; ++ci)
            for (long k0 = 0; k0 < k; ++k0)
              for (long k1 = 0; k1 < k; ++k1)
                for (long k2 = 0; k2 < k; ++k2) {
                  const long i0 = o0 * stride + k0 - a[0].before;
                  const long i1 = o1 * stride + k1 - a[1].before;
                  const long i2 = o2 * stride + k2 - a[2].before;
                  if (i0 < 0 || i0 >= n[0] || i1 < 0 || i1 >= n[1] || i2 < 0 ||
                      i2 >= n[2])
                    continue;
                  sum += w[(((co * cin + ci) * k + k0) * k + k1) * k + k2] *
                         x[((ci * n[0] + i0) * n[1] + i1) * n[2] + i2];
                }
          y[idx++] = sum;
        }
  return y;
}

inline Tensor maxpool2d(const Tensor& x) {
  const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  Tensor y(Shape{c, h / 2, w / 2});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h / 2; ++i)
      for (std::size_t j = 0; j < w / 2; ++j) {
        double best = x[(ch * h + 2 * i) * w + 2 * j];
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj)
            best = std::max(best, x[(ch * h + 2 * i + di) * w + 2 * j + dj]);
        y[(ch * (h / 2) + i) * (w / 2) + j] = best;
      }
  return y;
}

inline Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t m = w.extent(0), n = w.extent(1);
  Tensor y(Shape{m});
  for (std::size_t r = 0; r < m; ++r) {
    double sum = b[r];
    for (std::size_t c = 0; c < n; ++c) sum += w[r * n + c] * x[c];
    y[r] = sum;
  }
  return y;
}

inline double bce(const Tensor& p, const Tensor& t) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double q = p[i];
    if (q < voxelprior::kBceEpsilon) q = voxelprior::kBceEpsilon;
    if (q > 1.0 - voxelprior::kBceEpsilon) q = 1.0 - voxelprior::kBceEpsilon;
    sum += -(t[i] * std::log(q) + (1.0 - t[i]) * std::log(1.0 - q));
  }
  return sum / static_cast<double>(p.size());
}

}  // namespace oracle
