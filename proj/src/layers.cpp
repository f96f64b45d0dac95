#include "voxelprior/layers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>

namespace voxelprior {
namespace {

using Ext3 = std::array<std::size_t, 3>;

// Convolution over three spatial axes; 2D convolutions run with a unit
// leading axis.
struct ConvGeometry {
  std::size_t cin = 0;
  std::size_t cout = 0;
  Ext3 in{};
  Ext3 kernel{};
  Ext3 out{};
  Ext3 before{};
  Ext3 padded{};
  std::size_t stride = 1;

  std::size_t padded_volume() const { return padded[0] * padded[1] * padded[2]; }
  std::size_t out_volume() const { return out[0] * out[1] * out[2]; }
  std::size_t in_volume() const { return in[0] * in[1] * in[2]; }
  std::size_t kernel_volume() const { return kernel[0] * kernel[1] * kernel[2]; }
  // Stride-1 kernels write rows over (axis1, axis2) with the padded axis-2
  // pitch; columns past out[2] hold scratch values.
  std::size_t wide_plane() const { return out[1] * padded[2]; }
  std::size_t slack() const { return padded[1] * padded[2] + padded[2] + kernel[2]; }
};

[[noreturn]] void fail(const char* op, const std::string& msg) {
  throw std::invalid_argument(std::string(op) + ": " + msg);
}

ConvGeometry make_geometry(const char* op, const Tensor& input,
                           const Tensor& weights, Padding padding,
                           std::size_t stride, bool two_d) {
  const std::size_t spatial = two_d ? 2 : 3;
  if (input.rank() != spatial + 1) {
    fail(op, "input must have rank " + std::to_string(spatial + 1) + ", got " +
                 shape_string(input.shape()));
  }
  if (weights.rank() != spatial + 2) {
    fail(op, "weights must have rank " + std::to_string(spatial + 2) +
                 ", got " + shape_string(weights.shape()));
  }
  if (stride == 0) fail(op, "stride must be positive");
  ConvGeometry g;
  g.cin = input.extent(0);
  g.cout = weights.extent(0);
  if (weights.extent(1) != g.cin) {
    fail(op, "input has " + std::to_string(g.cin) +
                 " channels but weights expect " +
                 std::to_string(weights.extent(1)) + " (weights " +
                 shape_string(weights.shape()) + ")");
  }
  g.stride = stride;
  const std::size_t offset = two_d ? 1 : 0;
  if (two_d) {
    g.in[0] = 1;
    g.kernel[0] = 1;
  }
  for (std::size_t a = offset; a < 3; ++a) {
    g.in[a] = input.extent(1 + a - offset);
    g.kernel[a] = weights.extent(2 + a - offset);
  }
  for (std::size_t a = 0; a < 3; ++a) {
    const std::size_t n = g.in[a];
    const std::size_t k = g.kernel[a];
    const std::size_t s = a < offset ? 1 : stride;
    if (padding == Padding::valid) {
      if (k > n) {
        fail(op, "kernel " + shape_string(weights.shape()) +
                     " does not fit input " + shape_string(input.shape()));
      }
      g.out[a] = (n - k) / s + 1;
      g.before[a] = 0;
      g.padded[a] = n;
    } else {
      g.out[a] = (n + s - 1) / s;
      const std::size_t needed = (g.out[a] - 1) * s + k;
      const std::size_t total = needed > n ? needed - n : 0;
      g.before[a] = total / 2;
      g.padded[a] = n + total;
    }
  }
  return g;
}

void check_bias(const char* op, const ConvGeometry& g, const Tensor& bias) {
  if (bias.rank() != 1 || bias.extent(0) != g.cout) {
    fail(op, "bias must have shape [" + std::to_string(g.cout) + "], got " +
                 shape_string(bias.shape()));
  }
}

// Zero-padded copy of the input with trailing slack for wide-row reads.
std::vector<double> pad_input(const ConvGeometry& g, const double* x) {
  const std::size_t pv = g.padded_volume();
  std::vector<double> xp(g.cin * pv + g.slack(), 0.0);
  const std::size_t p12 = g.padded[1] * g.padded[2];
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t i0 = 0; i0 < g.in[0]; ++i0) {
      for (std::size_t i1 = 0; i1 < g.in[1]; ++i1) {
        const double* src = x + ((c * g.in[0] + i0) * g.in[1] + i1) * g.in[2];
        double* dst = xp.data() + c * pv + (i0 + g.before[0]) * p12 +
                      (i1 + g.before[1]) * g.padded[2] + g.before[2];
        std::copy(src, src + g.in[2], dst);
      }
    }
  }
  return xp;
}

void crop_padded(const ConvGeometry& g, const double* gxp, double* gx) {
  const std::size_t pv = g.padded_volume();
  const std::size_t p12 = g.padded[1] * g.padded[2];
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t i0 = 0; i0 < g.in[0]; ++i0) {
      for (std::size_t i1 = 0; i1 < g.in[1]; ++i1) {
        const double* src = gxp + c * pv + (i0 + g.before[0]) * p12 +
                            (i1 + g.before[1]) * g.padded[2] + g.before[2];
        std::copy(src, src + g.in[2],
                  gx + ((c * g.in[0] + i0) * g.in[1] + i1) * g.in[2]);
      }
    }
  }
}

inline void axpy(double* dst, double w, const double* src, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) dst[j] += w * src[j];
}

inline double dot(const double* a, const double* b, std::size_t n);

// GCC/Clang vector extension: lane-wise mul and add, same rounding as scalar.
using Vec8 = double __attribute__((vector_size(64)));

inline Vec8 load8(const double* p) {
  Vec8 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store8(double* p, Vec8 v) { std::memcpy(p, &v, sizeof v); }

inline double dot(const double* a, const double* b, std::size_t n) {
  Vec8 acc[4] = {};
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    for (std::size_t k = 0; k < 4; ++k) acc[k] += load8(a + i + 8 * k) * load8(b + i + 8 * k);
  }
  const Vec8 total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  double s = 0.0;
  for (std::size_t k = 0; k < 8; ++k) s += total[k];
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

// out[k] = dot(a, base + off[k]) for K taps sharing the loads of `a`.
template <std::size_t K>
inline void dot_taps(const double* a, const double* base, const std::size_t* off,
                     std::size_t n, double* out) {
  Vec8 acc[K][2] = {};
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const Vec8 a0 = load8(a + i);
    const Vec8 a1 = load8(a + i + 8);
    for (std::size_t k = 0; k < K; ++k) {
      acc[k][0] += a0 * load8(base + off[k] + i);
      acc[k][1] += a1 * load8(base + off[k] + i + 8);
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    const Vec8 total = acc[k][0] + acc[k][1];
    double s = 0.0;
    for (std::size_t l = 0; l < 8; ++l) s += total[l];
    for (std::size_t r = i; r < n; ++r) s += a[r] * base[off[k] + r];
    out[k] = s;
  }
}

void dot_many(const double* a, const double* base, const std::size_t* off,
              std::size_t taps, std::size_t n, double* out) {
  std::size_t t = 0;
  for (; t + 4 <= taps; t += 4) dot_taps<4>(a, base, off + t, n, out + t);
  for (; t < taps; ++t) dot_taps<1>(a, base, off + t, n, out + t);
}

// kVecs independent 8-lane accumulators keep the add pipeline busy.
template <std::size_t kVecs>
inline void accumulate_block(double* dst, const double* base, const std::size_t* off,
                             const double* w, std::size_t taps) {
  Vec8 v[kVecs];
  for (std::size_t i = 0; i < kVecs; ++i) v[i] = load8(dst + 8 * i);
  for (std::size_t t = 0; t < taps; ++t) {
    const Vec8 wt = Vec8{} + w[t];
    const double* s = base + off[t];
    for (std::size_t i = 0; i < kVecs; ++i) v[i] += wt * load8(s + 8 * i);
  }
  for (std::size_t i = 0; i < kVecs; ++i) store8(dst + 8 * i, v[i]);
}

void accumulate_taps(double* dst, const double* base, const std::size_t* off,
                     const double* w, std::size_t taps, std::size_t n) {
  std::size_t j = 0;
  for (; j + 32 <= n; j += 32) accumulate_block<4>(dst + j, base + j, off, w, taps);
  for (; j + 8 <= n; j += 8) accumulate_block<1>(dst + j, base + j, off, w, taps);
  for (; j < n; ++j) {
    double v = dst[j];
    for (std::size_t t = 0; t < taps; ++t) v += w[t] * base[off[t] + j];
    dst[j] = v;
  }
}

// Offsets of every (channel, k0, k1, k2) tap inside the padded input.
std::vector<std::size_t> tap_offsets(const ConvGeometry& g, std::size_t channels,
                                     std::size_t channel_pitch) {
  const std::size_t p12 = g.padded[1] * g.padded[2];
  std::vector<std::size_t> off;
  off.reserve(channels * g.kernel_volume());
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t k0 = 0; k0 < g.kernel[0]; ++k0)
      for (std::size_t k1 = 0; k1 < g.kernel[1]; ++k1)
        for (std::size_t k2 = 0; k2 < g.kernel[2]; ++k2)
          off.push_back(c * channel_pitch + k0 * p12 + k1 * g.padded[2] + k2);
  return off;
}

// Per output element: bias, then += w * x over (ci, k0, k1, k2) in
// lexicographic order. Padding cells contribute exact zeros.
void conv_forward(const ConvGeometry& g, const double* x, const double* w,
                  const double* b, double* y) {
  const std::vector<double> xp = pad_input(g, x);
  const std::size_t pv = g.padded_volume();
  const std::size_t p12 = g.padded[1] * g.padded[2];
  const std::size_t kv = g.kernel_volume();

  if (g.stride == 1) {
    const std::size_t plane = g.wide_plane();
    const std::vector<std::size_t> off = tap_offsets(g, g.cin, pv);
    std::vector<double> acc(plane);
    for (std::size_t co = 0; co < g.cout; ++co) {
      for (std::size_t o0 = 0; o0 < g.out[0]; ++o0) {
        std::fill(acc.begin(), acc.end(), b[co]);
        accumulate_taps(acc.data(), xp.data() + o0 * p12, off.data(),
                        w + co * g.cin * kv, off.size(), plane);
        for (std::size_t o1 = 0; o1 < g.out[1]; ++o1) {
          const double* row = acc.data() + o1 * g.padded[2];
          y = std::copy(row, row + g.out[2], y);
        }
      }
    }
    return;
  }

  const std::size_t s = g.stride;
  for (std::size_t co = 0; co < g.cout; ++co) {
    for (std::size_t o0 = 0; o0 < g.out[0]; ++o0) {
      for (std::size_t o1 = 0; o1 < g.out[1]; ++o1) {
        for (std::size_t o2 = 0; o2 < g.out[2]; ++o2) {
          double sum = b[co];
          const double* wk = w + co * g.cin * kv;
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            for (std::size_t k0 = 0; k0 < g.kernel[0]; ++k0) {
              for (std::size_t k1 = 0; k1 < g.kernel[1]; ++k1) {
                const double* src = xp.data() + ci * pv +
                                    (o0 * s + k0) * p12 +
                                    (o1 * s + k1) * g.padded[2] + o2 * s;
                for (std::size_t k2 = 0; k2 < g.kernel[2]; ++k2) {
                  sum += *wk++ * src[k2];
                }
              }
            }
          }
          *y++ = sum;
        }
      }
    }
  }
}

void conv_backward(const ConvGeometry& g, const double* x, const double* w,
                   const double* gy, double* gx, double* gw, double* gb) {
  const std::vector<double> xp = pad_input(g, x);
  const std::size_t pv = g.padded_volume();
  const std::size_t p12 = g.padded[1] * g.padded[2];
  const std::size_t kv = g.kernel_volume();
  const std::size_t ov = g.out_volume();

  for (std::size_t co = 0; co < g.cout; ++co) {
    double s = 0.0;
    for (std::size_t i = 0; i < ov; ++i) s += gy[co * ov + i];
    gb[co] = s;
  }

  std::vector<double> gxp;
  if (gx) gxp.assign(g.cin * pv + g.slack(), 0.0);

  if (g.stride == 1) {
    // Output gradients laid out with the padded pitch, zero outside the
    // output box and preceded by a margin, so that every tap reads
    // in-bounds: gx_padded[q] = sum_{co,t} w[co,ci,t] * G[co][q - off_t].
    const std::vector<std::size_t> toff = tap_offsets(g, 1, 0);
    const std::size_t margin = toff.back();
    const std::size_t glen = margin + pv;
    std::vector<double> G(g.cout * glen, 0.0);
    for (std::size_t co = 0; co < g.cout; ++co)
      for (std::size_t o0 = 0; o0 < g.out[0]; ++o0)
        for (std::size_t o1 = 0; o1 < g.out[1]; ++o1) {
          const double* src = gy + ((co * g.out[0] + o0) * g.out[1] + o1) * g.out[2];
          std::copy(src, src + g.out[2],
                    G.data() + co * glen + margin + o0 * p12 + o1 * g.padded[2]);
        }

    const std::size_t span = g.out[0] * p12;
    for (std::size_t co = 0; co < g.cout; ++co)
      for (std::size_t ci = 0; ci < g.cin; ++ci)
        dot_many(G.data() + co * glen + margin, xp.data() + ci * pv, toff.data(), kv,
                 span, gw + (co * g.cin + ci) * kv);

    if (gx) {
      std::vector<std::size_t> off(g.cout * kv);
      std::vector<double> wci(g.cout * kv);
      for (std::size_t co = 0; co < g.cout; ++co)
        for (std::size_t t = 0; t < kv; ++t) off[co * kv + t] = co * glen + margin - toff[t];
      for (std::size_t ci = 0; ci < g.cin; ++ci) {
        for (std::size_t co = 0; co < g.cout; ++co)
          std::copy(w + (co * g.cin + ci) * kv, w + (co * g.cin + ci + 1) * kv,
                    wci.data() + co * kv);
        // Only planes inside the unpadded box are cropped out afterwards.
        const std::size_t first = g.before[0] * p12;
        accumulate_taps(gxp.data() + ci * pv + first, G.data() + first, off.data(),
                        wci.data(), off.size(), g.in[0] * p12);
      }
    }
  } else {
    const std::size_t s = g.stride;
    std::fill(gw, gw + g.cout * g.cin * kv, 0.0);
    for (std::size_t co = 0; co < g.cout; ++co) {
      for (std::size_t o0 = 0; o0 < g.out[0]; ++o0) {
        for (std::size_t o1 = 0; o1 < g.out[1]; ++o1) {
          for (std::size_t o2 = 0; o2 < g.out[2]; ++o2) {
            const double go = *gy++;
            if (go == 0.0) continue;
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
              double* gwk = gw + (co * g.cin + ci) * kv;
              const double* wk = w + (co * g.cin + ci) * kv;
              for (std::size_t k0 = 0; k0 < g.kernel[0]; ++k0) {
                for (std::size_t k1 = 0; k1 < g.kernel[1]; ++k1) {
                  const std::size_t off = ci * pv + (o0 * s + k0) * p12 +
                                          (o1 * s + k1) * g.padded[2] + o2 * s;
                  for (std::size_t k2 = 0; k2 < g.kernel[2]; ++k2) {
                    *gwk++ += go * xp[off + k2];
                    if (gx) gxp[off + k2] += go * *wk;
                    ++wk;
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  if (gx) crop_padded(g, gxp.data(), gx);
}

Shape output_shape(const ConvGeometry& g, bool two_d) {
  if (two_d) return {g.cout, g.out[1], g.out[2]};
  return {g.cout, g.out[0], g.out[1], g.out[2]};
}

LayerGrad conv_backward_tensors(const char* op, const ConvGeometry& g,
                                const Tensor& input, const Tensor& weights,
                                const Tensor& grad_output, bool two_d,
                                bool with_input_grad) {
  if (grad_output.shape() != output_shape(g, two_d)) {
    fail(op, "grad_output shape " + shape_string(grad_output.shape()) +
                 " does not match forward output " +
                 shape_string(output_shape(g, two_d)));
  }
  LayerGrad grads;
  if (with_input_grad) grads.input_grad = Tensor(input.shape());
  grads.weight_grad = Tensor(weights.shape());
  grads.bias_grad = Tensor(Shape{g.cout});
  conv_backward(g, input.data(), weights.data(), grad_output.data(),
                with_input_grad ? grads.input_grad.data() : nullptr,
                grads.weight_grad.data(), grads.bias_grad.data());
  return grads;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              Padding padding) {
  const auto g = make_geometry("conv2d", input, weights, padding, 1, true);
  check_bias("conv2d", g, bias);
  Tensor out(output_shape(g, true));
  conv_forward(g, input.data(), weights.data(), bias.data(), out.data());
  return out;
}

LayerGrad conv2d_backward(const Tensor& input, const Tensor& weights,
                          const Tensor& grad_output, Padding padding,
                          bool with_input_grad) {
  const auto g = make_geometry("conv2d_backward", input, weights, padding, 1, true);
  return conv_backward_tensors("conv2d_backward", g, input, weights,
                               grad_output, true, with_input_grad);
}

Tensor conv3d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              Padding padding, std::size_t stride) {
  const auto g = make_geometry("conv3d", input, weights, padding, stride, false);
  check_bias("conv3d", g, bias);
  Tensor out(output_shape(g, false));
  conv_forward(g, input.data(), weights.data(), bias.data(), out.data());
  return out;
}

LayerGrad conv3d_backward(const Tensor& input, const Tensor& weights,
                          const Tensor& grad_output, Padding padding,
                          std::size_t stride, bool with_input_grad) {
  const auto g =
      make_geometry("conv3d_backward", input, weights, padding, stride, false);
  return conv_backward_tensors("conv3d_backward", g, input, weights,
                               grad_output, false, with_input_grad);
}

namespace {
void check_pool_input(const char* op, const Tensor& input) {
  if (input.rank() != 3) {
    fail(op, "input must be [C,H,W], got " + shape_string(input.shape()));
  }
  if (input.extent(1) % 2 || input.extent(2) % 2) {
    fail(op, "2x2 pooling needs even extents, got " + shape_string(input.shape()));
  }
}

// Offset of the window maximum; strict comparison keeps the first in scan order.
inline std::size_t window_argmax(const double* x, std::size_t width) {
  const std::array<std::size_t, 4> offsets{0, 1, width, width + 1};
  std::size_t best = 0;
  for (std::size_t i = 1; i < 4; ++i) {
    if (x[offsets[i]] > x[best]) best = offsets[i];
  }
  return best;
}
}  // namespace

Tensor maxpool2d(const Tensor& input) {
  check_pool_input("maxpool2d", input);
  const std::size_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
  Tensor out(Shape{c, h / 2, w / 2});
  double* y = out.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h; i += 2) {
      for (std::size_t j = 0; j < w; j += 2) {
        const double* base = input.data() + (ch * h + i) * w + j;
        *y++ = base[window_argmax(base, w)];
      }
    }
  }
  return out;
}

Tensor maxpool2d_backward(const Tensor& input, const Tensor& grad_output) {
  check_pool_input("maxpool2d_backward", input);
  const std::size_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
  if (grad_output.shape() != Shape{c, h / 2, w / 2}) {
    fail("maxpool2d_backward", "grad_output shape " +
                                   shape_string(grad_output.shape()) +
                                   " does not match pooled input");
  }
  Tensor grad(input.shape());
  const double* g = grad_output.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h; i += 2) {
      for (std::size_t j = 0; j < w; j += 2) {
        const std::size_t base = (ch * h + i) * w + j;
        grad[base + window_argmax(input.data() + base, w)] = *g++;
      }
    }
  }
  return grad;
}

namespace {
void check_dense(const char* op, const Tensor& input, const Tensor& weights) {
  if (weights.rank() != 2) {
    fail(op, "weights must be [M,N], got " + shape_string(weights.shape()));
  }
  if (weights.extent(1) != input.size()) {
    fail(op, "input has " + std::to_string(input.size()) +
                 " values but weights expect " + std::to_string(weights.extent(1)));
  }
}
}  // namespace

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  check_dense("dense", input, weights);
  const std::size_t m = weights.extent(0), n = weights.extent(1);
  if (bias.rank() != 1 || bias.extent(0) != m) {
    fail("dense", "bias must have shape [" + std::to_string(m) + "], got " +
                      shape_string(bias.shape()));
  }
  Tensor out(Shape{m});
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = weights.data() + r * n;
    double sum = bias[r];
    for (std::size_t c = 0; c < n; ++c) sum += row[c] * input[c];
    out[r] = sum;
  }
  return out;
}

LayerGrad dense_backward(const Tensor& input, const Tensor& weights,
                         const Tensor& grad_output) {
  check_dense("dense_backward", input, weights);
  const std::size_t m = weights.extent(0), n = weights.extent(1);
  if (grad_output.size() != m) {
    fail("dense_backward", "grad_output has " + std::to_string(grad_output.size()) +
                               " values, expected " + std::to_string(m));
  }
  LayerGrad grads{Tensor(input.shape()), Tensor(weights.shape()), Tensor(Shape{m})};
  for (std::size_t r = 0; r < m; ++r) {
    const double go = grad_output[r];
    grads.bias_grad[r] = go;
    axpy(grads.weight_grad.data() + r * n, go, input.data(), n);
    axpy(grads.input_grad.data(), go, weights.data() + r * n, n);
  }
  return grads;
}

Activation Activation::leaky_relu(double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("leaky_relu alpha must lie in [0,1), got " +
                                std::to_string(alpha));
  }
  return {Kind::leaky_relu, alpha};
}

namespace {
inline double sigmoid(double v) {
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  double s;
  if (v >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-v));
  } else {
    const double e = std::exp(v);
    s = e / (1.0 + e);
  }
  return std::clamp(s, lo, hi);
}
}  // namespace

Tensor activate(const Tensor& input, Activation act) {
  Tensor out(input.shape());
  const std::size_t n = input.size();
  const double* x = input.data();
  double* y = out.data();
  switch (act.kind) {
    case Activation::Kind::relu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case Activation::Kind::leaky_relu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : act.alpha * x[i];
      break;
    case Activation::Kind::sigmoid:
      for (std::size_t i = 0; i < n; ++i) y[i] = sigmoid(x[i]);
      break;
  }
  return out;
}

Tensor activate_backward(const Tensor& input, const Tensor& output,
                         const Tensor& grad_output, Activation act) {
  require_same_shape(input, grad_output, "activate_backward");
  Tensor grad(input.shape());
  const std::size_t n = input.size();
  const double* x = input.data();
  const double* g = grad_output.data();
  double* d = grad.data();
  switch (act.kind) {
    case Activation::Kind::relu:
      for (std::size_t i = 0; i < n; ++i) d[i] = x[i] > 0.0 ? g[i] : 0.0;
      break;
    case Activation::Kind::leaky_relu:
      for (std::size_t i = 0; i < n; ++i) d[i] = x[i] > 0.0 ? g[i] : act.alpha * g[i];
      break;
    case Activation::Kind::sigmoid: {
      require_same_shape(input, output, "activate_backward");
      const double* y = output.data();
      for (std::size_t i = 0; i < n; ++i) d[i] = g[i] * y[i] * (1.0 - y[i]);
      break;
    }
  }
  return grad;
}

double bce_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "bce_loss");
  const std::size_t n = pred.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(pred[i], kBceEpsilon, 1.0 - kBceEpsilon);
    const double t = target[i];
    sum += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
  }
  return sum / static_cast<double>(n);
}

Tensor bce_loss_backward(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "bce_loss_backward");
  Tensor grad(pred.shape());
  const double scale = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    // The clamp is flat outside [eps, 1-eps].
    if (p < kBceEpsilon || p > 1.0 - kBceEpsilon) continue;
    grad[i] = scale * (p - target[i]) / (p * (1.0 - p));
  }
  return grad;
}

Tensor upsample3d(const Tensor& input) {
  if (input.rank() != 4) {
    fail("upsample3d", "input must be [C,D1,D2,D3], got " + shape_string(input.shape()));
  }
  const std::size_t c = input.extent(0), a = input.extent(1), b = input.extent(2),
                    d = input.extent(3);
  Tensor out(Shape{c, 2 * a, 2 * b, 2 * d});
  double* y = out.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < 2 * a; ++i) {
      for (std::size_t j = 0; j < 2 * b; ++j) {
        const double* row = input.data() + ((ch * a + i / 2) * b + j / 2) * d;
        for (std::size_t k = 0; k < 2 * d; ++k) *y++ = row[k / 2];
      }
    }
  }
  return out;
}

Tensor upsample3d_backward(const Tensor& grad_output) {
  if (grad_output.rank() != 4 || grad_output.extent(1) % 2 ||
      grad_output.extent(2) % 2 || grad_output.extent(3) % 2) {
    fail("upsample3d_backward",
         "grad_output must be [C,2a,2b,2c], got " + shape_string(grad_output.shape()));
  }
  const std::size_t c = grad_output.extent(0), a = grad_output.extent(1) / 2,
                    b = grad_output.extent(2) / 2, d = grad_output.extent(3) / 2;
  Tensor grad(Shape{c, a, b, d});
  const double* g = grad_output.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < 2 * a; ++i) {
      for (std::size_t j = 0; j < 2 * b; ++j) {
        double* row = grad.data() + ((ch * a + i / 2) * b + j / 2) * d;
        for (std::size_t k = 0; k < 2 * d; ++k) row[k / 2] += *g++;
      }
    }
  }
  return grad;
}

Tensor numeric_gradient(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h) {
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(const Tensor& analytic, const Tensor& numeric) {
  require_same_shape(analytic, numeric, "max_relative_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), 1e-6});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

}  // namespace voxelprior
