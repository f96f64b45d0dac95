#pragma once

#include <cstddef>
#include <functional>

#include "voxelprior/tensor.hpp"

namespace voxelprior {

// `same` zero-pads so that the output extent is ceil(in / stride); the extra
// cell of an even total pad goes after. `valid` never pads.
enum class Padding { same, valid };

struct LayerGrad {
  Tensor input_grad;
  Tensor weight_grad;
  Tensor bias_grad;
};

// input [C_in,H,W], weights [C_out,C_in,kH,kW], bias [C_out]; stride 1.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              Padding padding);
// Skips input_grad (left empty) when `with_input_grad` is false.
LayerGrad conv2d_backward(const Tensor& input, const Tensor& weights,
                          const Tensor& grad_output, Padding padding,
                          bool with_input_grad = true);

// input [C_in,D1,D2,D3], weights [C_out,C_in,k,k,k], bias [C_out].
Tensor conv3d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              Padding padding, std::size_t stride = 1);
LayerGrad conv3d_backward(const Tensor& input, const Tensor& weights,
                          const Tensor& grad_output, Padding padding,
                          std::size_t stride = 1, bool with_input_grad = true);

// 2x2 window, stride 2. Ties route to the first cell in scan order.
Tensor maxpool2d(const Tensor& input);
Tensor maxpool2d_backward(const Tensor& input, const Tensor& grad_output);

// input [N] (any shape of volume N is accepted), weights [M,N], bias [M].
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);
LayerGrad dense_backward(const Tensor& input, const Tensor& weights,
                         const Tensor& grad_output);

struct Activation {
  enum class Kind { relu, leaky_relu, sigmoid };
  Kind kind = Kind::relu;
  double alpha = 0.0;

  static Activation relu() { return {Kind::relu, 0.0}; }
  static Activation leaky_relu(double alpha);
  static Activation sigmoid() { return {Kind::sigmoid, 0.0}; }
};

Tensor activate(const Tensor& input, Activation act);
// `output` is the forward result; sigmoid differentiates through it, the
// rectifiers through `input`. The derivative at exactly zero is alpha.
Tensor activate_backward(const Tensor& input, const Tensor& output,
                         const Tensor& grad_output, Activation act);

inline constexpr double kBceEpsilon = 1e-7;

// Mean binary cross-entropy; predictions are clamped to [eps, 1-eps].
double bce_loss(const Tensor& pred, const Tensor& target);
Tensor bce_loss_backward(const Tensor& pred, const Tensor& target);

// Nearest-neighbour 2x upsampling of [C,D1,D2,D3].
Tensor upsample3d(const Tensor& input);
Tensor upsample3d_backward(const Tensor& grad_output);

// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h for every coordinate.
Tensor numeric_gradient(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h = 1e-4);

// |a-n| / max(|a|,|n|,1e-6), maximised over elements.
double max_relative_error(const Tensor& analytic, const Tensor& numeric);

}  // namespace voxelprior
