#pragma once

// Graph-free numeric kernels shared by the autodiff ops, the procedural guided
// backward pass, and fast inference.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "xdn/tensor.hpp"

namespace xdn::kernels {

/// Output extent of a stride-1 convolution.
std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t padding);

/// Cross-correlation. `bias` may be null.
Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias, std::size_t padding);

/// Adjoint of conv2d_forward with respect to the input.
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape,
                             std::size_t padding);

/// Accumulates dL/dW (and dL/db when `grad_bias` is non-null).
void conv2d_backward_params(const Tensor& grad_out, const Tensor& input, std::size_t padding,
                            Tensor& grad_weight, Tensor* grad_bias);

/// Kernel of the input adjoint expressed as a forward convolution: channels swapped, taps flipped.
Tensor flip_transpose_kernel(const Tensor& weight);

struct PoolResult {
  Tensor output;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

/// 2x2 stride-2 max pooling; ties resolve to the first maximum in row-major window order.
PoolResult maxpool2x2_forward(const Tensor& input);

/// Routes each output gradient to its recorded argmax.
Tensor maxpool2x2_scatter(const Tensor& grad_out, const std::vector<std::uint32_t>& argmax,
                          const Shape& input_shape);

/// Adjoint of the scatter: reads each recorded argmax position.
Tensor maxpool2x2_gather(const Tensor& grad_in, const std::vector<std::uint32_t>& argmax,
                         const Shape& output_shape);

/// One output sample of 1-D linear interpolation with half-pixel centers.
struct LinearTap {
  std::size_t i0 = 0;
  std::size_t i1 = 0;
  double w0 = 1.0;
  double w1 = 0.0;
};

/// Taps for resampling `in` samples onto `out` samples (align-corners false, edge clamped).
std::vector<LinearTap> linear_taps(std::size_t in, std::size_t out);

/// Separable bilinear resampling of the last two axes.
Tensor bilinear_resample(const Tensor& input, std::size_t out_h, std::size_t out_w);

/// Exact adjoint of bilinear_resample: maps an (out_h, out_w) field back onto (in_h, in_w).
Tensor bilinear_resample_adjoint(const Tensor& grad_out, std::size_t in_h, std::size_t in_w);

Tensor upsample2x_forward(const Tensor& input);
Tensor upsample2x_adjoint(const Tensor& grad_out);

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& t, std::size_t begin, std::size_t count);

double sigmoid(double x);

}  // namespace xdn::kernels
