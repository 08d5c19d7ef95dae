#pragma once

#include <initializer_list>
#include <span>

#include "pp/image.hpp"

// Same-padded 2-D convolution (cross-correlation) over planar feature maps,
// with the backward pass needed for training. Weights are laid out
// [out_channel][in_channel][ky][kx]; the kernel size must be odd. All inner
// loops go through the active simd kernel table.

namespace pp {

struct ConvShape {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;

  std::size_t weight_count() const {
    return static_cast<std::size_t>(in_channels) * out_channels * kernel * kernel;
  }
};

/// An empty bias means no bias term.
Image conv2d(const Image& in, const ConvShape& shape, std::span<const double> weight, std::span<const double> bias);

/// Accumulates dL/dweight and dL/dbias into grad_weight / grad_bias and, when
/// grad_in is non-null, overwrites it with dL/din.
void conv2d_backward(const Image& in, const ConvShape& shape, std::span<const double> weight, const Image& grad_out,
                     Image* grad_in, std::span<double> grad_weight, std::span<double> grad_bias);

/// Stacks feature maps of equal extent along the channel axis.
Image concat_channels(std::initializer_list<const Image*> parts);

/// Adds channels [first, first + dst.channels()) of src into dst.
void add_channel_slice(const Image& src, int first, Image& dst);

void relu_inplace(Image& x);

/// grad *= (activation > 0), for a ReLU whose output was `activation`.
void relu_backward_inplace(const Image& activation, Image& grad);

}  // namespace pp
