#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "advface/tensor.hpp"

namespace advface {

class Rng;

// Fully connected layer on a rank-1 input. weight is out x in.
struct Dense {
  Tensor weight;
  Tensor bias;
};

// 2-D convolution over an H x W x C input with zero padding.
// weight is out x k x k x in.
struct Conv2d {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Tensor weight;
  Tensor bias;
};

struct Relu {};

struct AvgPool2d {
  std::size_t kernel = 2;
  std::size_t stride = 2;
};

struct Flatten {};

// Divides the (flattened) input by its l2 norm. A zero input maps to zero.
struct L2Normalize {};

using Layer = std::variant<Dense, Conv2d, Relu, AvgPool2d, Flatten, L2Normalize>;

std::string layer_kind(const Layer& layer);

// Output shape of `layer` applied to `in`; throws ShapeError when the layer
// cannot consume that shape.
Shape output_shape(const Layer& layer, const Shape& in);

// He-initialised layers. Biases start at zero.
Dense make_dense(std::size_t in, std::size_t out, Rng& rng);
Conv2d make_conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                   std::size_t padding, Rng& rng);

// Trainable tensors of a layer, in a fixed order (weight, bias).
std::vector<Tensor*> layer_parameters(Layer& layer);
std::vector<const Tensor*> layer_parameters(const Layer& layer);

Tensor layer_forward(const Layer& layer, const Tensor& in);

// Given the layer input, its output and dL/d(output), returns dL/d(input).
// When `param_grads` is non-empty, parameter gradients are accumulated into
// it (same order as layer_parameters).
Tensor layer_backward(const Layer& layer, const Tensor& in, const Tensor& out, const Tensor& grad_out,
                      std::span<Tensor> param_grads);

}  // namespace advface
