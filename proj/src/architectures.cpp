#include "advface/architectures.hpp"

#include "advface/errors.hpp"
#include "advface/rng.hpp"

namespace advface {

EmbeddingModel build_toy_model(const Shape& input_shape, const ToyArchitecture& arch, std::uint64_t seed) {
  if (!is_image_shape(input_shape)) throw ShapeError("toy models take H x W x C inputs");
  if (arch.embedding_dim == 0) throw ConfigError("embedding dimension must be positive");
  Rng rng(seed);
  std::vector<Layer> layers;
  Shape shape = input_shape;
  for (std::size_t out : arch.conv_channels) {
    layers.emplace_back(make_conv2d(shape[2], out, arch.kernel, arch.stride, arch.kernel / 2, rng));
    shape = output_shape(layers.back(), shape);
    layers.emplace_back(Relu{});
  }
  if (arch.avgpool) {
    layers.emplace_back(AvgPool2d{});
    shape = output_shape(layers.back(), shape);
  }
  layers.emplace_back(Flatten{});
  layers.emplace_back(make_dense(shape_size(shape), arch.embedding_dim, rng));
  layers.emplace_back(L2Normalize{});
  return EmbeddingModel(input_shape, std::move(layers));
}

}  // namespace advface
