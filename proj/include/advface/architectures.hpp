#pragma once

#include <cstdint>
#include <vector>

#include "advface/model.hpp"

namespace advface {

// Small convolutional embedding network:
//   [conv(k, stride) -> relu] per entry of conv_channels
//   -> optional 2x2 average pool -> flatten -> dense(embedding_dim) -> l2normalize
struct ToyArchitecture {
  std::vector<std::size_t> conv_channels{8, 16};
  std::size_t kernel = 3;
  std::size_t stride = 2;
  bool avgpool = false;
  std::size_t embedding_dim = 32;
};

EmbeddingModel build_toy_model(const Shape& input_shape, const ToyArchitecture& arch, std::uint64_t seed);

}  // namespace advface
