#pragma once

#include <cstddef>
#include <vector>

#include "advface/layers.hpp"
#include "advface/tensor.hpp"

namespace advface {

// Squared feature distance to a reference embedding and its input gradient.
// `embedding` always equals FaceModel::embed(image).
struct DistanceGradient {
  Tensor embedding;
  double distance = 0.0;
  Tensor gradient;  // d/dx ||f(x) - reference||^2, pixel domain
};

// What an attack or a verifier needs from a face model. Implementations are
// immutable and safe to share across threads.
class FaceModel {
 public:
  virtual ~FaceModel() = default;
  virtual const Shape& input_shape() const = 0;
  virtual Tensor embed(const Tensor& image) const = 0;
  virtual DistanceGradient distance_gradient(const Tensor& image, const Tensor& reference) const = 0;
};

// Activations recorded by a forward pass. activations[0] is the rescaled
// input, activations[i + 1] is the output of layer i.
struct ForwardTrace {
  std::vector<Tensor> activations;
  bool degenerate = false;  // pre-normalisation vector was zero

  const Tensor& output() const { return activations.back(); }
};

// One gradient tensor per trainable tensor, in EmbeddingModel::parameters order.
using ParamGrads = std::vector<Tensor>;

// A feed-forward stack of layers ending in l2 normalisation. Images enter in
// the [0, 255] pixel domain and are multiplied by input_scale before layer 0.
class EmbeddingModel final : public FaceModel {
 public:
  EmbeddingModel(Shape input_shape, std::vector<Layer> layers, double input_scale = 1.0 / 255.0);

  const Shape& input_shape() const override { return input_shape_; }
  std::size_t embedding_dim() const noexcept { return embedding_dim_; }
  double input_scale() const noexcept { return input_scale_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  Tensor forward(const Tensor& image) const;
  ForwardTrace forward_trace(const Tensor& image) const;

  // Reverse pass: returns dL/d(image) given dL/d(embedding). Parameter
  // gradients are accumulated into `grads` when it is non-null.
  Tensor backward(const ForwardTrace& trace, const Tensor& grad_embedding, ParamGrads* grads = nullptr) const;

  // d/dx ||f(x) - reference||^2.
  Tensor input_gradient(const Tensor& image, const Tensor& reference) const;

  Tensor embed(const Tensor& image) const override { return forward(image); }
  DistanceGradient distance_gradient(const Tensor& image, const Tensor& reference) const override;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  ParamGrads zero_grads() const;
  std::size_t parameter_count() const;

 private:
  void check_input(const Tensor& image) const;

  Shape input_shape_;
  std::vector<Layer> layers_;
  double input_scale_;
  std::size_t embedding_dim_ = 0;
};

}  // namespace advface
