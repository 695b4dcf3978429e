#include "advface/model.hpp"

#include <variant>

#include "advface/errors.hpp"

namespace advface {

EmbeddingModel::EmbeddingModel(Shape input_shape, std::vector<Layer> layers, double input_scale)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)), input_scale_(input_scale) {
  if (input_shape_.empty() || shape_size(input_shape_) == 0) throw ShapeError("model input shape must be non-empty");
  if (!(input_scale_ > 0.0)) throw ConfigError("model input scale must be positive");
  if (layers_.empty() || !std::holds_alternative<L2Normalize>(layers_.back()))
    throw ConfigError("model must end with an l2normalize layer");
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i)
    if (std::holds_alternative<L2Normalize>(layers_[i]))
      throw ConfigError("model must contain exactly one l2normalize layer");
  Shape s = input_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    try {
      s = output_shape(layers_[i], s);
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + " (" + layer_kind(layers_[i]) + "): " + e.what());
    }
  }
  embedding_dim_ = s.at(0);
}

void EmbeddingModel::check_input(const Tensor& image) const {
  if (image.shape() != input_shape_)
    throw ShapeError("input shape " + shape_to_string(image.shape()) + " does not match model input " +
                     shape_to_string(input_shape_));
  if (!image.all_finite()) throw NumericError("non-finite input image", -1);
}

ForwardTrace EmbeddingModel::forward_trace(const Tensor& image) const {
  check_input(image);
  ForwardTrace trace;
  trace.activations.reserve(layers_.size() + 1);
  trace.activations.push_back(input_scale_ * image);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    trace.activations.push_back(layer_forward(layers_[i], trace.activations.back()));
    if (!trace.activations.back().all_finite())
      throw NumericError("non-finite activation after " + layer_kind(layers_[i]), static_cast<int>(i));
  }
  trace.degenerate = l2_norm(trace.activations[layers_.size() - 1].data()) == 0.0;
  return trace;
}

Tensor EmbeddingModel::forward(const Tensor& image) const { return forward_trace(image).output(); }

Tensor EmbeddingModel::backward(const ForwardTrace& trace, const Tensor& grad_embedding, ParamGrads* grads) const {
  if (grad_embedding.shape() != trace.output().shape())
    throw ShapeError("embedding gradient has shape " + shape_to_string(grad_embedding.shape()));
  std::size_t param_index = 0;
  std::vector<std::size_t> offsets(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    offsets[i] = param_index;
    param_index += layer_parameters(layers_[i]).size();
  }
  Tensor g = grad_embedding;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    std::span<Tensor> pg;
    const std::size_t n = layer_parameters(layers_[i]).size();
    if (grads && n > 0) pg = std::span<Tensor>(grads->data() + offsets[i], n);
    g = layer_backward(layers_[i], trace.activations[i], trace.activations[i + 1], g, pg);
    if (!g.all_finite())
      throw NumericError("non-finite gradient through " + layer_kind(layers_[i]), static_cast<int>(i));
  }
  for (auto& v : g.values()) v *= input_scale_;
  return g.reshaped(input_shape_);
}

DistanceGradient EmbeddingModel::distance_gradient(const Tensor& image, const Tensor& reference) const {
  const ForwardTrace trace = forward_trace(image);
  const Tensor& z = trace.output();
  if (reference.size() != z.size())
    throw ShapeError("reference embedding has dimension " + std::to_string(reference.size()) + ", expected " +
                     std::to_string(z.size()));
  DistanceGradient out;
  Tensor g(z.shape());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double diff = z[i] - reference[i];
    out.distance += diff * diff;
    g[i] = 2.0 * diff;
  }
  out.gradient = backward(trace, g);
  out.embedding = z;
  return out;
}

Tensor EmbeddingModel::input_gradient(const Tensor& image, const Tensor& reference) const {
  return distance_gradient(image, reference).gradient;
}

std::vector<Tensor*> EmbeddingModel::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : layers_)
    for (auto* p : layer_parameters(l)) out.push_back(p);
  return out;
}

std::vector<const Tensor*> EmbeddingModel::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& l : layers_)
    for (const auto* p : layer_parameters(l)) out.push_back(p);
  return out;
}

ParamGrads EmbeddingModel::zero_grads() const {
  ParamGrads g;
  for (const auto* p : parameters()) g.emplace_back(p->shape());
  return g;
}

std::size_t EmbeddingModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->size();
  return n;
}

}  // namespace advface
