#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advface/tensor.hpp"

namespace advface {

class Rng;

enum class LossKind { Softmax, ASoftmax, AmSoftmax, Lmcl, ArcFace };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& s);

// Cosine-based heads keep unit-norm class weights.
inline bool is_angular(LossKind kind) { return kind != LossKind::Softmax; }

// Classification head used only during training. Logits:
//   softmax     l_k = W_k . z
//   a_softmax   l_y = s * psi(theta_y),        psi(t) = (-1)^k cos(m t) - 2k on [k pi/m, (k+1) pi/m]
//   am_softmax  l_y = s * (cos theta_y - m)    (lmcl is the same loss)
//   arcface     l_y = s * cos(theta_y + m)     (cos theta_y - m sin(pi - m) once theta_y + m > pi)
// and l_k = s * cos theta_k for k != y in the angular heads.
struct ClassifierHead {
  Tensor weight;  // classes x dim
  LossKind kind = LossKind::AmSoftmax;
  double margin = 0.35;
  double scale = 30.0;

  std::size_t classes() const { return weight.dim(0); }
  std::size_t dim() const { return weight.dim(1); }

  // Rescales every class row to unit norm (angular heads only).
  void renormalize();
  void validate() const;
};

// Default margin per loss: 0.35 additive, 0.5 arcface, 4 a_softmax, 0 softmax.
double default_margin(LossKind kind);

ClassifierHead make_head(std::size_t classes, std::size_t dim, LossKind kind, Rng& rng,
                         std::optional<double> margin = std::nullopt, std::optional<double> scale = std::nullopt);

struct HeadLoss {
  double loss = 0.0;
  Tensor logits;
  Tensor grad_embedding;  // dL/dz
  Tensor grad_weight;     // dL/dW
};

// Cross-entropy over the margin-adjusted logits for one sample.
HeadLoss margin_loss(const ClassifierHead& head, const Tensor& embedding, std::size_t label);

// Logits without any margin (s * cos for angular heads, W z for softmax).
Tensor plain_logits(const ClassifierHead& head, const Tensor& embedding);

// Pulls a gradient w.r.t. plain logits back to the embedding and, when
// grad_weight is non-null, accumulates the weight gradient.
Tensor plain_logits_backward(const ClassifierHead& head, const Tensor& embedding, const Tensor& grad_logits,
                             Tensor* grad_weight);

std::vector<double> softmax(std::span<const double> logits);

// KL(p || q) for two logit vectors under a temperature-1 softmax, with the
// gradients with respect to both logit vectors.
struct KlResult {
  double value = 0.0;
  Tensor grad_p_logits;
  Tensor grad_q_logits;
};
KlResult kl_divergence(const Tensor& p_logits, const Tensor& q_logits);

}  // namespace advface
