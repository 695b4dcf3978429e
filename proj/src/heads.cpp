#include "advface/heads.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "advface/errors.hpp"
#include "advface/rng.hpp"

namespace advface {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Softmax: return "softmax";
    case LossKind::ASoftmax: return "a_softmax";
    case LossKind::AmSoftmax: return "am_softmax";
    case LossKind::Lmcl: return "lmcl";
    case LossKind::ArcFace: return "arcface";
  }
  return "softmax";
}

LossKind parse_loss_kind(const std::string& s) {
  for (LossKind k : {LossKind::Softmax, LossKind::ASoftmax, LossKind::AmSoftmax, LossKind::Lmcl, LossKind::ArcFace})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown loss '" + s + "'");
}

double default_margin(LossKind kind) {
  switch (kind) {
    case LossKind::Softmax: return 0.0;
    case LossKind::ASoftmax: return 4.0;
    case LossKind::AmSoftmax:
    case LossKind::Lmcl: return 0.35;
    case LossKind::ArcFace: return 0.5;
  }
  return 0.0;
}

void ClassifierHead::renormalize() {
  if (!is_angular(kind)) return;
  const std::size_t d = dim();
  for (std::size_t k = 0; k < classes(); ++k) {
    const double n = l2_norm(weight.data().subspan(k * d, d));
    if (n > 0.0)
      for (std::size_t i = 0; i < d; ++i) weight[k * d + i] /= n;
  }
}

void ClassifierHead::validate() const {
  if (weight.rank() != 2 || weight.dim(0) < 2) throw ConfigError("head needs a classes x dim weight with >= 2 classes");
  if (!(scale > 0.0)) throw ConfigError("head scale must be > 0");
  switch (kind) {
    case LossKind::Softmax: break;
    case LossKind::ASoftmax:
      if (!(margin > 0.0)) throw ConfigError("a_softmax margin must be > 0");
      break;
    case LossKind::AmSoftmax:
    case LossKind::Lmcl:
      if (!(margin >= 0.0 && margin <= 2.0)) throw ConfigError("additive cosine margin must be in [0, 2]");
      break;
    case LossKind::ArcFace:
      if (!(margin >= 0.0 && margin < std::numbers::pi)) throw ConfigError("arcface margin must be in [0, pi)");
      break;
  }
}

ClassifierHead make_head(std::size_t classes, std::size_t dim, LossKind kind, Rng& rng, std::optional<double> margin,
                         std::optional<double> scale) {
  ClassifierHead head;
  head.kind = kind;
  head.margin = margin.value_or(default_margin(kind));
  head.scale = scale.value_or(30.0);
  head.weight = Tensor({classes, dim});
  const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
  for (auto& v : head.weight.values()) v = sd * rng.normal();
  head.renormalize();
  head.validate();
  return head;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += p[i] = std::exp(logits[i] - mx);
  for (auto& v : p) v /= z;
  return p;
}

namespace {

Tensor cosines(const ClassifierHead& head, const Tensor& z) {
  const std::size_t d = head.dim();
  if (z.size() != d) throw ShapeError("embedding has dimension " + std::to_string(z.size()) + ", head expects " +
                                      std::to_string(d));
  Tensor c({head.classes()});
  for (std::size_t k = 0; k < head.classes(); ++k) c[k] = dot(head.weight.data().subspan(k * d, d), z.data());
  return c;
}

// Margin-adjusted target logit before scaling and its derivative in cos.
struct Adjusted {
  double value;
  double slope;
};

Adjusted adjust_target(const ClassifierHead& head, double c) {
  const double m = head.margin;
  switch (head.kind) {
    case LossKind::Softmax: return {c, 1.0};
    case LossKind::AmSoftmax:
    case LossKind::Lmcl: return {c - m, 1.0};
    case LossKind::ArcFace: {
      const double sin_t = std::sqrt(std::max(1.0 - c * c, 0.0));
      if (c > std::cos(std::numbers::pi - m)) {
        const double slope = std::cos(m) + std::sin(m) * c / std::max(sin_t, 1e-12);
        return {c * std::cos(m) - sin_t * std::sin(m), slope};
      }
      return {c - m * std::sin(std::numbers::pi - m), 1.0};
    }
    case LossKind::ASoftmax: {
      if (m == 1.0) return {c, 1.0};
      const double cc = std::clamp(c, -1.0, 1.0);
      double theta = std::acos(cc);
      const double k = std::min(std::floor(theta * m / std::numbers::pi), std::ceil(m) - 1.0);
      const double sign = std::fmod(k, 2.0) == 0.0 ? 1.0 : -1.0;
      const double value = sign * std::cos(m * theta) - 2.0 * k;
      // The slope has a finite limit at theta in {0, pi}; evaluate just inside.
      if (std::sin(theta) < 1e-9) theta = theta < 1.0 ? 1e-9 : std::numbers::pi - 1e-9;
      return {value, sign * m * std::sin(m * theta) / std::sin(theta)};
    }
  }
  return {c, 1.0};
}

}  // namespace

Tensor plain_logits(const ClassifierHead& head, const Tensor& embedding) {
  Tensor c = cosines(head, embedding);
  if (is_angular(head.kind))
    for (auto& v : c.values()) v *= head.scale;
  return c;
}

Tensor plain_logits_backward(const ClassifierHead& head, const Tensor& embedding, const Tensor& grad_logits,
                             Tensor* grad_weight) {
  const std::size_t d = head.dim();
  const double s = is_angular(head.kind) ? head.scale : 1.0;
  Tensor gz({d});
  for (std::size_t k = 0; k < head.classes(); ++k) {
    const double g = s * grad_logits[k];
    for (std::size_t i = 0; i < d; ++i) {
      gz[i] += g * head.weight[k * d + i];
      if (grad_weight) (*grad_weight)[k * d + i] += g * embedding[i];
    }
  }
  return gz;
}

HeadLoss margin_loss(const ClassifierHead& head, const Tensor& embedding, std::size_t label) {
  if (label >= head.classes())
    throw ConfigError("label " + std::to_string(label) + " outside " + std::to_string(head.classes()) + " classes");
  const Tensor c = cosines(head, embedding);
  const double s = is_angular(head.kind) ? head.scale : 1.0;
  const Adjusted target = adjust_target(head, c[label]);

  HeadLoss out;
  out.logits = Tensor({head.classes()});
  for (std::size_t k = 0; k < head.classes(); ++k) out.logits[k] = s * (k == label ? target.value : c[k]);
  const auto p = softmax(out.logits.data());
  out.loss = -std::log(std::max(p[label], 1e-300));

  // dL/dc_k = (p_k - [k = y]) * s * slope_k
  Tensor grad_c({head.classes()});
  for (std::size_t k = 0; k < head.classes(); ++k)
    grad_c[k] = (p[k] - (k == label ? 1.0 : 0.0)) * s * (k == label ? target.slope : 1.0);
  out.grad_weight = Tensor(head.weight.shape());
  const std::size_t d = head.dim();
  out.grad_embedding = Tensor({d});
  for (std::size_t k = 0; k < head.classes(); ++k)
    for (std::size_t i = 0; i < d; ++i) {
      out.grad_embedding[i] += grad_c[k] * head.weight[k * d + i];
      out.grad_weight[k * d + i] += grad_c[k] * embedding[i];
    }
  return out;
}

KlResult kl_divergence(const Tensor& p_logits, const Tensor& q_logits) {
  if (p_logits.size() != q_logits.size()) throw ShapeError("KL operands differ in size");
  const auto p = softmax(p_logits.data());
  const auto q = softmax(q_logits.data());
  KlResult r;
  const std::size_t n = p.size();
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = p[i] > 0.0 ? std::log(p[i]) - std::log(std::max(q[i], 1e-300)) : 0.0;
    r.value += p[i] * a[i];
  }
  r.grad_p_logits = Tensor({n});
  r.grad_q_logits = Tensor({n});
  for (std::size_t i = 0; i < n; ++i) {
    r.grad_p_logits[i] = p[i] * (a[i] - r.value);
    r.grad_q_logits[i] = q[i] - p[i];
  }
  return r;
}

}  // namespace advface
