#include "advface/training.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "advface/errors.hpp"
#include "advface/optim.hpp"
#include "advface/rng.hpp"

namespace advface {

std::string to_string(Framework framework) {
  switch (framework) {
    case Framework::None: return "none";
    case Framework::PgdAt: return "pgd_at";
    case Framework::Trades: return "trades";
  }
  return "none";
}

Framework parse_framework(const std::string& s) {
  if (s == "none") return Framework::None;
  if (s == "pgd_at") return Framework::PgdAt;
  if (s == "trades") return Framework::Trades;
  throw ConfigError("unknown training framework '" + s + "'");
}

void LabeledDataset::validate(const Shape& input_shape) const {
  if (images.size() != labels.size()) throw ConfigError("dataset has mismatched image and label counts");
  if (images.empty()) throw ConfigError("dataset is empty");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != input_shape)
      throw ShapeError("dataset image " + std::to_string(i) + " has shape " + shape_to_string(images[i].shape()));
    if (labels[i] >= num_classes) throw ConfigError("dataset label " + std::to_string(labels[i]) + " out of range");
  }
}

void ATConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ConfigError("inner epsilon must be >= 0");
  if (!(alpha >= 0.0)) throw ConfigError("inner step size must be >= 0");
  if (steps == 0) throw ConfigError("inner steps must be >= 1");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(trades_beta >= 0.0)) throw ConfigError("TRADES beta must be >= 0");
}

BatchGradients parameter_gradients(const EmbeddingModel& model, const ClassifierHead& head,
                                   std::span<const Tensor> images, std::span<const std::size_t> labels) {
  if (images.size() != labels.size() || images.empty()) throw ConfigError("batch must be non-empty and labelled");
  BatchGradients out{0.0, model.zero_grads(), Tensor(head.weight.shape())};
  const double inv = 1.0 / static_cast<double>(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ForwardTrace trace = model.forward_trace(images[i]);
    HeadLoss hl = margin_loss(head, trace.output(), labels[i]);
    out.loss += inv * hl.loss;
    model.backward(trace, inv * hl.grad_embedding, &out.model);
    axpy(inv, hl.grad_weight, out.head);
  }
  return out;
}

LossGradient loss_input_gradient(const EmbeddingModel& model, const ClassifierHead& head, const Tensor& image,
                                 std::size_t label) {
  const ForwardTrace trace = model.forward_trace(image);
  const HeadLoss hl = margin_loss(head, trace.output(), label);
  return {hl.loss, model.backward(trace, hl.grad_embedding)};
}

namespace {

Tensor random_start(const Tensor& image, const ATConfig& config, Rng& rng) {
  if (!config.random_start) return image;
  Tensor x = image;
  if (config.norm == Norm::Linf) {
    for (auto& v : x.values()) v += rng.uniform(-config.epsilon, config.epsilon);
  } else {
    // Uniform direction, radius scaled for a uniform draw from the ball.
    Tensor dir = Tensor::zeros_like(image);
    for (auto& v : dir.values()) v = rng.normal();
    const double n = l2_norm(dir.data());
    const double r = config.epsilon * std::pow(rng.uniform(), 1.0 / static_cast<double>(image.size()));
    if (n > 0.0) axpy(r / n, dir, x);
  }
  return project(x, image, config.norm, config.epsilon);
}

template <typename GradFn>
Tensor ascend(const Tensor& image, const ATConfig& config, Rng& rng, GradFn&& grad_at) {
  Tensor x = random_start(image, config, rng);
  for (std::size_t t = 0; t < config.steps; ++t) {
    Tensor candidate = x;
    axpy(config.alpha, step_direction(grad_at(x), config.norm), candidate);
    x = project(candidate, image, config.norm, config.epsilon);
  }
  return x;
}

Tensor trades_inner(const EmbeddingModel& model, const ClassifierHead& head, const Tensor& image,
                    const ATConfig& config, Rng& rng) {
  const Tensor natural = plain_logits(head, model.forward(image));
  return ascend(image, config, rng, [&](const Tensor& x) {
    const ForwardTrace trace = model.forward_trace(x);
    const KlResult kl = kl_divergence(natural, plain_logits(head, trace.output()));
    return model.backward(trace, plain_logits_backward(head, trace.output(), kl.grad_q_logits, nullptr));
  });
}

std::size_t argmax(const Tensor& t) {
  return static_cast<std::size_t>(std::max_element(t.values().begin(), t.values().end()) - t.values().begin());
}

}  // namespace

Tensor pgd_inner(const EmbeddingModel& model, const ClassifierHead& head, const Tensor& image, std::size_t label,
                 const ATConfig& config, Rng& rng) {
  return ascend(image, config, rng,
                [&](const Tensor& x) { return loss_input_gradient(model, head, x, label).gradient; });
}

TrainingResult adversarial_train(const LabeledDataset& data, EmbeddingModel model, ClassifierHead head,
                                 const ATConfig& config) {
  config.validate();
  head.validate();
  data.validate(model.input_shape());
  if (head.classes() != data.num_classes || head.dim() != model.embedding_dim())
    throw ConfigError("head shape does not match the dataset classes and embedding dimension");
  head.renormalize();

  // Separate streams so the inner attack never perturbs the batch order.
  Rng shuffle_rng(derive_seed(config.seed, 1));
  Rng attack_rng(derive_seed(config.seed, 2));
  Adam adam(AdamConfig{config.learning_rate, 0.9, 0.999, 1e-8});

  std::vector<TrainingLogEntry> log;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    TrainingLogEntry entry;
    entry.epoch = epoch + 1;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      ParamGrads grads = model.zero_grads();
      Tensor head_grad(head.weight.shape());
      for (std::size_t b = start; b < end; ++b) {
        const Tensor& x = data.images[order[b]];
        const std::size_t y = data.labels[order[b]];
        const ForwardTrace nat = model.forward_trace(x);
        const HeadLoss nat_loss = margin_loss(head, nat.output(), y);
        correct += argmax(plain_logits(head, nat.output())) == y;
        entry.natural_loss += nat_loss.loss;

        double robust = 0.0;
        switch (config.framework) {
          case Framework::None:
            robust = nat_loss.loss;
            model.backward(nat, inv * nat_loss.grad_embedding, &grads);
            axpy(inv, nat_loss.grad_weight, head_grad);
            break;
          case Framework::PgdAt: {
            const ForwardTrace adv = model.forward_trace(pgd_inner(model, head, x, y, config, attack_rng));
            const HeadLoss adv_loss = margin_loss(head, adv.output(), y);
            robust = adv_loss.loss;
            model.backward(adv, inv * adv_loss.grad_embedding, &grads);
            axpy(inv, adv_loss.grad_weight, head_grad);
            break;
          }
          case Framework::Trades: {
            const ForwardTrace adv = model.forward_trace(trades_inner(model, head, x, config, attack_rng));
            const KlResult kl =
                kl_divergence(plain_logits(head, nat.output()), plain_logits(head, adv.output()));
            robust = nat_loss.loss + config.trades_beta * kl.value;
            const double w = inv * config.trades_beta;
            Tensor gz_nat = nat_loss.grad_embedding;
            axpy(config.trades_beta, plain_logits_backward(head, nat.output(), kl.grad_p_logits, nullptr), gz_nat);
            // Weight gradient of the KL terms at both points.
            Tensor kl_head(head.weight.shape());
            plain_logits_backward(head, nat.output(), kl.grad_p_logits, &kl_head);
            const Tensor gz_adv = plain_logits_backward(head, adv.output(), kl.grad_q_logits, &kl_head);
            model.backward(nat, inv * gz_nat, &grads);
            model.backward(adv, w * gz_adv, &grads);
            axpy(inv, nat_loss.grad_weight, head_grad);
            axpy(w, kl_head, head_grad);
            break;
          }
        }
        if (!std::isfinite(robust) || !std::isfinite(nat_loss.loss))
          throw NumericError("training loss became non-finite in epoch " + std::to_string(epoch + 1), -1);
        entry.robust_loss += robust;
      }
      std::vector<Tensor*> params = model.parameters();
      params.push_back(&head.weight);
      grads.push_back(std::move(head_grad));
      adam.step(params, grads);
      head.renormalize();
    }
    const double n = static_cast<double>(data.size());
    entry.natural_loss /= n;
    entry.robust_loss /= n;
    entry.accuracy = static_cast<double>(correct) / n;
    log.push_back(entry);
  }
  return {std::move(model), std::move(head), std::move(log)};
}

void write_training_log(const std::vector<TrainingLogEntry>& log, const std::filesystem::path& path,
                        const std::string& header_comment) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write training log " + path.string());
  if (!header_comment.empty()) os << "# " << header_comment << '\n';
  os << "epoch,natural_loss,robust_loss,accuracy\n";
  os.precision(17);
  for (const auto& e : log) os << e.epoch << ',' << e.natural_loss << ',' << e.robust_loss << ',' << e.accuracy << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace advface
