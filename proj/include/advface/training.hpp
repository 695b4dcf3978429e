#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "advface/attacks.hpp"
#include "advface/heads.hpp"
#include "advface/model.hpp"

namespace advface {

class Rng;

struct LabeledDataset {
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return images.size(); }
  void validate(const Shape& input_shape) const;
};

enum class Framework { None, PgdAt, Trades };

std::string to_string(Framework framework);
Framework parse_framework(const std::string& s);

struct ATConfig {
  Framework framework = Framework::PgdAt;
  // Inner maximisation, pixel units.
  double epsilon = 8.0;
  double alpha = 1.0;
  std::size_t steps = 9;
  Norm norm = Norm::Linf;
  bool random_start = true;
  double trades_beta = 6.0;
  // Outer minimisation (Adam).
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BatchGradients {
  double loss = 0.0;
  ParamGrads model;
  Tensor head;
};

// Mean margin loss over the batch and its gradients w.r.t. every model
// parameter and the head weights.
BatchGradients parameter_gradients(const EmbeddingModel& model, const ClassifierHead& head,
                                   std::span<const Tensor> images, std::span<const std::size_t> labels);

// Head loss of one sample and its gradient w.r.t. the input image.
struct LossGradient {
  double loss = 0.0;
  Tensor gradient;
};
LossGradient loss_input_gradient(const EmbeddingModel& model, const ClassifierHead& head, const Tensor& image,
                                 std::size_t label);

// Projected sign-gradient ascent on the head loss inside the epsilon ball,
// from a uniform random start when enabled.
Tensor pgd_inner(const EmbeddingModel& model, const ClassifierHead& head, const Tensor& image, std::size_t label,
                 const ATConfig& config, Rng& rng);

struct TrainingLogEntry {
  std::size_t epoch = 0;
  double natural_loss = 0.0;
  double robust_loss = 0.0;
  double accuracy = 0.0;  // natural classification accuracy on the training set
};

struct TrainingResult {
  EmbeddingModel model;
  ClassifierHead head;
  std::vector<TrainingLogEntry> log;
};

// Framework::None is plain training. PGD-AT trains on pgd_inner examples;
// TRADES trains on CE(x) + beta * KL(p(x) || p(x_adv)) with x_adv maximising
// that KL. Throws NumericError if a loss turns non-finite.
TrainingResult adversarial_train(const LabeledDataset& data, EmbeddingModel model, ClassifierHead head,
                                 const ATConfig& config);

void write_training_log(const std::vector<TrainingLogEntry>& log, const std::filesystem::path& path,
                        const std::string& header_comment);

}  // namespace advface
