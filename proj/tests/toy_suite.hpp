#pragma once

#include <cstdint>
#include <vector>

#include "advface/dataset.hpp"
#include "advface/metrics.hpp"
#include "advface/training.hpp"

namespace advface::testing {

// The synthetic identity suite shared by the measured-behaviour tests and
// the acceptance run: 32 identities of 32 x 32 grayscale faces with enough
// shared structure that verification is non-trivial.
SyntheticDatasetSpec toy_suite_spec(std::uint64_t seed);

struct ToyModel {
  EmbeddingModel model;
  double threshold = 0.0;
  double accuracy = 0.0;          // calibration accuracy on the evaluation pairs
  double kfold_accuracy = 0.0;    // 5-fold held-out accuracy
  std::vector<TrainingLogEntry> log;
};

struct ToySeeds {
  std::uint64_t model = 0;
  std::uint64_t head = 0;
  std::uint64_t training = 0;
};

// Trains the default toy architecture with a softmax head and calibrates it on
// the dataset's evaluation pairs. `at` selects the framework and inner attack;
// its epochs, learning rate and seed are overwritten with the suite values.
ToyModel train_toy_model(const SyntheticDataset& data, const ToySeeds& seeds, ATConfig at);

// The first `n` pairs of the requested kind, in pair-file order.
std::vector<FacePair> select_pairs(const std::vector<FacePair>& pairs, bool genuine, std::size_t n);

// Minimum-perturbation search over a pair set; pair i uses derive_seed(seed, i).
std::vector<MinPerturbationResult> search_all(const FaceModel& model, double threshold,
                                              const std::vector<FacePair>& pairs, AttackConfig config, Goal goal,
                                              Norm norm, std::uint64_t seed, std::size_t workers = 1);

}  // namespace advface::testing
