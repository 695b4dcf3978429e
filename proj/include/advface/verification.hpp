#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advface/masks.hpp"
#include "advface/model.hpp"

namespace advface {

// Squared Euclidean distance between two unit embeddings, in [0, 4].
double embedding_distance(const Tensor& a, const Tensor& b);
double feature_distance(const FaceModel& model, const Tensor& image_a, const Tensor& image_b);

enum class Decision { Same, Different };

// Decision rule: "same" iff distance < delta. A distance equal to delta is
// "different".
inline Decision decide(double distance, double delta) {
  return distance < delta ? Decision::Same : Decision::Different;
}

// Threshold on the squared Euclidean feature distance.
class VerificationThreshold {
 public:
  explicit VerificationThreshold(double delta);
  double delta() const noexcept { return delta_; }

 private:
  double delta_;
};

Decision verify(const FaceModel& model, const VerificationThreshold& threshold, const Tensor& image_a,
                const Tensor& image_b);

// delta_d = 2 - 2 * delta_c for unit-norm features.
double cosine_to_euclidean_threshold(double cosine_threshold);

struct Calibration {
  double delta = 0.0;
  double accuracy = 0.0;
};

// Picks the threshold maximising verification accuracy. Candidates are 0, 4
// and the midpoints between consecutive distinct sorted distances; ties go
// to the smallest candidate. Throws CalibrationError unless both genuine and
// impostor pairs are present.
Calibration calibrate_threshold(std::span<const double> distances, const std::vector<bool>& same_identity);

double accuracy_at(std::span<const double> distances, const std::vector<bool>& same_identity, double delta);

// LFW-style k-fold protocol over contiguous folds: each fold is scored with
// the threshold calibrated on the remaining folds. Returns the mean fold
// accuracy and the mean of the per-fold thresholds.
Calibration calibrate_threshold_kfold(std::span<const double> distances, const std::vector<bool>& same_identity,
                                      std::size_t folds);

// Two image references plus the same/different label (y = 1 / y = 0).
struct PairRecord {
  std::string image_a;
  std::string image_b;
  bool same_identity = false;
};

// A pair resolved to tensors. Landmarks belong to image a, the image an
// attack perturbs.
struct FacePair {
  Tensor image;
  Tensor reference;
  bool same_identity = false;
  LandmarkSet landmarks;
};

std::vector<double> pair_distances(const FaceModel& model, std::span<const FacePair> pairs);
Calibration calibrate_threshold(const FaceModel& model, std::span<const FacePair> pairs);

// A model plus its calibrated threshold: everything needed to answer
// verification queries.
struct Verifier {
  const FaceModel* model = nullptr;
  double threshold = 0.0;

  Decision decide_embeddings(const Tensor& a, const Tensor& b) const {
    return decide(embedding_distance(a, b), threshold);
  }
  Decision verify(const Tensor& a, const Tensor& b) const;
};

// Metadata stored next to a weight manifest.
struct ModelCard {
  std::string name;
  std::string weights;  // manifest path, relative to the card file
  Shape input_shape;
  std::optional<double> threshold;
  std::optional<double> accuracy;

  double require_threshold() const;
};

void save_model_card(const ModelCard& card, const std::filesystem::path& path);
ModelCard load_model_card(const std::filesystem::path& path);

}  // namespace advface
