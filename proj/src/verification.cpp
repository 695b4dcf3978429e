#include "advface/verification.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "advface/errors.hpp"

namespace advface {

double embedding_distance(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("embedding dimensions differ");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

double feature_distance(const FaceModel& model, const Tensor& image_a, const Tensor& image_b) {
  return embedding_distance(model.embed(image_a), model.embed(image_b));
}

VerificationThreshold::VerificationThreshold(double delta) : delta_(delta) {
  if (!(delta >= 0.0 && delta <= 4.0)) throw ConfigError("threshold must lie in [0, 4], got " + std::to_string(delta));
}

Decision verify(const FaceModel& model, const VerificationThreshold& threshold, const Tensor& image_a,
                const Tensor& image_b) {
  return decide(feature_distance(model, image_a, image_b), threshold.delta());
}

double cosine_to_euclidean_threshold(double cosine_threshold) {
  if (!(cosine_threshold >= -1.0 && cosine_threshold <= 1.0))
    throw ConfigError("cosine threshold must lie in [-1, 1], got " + std::to_string(cosine_threshold));
  return 2.0 - 2.0 * cosine_threshold;
}

double accuracy_at(std::span<const double> distances, const std::vector<bool>& same_identity, double delta) {
  if (distances.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < distances.size(); ++i)
    correct += (decide(distances[i], delta) == Decision::Same) == same_identity[i];
  return static_cast<double>(correct) / static_cast<double>(distances.size());
}

Calibration calibrate_threshold(std::span<const double> distances, const std::vector<bool>& same_identity) {
  if (distances.size() != same_identity.size()) throw CalibrationError("distance and label counts differ");
  const auto n = distances.size();
  const auto genuine = static_cast<std::size_t>(std::count(same_identity.begin(), same_identity.end(), true));
  const std::size_t impostor = n - genuine;
  if (genuine == 0 || impostor == 0)
    throw CalibrationError("calibration needs at least one genuine and one impostor pair");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return distances[a] < distances[b]; });

  // correct(t) = #genuine with d < t + #impostor with d >= t. Candidates are
  // visited in increasing order and only a strict improvement replaces the
  // incumbent, so ties resolve to the smallest threshold.
  auto correct_at = [&](std::size_t genuine_below, std::size_t impostor_below) {
    return genuine_below + (impostor - impostor_below);
  };
  std::size_t genuine_below = 0, impostor_below = 0;
  for (std::size_t k = 0; k < n && distances[order[k]] < 0.0; ++k)
    (same_identity[order[k]] ? genuine_below : impostor_below)++;
  std::size_t best_correct = correct_at(genuine_below, impostor_below);
  double best_delta = 0.0;

  genuine_below = impostor_below = 0;
  for (std::size_t i = 0; i < n;) {
    const double d = distances[order[i]];
    std::size_t j = i;
    for (; j < n && distances[order[j]] == d; ++j) (same_identity[order[j]] ? genuine_below : impostor_below)++;
    if (j < n) {
      const double candidate = 0.5 * (d + distances[order[j]]);
      const std::size_t correct = correct_at(genuine_below, impostor_below);
      if (candidate > d && candidate > best_delta && correct > best_correct) {
        best_correct = correct;
        best_delta = candidate;
      }
    }
    i = j;
  }

  std::size_t g4 = 0, i4 = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (distances[k] < 4.0) (same_identity[k] ? g4 : i4)++;
  if (correct_at(g4, i4) > best_correct) {
    best_correct = correct_at(g4, i4);
    best_delta = 4.0;
  }
  return {best_delta, static_cast<double>(best_correct) / static_cast<double>(n)};
}

Calibration calibrate_threshold_kfold(std::span<const double> distances, const std::vector<bool>& same_identity,
                                      std::size_t folds) {
  if (folds < 2 || folds > distances.size()) throw CalibrationError("invalid fold count");
  Calibration total;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t lo = f * distances.size() / folds, hi = (f + 1) * distances.size() / folds;
    std::vector<double> train_d, test_d;
    std::vector<bool> train_y, test_y;
    for (std::size_t i = 0; i < distances.size(); ++i) {
      const bool in_test = i >= lo && i < hi;
      (in_test ? test_d : train_d).push_back(distances[i]);
      (in_test ? test_y : train_y).push_back(same_identity[i]);
    }
    const Calibration c = calibrate_threshold(train_d, train_y);
    total.delta += c.delta;
    total.accuracy += accuracy_at(test_d, test_y, c.delta);
  }
  total.delta /= static_cast<double>(folds);
  total.accuracy /= static_cast<double>(folds);
  return total;
}

std::vector<double> pair_distances(const FaceModel& model, std::span<const FacePair> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(feature_distance(model, p.image, p.reference));
  return out;
}

Calibration calibrate_threshold(const FaceModel& model, std::span<const FacePair> pairs) {
  const auto d = pair_distances(model, pairs);
  std::vector<bool> y;
  for (const auto& p : pairs) y.push_back(p.same_identity);
  return calibrate_threshold(d, y);
}

Decision Verifier::verify(const Tensor& a, const Tensor& b) const {
  return decide(feature_distance(*model, a, b), threshold);
}

double ModelCard::require_threshold() const {
  if (!threshold) throw ConfigError("model '" + name + "' has no calibrated threshold; run calibrate first");
  return *threshold;
}

void save_model_card(const ModelCard& card, const std::filesystem::path& path) {
  nlohmann::json j{{"name", card.name}, {"weights", card.weights}, {"input_shape", card.input_shape}};
  if (card.threshold) j["threshold"] = *card.threshold;
  if (card.accuracy) j["accuracy"] = *card.accuracy;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write model card " + path.string());
  os << j.dump(2) << '\n';
}

ModelCard load_model_card(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read model card " + path.string());
  try {
    const auto j = nlohmann::json::parse(is);
    ModelCard card;
    card.name = j.at("name").get<std::string>();
    card.weights = j.at("weights").get<std::string>();
    card.input_shape = j.at("input_shape").get<Shape>();
    if (j.contains("threshold")) card.threshold = j.at("threshold").get<double>();
    if (j.contains("accuracy")) card.accuracy = j.at("accuracy").get<double>();
    return card;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed model card " + path.string() + ": " + e.what());
  }
}

}  // namespace advface
