#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advface/masks.hpp"
#include "advface/training.hpp"
#include "advface/verification.hpp"

namespace advface {

// Pair file: one "<path_a> <path_b> <0|1>" record per line. Blank lines and
// lines starting with '#' are skipped. Relative paths are resolved against
// the pair file's directory. Warnings (e.g. an empty file) are appended to
// `warnings` when given.
std::vector<PairRecord> load_pairs(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);
void save_pairs(const std::vector<PairRecord>& pairs, const std::filesystem::path& path);

// Loads both images of every record plus the landmarks of image_a (looked up
// by path as written in the pair file, then by the longest key that matches
// the trailing components of that path). Every image must
// have `input_shape`.
std::vector<FacePair> resolve_pairs(const std::vector<PairRecord>& records, const Shape& input_shape,
                                    const LandmarkTable* landmarks = nullptr);

struct SyntheticDatasetSpec {
  std::size_t identities = 10;
  std::size_t samples_per_identity = 4;  // evaluation images per identity
  std::size_t train_per_identity = 0;    // extra training images per identity
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;
  double noise = 8.0;         // per-pixel Gaussian noise, pixel units
  double brightness = 10.0;   // per-sample brightness jitter, +/- pixel units
  std::size_t max_shift = 1;  // per-sample translation, +/- pixels
  double similarity = 0.0;    // in [0, 1): blend of each identity toward a shared mean face
  double detail = 0.0;        // amplitude of a per-identity fine texture, pixel units
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticImage {
  std::string name;
  Tensor image;
  std::size_t identity = 0;
  LandmarkSet landmarks;
};

// Evaluation images come in pairs per identity: (s0, s1), (s2, s3), ... form
// genuine pairs, and each s_{2j} is also paired with an image of a randomly
// chosen other identity as an impostor pair. Genuine and impostor pairs
// alternate in the pair list.
struct SyntheticDataset {
  std::vector<SyntheticImage> eval;
  std::vector<SyntheticImage> train;
  std::vector<PairRecord> pairs;  // names refer to eval images
  std::size_t identities = 0;

  LabeledDataset training_set() const;
  std::vector<FacePair> face_pairs() const;
};

SyntheticDataset make_synthetic(const SyntheticDatasetSpec& spec);

// Layout under `dir`: images/<name>.tensor, train/<name>.tensor,
// pairs.txt, landmarks.txt, labels.txt ("<path> <identity>" for every image).
void write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir);

// Reads a labels.txt written by write_synthetic (or by hand) into a labelled
// dataset; paths resolve against the label file's directory. Only lines whose
// path starts with `prefix` are used when it is non-empty.
LabeledDataset load_labeled(const std::filesystem::path& labels_path, const std::string& prefix = "");

}  // namespace advface
