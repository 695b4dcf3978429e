#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "advface/tensor.hpp"

namespace advface {

class Rng;

struct Point {
  int row = 0;
  int col = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

// Facial landmark coordinates of one image. Detection is not done here;
// landmark sets are read from files or produced by the synthetic generator.
struct LandmarkSet {
  std::vector<Point> points;

  bool empty() const noexcept { return points.empty(); }
  // Throws ShapeError if any point lies outside an height x width image.
  void check_bounds(std::size_t height, std::size_t width) const;
};

enum class MaskMode { Landmark, Random };

struct MaskConfig {
  std::size_t num_squares = 4;
  std::size_t side = 7;
  MaskMode mode = MaskMode::Landmark;
  // Landmark mode only: draw centres with replacement.
  bool with_replacement = true;

  // Landmark-mode squares are centred on a point, so their side must be odd
  // (or zero). Random mode accepts even sides.
  void validate() const;
};

// H x W binary mask, broadcast over channels when applied.
struct CutoutMask {
  Tensor values;  // shape {H, W}, entries 0 or 1

  std::size_t height() const { return values.dim(0); }
  std::size_t width() const { return values.dim(1); }
  std::size_t zero_count() const;
};

CutoutMask ones_mask(std::size_t height, std::size_t width);

// Zeroes the side x side square whose top-left corner is
// (center - side / 2), clipped to the mask.
void zero_square(CutoutMask& mask, Point center, std::size_t side);

// Starts from an all-ones mask and zeroes `num_squares` squares. Centres are
// drawn uniformly from `landmarks` (landmark mode) or uniformly over the image
// (random mode). `landmarks` may be null in random mode.
CutoutMask sample_mask(std::size_t height, std::size_t width, const MaskConfig& config,
                       const LandmarkSet* landmarks, Rng& rng);

// Element-wise product, mask broadcast over the channel axis.
Tensor apply_mask(const CutoutMask& mask, const Tensor& image);

// Landmark file: one line per image, "<path> <r1,c1> <r2,c2> ...".
using LandmarkTable = std::map<std::string, LandmarkSet>;
LandmarkTable load_landmarks(const std::filesystem::path& path);
void save_landmarks(const LandmarkTable& table, const std::filesystem::path& path);

}  // namespace advface
