#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>

#include "advface/model.hpp"
#include "advface/tensor.hpp"

namespace advface {

class Rng;

// Nearest-neighbour downscale to out_height x out_width followed by zero
// padding back to the original size with the scaled image at (top, left).
struct ResizePadParams {
  std::size_t out_height = 0;
  std::size_t out_width = 0;
  std::size_t top = 0;
  std::size_t left = 0;
};

ResizePadParams sample_resize_pad(const Shape& image_shape, double min_scale, double max_scale, Rng& rng);
Tensor resize_pad(const Tensor& image, const ResizePadParams& params);
// Adjoint of resize_pad: maps a gradient w.r.t. the output back to the input.
Tensor resize_pad_backward(const Tensor& grad_output, const ResizePadParams& params);

// Rounds each pixel to the nearest of 2^bits evenly spaced levels spanning
// [0, 255]. bits = 8 leaves integer-valued images unchanged.
Tensor bit_depth_reduce(const Tensor& image, int bits);

// Simplified baseline JPEG: every channel is coded independently as
// grayscale with 8x8 DCT blocks, quantised with the standard luminance table
// scaled by `quality` (IJG scaling), then decoded and rounded to integer
// levels. No entropy coding, no chroma subsampling.
Tensor jpeg_roundtrip(const Tensor& image, int quality);

// Standard JPEG luminance quantisation table scaled for `quality`.
std::array<int, 64> jpeg_quant_table(int quality);

enum class DefenseKind { None, Jpeg, BitReduce, ResizePad };

std::string to_string(DefenseKind kind);
DefenseKind parse_defense_kind(const std::string& s);

struct DefenseSpec {
  DefenseKind kind = DefenseKind::None;
  int quality = 75;
  int bits = 4;
  double min_scale = 0.85;
  double max_scale = 1.0;
  std::uint64_t seed = 0;
  // When set, attacks differentiate through the transform (exactly for
  // resize-pad, straight-through for the quantising transforms). Otherwise
  // the transform only applies at inference.
  bool white_box_aware = false;

  void validate() const;
  std::string label() const;
};

// Applies the defense. Resize-pad draws its parameters from a stream seeded by
// (spec.seed, image contents), so the same image always gets the same
// transform.
Tensor apply_defense(const DefenseSpec& spec, const Tensor& image);

// Randomised resize-and-pad with an explicit seed.
Tensor random_resize_pad(const Tensor& image, double min_scale, double max_scale, std::uint64_t seed);

// A model with an input transformation in front of it.
class DefendedModel final : public FaceModel {
 public:
  DefendedModel(std::shared_ptr<const FaceModel> base, DefenseSpec spec);

  const Shape& input_shape() const override { return base_->input_shape(); }
  Tensor embed(const Tensor& image) const override;
  DistanceGradient distance_gradient(const Tensor& image, const Tensor& reference) const override;

  const DefenseSpec& spec() const noexcept { return spec_; }

 private:
  std::shared_ptr<const FaceModel> base_;
  DefenseSpec spec_;
};

}  // namespace advface
