#include "advface/transforms.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

#include "advface/errors.hpp"
#include "advface/rng.hpp"
#include "advface/verification.hpp"

namespace advface {

ResizePadParams sample_resize_pad(const Shape& image_shape, double min_scale, double max_scale, Rng& rng) {
  if (!(min_scale > 0.0 && min_scale <= max_scale && max_scale <= 1.0))
    throw ConfigError("resize scale range must satisfy 0 < min <= max <= 1");
  const std::size_t h = image_shape.at(0), w = image_shape.at(1);
  const double s = rng.uniform(min_scale, max_scale);
  ResizePadParams p;
  p.out_height = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(s * static_cast<double>(h))), 1, h);
  p.out_width = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(s * static_cast<double>(w))), 1, w);
  p.top = rng.below(h - p.out_height + 1);
  p.left = rng.below(w - p.out_width + 1);
  return p;
}

Tensor resize_pad(const Tensor& image, const ResizePadParams& p) {
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (p.out_height > h || p.out_width > w || p.top + p.out_height > h || p.left + p.out_width > w)
    throw ShapeError("resize-pad parameters exceed image size");
  Tensor out(image.shape());
  for (std::size_t i = 0; i < p.out_height; ++i) {
    const std::size_t sr = i * h / p.out_height;
    for (std::size_t j = 0; j < p.out_width; ++j) {
      const std::size_t sc = j * w / p.out_width;
      for (std::size_t ch = 0; ch < c; ++ch) out.at(p.top + i, p.left + j, ch) = image.at(sr, sc, ch);
    }
  }
  return out;
}

Tensor resize_pad_backward(const Tensor& grad_output, const ResizePadParams& p) {
  const std::size_t h = grad_output.dim(0), w = grad_output.dim(1), c = grad_output.dim(2);
  Tensor grad(grad_output.shape());
  for (std::size_t i = 0; i < p.out_height; ++i) {
    const std::size_t sr = i * h / p.out_height;
    for (std::size_t j = 0; j < p.out_width; ++j) {
      const std::size_t sc = j * w / p.out_width;
      for (std::size_t ch = 0; ch < c; ++ch) grad.at(sr, sc, ch) += grad_output.at(p.top + i, p.left + j, ch);
    }
  }
  return grad;
}

Tensor bit_depth_reduce(const Tensor& image, int bits) {
  if (bits < 1 || bits > 8) throw ConfigError("bit depth must be in [1, 8], got " + std::to_string(bits));
  const double levels = static_cast<double>((1 << bits) - 1);
  Tensor out = image;
  for (auto& v : out.values()) {
    const double q = std::round(std::clamp(v, 0.0, 255.0) / 255.0 * levels);
    v = q * 255.0 / levels;
  }
  return out;
}

std::array<int, 64> jpeg_quant_table(int quality) {
  if (quality < 1 || quality > 100) throw ConfigError("JPEG quality must be in [1, 100]");
  static constexpr std::array<int, 64> kLuminance = {
      16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,  14, 13, 16, 24, 40,  57,
      69, 56, 14, 17, 22,  29,  51,  87,  80, 62, 18, 22, 37,  56,  68,  109, 103, 77, 24, 35, 55, 64,
      81, 104, 113, 92, 49, 64, 78,  87,  103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> table{};
  for (std::size_t i = 0; i < 64; ++i) table[i] = std::clamp((kLuminance[i] * scale + 50) / 100, 1, 255);
  return table;
}

namespace {

struct DctBasis {
  double c[8][8];  // c[u][x] = a(u) cos((2x + 1) u pi / 16)
  DctBasis() {
    for (int u = 0; u < 8; ++u)
      for (int x = 0; x < 8; ++x)
        c[u][x] = (u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0)) *
                  std::cos((2.0 * x + 1.0) * u * std::numbers::pi / 16.0);
  }
};

const DctBasis& dct_basis() {
  static const DctBasis basis;
  return basis;
}

void code_block(double block[8][8], const std::array<int, 64>& q) {
  const auto& b = dct_basis();
  double tmp[8][8], coef[8][8];
  // Separable orthonormal DCT-II: rows, then columns.
  for (int y = 0; y < 8; ++y)
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int x = 0; x < 8; ++x) s += b.c[u][x] * block[y][x];
      tmp[y][u] = s;
    }
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int y = 0; y < 8; ++y) s += b.c[v][y] * tmp[y][u];
      const double step = q[static_cast<std::size_t>(v * 8 + u)];
      coef[v][u] = std::round(s / step) * step;
    }
  for (int y = 0; y < 8; ++y)
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) s += b.c[v][y] * coef[v][u];
      tmp[y][u] = s;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) s += b.c[u][x] * tmp[y][u];
      block[y][x] = s;
    }
}

std::uint64_t content_hash(const Tensor& t) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : t.values()) {
    h ^= std::bit_cast<std::uint64_t>(v);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Tensor jpeg_roundtrip(const Tensor& image, int quality) {
  const auto q = jpeg_quant_table(quality);
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor out(image.shape());
  double block[8][8];
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t by = 0; by < h; by += 8)
      for (std::size_t bx = 0; bx < w; bx += 8) {
        // Edge blocks are padded by replicating the last row/column.
        for (std::size_t y = 0; y < 8; ++y)
          for (std::size_t x = 0; x < 8; ++x)
            block[y][x] = std::clamp(image.at(std::min(by + y, h - 1), std::min(bx + x, w - 1), ch), 0.0, 255.0) -
                          128.0;
        code_block(block, q);
        for (std::size_t y = 0; y < 8 && by + y < h; ++y)
          for (std::size_t x = 0; x < 8 && bx + x < w; ++x)
            out.at(by + y, bx + x, ch) = std::clamp(std::round(block[y][x] + 128.0), 0.0, 255.0);
      }
  return out;
}

Tensor random_resize_pad(const Tensor& image, double min_scale, double max_scale, std::uint64_t seed) {
  Rng rng(seed);
  return resize_pad(image, sample_resize_pad(image.shape(), min_scale, max_scale, rng));
}

std::string to_string(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::None: return "none";
    case DefenseKind::Jpeg: return "jpeg";
    case DefenseKind::BitReduce: return "bit_reduce";
    case DefenseKind::ResizePad: return "resize_pad";
  }
  return "none";
}

DefenseKind parse_defense_kind(const std::string& s) {
  if (s == "none") return DefenseKind::None;
  if (s == "jpeg") return DefenseKind::Jpeg;
  if (s == "bit_reduce") return DefenseKind::BitReduce;
  if (s == "resize_pad") return DefenseKind::ResizePad;
  throw ConfigError("unknown defense '" + s + "'");
}

void DefenseSpec::validate() const {
  if (bits < 1 || bits > 8) throw ConfigError("defense bits must be in [1, 8]");
  if (quality < 1 || quality > 100) throw ConfigError("defense JPEG quality must be in [1, 100]");
  if (!(min_scale > 0.0 && min_scale <= max_scale && max_scale <= 1.0))
    throw ConfigError("defense scale range must satisfy 0 < min <= max <= 1");
}

std::string DefenseSpec::label() const {
  switch (kind) {
    case DefenseKind::Jpeg: return "jpeg" + std::to_string(quality);
    case DefenseKind::BitReduce: return "bits" + std::to_string(bits);
    case DefenseKind::ResizePad: return "resize_pad";
    case DefenseKind::None: break;
  }
  return "none";
}

namespace {

std::uint64_t resize_pad_seed(const DefenseSpec& spec, const Tensor& image) {
  return derive_seed(spec.seed, content_hash(image));
}

}  // namespace

Tensor apply_defense(const DefenseSpec& spec, const Tensor& image) {
  switch (spec.kind) {
    case DefenseKind::None: return image;
    case DefenseKind::Jpeg: return jpeg_roundtrip(image, spec.quality);
    case DefenseKind::BitReduce: return bit_depth_reduce(image, spec.bits);
    case DefenseKind::ResizePad:
      return random_resize_pad(image, spec.min_scale, spec.max_scale, resize_pad_seed(spec, image));
  }
  return image;
}

DefendedModel::DefendedModel(std::shared_ptr<const FaceModel> base, DefenseSpec spec)
    : base_(std::move(base)), spec_(spec) {
  if (!base_) throw ConfigError("defended model needs a base model");
  spec_.validate();
}

Tensor DefendedModel::embed(const Tensor& image) const { return base_->embed(apply_defense(spec_, image)); }

DistanceGradient DefendedModel::distance_gradient(const Tensor& image, const Tensor& reference) const {
  if (!spec_.white_box_aware) {
    DistanceGradient dg = base_->distance_gradient(image, reference);
    dg.embedding = embed(image);
    dg.distance = embedding_distance(dg.embedding, reference);
    return dg;
  }
  if (spec_.kind == DefenseKind::ResizePad) {
    Rng rng(resize_pad_seed(spec_, image));
    const auto params = sample_resize_pad(image.shape(), spec_.min_scale, spec_.max_scale, rng);
    DistanceGradient dg = base_->distance_gradient(resize_pad(image, params), reference);
    dg.gradient = resize_pad_backward(dg.gradient, params);
    return dg;
  }
  // Quantising transforms have zero gradient almost everywhere; pass the
  // gradient at the transformed point straight through.
  return base_->distance_gradient(apply_defense(spec_, image), reference);
}

}  // namespace advface
