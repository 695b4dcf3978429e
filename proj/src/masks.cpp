#include "advface/masks.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "advface/errors.hpp"
#include "advface/rng.hpp"

namespace advface {

void LandmarkSet::check_bounds(std::size_t height, std::size_t width) const {
  for (const auto& p : points)
    if (p.row < 0 || p.col < 0 || static_cast<std::size_t>(p.row) >= height ||
        static_cast<std::size_t>(p.col) >= width)
      throw ShapeError("landmark (" + std::to_string(p.row) + "," + std::to_string(p.col) + ") outside " +
                       std::to_string(height) + "x" + std::to_string(width) + " image");
}

void MaskConfig::validate() const {
  if (mode == MaskMode::Landmark && side % 2 == 0 && side != 0)
    throw ConfigError("landmark mask side must be odd or zero, got " + std::to_string(side));
}

std::size_t CutoutMask::zero_count() const {
  return static_cast<std::size_t>(std::count(values.values().begin(), values.values().end(), 0.0));
}

CutoutMask ones_mask(std::size_t height, std::size_t width) { return CutoutMask{Tensor({height, width}, 1.0)}; }

void zero_square(CutoutMask& mask, Point center, std::size_t side) {
  if (side == 0) return;
  const long h = static_cast<long>(mask.height()), w = static_cast<long>(mask.width());
  const long half = static_cast<long>(side / 2);
  const long r0 = std::max(0L, center.row - half), c0 = std::max(0L, center.col - half);
  const long r1 = std::min(h, center.row - half + static_cast<long>(side));
  const long c1 = std::min(w, center.col - half + static_cast<long>(side));
  for (long r = r0; r < r1; ++r)
    for (long c = c0; c < c1; ++c) mask.values[static_cast<std::size_t>(r * w + c)] = 0.0;
}

CutoutMask sample_mask(std::size_t height, std::size_t width, const MaskConfig& config,
                       const LandmarkSet* landmarks, Rng& rng) {
  config.validate();
  CutoutMask mask = ones_mask(height, width);
  if (config.num_squares == 0) return mask;
  if (config.mode == MaskMode::Landmark) {
    if (landmarks == nullptr || landmarks->empty())
      throw ConfigError("landmark-guided mask requires a non-empty landmark set");
    const auto& pts = landmarks->points;
    if (config.with_replacement) {
      for (std::size_t i = 0; i < config.num_squares; ++i) zero_square(mask, pts[rng.below(pts.size())], config.side);
    } else {
      if (config.num_squares > pts.size())
        throw ConfigError("cannot draw " + std::to_string(config.num_squares) + " distinct landmarks from " +
                          std::to_string(pts.size()));
      // Partial Fisher-Yates.
      std::vector<std::size_t> idx(pts.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      for (std::size_t i = 0; i < config.num_squares; ++i) {
        std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
        zero_square(mask, pts[idx[i]], config.side);
      }
    }
  } else {
    for (std::size_t i = 0; i < config.num_squares; ++i) {
      const Point p{static_cast<int>(rng.below(height)), static_cast<int>(rng.below(width))};
      zero_square(mask, p, config.side);
    }
  }
  return mask;
}

Tensor apply_mask(const CutoutMask& mask, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != mask.height() || image.dim(1) != mask.width())
    throw ShapeError("mask " + shape_to_string(mask.values.shape()) + " incompatible with image " +
                     shape_to_string(image.shape()));
  Tensor out = image;
  const std::size_t c = image.dim(2);
  for (std::size_t i = 0; i < mask.values.size(); ++i) {
    const double m = mask.values[i];
    for (std::size_t ch = 0; ch < c; ++ch) out[i * c + ch] *= m;
  }
  return out;
}

namespace {

Point parse_point(const std::string& token, const std::string& file, std::size_t line) {
  const auto comma = token.find(',');
  if (comma == std::string::npos) throw ParseError(file, line, "landmark '" + token + "' is not <row,col>");
  Point p;
  auto parse_int = [&](std::string_view s, int& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw ParseError(file, line, "landmark '" + token + "' is not <row,col>");
  };
  parse_int(std::string_view(token).substr(0, comma), p.row);
  parse_int(std::string_view(token).substr(comma + 1), p.col);
  return p;
}

}  // namespace

LandmarkTable load_landmarks(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read landmark file " + path.string());
  LandmarkTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string image;
    if (!(ls >> image) || image.front() == '#') continue;
    LandmarkSet set;
    std::string tok;
    while (ls >> tok) set.points.push_back(parse_point(tok, path.string(), lineno));
    table[image] = std::move(set);
  }
  return table;
}

void save_landmarks(const LandmarkTable& table, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write landmark file " + path.string());
  for (const auto& [image, set] : table) {
    os << image;
    for (const auto& p : set.points) os << ' ' << p.row << ',' << p.col;
    os << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace advface
