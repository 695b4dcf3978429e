#include "advface/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "advface/errors.hpp"
#include "binary_io.hpp"

namespace advface {

namespace {

constexpr char kMagic[4] = {'A', 'F', 'T', 'N'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void write_tensor(const Tensor& tensor, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(kMagic, 4);
  detail::write_u32(os, kVersion);
  detail::write_u32(os, static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) detail::write_u32(os, static_cast<std::uint32_t>(d));
  for (double v : tensor.values()) detail::write_f32(os, v);
  if (!os) throw IoError("write failed: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kMagic))
    throw IoError(path.string() + " is not a raw tensor file");
  try {
    if (detail::read_u32(is) != kVersion) throw IoError("unsupported tensor version");
    const std::uint32_t rank = detail::read_u32(is);
    if (rank == 0 || rank > 8) throw IoError("bad tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = detail::read_u32(is);
    Tensor t(shape);
    for (auto& v : t.values()) v = detail::read_f32(is);
    if (!t.all_finite()) throw IoError("tensor holds non-finite values");
    return t;
  } catch (const Error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

namespace {

// Next whitespace-separated header token, skipping '#' comments.
std::string pnm_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {}
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

Tensor read_pnm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  const std::string magic = pnm_token(is);
  if (magic != "P5" && magic != "P6") throw IoError(path.string() + ": only binary P5/P6 images are supported");
  const std::size_t channels = magic == "P5" ? 1 : 3;
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(pnm_token(is));
    h = std::stoul(pnm_token(is));
    maxval = std::stoul(pnm_token(is));
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed PNM header");
  }
  if (w == 0 || h == 0 || maxval != 255) throw IoError(path.string() + ": expected 8-bit PNM with maxval 255");
  std::vector<unsigned char> buf(w * h * channels);
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw IoError(path.string() + ": truncated pixel data");
  Tensor t({h, w, channels});
  for (std::size_t i = 0; i < buf.size(); ++i) t[i] = buf[i];
  return t;
}

void write_pnm(const Tensor& image, const std::filesystem::path& path) {
  if (!is_image_shape(image.shape()) || (image.dim(2) != 1 && image.dim(2) != 3))
    throw ShapeError("PNM export needs an H x W x 1 or H x W x 3 image");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << (image.dim(2) == 1 ? "P5" : "P6") << '\n' << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  for (double v : image.values()) os.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 255.0)))));
  if (!os) throw IoError("write failed: " + path.string());
}

Tensor read_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return read_pnm(path);
  return read_tensor(path);
}

}  // namespace advface
