#pragma once

#include <filesystem>

#include "advface/tensor.hpp"

namespace advface {

// Raw tensor container:
//   "AFTN"  magic
//   u32     version (1)
//   u32     rank
//   u32     dims[rank]
//   f32     data[prod(dims)]
// All integers and floats little-endian.
void write_tensor(const Tensor& tensor, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

// Binary 8-bit PGM (P5) or PPM (P6) to an H x W x C tensor in [0, 255].
Tensor read_pnm(const std::filesystem::path& path);
void write_pnm(const Tensor& image, const std::filesystem::path& path);

// Dispatches on the extension: .pgm/.ppm/.pnm via read_pnm, anything else as
// a raw tensor.
Tensor read_image(const std::filesystem::path& path);

}  // namespace advface
