#pragma once

#include <filesystem>

#include "advface/model.hpp"

namespace advface {

// Weight files come in two parts: a JSON manifest listing the layers in order
// with the shape of each trainable tensor, and a binary blob holding those
// tensors as little-endian float32 values concatenated in manifest order.
// The blob path stored in the manifest is relative to the manifest.
//
// Values are rounded to float32 on save, so a reloaded model matches the
// in-memory one only up to float precision.
void save_model(const EmbeddingModel& model, const std::filesystem::path& manifest_path);
EmbeddingModel load_model(const std::filesystem::path& manifest_path);

// Rounds every parameter to float32 in place, making the in-memory model
// identical to what load_model(save_model(...)) produces.
void round_to_storage_precision(EmbeddingModel& model);

}  // namespace advface
