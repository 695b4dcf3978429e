#include "advface/weights_io.hpp"

#include <fstream>
#include <variant>

#include "json.hpp"

#include "advface/errors.hpp"
#include "binary_io.hpp"

namespace advface {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json tensor_entry(const char* name, const Tensor& t) { return json{{"name", name}, {"shape", t.shape()}}; }

json layer_to_json(const Layer& layer) {
  json j{{"kind", layer_kind(layer)}};
  if (const auto* d = std::get_if<Dense>(&layer)) {
    j["in"] = d->weight.dim(1);
    j["out"] = d->weight.dim(0);
    j["tensors"] = {tensor_entry("weight", d->weight), tensor_entry("bias", d->bias)};
  } else if (const auto* c = std::get_if<Conv2d>(&layer)) {
    j["in_channels"] = c->in_channels;
    j["out_channels"] = c->out_channels;
    j["kernel"] = c->kernel;
    j["stride"] = c->stride;
    j["padding"] = c->padding;
    j["tensors"] = {tensor_entry("weight", c->weight), tensor_entry("bias", c->bias)};
  } else if (const auto* p = std::get_if<AvgPool2d>(&layer)) {
    j["kernel"] = p->kernel;
    j["stride"] = p->stride;
  }
  return j;
}

Tensor read_tensor(std::istream& blob, const json& entry, const Shape& expected) {
  Shape shape = entry.at("shape").get<Shape>();
  if (shape != expected)
    throw IoError("manifest tensor '" + entry.at("name").get<std::string>() + "' has shape " +
                  shape_to_string(shape) + ", expected " + shape_to_string(expected));
  Tensor t(shape);
  for (auto& v : t.values()) v = detail::read_f32(blob);
  return t;
}

Layer layer_from_json(const json& j, std::istream& blob) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "dense") {
    const auto in = j.at("in").get<std::size_t>(), out = j.at("out").get<std::size_t>();
    const auto& ts = j.at("tensors");
    Dense d;
    d.weight = read_tensor(blob, ts.at(0), {out, in});
    d.bias = read_tensor(blob, ts.at(1), {out});
    return d;
  }
  if (kind == "conv2d") {
    Conv2d c;
    c.in_channels = j.at("in_channels").get<std::size_t>();
    c.out_channels = j.at("out_channels").get<std::size_t>();
    c.kernel = j.at("kernel").get<std::size_t>();
    c.stride = j.at("stride").get<std::size_t>();
    c.padding = j.at("padding").get<std::size_t>();
    const auto& ts = j.at("tensors");
    c.weight = read_tensor(blob, ts.at(0), {c.out_channels, c.kernel, c.kernel, c.in_channels});
    c.bias = read_tensor(blob, ts.at(1), {c.out_channels});
    return c;
  }
  if (kind == "relu") return Relu{};
  if (kind == "avgpool2d") return AvgPool2d{j.at("kernel").get<std::size_t>(), j.at("stride").get<std::size_t>()};
  if (kind == "flatten") return Flatten{};
  if (kind == "l2normalize") return L2Normalize{};
  throw IoError("unknown layer kind '" + kind + "'");
}

}  // namespace

void save_model(const EmbeddingModel& model, const fs::path& manifest_path) {
  fs::path blob_path = manifest_path;
  blob_path.replace_extension(".bin");
  json manifest{{"format", "advface-weights"},
                {"version", 1},
                {"input_shape", model.input_shape()},
                {"input_scale", model.input_scale()},
                {"blob", blob_path.filename().string()},
                {"layers", json::array()}};
  for (const auto& l : model.layers()) manifest["layers"].push_back(layer_to_json(l));

  if (manifest_path.has_parent_path()) fs::create_directories(manifest_path.parent_path());
  std::ofstream blob(blob_path, std::ios::binary);
  if (!blob) throw IoError("cannot write " + blob_path.string());
  for (const auto* p : model.parameters())
    for (double v : p->values()) detail::write_f32(blob, v);
  if (!blob) throw IoError("write failed: " + blob_path.string());

  std::ofstream os(manifest_path);
  if (!os) throw IoError("cannot write " + manifest_path.string());
  os << manifest.dump(2) << '\n';
  if (!os) throw IoError("write failed: " + manifest_path.string());
}

EmbeddingModel load_model(const fs::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw IoError("cannot read " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(is);
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  const fs::path blob_path = manifest_path.parent_path() / manifest.at("blob").get<std::string>();
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw IoError("cannot read " + blob_path.string());
  std::vector<Layer> layers;
  try {
    for (const auto& lj : manifest.at("layers")) layers.push_back(layer_from_json(lj, blob));
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  if (blob.peek() != std::char_traits<char>::eof())
    throw IoError("weight blob " + blob_path.string() + " is longer than the manifest describes");
  return EmbeddingModel(manifest.at("input_shape").get<Shape>(), std::move(layers),
                        manifest.at("input_scale").get<double>());
}

void round_to_storage_precision(EmbeddingModel& model) {
  for (auto* p : model.parameters())
    for (auto& v : p->values()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace advface
