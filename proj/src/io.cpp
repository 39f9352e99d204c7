#include "swinfree/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace swinfree {

namespace {

using json = nlohmann::ordered_json;

void append_le(std::string& out, std::span<const float> values) {
  const std::size_t start = out.size();
  out.resize(start + 4 * values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) out[start + 4 * i + b] = static_cast<char>((u >> (8 * b)) & 0xFF);
  }
}

void read_le(const std::string& bytes, std::size_t offset, std::span<float> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) {
      u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + 4 * i + b]))
           << (8 * b);
    }
    out[i] = std::bit_cast<float>(u);
  }
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + p.string());
}

json read_json(const std::filesystem::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw FormatError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

Shape read_shape(const json& j, const std::string& where) {
  if (!j.is_array()) throw FormatError(where + ": shape must be an array");
  Shape s;
  for (const auto& e : j) {
    if (!e.is_number_integer() || e.get<std::int64_t>() < 0) {
      throw FormatError(where + ": shape entries must be non-negative integers");
    }
    s.push_back(e.get<Index>());
  }
  return s;
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& data_path) {
  return std::filesystem::path(data_path.string() + ".json");
}

void save_weights(const ModelParams<float>& params, const std::filesystem::path& path) {
  std::string bytes;
  json manifest;
  manifest["format"] = "swinfree-weights";
  manifest["dtype"] = "f32";
  manifest["config"] = config_to_json(params.config);
  json tensors = json::array();
  visit_params(params, [&](const std::string& name, const Shape& shape,
                           std::span<const float> data, ParamRole) {
    json e;
    e["name"] = name;
    e["shape"] = shape;
    e["offset"] = bytes.size();
    e["length"] = 4 * data.size();
    tensors.push_back(std::move(e));
    append_le(bytes, data);
  });
  manifest["tensors"] = std::move(tensors);
  manifest["total_length"] = bytes.size();
  write_file(path, bytes);
  write_file(sidecar_path(path), manifest.dump(2) + "\n");
}

ModelParams<float> load_weights(const ModelConfig& cfg, const std::filesystem::path& path) {
  const json manifest = read_json(sidecar_path(path));
  const std::string bytes = read_file(path);
  if (!manifest.is_object() || !manifest.contains("tensors") || !manifest["tensors"].is_array()) {
    throw FormatError("weight manifest lacks a 'tensors' array");
  }
  const auto& entries = manifest["tensors"];
  auto params = allocate_model<float>(cfg);
  std::size_t i = 0;
  std::size_t expected_offset = 0;
  visit_params(params, [&](const std::string& name, const Shape& shape, std::span<float> data,
                           ParamRole) {
    if (i >= entries.size()) throw FormatError("manifest ends before tensor " + name);
    const auto& e = entries[i++];
    try {
      const auto ename = e.at("name").get<std::string>();
      if (ename != name) {
        throw FormatError("manifest entry " + std::to_string(i - 1) + " is '" + ename +
                          "', expected '" + name + "'");
      }
      const Shape eshape = read_shape(e.at("shape"), name);
      if (eshape != shape) {
        throw FormatError(name + ": manifest shape " + shape_string(eshape) +
                          " does not match config shape " + shape_string(shape));
      }
      const auto offset = e.at("offset").get<std::size_t>();
      const auto length = e.at("length").get<std::size_t>();
      if (offset != expected_offset || length != 4 * data.size()) {
        throw FormatError(name + ": offset/length inconsistent with file order");
      }
      if (offset + length > bytes.size()) throw FormatError(name + ": extends past end of file");
      read_le(bytes, offset, data);
      expected_offset += length;
    } catch (const json::exception& ex) {
      throw FormatError("malformed manifest entry for " + name + ": " + ex.what());
    }
  });
  if (i != entries.size()) throw FormatError("manifest lists extra tensors");
  if (expected_offset != bytes.size()) {
    throw FormatError("weight file is " + std::to_string(bytes.size()) + " bytes, manifest covers " +
                      std::to_string(expected_offset));
  }
  return params;
}

void write_blob(const std::filesystem::path& path, const Tensor<float>& t,
                const std::string& layout) {
  std::string bytes;
  append_le(bytes, t.values());
  json side;
  side["shape"] = t.shape();
  side["dtype"] = "f32";
  side["layout"] = layout;
  write_file(path, bytes);
  write_file(sidecar_path(path), side.dump() + "\n");
}

TensorBlob read_blob(const std::filesystem::path& path) {
  const json side = read_json(sidecar_path(path));
  TensorBlob blob;
  try {
    if (side.at("dtype").get<std::string>() != "f32") throw FormatError("blob dtype must be f32");
    blob.layout = side.at("layout").get<std::string>();
    const Shape shape = read_shape(side.at("shape"), path.string());
    const std::string bytes = read_file(path);
    if (bytes.size() != 4 * static_cast<std::size_t>(shape_size(shape))) {
      throw FormatError(path.string() + ": " + std::to_string(bytes.size()) +
                        " bytes, shape " + shape_string(shape) + " needs " +
                        std::to_string(4 * shape_size(shape)));
    }
    blob.tensor = Tensor<float>(shape);
    read_le(bytes, 0, blob.tensor.values());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed blob sidecar: " + std::string(e.what()));
  }
  return blob;
}

}  // namespace swinfree
