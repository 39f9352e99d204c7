#pragma once

#include <filesystem>
#include <string>

#include "swinfree/model.hpp"

namespace swinfree {

/// Manifest path for a raw data file: "<path>.json".
std::filesystem::path sidecar_path(const std::filesystem::path& data_path);

/// Weight archive: raw little-endian f32 tensors concatenated in visit order,
/// plus a JSON manifest of {name, shape, offset, length} entries.
void save_weights(const ModelParams<float>& params, const std::filesystem::path& path);

/// Loads into a model shaped by `cfg`. Throws FormatError when the manifest
/// is malformed or any name, shape, offset or the total length disagrees.
ModelParams<float> load_weights(const ModelConfig& cfg, const std::filesystem::path& path);

struct TensorBlob {
  Tensor<float> tensor;
  std::string layout = "BCHW";
};

/// Raw little-endian f32 values plus {shape, dtype: "f32", layout} sidecar.
void write_blob(const std::filesystem::path& path, const Tensor<float>& t,
                const std::string& layout = "BCHW");
TensorBlob read_blob(const std::filesystem::path& path);

}  // namespace swinfree
