#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "emohead/numerics/params.hpp"
#include "emohead/numerics/tensor.hpp"

namespace emohead::numerics {

/// Container shared by checkpoints and feature files: one line of compact
/// JSON manifest, a '\n', then the raw little-endian payload.
struct ManifestFile {
  nlohmann::json manifest;
  std::string payload;
};

std::string encode_manifest_file(const ManifestFile& file);
ManifestFile decode_manifest_file(const std::string& bytes, const std::string& origin);
void write_bytes(const std::filesystem::path& path, const std::string& bytes);
std::string read_bytes(const std::filesystem::path& path);

// Little-endian scalar packing.
void append_f32(std::string& out, float v);
void append_f64(std::string& out, double v);
float read_f32(const char* p);
double read_f64(const char* p);

enum class Dtype { f32, f64 };

const char* dtype_name(Dtype d);
std::size_t dtype_size(Dtype d);

/// Named tensors in declaration order plus free-form metadata.
struct Checkpoint {
  Dtype dtype = Dtype::f64;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

std::string encode_checkpoint(const ConstParamList& params, const nlohmann::json& meta, Dtype dtype = Dtype::f64);
Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin = "<memory>");

void save_checkpoint(const std::filesystem::path& path, const ConstParamList& params,
                     const nlohmann::json& meta = nlohmann::json::object(), Dtype dtype = Dtype::f64);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies tensors into `params` by name; every parameter must be present with
/// a matching shape.
void assign_parameters(const Checkpoint& ckpt, const ParamList& params);

}  // namespace emohead::numerics
