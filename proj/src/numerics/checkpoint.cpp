#include "emohead/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "emohead/numerics/errors.hpp"

namespace emohead::numerics {
namespace {

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) out = (out << 8) | ((v >> (8 * i)) & 0xff);
    return out;
  }
}

}  // namespace

void append_f32(std::string& out, float v) {
  const auto bits = to_little(std::bit_cast<std::uint32_t>(v));
  char buf[4];
  std::memcpy(buf, &bits, 4);
  out.append(buf, 4);
}

void append_f64(std::string& out, double v) {
  const auto bits = to_little(std::bit_cast<std::uint64_t>(v));
  char buf[8];
  std::memcpy(buf, &bits, 8);
  out.append(buf, 8);
}

float read_f32(const char* p) {
  std::uint32_t bits;
  std::memcpy(&bits, p, 4);
  return std::bit_cast<float>(to_little(bits));
}

double read_f64(const char* p) {
  std::uint64_t bits;
  std::memcpy(&bits, p, 8);
  return std::bit_cast<double>(to_little(bits));
}

std::string encode_manifest_file(const ManifestFile& file) {
  std::string out = file.manifest.dump();
  out.push_back('\n');
  out += file.payload;
  return out;
}

ManifestFile decode_manifest_file(const std::string& bytes, const std::string& origin) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw LoadError(origin + ": missing manifest line");
  ManifestFile f;
  try {
    f.manifest = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(origin + ": malformed manifest: " + e.what());
  }
  f.payload = bytes.substr(nl + 1);
  return f;
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw LoadError("cannot open " + path.string() + " for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw LoadError("failed writing " + path.string());
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const char* dtype_name(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }
std::size_t dtype_size(Dtype d) { return d == Dtype::f32 ? 4 : 8; }

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw LoadError("checkpoint has no tensor named " + name);
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return true;
  }
  return false;
}

std::string encode_checkpoint(const ConstParamList& params, const nlohmann::json& meta, Dtype dtype) {
  ManifestFile f;
  f.manifest["format"] = "emohead-checkpoint";
  f.manifest["version"] = 1;
  f.manifest["dtype"] = dtype_name(dtype);
  f.manifest["meta"] = meta;
  auto& list = f.manifest["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : params) {
    list.push_back({{"name", name}, {"shape", t->shape()}});
    for (double v : t->values()) {
      if (dtype == Dtype::f32) {
        append_f32(f.payload, static_cast<float>(v));
      } else {
        append_f64(f.payload, v);
      }
    }
  }
  return encode_manifest_file(f);
}

Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin) {
  const ManifestFile f = decode_manifest_file(bytes, origin);
  Checkpoint c;
  try {
    if (f.manifest.at("format") != "emohead-checkpoint") throw LoadError(origin + ": not a checkpoint");
    const std::string dt = f.manifest.at("dtype");
    if (dt == "f32") {
      c.dtype = Dtype::f32;
    } else if (dt == "f64") {
      c.dtype = Dtype::f64;
    } else {
      throw LoadError(origin + ": unknown dtype " + dt);
    }
    c.meta = f.manifest.value("meta", nlohmann::json::object());
    const std::size_t width = dtype_size(c.dtype);
    std::size_t offset = 0;
    for (const auto& entry : f.manifest.at("tensors")) {
      const std::string name = entry.at("name");
      const Shape shape = entry.at("shape").get<Shape>();
      const std::size_t n = shape_product(shape);
      if (offset + n * width > f.payload.size()) throw LoadError(origin + ": payload truncated in tensor " + name);
      std::vector<double> data(n);
      for (std::size_t i = 0; i < n; ++i) {
        const char* p = f.payload.data() + offset + i * width;
        data[i] = c.dtype == Dtype::f32 ? static_cast<double>(read_f32(p)) : read_f64(p);
      }
      offset += n * width;
      try {
        c.tensors.emplace_back(name, Tensor::from_external(shape, std::move(data)));
      } catch (const std::runtime_error& e) {
        throw LoadError(origin + ": tensor " + name + ": " + e.what());
      }
    }
    if (offset != f.payload.size()) throw LoadError(origin + ": trailing bytes after last tensor");
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(origin + ": malformed manifest: " + e.what());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const ConstParamList& params, const nlohmann::json& meta,
                     Dtype dtype) {
  write_bytes(path, encode_checkpoint(params, meta, dtype));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_bytes(path), path.string()); }

void assign_parameters(const Checkpoint& ckpt, const ParamList& params) {
  for (const auto& [name, t] : params) {
    const Tensor& src = ckpt.get(name);
    if (src.shape() != t->shape()) {
      throw LoadError("checkpoint tensor " + name + " has shape " + shape_string(src.shape()) + ", expected " +
                      shape_string(t->shape()));
    }
    *t = src;
  }
}

}  // namespace emohead::numerics
