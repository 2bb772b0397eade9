#include "emohead/renderfield/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "emohead/numerics/checkpoint.hpp"

namespace emohead::renderfield {

namespace num = emohead::numerics;

namespace {

void require_same_size(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) {
    throw ImageError("image sizes differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                     std::to_string(b.width) + "x" + std::to_string(b.height));
  }
}

std::uint8_t to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

double mse(const Image& a, const Image& b) {
  require_same_size(a, b);
  if (a.rgb.empty()) throw ImageError("mse of empty images");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) s += (a.rgb[i] - b.rgb[i]) * (a.rgb[i] - b.rgb[i]);
  return s / static_cast<double>(a.rgb.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(m);
}

std::string encode_png(const Image& image) {
  if (image.width == 0 || image.height == 0) throw ImageError("cannot encode an empty image");
  std::vector<std::uint8_t> bytes(image.rgb.size());
  std::transform(image.rgb.begin(), image.rgb.end(), bytes.begin(), to_byte);

  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, bytes.data(), 0, nullptr)) {
    throw ImageError(std::string("png encode: ") + png.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, bytes.data(), 0, nullptr)) {
    throw ImageError(std::string("png encode: ") + png.message);
  }
  out.resize(size);
  return out;
}

void save_png(const std::filesystem::path& path, const Image& image) { num::write_bytes(path, encode_png(image)); }

Image decode_png(const std::string& bytes) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw ImageError(std::string("png decode: ") + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&png);
    throw ImageError(std::string("png decode: ") + png.message);
  }
  Image img(png.width, png.height);
  for (std::size_t i = 0; i < buf.size(); ++i) img.rgb[i] = buf[i] / 255.0;
  return img;
}

Image load_png(const std::filesystem::path& path) {
  try {
    return decode_png(num::read_bytes(path));
  } catch (const ImageError& e) {
    throw ImageError(path.string() + ": " + e.what());
  }
}

std::string encode_raw(const Image& image) {
  num::ManifestFile f;
  f.manifest = {{"kind", "image"}, {"width", image.width}, {"height", image.height}, {"channels", 3}, {"dtype", "f32"}};
  f.payload.reserve(image.rgb.size() * 4);
  for (double v : image.rgb) num::append_f32(f.payload, static_cast<float>(v));
  return num::encode_manifest_file(f);
}

Image decode_raw(const std::string& bytes) {
  const num::ManifestFile f = num::decode_manifest_file(bytes, "raw image");
  if (f.manifest.value("kind", "") != "image" || f.manifest.value("dtype", "") != "f32" ||
      f.manifest.value("channels", 0) != 3) {
    throw ImageError("raw image: unsupported manifest");
  }
  Image img(f.manifest.at("width").get<std::size_t>(), f.manifest.at("height").get<std::size_t>());
  if (f.payload.size() != img.rgb.size() * 4) throw ImageError("raw image: payload size does not match dimensions");
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = num::read_f32(f.payload.data() + 4 * i);
  return img;
}

}  // namespace emohead::renderfield
