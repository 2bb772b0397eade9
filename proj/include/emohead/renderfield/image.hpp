#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace emohead::renderfield {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major RGB image with channel values nominally in [0, 1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> rgb;  // height·width·3

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0.0) {}

  double& at(std::size_t u, std::size_t v, std::size_t c) { return rgb[(v * width + u) * 3 + c]; }
  double at(std::size_t u, std::size_t v, std::size_t c) const { return rgb[(v * width + u) * 3 + c]; }
  std::size_t pixels() const { return width * height; }

  friend bool operator==(const Image&, const Image&) = default;
};

double mse(const Image& a, const Image& b);
/// PSNR in dB with peak 1. Infinite for identical images.
double psnr(const Image& a, const Image& b);

/// 8-bit RGB PNG; values are clamped to [0, 1] and rounded.
std::string encode_png(const Image& image);
void save_png(const std::filesystem::path& path, const Image& image);
Image load_png(const std::filesystem::path& path);
Image decode_png(const std::string& bytes);

/// Raw float dump for exact comparisons: manifest {"kind":"image","width","height","channels":3,"dtype":"f32"}
/// followed by little-endian floats.
std::string encode_raw(const Image& image);
Image decode_raw(const std::string& bytes);

}  // namespace emohead::renderfield
