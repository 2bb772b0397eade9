#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

namespace emohead::renderfield {

using Vec3 = std::array<double, 3>;
/// Row-major 3×3.
using Mat3 = std::array<double, 9>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double dot(const Vec3& a, const Vec3& b);
double norm(const Vec3& a);
Vec3 normalized(const Vec3& a);
Vec3 cross(const Vec3& a, const Vec3& b);
Vec3 apply(const Mat3& m, const Vec3& v);

class CameraError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Intrinsics {
  double focal = 40.0;  // pixels
  double cx = 16.0;
  double cy = 16.0;
  std::size_t width = 32;
  std::size_t height = 32;

  /// Principal point at the image centre.
  static Intrinsics centred(std::size_t width, std::size_t height, double focal);
  /// Same field of view at another resolution.
  Intrinsics resized(std::size_t width, std::size_t height) const;
};

/// Camera-to-world rigid pose W = {R, ω}. Camera convention: x right, y up,
/// looking down −z; pixel rows grow downward.
struct CameraPose {
  Mat3 r{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 omega{0, 0, 0};
  Intrinsics intrinsics;

  /// Throws CameraError unless RᵀR = I and det R = +1 within 1e-9.
  void validate() const;
};

/// Pose at `eye` looking at `target`.
CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up, const Intrinsics& intrinsics);
/// `count` poses on a circle of `radius` around the origin, azimuths evenly
/// spaced, elevations alternating ±`elevation_deg`.
std::vector<CameraPose> orbit_poses(std::size_t count, double radius, double elevation_deg,
                                    const Intrinsics& intrinsics);

struct Ray {
  Vec3 origin{};
  Vec3 direction{0, 0, -1};  // unit
  double t_near = 0.0;
  double t_far = 1.0;

  Vec3 at(double t) const { return origin + t * direction; }
};

/// Pinhole ray through the centre of pixel (u, v). Throws CameraError when the
/// pixel is outside the image or the bounds are not 0 ≤ t_near < t_far.
Ray generate_ray(const CameraPose& pose, std::size_t u, std::size_t v, double t_near, double t_far);

nlohmann::json to_json(const CameraPose& pose);
CameraPose pose_from_json(const nlohmann::json& j);

}  // namespace emohead::renderfield
