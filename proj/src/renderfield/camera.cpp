#include "emohead/renderfield/camera.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace emohead::renderfield {

using nlohmann::json;

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  if (n == 0.0) throw CameraError("cannot normalize a zero vector");
  return (1.0 / n) * a;
}

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 apply(const Mat3& m, const Vec3& v) {
  return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2], m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
          m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

Intrinsics Intrinsics::centred(std::size_t width, std::size_t height, double focal) {
  return {focal, 0.5 * static_cast<double>(width), 0.5 * static_cast<double>(height), width, height};
}

Intrinsics Intrinsics::resized(std::size_t w, std::size_t h) const {
  const double sx = static_cast<double>(w) / static_cast<double>(width);
  const double sy = static_cast<double>(h) / static_cast<double>(height);
  return {focal * sx, cx * sx, cy * sy, w, h};
}

void CameraPose::validate() const {
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += r[k * 3 + i] * r[k * 3 + j];
      if (std::abs(s - (i == j ? 1.0 : 0.0)) > 1e-9) throw CameraError("pose rotation is not orthonormal");
    }
  }
  const double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                     r[2] * (r[3] * r[7] - r[4] * r[6]);
  if (std::abs(det - 1.0) > 1e-9) throw CameraError("pose rotation has determinant " + std::to_string(det));
  if (intrinsics.width == 0 || intrinsics.height == 0 || !(intrinsics.focal > 0.0)) {
    throw CameraError("intrinsics need positive focal length and image size");
  }
}

CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up, const Intrinsics& intrinsics) {
  const Vec3 back = normalized(eye - target);  // camera +z
  const Vec3 right = normalized(cross(up, back));
  const Vec3 cam_up = cross(back, right);
  CameraPose p;
  // Columns are the camera axes in world coordinates.
  p.r = {right[0], cam_up[0], back[0], right[1], cam_up[1], back[1], right[2], cam_up[2], back[2]};
  p.omega = eye;
  p.intrinsics = intrinsics;
  return p;
}

std::vector<CameraPose> orbit_poses(std::size_t count, double radius, double elevation_deg,
                                    const Intrinsics& intrinsics) {
  std::vector<CameraPose> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double az = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count);
    const double el = (k % 2 == 0 ? 1.0 : -1.0) * elevation_deg * std::numbers::pi / 180.0;
    const Vec3 eye{radius * std::cos(el) * std::sin(az), radius * std::sin(el), radius * std::cos(el) * std::cos(az)};
    out.push_back(look_at(eye, {0, 0, 0}, {0, 1, 0}, intrinsics));
  }
  return out;
}

Ray generate_ray(const CameraPose& pose, std::size_t u, std::size_t v, double t_near, double t_far) {
  const Intrinsics& in = pose.intrinsics;
  if (u >= in.width || v >= in.height) {
    throw CameraError("pixel (" + std::to_string(u) + ", " + std::to_string(v) + ") outside " +
                      std::to_string(in.width) + "x" + std::to_string(in.height) + " image");
  }
  if (!(t_near >= 0.0 && t_near < t_far)) throw CameraError("ray bounds need 0 <= t_near < t_far");
  const Vec3 cam{(static_cast<double>(u) + 0.5 - in.cx) / in.focal, -(static_cast<double>(v) + 0.5 - in.cy) / in.focal,
                 -1.0};
  return {pose.omega, normalized(apply(pose.r, cam)), t_near, t_far};
}

json to_json(const CameraPose& pose) {
  const Intrinsics& in = pose.intrinsics;
  return {{"R", pose.r},
          {"omega", pose.omega},
          {"intrinsics", {{"focal", in.focal}, {"cx", in.cx}, {"cy", in.cy}, {"width", in.width}, {"height", in.height}}}};
}

CameraPose pose_from_json(const json& j) {
  CameraPose p;
  try {
    p.r = j.at("R").get<Mat3>();
    p.omega = j.at("omega").get<Vec3>();
    const json& in = j.at("intrinsics");
    p.intrinsics.focal = in.at("focal").get<double>();
    p.intrinsics.width = in.at("width").get<std::size_t>();
    p.intrinsics.height = in.at("height").get<std::size_t>();
    p.intrinsics.cx = in.value("cx", 0.5 * static_cast<double>(p.intrinsics.width));
    p.intrinsics.cy = in.value("cy", 0.5 * static_cast<double>(p.intrinsics.height));
  } catch (const json::exception& e) {
    throw CameraError(std::string("pose json: ") + e.what());
  }
  p.validate();
  return p;
}

}  // namespace emohead::renderfield
