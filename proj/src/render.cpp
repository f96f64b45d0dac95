#include "voxelprior/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace voxelprior {
namespace {

struct Vec3 {
  double x, y, z;
};

Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }
Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }

// Distance along the ray to the first occupied voxel, or +inf.
// Origin and direction are in grid coordinates (voxel i spans [i, i+1)).
double march(const VoxelGrid& grid, Vec3 o, Vec3 dir) {
  const double n = static_cast<double>(grid.dim());
  const double oc[3] = {o.x, o.y, o.z};
  const double dc[3] = {dir.x, dir.y, dir.z};
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dc[a] == 0.0) {
      if (oc[a] < 0.0 || oc[a] >= n) return std::numeric_limits<double>::infinity();
      continue;
    }
    double ta = (0.0 - oc[a]) / dc[a];
    double tb = (n - oc[a]) / dc[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 >= t1) return std::numeric_limits<double>::infinity();

  const long dim = static_cast<long>(grid.dim());
  long cell[3];
  long step[3];
  double next[3], delta[3];
  for (int a = 0; a < 3; ++a) {
    const double p = oc[a] + t0 * dc[a];
    cell[a] = std::clamp(static_cast<long>(std::floor(p)), 0L, dim - 1);
    if (dc[a] > 0) {
      step[a] = 1;
      next[a] = (static_cast<double>(cell[a] + 1) - oc[a]) / dc[a];
      delta[a] = 1.0 / dc[a];
    } else if (dc[a] < 0) {
      step[a] = -1;
      next[a] = (static_cast<double>(cell[a]) - oc[a]) / dc[a];
      delta[a] = -1.0 / dc[a];
    } else {
      step[a] = 0;
      next[a] = std::numeric_limits<double>::infinity();
      delta[a] = std::numeric_limits<double>::infinity();
    }
  }
  double t = t0;
  while (true) {
    const auto x = static_cast<std::size_t>(cell[0]);
    const auto y = static_cast<std::size_t>(cell[1]);
    const auto z = static_cast<std::size_t>(cell[2]);
    if (grid.at(x, y, z) >= 0.5) return t;
    const int a = next[0] < next[1] ? (next[0] < next[2] ? 0 : 2) : (next[1] < next[2] ? 1 : 2);
    t = next[a];
    cell[a] += step[a];
    if (cell[a] < 0 || cell[a] >= dim) return std::numeric_limits<double>::infinity();
    next[a] += delta[a];
  }
}

}  // namespace

RenderedView render(const VoxelGrid& grid, double azimuth_deg, double elevation_deg,
                    std::size_t size) {
  if (grid.empty()) throw std::invalid_argument("cannot render an empty grid object");
  if (size == 0) throw std::invalid_argument("image size must be positive");
  const double az = azimuth_deg * std::numbers::pi / 180.0;
  const double el = elevation_deg * std::numbers::pi / 180.0;
  const Vec3 toward{std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az)};
  const Vec3 right{std::cos(az), 0.0, -std::sin(az)};
  const Vec3 up{-std::sin(el) * std::sin(az), std::cos(el), -std::sin(el) * std::cos(az)};
  const Vec3 dir = -1.0 * toward;

  const double half = static_cast<double>(grid.dim()) / 2.0;
  const double radius = half * std::numbers::sqrt3;
  const double distance = 2.0 * radius;  // camera plane lies outside the sphere
  const Vec3 center{half, half, half};

  const std::size_t plane = size * size;
  Tensor image(Shape{3, size, size}, 0.0);
  double* px = image.data();
  const double pitch = 2.0 * radius / static_cast<double>(size);
  for (std::size_t i = 0; i < size; ++i) {
    const double v = radius - (static_cast<double>(i) + 0.5) * pitch;
    for (std::size_t j = 0; j < size; ++j) {
      const double u = (static_cast<double>(j) + 0.5) * pitch - radius;
      const Vec3 origin = center + u * right + v * up + distance * toward;
      const double t = march(grid, origin, dir);
      if (!std::isfinite(t)) continue;
      const double depth = std::clamp((t - (distance - radius)) / (2.0 * radius), 0.0, 1.0);
      const double shade = 1.0 - 0.75 * depth;
      for (std::size_t c = 0; c < 3; ++c) px[c * plane + i * size + j] = shade;
    }
  }
  return {std::move(image), azimuth_deg, elevation_deg};
}

}  // namespace voxelprior
