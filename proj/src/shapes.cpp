#include "voxelprior/shapes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "voxelprior/rng.hpp"

namespace voxelprior {
namespace {

const std::vector<CategoryInfo> kCategories = {
    {"box",
     false,
     {{"sx", 0.1, 1.0, 0.35, 0.8}, {"sy", 0.1, 1.0, 0.35, 0.8}, {"sz", 0.1, 1.0, 0.35, 0.8}}},
    {"table",
     false,
     {{"width", 0.7, 1.0},
      {"depth", 0.6, 1.0},
      {"height", 0.5, 0.85},
      {"top", 0.12, 0.2},
      {"leg", 0.12, 0.2}}},
    {"chair",
     false,
     {{"width", 0.5, 0.75},
      {"depth", 0.5, 0.75},
      {"seat_height", 0.3, 0.45},
      {"back_height", 0.3, 0.45},
      {"thickness", 0.12, 0.18},
      {"leg", 0.12, 0.18}}},
    {"tower", false, {{"side", 0.25, 0.45}, {"height", 0.7, 1.0}}},
    {"cross",
     false,
     {{"post", 0.18, 0.28}, {"height", 0.7, 1.0}, {"bar", 0.5, 0.9}, {"bar_level", 0.55, 0.8}}},
    {"rod", true, {{"length", 0.9, 1.0}, {"width", 0.2, 0.3}, {"height", 0.2, 0.3}}},
    {"lbracket",
     true,
     {{"arm_x", 0.5, 0.9}, {"arm_y", 0.5, 0.9}, {"width", 0.3, 0.7}, {"thickness", 0.15, 0.25}}},
    {"hframe",
     true,
     {{"separation", 0.5, 0.9},
      {"height", 0.6, 1.0},
      {"thickness", 0.15, 0.25},
      {"depth", 0.2, 0.35}}},
    {"ring", true, {{"radius", 0.35, 0.5}, {"tube", 0.12, 0.2}, {"height", 0.2, 0.35}}},
    {"ellipsoid", true, {{"ax", 0.25, 0.5}, {"ay", 0.25, 0.5}, {"az", 0.25, 0.5}}},
};

// Integer cell ranges [lo, hi) inside the interior, built from fractional
// extents centered at a fractional position.
struct Raster {
  std::size_t dim;
  double span;  // interior cells

  explicit Raster(std::size_t d) : dim(d), span(static_cast<double>(d) - 2.0) {}

  std::size_t cells(double fraction) const {
    const auto n = static_cast<long>(std::lround(fraction * span));
    return static_cast<std::size_t>(std::clamp<long>(n, 1, static_cast<long>(span)));
  }
  // Range of `n` cells centered in the grid.
  std::array<std::size_t, 2> centered(std::size_t n) const {
    const std::size_t lo = 1 + (static_cast<std::size_t>(span) - n) / 2;
    return {lo, lo + n};
  }
};

void fill(VoxelGrid& g, std::array<std::size_t, 2> x, std::array<std::size_t, 2> y,
          std::array<std::size_t, 2> z) {
  for (std::size_t i = x[0]; i < x[1]; ++i)
    for (std::size_t j = y[0]; j < y[1]; ++j)
      for (std::size_t k = z[0]; k < z[1]; ++k) g.at(i, j, k) = 1.0;
}

VoxelGrid make_box(const Raster& r, std::map<std::string, double>& p) {
  VoxelGrid g(r.dim);
  fill(g, r.centered(r.cells(p["sx"])), r.centered(r.cells(p["sy"])),
       r.centered(r.cells(p["sz"])));
  return g;
}

VoxelGrid make_table(const Raster& r, std::map<std::string, double>& p) {
  VoxelGrid g(r.dim);
  const auto xs = r.centered(r.cells(p["width"]));
  const auto zs = r.centered(r.cells(p["depth"]));
  const auto ys = r.centered(r.cells(p["height"]));
  const std::size_t top = std::min(r.cells(p["top"]), ys[1] - ys[0] - 1);
  const std::size_t leg = std::min({r.cells(p["leg"]), (xs[1] - xs[0]) / 2, (zs[1] - zs[0]) / 2});
  fill(g, xs, {ys[1] - top, ys[1]}, zs);
  for (std::size_t lx : {xs[0], xs[1] - leg})
    for (std::size_t lz : {zs[0], zs[1] - leg}) fill(g, {lx, lx + leg}, {ys[0], ys[1]}, {lz, lz + leg});
  return g;
}

VoxelGrid make_chair(const Raster& r, std::map<std::string, double>& p) {
  VoxelGrid g(r.dim);
  const auto xs = r.centered(r.cells(p["width"]));
  const auto zs = r.centered(r.cells(p["depth"]));
  const std::size_t t = r.cells(p["thickness"]);
  const std::size_t seat_h = r.cells(p["seat_height"]);
  const std::size_t back_h = r.cells(p["back_height"]);
  const auto ys = r.centered(std::min(seat_h + t + back_h, static_cast<std::size_t>(r.span)));
  const std::size_t seat_top = std::min(ys[0] + seat_h + t, ys[1] - 1);
  const std::size_t leg = std::min({r.cells(p["leg"]), (xs[1] - xs[0]) / 2, (zs[1] - zs[0]) / 2});
  fill(g, xs, {seat_top - t, seat_top}, zs);
  fill(g, xs, {seat_top - t, ys[1]}, {zs[0], zs[0] + t});
  for (std::size_t lx : {xs[0], xs[1] - leg})
    for (std::size_t lz : {zs[0], zs[1] - leg}) fill(g, {lx, lx + leg}, {ys[0], seat_top}, {lz, lz + leg});
  return g;
}

VoxelGrid make_tower(const Raster& r, std::map<std::string, double>& p) {
  VoxelGrid g(r.dim);
  const auto s = r.centered(r.cells(p["side"]));
  fill(g, s, r.centered(r.cells(p["height"])), s);
  return g;
}

VoxelGrid make_cross(const Raster& r, std::map<std::string, double>& p) {
  VoxelGrid g(r.dim);
  const std::size_t post = r.cells(p["post"]);
  const auto ps = r.centered(post);
  const auto ys = r.centered(r.cells(p["height"]));
  fill(g, ps, ys, ps);
  const std::size_t h = ys[1] - ys[0];
  std::size_t level = ys[0] + static_cast<std::size_t>(std::lround(p["bar_level"] * static_cast<double>(h)));
  level = std::clamp(level, ys[0], ys[1] - std::min(post, h));
  fill(g, r.centered(std::max(r.cells(p["bar"]), post)), {level, level + std::min(post, h)}, ps);
  return g;
}

VoxelGrid make_rod(const Raster& r, std::map<std::string, double>& p) {
  VoxelGrid g(r.dim);
  const std::size_t len = r.cells(p["length"]);
  const std::size_t cap = std::max<std::size_t>(1, len / 3);
  fill(g, r.centered(len), r.centered(std::min(r.cells(p["height"]), cap)),
       r.centered(std::min(r.cells(p["width"]), cap)));
  return g;
}

VoxelGrid make_lbracket(const Raster& r, std::map<std::string, double>& p) {
  VoxelGrid g(r.dim);
  const auto xs = r.centered(r.cells(p["arm_x"]));
  const auto ys = r.centered(r.cells(p["arm_y"]));
  const auto zs = r.centered(r.cells(p["width"]));
  const std::size_t t = std::min({r.cells(p["thickness"]), xs[1] - xs[0], ys[1] - ys[0]});
  fill(g, xs, {ys[0], ys[0] + t}, zs);
  fill(g, {xs[0], xs[0] + t}, ys, zs);
  return g;
}

VoxelGrid make_hframe(const Raster& r, std::map<std::string, double>& p) {
  VoxelGrid g(r.dim);
  const std::size_t t = r.cells(p["thickness"]);
  const auto xs = r.centered(std::max(r.cells(p["separation"]), 2 * t + 1));
  const auto ys = r.centered(r.cells(p["height"]));
  const auto zs = r.centered(r.cells(p["depth"]));
  fill(g, {xs[0], xs[0] + t}, ys, zs);
  fill(g, {xs[1] - t, xs[1]}, ys, zs);
  const std::size_t bar = std::min(t, ys[1] - ys[0]);
  const std::size_t mid = ys[0] + (ys[1] - ys[0] - bar) / 2;
  fill(g, xs, {mid, mid + bar}, zs);
  return g;
}

VoxelGrid make_ring(const Raster& r, std::map<std::string, double>& p) {
  VoxelGrid g(r.dim);
  const double c = static_cast<double>(r.dim) / 2.0;
  const double outer = p["radius"] * r.span;
  const double inner = std::max(0.0, outer - std::max(p["tube"] * r.span, 1.5));
  const auto ys = r.centered(r.cells(p["height"]));
  for (std::size_t x = 1; x + 1 < r.dim; ++x)
    for (std::size_t z = 1; z + 1 < r.dim; ++z) {
      const double dx = static_cast<double>(x) + 0.5 - c;
      const double dz = static_cast<double>(z) + 0.5 - c;
      const double d = std::sqrt(dx * dx + dz * dz);
      if (d <= outer && d >= inner)
        for (std::size_t y = ys[0]; y < ys[1]; ++y) g.at(x, y, z) = 1.0;
    }
  return g;
}

VoxelGrid make_ellipsoid(const Raster& r, std::map<std::string, double>& p) {
  VoxelGrid g(r.dim);
  const double c = static_cast<double>(r.dim) / 2.0;
  const double a[3] = {p["ax"] * r.span, p["ay"] * r.span, p["az"] * r.span};
  for (std::size_t x = 0; x < r.dim; ++x)
    for (std::size_t y = 0; y < r.dim; ++y)
      for (std::size_t z = 0; z < r.dim; ++z) {
        const double u[3] = {(static_cast<double>(x) + 0.5 - c) / a[0],
                             (static_cast<double>(y) + 0.5 - c) / a[1],
                             (static_cast<double>(z) + 0.5 - c) / a[2]};
        if (u[0] * u[0] + u[1] * u[1] + u[2] * u[2] <= 1.0) g.at(x, y, z) = 1.0;
      }
  return g;
}

}  // namespace

const std::vector<CategoryInfo>& shape_categories() { return kCategories; }

const CategoryInfo& category_info(std::string_view name) {
  for (const auto& c : kCategories)
    if (c.name == name) return c;
  std::string known;
  for (const auto& c : kCategories) known += (known.empty() ? "" : ", ") + c.name;
  throw std::invalid_argument("unknown shape category '" + std::string(name) +
                              "' (known: " + known + ")");
}

std::vector<std::string> base_category_names() {
  std::vector<std::string> out;
  for (const auto& c : kCategories)
    if (!c.novel) out.push_back(c.name);
  return out;
}

std::vector<std::string> novel_category_names() {
  std::vector<std::string> out;
  for (const auto& c : kCategories)
    if (c.novel) out.push_back(c.name);
  return out;
}

ShapeSpec resolve_spec(const ShapeSpec& spec) {
  const CategoryInfo& info = category_info(spec.category);
  for (const auto& [name, value] : spec.params) {
    const auto it = std::find_if(info.params.begin(), info.params.end(),
                                 [&](const ParamRange& p) { return p.name == name; });
    if (it == info.params.end())
      throw std::invalid_argument("category '" + info.name + "' has no parameter '" + name + "'");
    if (!(value >= it->lo && value <= it->hi))
      throw std::invalid_argument("parameter " + info.name + "." + name + " = " +
                                  std::to_string(value) + " outside [" + std::to_string(it->lo) +
                                  ", " + std::to_string(it->hi) + "]");
  }
  ShapeSpec out = spec;
  Rng rng(spec.seed);
  for (const auto& range : info.params) {
    // Draw for every parameter so supplied values do not shift the others.
    const double u = uniform(rng, range.sample_lo, range.sample_hi);
    out.params.try_emplace(range.name, u);
  }
  return out;
}

VoxelGrid generate_shape(const ShapeSpec& spec, std::size_t dim) {
  if (dim < 8) throw std::invalid_argument("shape grids need dimension >= 8");
  ShapeSpec full = resolve_spec(spec);
  const Raster r(dim);
  auto& p = full.params;
  const std::string& c = full.category;
  if (c == "box") return make_box(r, p);
  if (c == "table") return make_table(r, p);
  if (c == "chair") return make_chair(r, p);
  if (c == "tower") return make_tower(r, p);
  if (c == "cross") return make_cross(r, p);
  if (c == "rod") return make_rod(r, p);
  if (c == "lbracket") return make_lbracket(r, p);
  if (c == "hframe") return make_hframe(r, p);
  if (c == "ring") return make_ring(r, p);
  return make_ellipsoid(r, p);
}

std::size_t connected_components(const VoxelGrid& grid) {
  const std::size_t d = grid.dim();
  std::vector<char> seen(grid.size(), 0);
  std::vector<std::size_t> stack;
  std::size_t components = 0;
  for (std::size_t start = 0; start < grid.size(); ++start) {
    if (seen[start] || grid.values()[start] < 0.5) continue;
    ++components;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const std::size_t x = i / (d * d), y = (i / d) % d, z = i % d;
      const std::array<std::array<long, 3>, 6> steps{
          {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
      for (const auto& s : steps) {
        const long nx = static_cast<long>(x) + s[0];
        const long ny = static_cast<long>(y) + s[1];
        const long nz = static_cast<long>(z) + s[2];
        const long n = static_cast<long>(d);
        if (nx < 0 || ny < 0 || nz < 0 || nx >= n || ny >= n || nz >= n) continue;
        const std::size_t j = grid.index(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny),
                                         static_cast<std::size_t>(nz));
        if (!seen[j] && grid.values()[j] >= 0.5) {
          seen[j] = 1;
          stack.push_back(j);
        }
      }
    }
  }
  return components;
}

VoxelGrid rotate_quarter_y(const VoxelGrid& grid) {
  const std::size_t d = grid.dim();
  VoxelGrid out(d);
  for (std::size_t x = 0; x < d; ++x)
    for (std::size_t y = 0; y < d; ++y)
      for (std::size_t z = 0; z < d; ++z) out.at(x, y, z) = grid.at(z, y, d - 1 - x);
  return out;
}

}  // namespace voxelprior
