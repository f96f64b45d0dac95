#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "voxelprior/voxel_grid.hpp"

namespace voxelprior {

// Lengths are fractions of the D-2 interior span (one empty cell of margin on
// every side); shapes are centered in the grid and rest on no floor.
// Accepted values are [lo, hi]; unspecified ones are sampled from
// [sample_lo, sample_hi], which keeps occupancy within [0.02, 0.6].
struct ParamRange {
  std::string name;
  double lo;
  double hi;
  double sample_lo = lo;
  double sample_hi = hi;
};

struct CategoryInfo {
  std::string name;
  bool novel;
  std::vector<ParamRange> params;
};

const std::vector<CategoryInfo>& shape_categories();
const CategoryInfo& category_info(std::string_view name);
std::vector<std::string> base_category_names();
std::vector<std::string> novel_category_names();

// Parameters missing from `params` are drawn uniformly from their documented
// range using `seed`; supplied ones must lie inside it.
struct ShapeSpec {
  std::string category;
  std::map<std::string, double> params;
  std::uint64_t seed = 0;
};

// Fills in every parameter; what generate_shape actually uses.
ShapeSpec resolve_spec(const ShapeSpec& spec);

VoxelGrid generate_shape(const ShapeSpec& spec, std::size_t dim);

// Number of 6-connected occupied components.
std::size_t connected_components(const VoxelGrid& grid);

// Rotates a quarter turn about the vertical (y) axis: out(x,y,z) = in(z,y,D-1-x).
VoxelGrid rotate_quarter_y(const VoxelGrid& grid);

}  // namespace voxelprior
