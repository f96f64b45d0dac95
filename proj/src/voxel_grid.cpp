#include "voxelprior/voxel_grid.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace voxelprior {

VoxelGrid::VoxelGrid(std::size_t dim, double fill)
    : dim_(dim), values_(dim * dim * dim, fill) {
  if (dim == 0) throw std::invalid_argument("voxel grid dimension must be positive");
  validate();
}

VoxelGrid::VoxelGrid(std::size_t dim, std::vector<double> values)
    : dim_(dim), values_(std::move(values)) {
  if (dim == 0) throw std::invalid_argument("voxel grid dimension must be positive");
  if (values_.size() != dim * dim * dim) {
    throw std::invalid_argument("voxel grid of dimension " + std::to_string(dim) +
                                " needs " + std::to_string(dim * dim * dim) +
                                " values, got " + std::to_string(values_.size()));
  }
  validate();
}

VoxelGrid VoxelGrid::from_tensor(const Tensor& t) {
  const Shape& s = t.shape();
  const bool cube3 = s.size() == 3 && s[0] == s[1] && s[1] == s[2];
  const bool cube4 = s.size() == 4 && s[0] == 1 && s[1] == s[2] && s[2] == s[3];
  if (!cube3 && !cube4) {
    throw std::invalid_argument("expected a [D,D,D] or [1,D,D,D] tensor, got " +
                                shape_string(s));
  }
  const auto v = t.values();
  return VoxelGrid(s.back(), std::vector<double>(v.begin(), v.end()));
}

Tensor VoxelGrid::to_tensor() const {
  return Tensor(Shape{1, dim_, dim_, dim_}, values_);
}

bool VoxelGrid::is_binary() const noexcept {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return v == 0.0 || v == 1.0; });
}

double VoxelGrid::mean() const noexcept {
  if (values_.empty()) return 0.0;
  return std::accumulate(values_.begin(), values_.end(), 0.0) /
         static_cast<double>(values_.size());
}

void VoxelGrid::validate() const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double v = values_[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("voxel value " + std::to_string(v) + " at index " +
                                  std::to_string(i) + " lies outside [0,1]");
    }
  }
}

}  // namespace voxelprior
