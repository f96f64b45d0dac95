#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "voxelprior/tensor.hpp"

namespace voxelprior {

// D x D x D occupancy values in [0,1], index (x*D + y)*D + z (z fastest).
// The y axis points up.
class VoxelGrid {
 public:
  VoxelGrid() = default;
  explicit VoxelGrid(std::size_t dim, double fill = 0.0);
  // Rejects values outside [0,1] or a length other than dim^3.
  VoxelGrid(std::size_t dim, std::vector<double> values);

  // Accepts [D,D,D] or [1,D,D,D]; values must lie in [0,1].
  static VoxelGrid from_tensor(const Tensor& t);
  // Shape [1,D,D,D]: a single-channel volume.
  Tensor to_tensor() const;

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return (x * dim_ + y) * dim_ + z;
  }
  double& at(std::size_t x, std::size_t y, std::size_t z) noexcept {
    return values_[index(x, y, z)];
  }
  double at(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return values_[index(x, y, z)];
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  bool is_binary() const noexcept;
  // Mean value; for binary grids the occupied fraction.
  double mean() const noexcept;
  // Throws std::invalid_argument if any value leaves [0,1].
  void validate() const;

  friend bool operator==(const VoxelGrid& a, const VoxelGrid& b) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

}  // namespace voxelprior
