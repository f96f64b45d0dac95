#pragma once

#include "voxelprior/voxel_grid.hpp"

namespace voxelprior {

inline constexpr double kIouThreshold = 0.4;

// |A n B| / |A u B| with A = {pred >= threshold}, B = {target == 1};
// two empty sets score 1. The target must be binary.
double iou(const VoxelGrid& pred, const VoxelGrid& target, double threshold = kIouThreshold);

}  // namespace voxelprior
