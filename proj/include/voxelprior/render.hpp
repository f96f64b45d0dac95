#pragma once

#include <cstddef>

#include "voxelprior/tensor.hpp"
#include "voxelprior/voxel_grid.hpp"

namespace voxelprior {

struct RenderedView {
  Tensor image;  // [3,S,S], identical channels
  double azimuth = 0.0;
  double elevation = 0.0;
};

// Orthographic view of the voxels >= 0.5. The camera circles the vertical
// axis: azimuth 0 looks down -z, elevation tilts it above the horizon. The
// image spans the grid's bounding sphere, so nothing is ever clipped. Hit
// pixels are shaded by depth from 1.0 (nearest possible) to 0.25 (farthest);
// misses are 0.
RenderedView render(const VoxelGrid& grid, double azimuth_deg, double elevation_deg,
                    std::size_t size);

}  // namespace voxelprior
