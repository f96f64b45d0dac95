#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "voxelprior/tensor.hpp"
#include "voxelprior/voxel_grid.hpp"

namespace voxelprior {

// VOXL1: magic "VOXL1", three u16 LE extents, extent^3 f32 LE values (z fastest).
void save_voxel(const VoxelGrid& grid, const std::filesystem::path& path);
VoxelGrid load_voxel(const std::filesystem::path& path);

// Same container without the [0,1] check, e.g. for integer label grids.
void save_voxel_values(std::size_t dim, const std::vector<double>& values,
                       const std::filesystem::path& path);
std::vector<double> load_voxel_values(const std::filesystem::path& path, std::size_t* dim);

// 8-bit RGB PPM (P6, maxval 255).
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, interleaved

  // [3,H,W] in [0,1] from the interleaved bytes.
  Tensor to_tensor() const;
  static Image8 from_tensor(const Tensor& chw);
};

void save_ppm(const Image8& image, const std::filesystem::path& path);
Image8 load_ppm(const std::filesystem::path& path);

// Writes the whole buffer or throws IoError naming the path.
void write_file(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace voxelprior
