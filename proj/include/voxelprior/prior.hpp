#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "voxelprior/dataset.hpp"
#include "voxelprior/voxel_grid.hpp"

namespace voxelprior {

enum class PriorKind { kshot, full, target_oracle, random_category, zero };

std::string_view prior_kind_name(PriorKind kind);
PriorKind parse_prior_kind(std::string_view name);

struct PriorSpec {
  PriorKind kind = PriorKind::kshot;
  std::size_t k = 1;  // kshot only
  std::string category;
  std::uint64_t seed = 0;
};

// Which shapes a prior was built from.
struct PriorResult {
  VoxelGrid grid;
  std::string source_category;     // differs from the spec's for random_category
  std::vector<InstanceRef> shapes;  // empty for zero and target_oracle
};

// Per-voxel arithmetic mean; equal extents, nonempty.
VoxelGrid average_prior(const std::vector<const VoxelGrid*>& grids);
VoxelGrid average_prior(const std::vector<VoxelGrid>& grids);

// k distinct train-split instances of `category`, drawn without replacement.
// The draw is a prefix of a seeded permutation, so pools for a larger k
// contain the pools for every smaller k under the same seed. `exclude`, if
// set, is removed from the candidates first.
std::vector<InstanceRef> sample_pool(const DatasetManifest& manifest, std::size_t category,
                                     std::size_t k, std::uint64_t seed,
                                     std::optional<InstanceRef> exclude = std::nullopt);

// Builds a prior from train-split shapes. target_oracle needs `target`.
PriorResult make_prior(const PriorSpec& spec, DataSource& data,
                       const VoxelGrid* target = nullptr);

// Occupancy bands, highest first: [0.9,1], [0.6,0.9), [0.3,0.6), [0,0.3).
struct OccupancyBins {
  static constexpr std::array<const char*, 4> kLabels = {"[0.9,1.0]", "[0.6,0.9)", "[0.3,0.6)",
                                                         "[0,0.3)"};
  std::array<std::size_t, 4> counts{};
  // Band index (0 = top band) per voxel, same layout as the grid.
  std::vector<double> labels;
};

OccupancyBins occupancy_bins(const VoxelGrid& prior);
std::size_t occupancy_band(double value);

}  // namespace voxelprior
