#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "voxelprior/io.hpp"
#include "voxelprior/tensor.hpp"
#include "voxelprior/voxel_grid.hpp"

namespace voxelprior {

enum class Split { train, val, test };
enum class Role { base, novel };

std::string_view split_name(Split s);
Split parse_split(std::string_view name);
std::string_view role_name(Role r);
Role parse_role(std::string_view name);

struct ViewRecord {
  std::string image;  // relative to the manifest directory
  double azimuth = 0.0;
  double elevation = 0.0;
};

struct InstanceRecord {
  std::string id;
  std::string voxel;
  Split split = Split::train;
  std::uint64_t seed = 0;
  std::map<std::string, double> params;
  std::string digest;  // of the voxel file and every view file
  std::vector<ViewRecord> views;
};

struct CategoryRecord {
  std::string name;
  Role role = Role::base;
  std::vector<InstanceRecord> instances;
};

struct InstanceRef {
  std::size_t category = 0;
  std::size_t instance = 0;
  friend auto operator<=>(const InstanceRef&, const InstanceRef&) = default;
};

struct DatasetManifest {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  std::size_t voxel_dim = 0;
  std::size_t image_size = 0;
  std::size_t views_per_instance = 0;
  std::vector<CategoryRecord> categories;
  std::filesystem::path root;  // directory the relative paths resolve against; not serialized

  std::size_t category_index(std::string_view name) const;
  std::vector<std::size_t> categories_with(Role role) const;
  // Instances of one category in a split, in manifest order.
  std::vector<InstanceRef> instances(std::size_t category, Split split) const;
  // Every instance of the given role and split, category by category.
  std::vector<InstanceRef> instances(Role role, Split split) const;
  const InstanceRecord& at(InstanceRef ref) const;
  const CategoryRecord& category_of(InstanceRef ref) const { return categories.at(ref.category); }
};

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(std::string_view text);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
// Checks the schema version and sets root to the file's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
std::string manifest_digest(const DatasetManifest& m);

struct SplitCounts {
  std::size_t train, val, test;
};
// 75/5/20 with rounding; needs n >= 20 so every split is nonempty.
SplitCounts split_counts(std::size_t n);

struct DatasetConfig {
  std::vector<std::string> base_categories;   // empty: every built-in base category
  std::vector<std::string> novel_categories;  // empty: every built-in novel category
  std::size_t instances_per_category = 60;
  std::size_t views_per_instance = 24;
  std::size_t voxel_dim = 16;
  std::size_t image_size = 64;
  double elevation_min = 10.0;
  double elevation_max = 50.0;
  std::uint64_t seed = 0;
};

// Generates shapes and views under `root` and writes root/manifest.json.
// Deterministic in the config; instances are built in parallel.
DatasetManifest build_dataset(const DatasetConfig& config, const std::filesystem::path& root);

// Cached, thread-safe reader over a manifest that logs every file it opens.
class DataSource {
 public:
  explicit DataSource(DatasetManifest manifest);

  const DatasetManifest& manifest() const noexcept { return manifest_; }

  const VoxelGrid& voxel(InstanceRef ref);
  Tensor view(InstanceRef ref, std::size_t view_index);

  // Relative paths in first-read order.
  std::vector<std::string> io_log() const;

 private:
  void log(const std::string& path);

  DatasetManifest manifest_;
  mutable std::mutex mutex_;
  std::map<InstanceRef, std::unique_ptr<VoxelGrid>> voxels_;
  std::map<std::pair<InstanceRef, std::size_t>, std::unique_ptr<Image8>> views_;
  std::vector<std::string> io_log_;
};

}  // namespace voxelprior
