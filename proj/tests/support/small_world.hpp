#pragma once

#include "support/temp_dir.hpp"
#include "voxelprior/dataset.hpp"
#include "voxelprior/model.hpp"

// A dataset and network small enough for end-to-end tests in seconds.
struct SmallWorld {
  TempDir dir;
  voxelprior::DatasetManifest manifest;

  explicit SmallWorld(std::size_t instances = 20, std::size_t views = 4) {
    voxelprior::DatasetConfig cfg;
    cfg.base_categories = {"box", "tower"};
    cfg.novel_categories = {"ring", "rod"};
    cfg.instances_per_category = instances;
    cfg.views_per_instance = views;
    cfg.voxel_dim = 8;
    cfg.image_size = 16;
    manifest = voxelprior::build_dataset(cfg, dir.path());
  }

  static voxelprior::ArchConfig arch() {
    voxelprior::ArchConfig a;
    a.image_size = 16;
    a.voxel_dim = 8;
    a.embed_dim = 8;
    a.image_channels = {4, 4};
    a.shape_channels = {4};
    a.generator_channels = {4, 4};
    return a;
  }
};
