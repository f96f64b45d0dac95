#include "voxelprior/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "voxelprior/digest.hpp"
#include "voxelprior/errors.hpp"
#include "voxelprior/parallel.hpp"
#include "voxelprior/render.hpp"
#include "voxelprior/rng.hpp"
#include "voxelprior/shapes.hpp"

namespace voxelprior {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

std::string_view role_name(Role r) { return r == Role::base ? "base" : "novel"; }

Role parse_role(std::string_view name) {
  if (name == "base") return Role::base;
  if (name == "novel") return Role::novel;
  throw std::invalid_argument("unknown category role '" + std::string(name) + "'");
}

std::size_t DatasetManifest::category_index(std::string_view name) const {
  for (std::size_t i = 0; i < categories.size(); ++i)
    if (categories[i].name == name) return i;
  throw std::invalid_argument("dataset has no category '" + std::string(name) + "'");
}

std::vector<std::size_t> DatasetManifest::categories_with(Role role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < categories.size(); ++i)
    if (categories[i].role == role) out.push_back(i);
  return out;
}

std::vector<InstanceRef> DatasetManifest::instances(std::size_t category, Split split) const {
  std::vector<InstanceRef> out;
  const auto& list = categories.at(category).instances;
  for (std::size_t i = 0; i < list.size(); ++i)
    if (list[i].split == split) out.push_back({category, i});
  return out;
}

std::vector<InstanceRef> DatasetManifest::instances(Role role, Split split) const {
  std::vector<InstanceRef> out;
  for (std::size_t c : categories_with(role)) {
    auto part = instances(c, split);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

const InstanceRecord& DatasetManifest::at(InstanceRef ref) const {
  return categories.at(ref.category).instances.at(ref.instance);
}

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["schema_version"] = m.schema_version;
  j["seed"] = m.seed;
  j["voxel_dim"] = m.voxel_dim;
  j["image_size"] = m.image_size;
  j["views_per_instance"] = m.views_per_instance;
  json cats = json::array();
  for (const auto& c : m.categories) {
    json insts = json::array();
    for (const auto& inst : c.instances) {
      json views = json::array();
      for (const auto& v : inst.views)
        views.push_back({{"image", v.image}, {"azimuth", v.azimuth}, {"elevation", v.elevation}});
      json params = json::object();
      for (const auto& [k, v] : inst.params) params[k] = v;
      insts.push_back({{"id", inst.id},
                       {"voxel", inst.voxel},
                       {"split", split_name(inst.split)},
                       {"seed", inst.seed},
                       {"params", params},
                       {"digest", inst.digest},
                       {"views", views}});
    }
    cats.push_back({{"name", c.name}, {"role", role_name(c.role)}, {"instances", insts}});
  }
  j["categories"] = cats;
  return j.dump(1) + "\n";
}

DatasetManifest manifest_from_json(std::string_view text) {
  DatasetManifest m;
  try {
    const json j = json::parse(text);
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != DatasetManifest::kSchemaVersion)
      throw std::invalid_argument("unsupported manifest schema_version " +
                                  std::to_string(m.schema_version) + " (expected " +
                                  std::to_string(DatasetManifest::kSchemaVersion) + ")");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.voxel_dim = j.at("voxel_dim").get<std::size_t>();
    m.image_size = j.at("image_size").get<std::size_t>();
    m.views_per_instance = j.at("views_per_instance").get<std::size_t>();
    for (const auto& jc : j.at("categories")) {
      CategoryRecord c;
      c.name = jc.at("name").get<std::string>();
      c.role = parse_role(jc.at("role").get<std::string>());
      for (const auto& ji : jc.at("instances")) {
        InstanceRecord inst;
        inst.id = ji.at("id").get<std::string>();
        inst.voxel = ji.at("voxel").get<std::string>();
        inst.split = parse_split(ji.at("split").get<std::string>());
        inst.seed = ji.value("seed", std::uint64_t{0});
        if (ji.contains("params"))
          for (const auto& [k, v] : ji.at("params").items()) inst.params[k] = v.get<double>();
        inst.digest = ji.value("digest", std::string{});
        for (const auto& jv : ji.at("views"))
          inst.views.push_back({jv.at("image").get<std::string>(), jv.value("azimuth", 0.0),
                                jv.value("elevation", 0.0)});
        c.instances.push_back(std::move(inst));
      }
      m.categories.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  write_file(path, manifest_to_json(m));
}

DatasetManifest load_manifest(const fs::path& path) {
  const std::string text = read_file(path);
  DatasetManifest m;
  try {
    m = manifest_from_json(text);
  } catch (const std::invalid_argument& e) {
    throw IoError(IoError::Kind::corrupt, path, e.what());
  }
  m.root = path.parent_path();
  return m;
}

std::string manifest_digest(const DatasetManifest& m) { return digest_hex(manifest_to_json(m)); }

SplitCounts split_counts(std::size_t n) {
  if (n < 20)
    throw std::invalid_argument("need at least 20 instances per category, got " + std::to_string(n));
  const auto train = static_cast<std::size_t>(std::lround(0.75 * static_cast<double>(n)));
  const auto val = static_cast<std::size_t>(std::lround(0.05 * static_cast<double>(n)));
  return {train, val, n - train - val};
}

namespace {

std::string zero_pad(std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, i);
  return buf;
}

}  // namespace

DatasetManifest build_dataset(const DatasetConfig& config, const fs::path& root) {
  const SplitCounts counts = split_counts(config.instances_per_category);
  if (config.views_per_instance == 0) throw std::invalid_argument("views_per_instance must be positive");
  if (!(config.elevation_min <= config.elevation_max))
    throw std::invalid_argument("elevation range is empty");
  auto base = config.base_categories.empty() ? base_category_names() : config.base_categories;
  auto novel = config.novel_categories.empty() ? novel_category_names() : config.novel_categories;

  DatasetManifest m;
  m.seed = config.seed;
  m.voxel_dim = config.voxel_dim;
  m.image_size = config.image_size;
  m.views_per_instance = config.views_per_instance;
  m.root = root;
  for (const auto* names : {&base, &novel})
    for (const auto& name : *names) {
      category_info(name);
      for (const auto& c : m.categories)
        if (c.name == name) throw std::invalid_argument("category '" + name + "' listed twice");
      m.categories.push_back({name, names == &base ? Role::base : Role::novel, {}});
    }

  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError(IoError::Kind::write_failed, root, ec.message());

  struct Job {
    std::size_t category, index;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < m.categories.size(); ++c) {
    auto& cat = m.categories[c];
    const std::uint64_t cat_seed = derive_seed(config.seed, cat.name);
    std::vector<std::size_t> order(config.instances_per_category);
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(derive_seed(cat_seed, "split"));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(split_rng, i)]);
    cat.instances.resize(config.instances_per_category);
    for (std::size_t r = 0; r < order.size(); ++r) {
      auto& inst = cat.instances[order[r]];
      inst.split = r < counts.train ? Split::train
                   : r < counts.train + counts.val ? Split::val
                                                   : Split::test;
    }
    for (const char* sub : {"voxels", "images"}) {
      fs::create_directories(root / sub / cat.name, ec);
      if (ec) throw IoError(IoError::Kind::write_failed, root / sub / cat.name, ec.message());
    }
    for (std::size_t i = 0; i < config.instances_per_category; ++i) {
      auto& inst = cat.instances[i];
      inst.id = cat.name + "_" + zero_pad(i, 3);
      inst.seed = derive_seed(cat_seed, i);
      jobs.push_back({c, i});
    }
  }

  parallel_for(jobs.size(), [&](std::size_t j) {
    const Job job = jobs[j];
    const std::string& cat = m.categories[job.category].name;
    InstanceRecord& inst = m.categories[job.category].instances[job.index];
    const ShapeSpec spec = resolve_spec({cat, {}, inst.seed});
    inst.params = spec.params;
    const VoxelGrid grid = generate_shape(spec, config.voxel_dim);
    inst.voxel = "voxels/" + cat + "/" + inst.id + ".voxl";
    save_voxel(grid, root / inst.voxel);
    Digest digest;
    digest.update(read_file(root / inst.voxel));
    Rng view_rng(derive_seed(inst.seed, "views"));
    for (std::size_t v = 0; v < config.views_per_instance; ++v) {
      ViewRecord rec;
      rec.azimuth = uniform(view_rng, 0.0, 360.0);
      rec.elevation = uniform(view_rng, config.elevation_min, config.elevation_max);
      rec.image = "images/" + cat + "/" + inst.id + "_v" + zero_pad(v, 2) + ".ppm";
      const Image8 img = Image8::from_tensor(render(grid, rec.azimuth, rec.elevation, config.image_size).image);
      save_ppm(img, root / rec.image);
      digest.update(std::as_bytes(std::span(img.rgb)));
      inst.views.push_back(std::move(rec));
    }
    inst.digest = digest.hex();
  });

  save_manifest(m, root / "manifest.json");
  return m;
}

DataSource::DataSource(DatasetManifest manifest) : manifest_(std::move(manifest)) {}

void DataSource::log(const std::string& path) { io_log_.push_back(path); }

const VoxelGrid& DataSource::voxel(InstanceRef ref) {
  std::lock_guard lock(mutex_);
  auto& slot = voxels_[ref];
  if (!slot) {
    const auto& rel = manifest_.at(ref).voxel;
    log(rel);
    slot = std::make_unique<VoxelGrid>(load_voxel(manifest_.root / rel));
    if (slot->dim() != manifest_.voxel_dim)
      throw IoError(IoError::Kind::corrupt, manifest_.root / rel,
                    "grid extent " + std::to_string(slot->dim()) + " differs from manifest voxel_dim " +
                        std::to_string(manifest_.voxel_dim));
  }
  return *slot;
}

Tensor DataSource::view(InstanceRef ref, std::size_t view_index) {
  std::lock_guard lock(mutex_);
  auto& slot = views_[{ref, view_index}];
  if (!slot) {
    const auto& rel = manifest_.at(ref).views.at(view_index).image;
    log(rel);
    auto img = std::make_unique<Image8>(load_ppm(manifest_.root / rel));
    if (img->width != manifest_.image_size || img->height != manifest_.image_size)
      throw IoError(IoError::Kind::corrupt, manifest_.root / rel,
                    "image is " + std::to_string(img->width) + "x" + std::to_string(img->height) +
                        ", manifest says " + std::to_string(manifest_.image_size));
    slot = std::move(img);
  }
  return slot->to_tensor();
}

std::vector<std::string> DataSource::io_log() const {
  std::lock_guard lock(mutex_);
  return io_log_;
}

}  // namespace voxelprior
