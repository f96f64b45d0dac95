#include "voxelprior/prior.hpp"

#include <numeric>
#include <stdexcept>

#include "voxelprior/rng.hpp"

namespace voxelprior {

std::string_view prior_kind_name(PriorKind kind) {
  switch (kind) {
    case PriorKind::kshot: return "kshot";
    case PriorKind::full: return "full";
    case PriorKind::target_oracle: return "target";
    case PriorKind::random_category: return "random";
    case PriorKind::zero: return "zero";
  }
  return "?";
}

PriorKind parse_prior_kind(std::string_view name) {
  if (name == "kshot") return PriorKind::kshot;
  if (name == "full") return PriorKind::full;
  if (name == "target") return PriorKind::target_oracle;
  if (name == "random") return PriorKind::random_category;
  if (name == "zero") return PriorKind::zero;
  throw std::invalid_argument("unknown prior kind '" + std::string(name) +
                              "' (expected kshot, full, random, target or zero)");
}

VoxelGrid average_prior(const std::vector<const VoxelGrid*>& grids) {
  if (grids.empty()) throw std::invalid_argument("average_prior needs at least one grid");
  const std::size_t d = grids.front()->dim();
  std::vector<double> sum(d * d * d, 0.0);
  for (const VoxelGrid* g : grids) {
    if (g->dim() != d)
      throw std::invalid_argument("average_prior: grid extents differ (" + std::to_string(d) +
                                  " vs " + std::to_string(g->dim()) + ")");
    const auto v = g->values();
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += v[i];
  }
  const double n = static_cast<double>(grids.size());
  for (double& v : sum) v /= n;
  return VoxelGrid(d, std::move(sum));
}

VoxelGrid average_prior(const std::vector<VoxelGrid>& grids) {
  std::vector<const VoxelGrid*> ptrs;
  for (const auto& g : grids) ptrs.push_back(&g);
  return average_prior(ptrs);
}

std::vector<InstanceRef> sample_pool(const DatasetManifest& manifest, std::size_t category,
                                     std::size_t k, std::uint64_t seed,
                                     std::optional<InstanceRef> exclude) {
  std::vector<InstanceRef> pool = manifest.instances(category, Split::train);
  if (exclude) std::erase(pool, *exclude);
  const std::string& name = manifest.categories.at(category).name;
  if (k == 0) throw std::invalid_argument("k-shot prior needs k >= 1");
  if (k > pool.size())
    throw std::invalid_argument("category '" + name + "' has " + std::to_string(pool.size()) +
                                " training shapes, cannot draw " + std::to_string(k));
  Rng rng(derive_seed(seed, name));
  // Partial Fisher-Yates: the first k slots are a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i)
    std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  pool.resize(k);
  return pool;
}

PriorResult make_prior(const PriorSpec& spec, DataSource& data, const VoxelGrid* target) {
  const DatasetManifest& m = data.manifest();
  const std::size_t d = m.voxel_dim;
  PriorResult out;
  out.source_category = spec.category;
  auto average = [&](const std::vector<InstanceRef>& refs) {
    std::vector<const VoxelGrid*> grids;
    for (InstanceRef r : refs) grids.push_back(&data.voxel(r));
    return average_prior(grids);
  };

  switch (spec.kind) {
    case PriorKind::zero:
      m.category_index(spec.category);
      out.grid = VoxelGrid(d);
      return out;
    case PriorKind::target_oracle:
      if (!target) throw std::invalid_argument("target prior requested without a target shape");
      out.grid = *target;
      return out;
    case PriorKind::full: {
      out.shapes = m.instances(m.category_index(spec.category), Split::train);
      if (out.shapes.empty())
        throw std::invalid_argument("category '" + spec.category + "' has no training shapes");
      out.grid = average(out.shapes);
      return out;
    }
    case PriorKind::kshot:
      out.shapes = sample_pool(m, m.category_index(spec.category), spec.k, spec.seed);
      out.grid = average(out.shapes);
      return out;
    case PriorKind::random_category: {
      const std::size_t own = m.category_index(spec.category);
      std::vector<std::size_t> others;
      for (std::size_t c = 0; c < m.categories.size(); ++c)
        if (c != own) others.push_back(c);
      if (others.empty())
        throw std::invalid_argument("no other category to draw a random prior from");
      Rng rng(derive_seed(spec.seed, "random-category:" + spec.category));
      const std::size_t pick = others[uniform_index(rng, others.size())];
      out.source_category = m.categories[pick].name;
      out.shapes = sample_pool(m, pick, spec.k, rng());
      out.grid = average(out.shapes);
      return out;
    }
  }
  throw std::logic_error("unhandled prior kind");
}

std::size_t occupancy_band(double v) {
  if (v >= 0.9) return 0;
  if (v >= 0.6) return 1;
  if (v >= 0.3) return 2;
  return 3;
}

OccupancyBins occupancy_bins(const VoxelGrid& prior) {
  OccupancyBins bins;
  bins.labels.reserve(prior.size());
  for (double v : prior.values()) {
    const std::size_t b = occupancy_band(v);
    ++bins.counts[b];
    bins.labels.push_back(static_cast<double>(b));
  }
  return bins;
}

}  // namespace voxelprior
