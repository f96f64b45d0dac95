#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <optional>

#include "voxelprior/checkpoint.hpp"
#include "voxelprior/dataset.hpp"
#include "voxelprior/errors.hpp"
#include "voxelprior/eval.hpp"
#include "voxelprior/metrics.hpp"
#include "voxelprior/model.hpp"
#include "voxelprior/prior.hpp"
#include "voxelprior/render.hpp"
#include "voxelprior/shapes.hpp"
#include "voxelprior/training.hpp"

namespace py = pybind11;
namespace vp = voxelprior;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const vp::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

Array grid_to_array(const vp::VoxelGrid& g) {
  const auto d = static_cast<py::ssize_t>(g.dim());
  Array out({d, d, d});
  std::copy(g.values().begin(), g.values().end(), out.mutable_data());
  return out;
}

vp::VoxelGrid grid_from_array(const Array& a) {
  if (a.ndim() != 3 || a.shape(0) != a.shape(1) || a.shape(1) != a.shape(2))
    throw std::invalid_argument("voxel grid must be a cubic (D, D, D) array");
  std::vector<double> values(a.data(), a.data() + a.size());
  return vp::VoxelGrid(static_cast<std::size_t>(a.shape(0)), std::move(values));
}

vp::Tensor image_from_array(const Array& a) {
  if (a.ndim() != 3 || a.shape(0) != 3 || a.shape(1) != a.shape(2))
    throw std::invalid_argument("image must be a (3, S, S) array");
  vp::Shape shape{3, static_cast<std::size_t>(a.shape(1)), static_cast<std::size_t>(a.shape(2))};
  return vp::Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

vp::ArchConfig preset_arch(const std::string& name) {
  if (name == "desk") return vp::ArchConfig::desk();
  if (name == "paper") return vp::ArchConfig::paper();
  if (name == "tiny") return vp::ArchConfig::tiny();
  throw std::invalid_argument("unknown preset '" + name + "' (desk, paper, tiny)");
}

// Loaded dataset; owns the lazily-read file cache.
struct Dataset {
  std::shared_ptr<vp::DataSource> source;

  explicit Dataset(const std::filesystem::path& dir)
      : source(std::make_shared<vp::DataSource>(vp::load_manifest(dir / "manifest.json"))) {}

  vp::InstanceRef ref(const std::string& category, const std::string& split,
                      std::size_t index) const {
    const auto& m = source->manifest();
    auto list = m.instances(m.category_index(category), vp::parse_split(split));
    if (index >= list.size())
      throw py::index_error(category + "/" + split + " has " + std::to_string(list.size()) +
                            " instances");
    return list[index];
  }
};

struct Model {
  vp::ModelParams params;

  Array predict(const Array& image, std::optional<Array> prior, std::size_t iterations) const {
    auto img = image_from_array(image);
    if (params.variant() == vp::Variant::image_only) {
      if (prior) throw std::invalid_argument("image-only model takes no prior");
      return grid_to_array(vp::forward_image_only(params, img));
    }
    if (!prior) throw std::invalid_argument("prior-refinement model needs a prior");
    if (iterations == 0) throw std::invalid_argument("iterations must be at least 1");
    auto grid = grid_from_array(*prior);
    for (std::size_t i = 0; i < iterations; ++i) grid = vp::forward(params, img, grid);
    return grid_to_array(grid);
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the voxelprior package";

  py::register_exception<vp::IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<vp::DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);

  m.def("base_categories", &vp::base_category_names);
  m.def("novel_categories", &vp::novel_category_names);

  m.def(
      "generate_shape",
      [](const std::string& category, std::size_t dim, std::uint64_t seed,
         std::map<std::string, double> params) {
        return grid_to_array(vp::generate_shape({category, std::move(params), seed}, dim));
      },
      py::arg("category"), py::arg("dim") = 16, py::arg("seed") = 0,
      py::arg("params") = std::map<std::string, double>{},
      "Binary (D, D, D) occupancy grid of one procedural shape.");

  m.def(
      "render",
      [](const Array& grid, double azimuth, double elevation, std::size_t size) {
        return to_array(vp::render(grid_from_array(grid), azimuth, elevation, size).image);
      },
      py::arg("grid"), py::arg("azimuth"), py::arg("elevation"), py::arg("size") = 64,
      "Depth-shaded orthographic (3, S, S) view of the voxels >= 0.5.");

  m.def(
      "iou",
      [](const Array& pred, const Array& target, double threshold) {
        return vp::iou(grid_from_array(pred), grid_from_array(target), threshold);
      },
      py::arg("pred"), py::arg("target"), py::arg("threshold") = vp::kIouThreshold);

  m.def(
      "average_prior",
      [](const std::vector<Array>& grids) {
        std::vector<vp::VoxelGrid> g;
        for (const auto& a : grids) g.push_back(grid_from_array(a));
        return grid_to_array(vp::average_prior(g));
      },
      py::arg("grids"));

  m.def(
      "occupancy_bins",
      [](const Array& prior) {
        auto bins = vp::occupancy_bins(grid_from_array(prior));
        py::dict out;
        for (std::size_t i = 0; i < bins.counts.size(); ++i)
          out[vp::OccupancyBins::kLabels[i]] = bins.counts[i];
        return out;
      },
      py::arg("prior"), "Voxel counts per occupancy band.");

  m.def(
      "build_dataset",
      [](const std::filesystem::path& root, std::size_t instances, std::size_t views,
         std::size_t voxel_dim, std::size_t image_size, std::uint64_t seed,
         std::vector<std::string> base, std::vector<std::string> novel) {
        vp::DatasetConfig c;
        c.instances_per_category = instances;
        c.views_per_instance = views;
        c.voxel_dim = voxel_dim;
        c.image_size = image_size;
        c.seed = seed;
        c.base_categories = std::move(base);
        c.novel_categories = std::move(novel);
        py::gil_scoped_release release;
        return vp::manifest_digest(vp::build_dataset(c, root));
      },
      py::arg("root"), py::arg("instances") = 60, py::arg("views") = 24,
      py::arg("voxel_dim") = 16, py::arg("image_size") = 64, py::arg("seed") = 0,
      py::arg("base") = std::vector<std::string>{}, py::arg("novel") = std::vector<std::string>{},
      "Writes shapes, views and manifest.json under root; returns the manifest digest.");

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<const std::filesystem::path&>(), py::arg("root"))
      .def_property_readonly("categories",
                             [](const Dataset& d) {
                               std::vector<std::string> names;
                               for (const auto& c : d.source->manifest().categories)
                                 names.push_back(c.name);
                               return names;
                             })
      .def_property_readonly("digest",
                             [](const Dataset& d) { return vp::manifest_digest(d.source->manifest()); })
      .def(
          "count",
          [](const Dataset& d, const std::string& category, const std::string& split) {
            const auto& m = d.source->manifest();
            return m.instances(m.category_index(category), vp::parse_split(split)).size();
          },
          py::arg("category"), py::arg("split"))
      .def(
          "voxels",
          [](Dataset& d, const std::string& category, const std::string& split,
             std::size_t index) { return grid_to_array(d.source->voxel(d.ref(category, split, index))); },
          py::arg("category"), py::arg("split"), py::arg("index"))
      .def(
          "view",
          [](Dataset& d, const std::string& category, const std::string& split, std::size_t index,
             std::size_t view) { return to_array(d.source->view(d.ref(category, split, index), view)); },
          py::arg("category"), py::arg("split"), py::arg("index"), py::arg("view") = 0)
      .def(
          "prior",
          [](Dataset& d, const std::string& category, const std::string& kind, std::size_t k,
             std::uint64_t seed) {
            vp::PriorSpec spec{vp::parse_prior_kind(kind), k, category, seed};
            return grid_to_array(vp::make_prior(spec, *d.source).grid);
          },
          py::arg("category"), py::arg("kind") = "kshot", py::arg("k") = 1, py::arg("seed") = 0,
          "kshot, full, random_category or zero prior from train-split shapes.")
      .def("io_log", [](const Dataset& d) { return d.source->io_log(); });

  py::class_<Model>(m, "Model")
      .def(py::init([](const std::string& variant, const std::string& preset, std::uint64_t seed,
                       std::optional<std::size_t> image_size, std::optional<std::size_t> voxel_dim) {
             auto arch = preset_arch(preset);
             if (image_size) arch.image_size = *image_size;
             if (voxel_dim) arch.voxel_dim = *voxel_dim;
             arch.validate();
             return Model{vp::init_model(arch, vp::parse_variant(variant), seed)};
           }),
           py::arg("variant") = "prior_refinement", py::arg("preset") = "desk", py::arg("seed") = 0,
           py::arg("image_size") = py::none(), py::arg("voxel_dim") = py::none())
      .def_static(
          "load", [](const std::filesystem::path& path) { return Model{vp::load_model(path)}; },
          py::arg("path"))
      .def(
          "save", [](const Model& self, const std::filesystem::path& path) { vp::save_model(self.params, path); },
          py::arg("path"))
      .def_property_readonly("variant",
                             [](const Model& self) { return std::string(vp::variant_name(self.params.variant())); })
      .def_property_readonly("parameter_count",
                             [](const Model& self) { return self.params.parameter_count(); })
      .def_property_readonly("digest", [](const Model& self) { return vp::model_digest(self.params); })
      .def_property_readonly("voxel_dim", [](const Model& self) { return self.params.config().voxel_dim; })
      .def_property_readonly("image_size", [](const Model& self) { return self.params.config().image_size; })
      .def("predict", &Model::predict, py::arg("image"), py::arg("prior") = py::none(),
           py::arg("iterations") = 1, "Occupancy probabilities, (D, D, D).")
      .def(
          "train",
          [](Model& self, Dataset& data, std::size_t iters, const std::string& prior, std::size_t k,
             std::size_t max_epochs, std::size_t batch_size, std::size_t views_per_epoch,
             std::uint64_t seed) {
            vp::TrainConfig c;
            c.iters = iters;
            c.prior_kind = vp::parse_prior_kind(prior);
            c.prior_k = k;
            c.max_epochs = max_epochs;
            c.batch_size = batch_size;
            c.views_per_epoch = views_per_epoch;
            c.seed = seed;
            c.validate(self.params.variant());
            vp::TrainResult r;
            {
              py::gil_scoped_release release;
              r = vp::train(self.params, *data.source, c);
            }
            self.params = std::move(r.best);
            py::list epochs;
            for (const auto& e : r.epochs)
              epochs.append(py::dict(py::arg("epoch") = e.epoch, py::arg("loss") = e.mean_loss,
                                     py::arg("val_iou") = e.val_mean));
            return py::dict(py::arg("best_epoch") = r.best_epoch, py::arg("best_val") = r.best_val,
                            py::arg("epochs") = epochs);
          },
          py::arg("data"), py::arg("iters") = 1, py::arg("prior") = "kshot", py::arg("k") = 1,
          py::arg("max_epochs") = 30, py::arg("batch_size") = 32,
          py::arg("views_per_epoch") = vp::TrainConfig{}.views_per_epoch, py::arg("seed") = 0,
          "Trains on the base categories and keeps the best-validation weights.");
}
