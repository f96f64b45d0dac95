#include <doctest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "support/temp_dir.hpp"
#include "voxelprior/checkpoint.hpp"
#include "voxelprior/errors.hpp"
#include "voxelprior/gradcheck.hpp"
#include "voxelprior/io.hpp"
#include "voxelprior/layers.hpp"
#include "voxelprior/model.hpp"
#include "voxelprior/rng.hpp"

using namespace voxelprior;

namespace {

Tensor random_image(std::size_t s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(Shape{3, s, s});
  for (double& v : t.values()) v = uniform01(rng);
  return t;
}

VoxelGrid random_grid(std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  VoxelGrid g(d);
  for (double& v : g.values()) v = uniform01(rng) < 0.4 ? 1.0 : 0.0;
  return g;
}

bool all_zero(const Tensor& t) {
  for (double v : t.values())
    if (v != 0.0) return false;
  return true;
}

}  // namespace

TEST_CASE("arch config validation") {
  CHECK_NOTHROW(ArchConfig::desk().validate());
  CHECK_NOTHROW(ArchConfig::paper().validate());
  CHECK_NOTHROW(ArchConfig::tiny().validate());
  ArchConfig c;
  c.image_size = 60;  // not divisible by 2^4
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ArchConfig{};
  c.voxel_dim = 18;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ArchConfig{};
  c.embed_dim = 0;
  CHECK_THROWS_AS(init_model(c, Variant::image_only, 0), std::invalid_argument);
  CHECK(ArchConfig{}.image_alpha == 0.01);
  CHECK(ArchConfig{}.shape_alpha == 0.3);
}

TEST_CASE("init is deterministic with zero biases and Glorot limits") {
  const ModelParams a = init_model(ArchConfig::desk(), Variant::prior_refinement, 5);
  CHECK(serialize_model(a) == serialize_model(init_model(ArchConfig::desk(), Variant::prior_refinement, 5)));
  CHECK_FALSE(a == init_model(ArchConfig::desk(), Variant::prior_refinement, 6));
  bool checked_mean = false;
  for (const auto& [name, t] : a.tensors()) {
    if (t.rank() == 1) {
      CHECK(all_zero(t));
      continue;
    }
    std::size_t receptive = 1;
    for (std::size_t i = 2; i < t.rank(); ++i) receptive *= t.extent(i);
    const double limit =
        std::sqrt(6.0 / static_cast<double>((t.extent(0) + t.extent(1)) * receptive));
    double lo = 0, hi = 0;
    for (double v : t.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(lo >= -limit);
    CHECK(hi <= limit);
    if (t.size() >= 10000) {
      const double mean =
          std::accumulate(t.values().begin(), t.values().end(), 0.0) / static_cast<double>(t.size());
      CHECK(std::abs(mean) < 0.01);
      checked_mean = true;
    }
  }
  CHECK(checked_mean);
}

TEST_CASE("variants differ exactly by the shape encoder") {
  const ArchConfig c = ArchConfig::desk();
  const ModelParams full = init_model(c, Variant::prior_refinement, 1);
  const ModelParams image = init_model(c, Variant::image_only, 1);
  std::size_t shape_count = 0;
  for (const auto& [name, t] : full.tensors())
    if (name.rfind("shape.", 0) == 0) shape_count += t.size();
  for (const auto& [name, t] : image.tensors()) CHECK(name.rfind("shape.", 0) != 0);
  CHECK(shape_count > 0);
  CHECK(image.parameter_count() + shape_count == full.parameter_count());
}

TEST_CASE("encoders, fusion and generator") {
  const ArchConfig c = ArchConfig::tiny();
  const ModelParams p = init_model(c, Variant::prior_refinement, 3);

  const Embedding e1 = encode_image(p, random_image(8, 1));
  CHECK(e1.size() == c.embed_dim);
  CHECK_FALSE(e1 == encode_image(p, random_image(8, 2)));
  CHECK(all_zero(encode_image(p, Tensor(Shape{3, 8, 8}, 0.0)).values));
  CHECK_THROWS_AS(encode_image(p, Tensor(Shape{3, 16, 16}, 0.0)), std::invalid_argument);

  CHECK(encode_shape(p, random_grid(4, 1)).size() == c.embed_dim);
  CHECK(all_zero(encode_shape(p, VoxelGrid(4)).values));
  CHECK_THROWS_AS(encode_shape(p, VoxelGrid(8)), std::invalid_argument);

  const Embedding x{Tensor(Shape{2}, {1, 2})}, y{Tensor(Shape{2}, {3, 4})};
  CHECK(fuse(x, y).values == Tensor(Shape{2}, {4, 6}));
  CHECK(fuse(x, y) == fuse(y, x));
  CHECK(fuse(x, Embedding{Tensor(Shape{2}, 0.0)}) == x);
  CHECK_THROWS_AS(fuse(x, Embedding{Tensor(Shape{3}, 0.0)}), std::invalid_argument);

  const VoxelGrid half = decode(p, Embedding{Tensor(Shape{c.embed_dim}, 0.0)});
  CHECK(half.dim() == 4);
  for (double v : half.values()) CHECK(v == 0.5);
  CHECK_THROWS_AS(decode(p, x), std::invalid_argument);
}

TEST_CASE("forward paths") {
  const ArchConfig c = ArchConfig::tiny();
  const ModelParams p = init_model(c, Variant::prior_refinement, 4);
  const ModelParams q = init_model(c, Variant::image_only, 4);
  const Tensor img = random_image(8, 3);
  const VoxelGrid prior = random_grid(4, 3);

  const VoxelGrid out = forward(p, img, prior);
  CHECK(out.dim() == 4);
  for (double v : out.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK(out == forward(p, img, prior));
  CHECK_FALSE(out == forward(p, img, random_grid(4, 4)));
  CHECK(forward(p, img, prior) == decode(p, fuse(encode_image(p, img), encode_shape(p, prior))));
  CHECK(forward_pass(p, img, &prior).output == out.to_tensor());

  const VoxelGrid io = forward_image_only(q, img);
  CHECK(io == decode(q, encode_image(q, img)));
  CHECK_THROWS_AS(forward(q, img, prior), std::invalid_argument);
  CHECK_THROWS_AS(forward_image_only(p, img), std::invalid_argument);
  CHECK_THROWS_AS(forward_pass(p, img, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(forward_pass(q, img, &prior), std::invalid_argument);
}

TEST_CASE("whole-model gradients match finite differences on the tiny config") {
  for (Variant v : {Variant::prior_refinement, Variant::image_only}) {
    const GradcheckReport r = check_model_gradients(ArchConfig::tiny(), v, 7);
    for (const auto& e : r.entries) {
      CAPTURE(e.name);
      CHECK(e.max_rel_error < 1e-4);
    }
    CHECK(r.entries.size() == parameter_layout(ArchConfig::tiny(), v).size());
  }
}

TEST_CASE("library layer gradcheck passes") {
  const GradcheckReport r = check_layer_gradients(3);
  for (const auto& e : r.entries) {
    CAPTURE(e.name);
    CHECK(e.max_rel_error < 1e-4);
  }
  CHECK(r.passed());
}

TEST_CASE("checkpoint round trip is byte exact") {
  TempDir dir;
  for (Variant v : {Variant::prior_refinement, Variant::image_only}) {
    const ModelParams p = init_model(ArchConfig::desk(), v, 9);
    save_model(p, dir / "m.bin");
    const ModelParams back = load_model(dir / "m.bin");
    CHECK(back == p);
    CHECK(serialize_model(back) == read_file(dir / "m.bin"));
    CHECK(model_digest(back) == model_digest(p));
  }
}

TEST_CASE("corrupt checkpoints are rejected") {
  TempDir dir;
  const std::string bytes = serialize_model(init_model(ArchConfig::tiny(), Variant::image_only, 1));
  CHECK(bytes.substr(0, 7) == "VPNMDL1");
  CHECK_THROWS_AS(deserialize_model(bytes.substr(0, bytes.size() - 1)), std::invalid_argument);
  CHECK_THROWS_AS(deserialize_model(bytes + "x"), std::invalid_argument);
  CHECK_THROWS_AS(deserialize_model("VPNMDL2" + bytes.substr(7)), std::invalid_argument);
  write_file(dir / "bad.bin", bytes.substr(0, 40));
  CHECK_THROWS_AS(load_model(dir / "bad.bin"), IoError);
  CHECK_THROWS_AS(load_model(dir / "missing.bin"), IoError);
}

TEST_CASE("model params arithmetic") {
  const ModelParams p = init_model(ArchConfig::tiny(), Variant::image_only, 2);
  ModelParams z = p.zeros_like();
  for (const auto& [n, t] : z.tensors()) CHECK(all_zero(t));
  z += p;
  z += p;
  z.scale(0.5);
  CHECK(z == p);
  CHECK_THROWS_AS(z += init_model(ArchConfig::tiny(), Variant::prior_refinement, 2), std::invalid_argument);
  CHECK(p.contains("image.dense.weight"));
  CHECK_FALSE(p.contains("shape.dense0.weight"));
  CHECK_THROWS_AS(p.get("nope"), std::out_of_range);
}
