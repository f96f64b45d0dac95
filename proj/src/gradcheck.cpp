#include "voxelprior/gradcheck.hpp"

#include <algorithm>

#include "voxelprior/layers.hpp"
#include "voxelprior/rng.hpp"

namespace voxelprior {
namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

double probe_loss(const Tensor& out, const Tensor& probe) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * probe[i];
  return s;
}

// Rectifier signs and max-pool winners: the piecewise-linear region a
// forward pass lies in. A difference quotient is only meaningful when both
// probes stay in the region of the centre point.
std::vector<signed char> activation_pattern(const ForwardPass& pass) {
  std::vector<signed char> out;
  auto signs = [&](const Tensor& t) {
    for (double v : t.values()) out.push_back(static_cast<signed char>((v > 0) - (v < 0)));
  };
  for (const auto& stage : pass.image_stages) {
    const Tensor& c = stage.conv;
    const std::size_t h = c.extent(1), w = c.extent(2);
    for (std::size_t ch = 0; ch < c.extent(0); ++ch)
      for (std::size_t i = 0; i < h; i += 2)
        for (std::size_t j = 0; j < w; j += 2) {
          const double* base = c.data() + (ch * h + i) * w + j;
          const double v[4] = {base[0], base[1], base[w], base[w + 1]};
          signed char best = 0;
          for (signed char k = 1; k < 4; ++k)
            if (v[k] > v[best]) best = k;
          out.push_back(best);
        }
    signs(stage.pooled);
  }
  for (const auto& stage : pass.shape_stages) signs(stage.conv);
  if (!pass.shape_stages.empty()) signs(pass.shape_hidden_pre);
  signs(pass.gen_dense_pre);
  for (const auto& stage : pass.gen_stages) signs(stage.conv);
  return out;
}

}  // namespace

double GradcheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

GradcheckReport check_layer_gradients(std::uint64_t seed, double h) {
  Rng rng(seed);
  GradcheckReport report;
  auto record = [&](std::string name, const Tensor& analytic, const Tensor& numeric) {
    report.entries.push_back({std::move(name), analytic.size(), max_relative_error(analytic, numeric)});
  };
  auto numeric = [&](const Tensor& x, const std::function<double(const Tensor&)>& f) {
    return numeric_gradient(f, x, h);
  };

  for (Padding padding : {Padding::same, Padding::valid}) {
    const std::string tag = padding == Padding::same ? "conv2d[same]" : "conv2d[valid]";
    const Tensor x = random_tensor({2, 7, 6}, rng);
    const Tensor w = random_tensor({3, 2, 3, 3}, rng);
    const Tensor b = random_tensor({3}, rng);
    const Tensor probe = random_tensor(conv2d(x, w, b, padding).shape(), rng);
    const LayerGrad g = conv2d_backward(x, w, probe, padding);
    record(tag + ".input", g.input_grad,
           numeric(x, [&](const Tensor& v) { return probe_loss(conv2d(v, w, b, padding), probe); }));
    record(tag + ".weight", g.weight_grad,
           numeric(w, [&](const Tensor& v) { return probe_loss(conv2d(x, v, b, padding), probe); }));
    record(tag + ".bias", g.bias_grad,
           numeric(b, [&](const Tensor& v) { return probe_loss(conv2d(x, w, v, padding), probe); }));
  }

  for (Padding padding : {Padding::same, Padding::valid})
    for (std::size_t stride : {1u, 2u}) {
      const std::string tag = std::string("conv3d[") + (padding == Padding::same ? "same" : "valid") +
                              ",s" + std::to_string(stride) + "]";
      const Tensor x = random_tensor({2, 5, 4, 6}, rng);
      const Tensor w = random_tensor({2, 2, 3, 3, 3}, rng);
      const Tensor b = random_tensor({2}, rng);
      const Tensor probe = random_tensor(conv3d(x, w, b, padding, stride).shape(), rng);
      const LayerGrad g = conv3d_backward(x, w, probe, padding, stride);
      auto f_in = [&](const Tensor& v) { return probe_loss(conv3d(v, w, b, padding, stride), probe); };
      auto f_w = [&](const Tensor& v) { return probe_loss(conv3d(x, v, b, padding, stride), probe); };
      auto f_b = [&](const Tensor& v) { return probe_loss(conv3d(x, w, v, padding, stride), probe); };
      record(tag + ".input", g.input_grad, numeric(x, f_in));
      record(tag + ".weight", g.weight_grad, numeric(w, f_w));
      record(tag + ".bias", g.bias_grad, numeric(b, f_b));
    }

  {
    // Distinct values 0.014 apart: no window has a near-tie within +-h.
    Tensor x({3, 6, 8});
    std::vector<std::size_t> order(x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] = (static_cast<double>(order[i]) + 0.5) / static_cast<double>(x.size()) * 2.0 - 1.0;
    const Tensor probe = random_tensor({3, 3, 4}, rng);
    record("maxpool2d.input", maxpool2d_backward(x, probe),
           numeric(x, [&](const Tensor& v) { return probe_loss(maxpool2d(v), probe); }));
  }
  {
    const Tensor x = random_tensor({16}, rng);
    const Tensor w = random_tensor({8, 16}, rng);
    const Tensor b = random_tensor({8}, rng);
    const Tensor probe = random_tensor({8}, rng);
    const LayerGrad g = dense_backward(x, w, probe);
    record("dense.input", g.input_grad,
           numeric(x, [&](const Tensor& v) { return probe_loss(dense(v, w, b), probe); }));
    record("dense.weight", g.weight_grad,
           numeric(w, [&](const Tensor& v) { return probe_loss(dense(x, v, b), probe); }));
    record("dense.bias", g.bias_grad,
           numeric(b, [&](const Tensor& v) { return probe_loss(dense(x, w, v), probe); }));
  }
  {
    const Tensor x = random_tensor({2, 3, 2, 3}, rng);
    const Tensor probe = random_tensor({2, 6, 4, 6}, rng);
    record("upsample3d.input", upsample3d_backward(probe),
           numeric(x, [&](const Tensor& v) { return probe_loss(upsample3d(v), probe); }));
  }
  const std::pair<const char*, Activation> acts[] = {{"relu", Activation::relu()},
                                                     {"leaky_relu(0.01)", Activation::leaky_relu(0.01)},
                                                     {"leaky_relu(0.3)", Activation::leaky_relu(0.3)},
                                                     {"sigmoid", Activation::sigmoid()}};
  for (const auto& [name, act] : acts) {
    Tensor x = random_tensor({24}, rng, 0.05, 4.0);
    for (double& v : x.values())
      if (uniform01(rng) < 0.5) v = -v;
    const Tensor probe = random_tensor({24}, rng);
    record(std::string(name) + ".input", activate_backward(x, activate(x, act), probe, act),
           numeric(x, [&, a = act](const Tensor& v) { return probe_loss(activate(v, a), probe); }));
  }
  {
    const Tensor p = random_tensor({4, 4, 4}, rng, 0.02, 0.98);
    const Tensor t = random_tensor({4, 4, 4}, rng, 0.0, 1.0);
    record("bce.pred", bce_loss_backward(p, t),
           numeric(p, [&](const Tensor& v) { return bce_loss(v, t); }));
  }
  return report;
}

GradcheckReport check_model_gradients(const ArchConfig& config, Variant variant,
                                      std::uint64_t seed, double h) {
  Rng rng(derive_seed(seed, "gradcheck"));
  ModelParams params = init_model(config, variant, seed);
  for (auto& [name, value] : params.tensors())
    if (value.rank() == 1)
      for (double& v : value.values()) v = uniform(rng, -0.1, 0.1);

  const std::size_t s = config.image_size, d = config.voxel_dim;
  const Tensor image = random_tensor({3, s, s}, rng, 0.0, 1.0);
  std::vector<double> prior_values(d * d * d), target_values(d * d * d);
  for (double& v : prior_values) v = uniform01(rng);
  for (double& v : target_values) v = uniform01(rng) < 0.3 ? 1.0 : 0.0;
  const VoxelGrid prior(d, std::move(prior_values));
  const VoxelGrid target(d, std::move(target_values));
  const VoxelGrid* prior_ptr = variant == Variant::prior_refinement ? &prior : nullptr;

  ModelParams grads = params.zeros_like();
  loss_and_gradients(params, image, prior_ptr, target, grads);

  GradcheckReport report;
  const Tensor target_tensor = target.to_tensor();
  const auto centre = activation_pattern(forward_pass(params, image, prior_ptr));
  for (std::size_t t = 0; t < params.tensors().size(); ++t) {
    ModelParams probe = params;
    double* slot = probe.tensors()[t].value.data();
    Tensor numeric(params.tensors()[t].value.shape());
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double x = slot[i];
      // Shrink the step until neither probe leaves the centre's linear region.
      double step = h;
      for (int attempt = 0;; ++attempt) {
        slot[i] = x + step;
        const ForwardPass plus = forward_pass(probe, image, prior_ptr);
        slot[i] = x - step;
        const ForwardPass minus = forward_pass(probe, image, prior_ptr);
        slot[i] = x;
        const bool same_region =
            activation_pattern(plus) == centre && activation_pattern(minus) == centre;
        if (same_region || attempt == 6) {
          numeric[i] = (bce_loss(plus.output, target_tensor) -
                        bce_loss(minus.output, target_tensor)) / (2 * step);
          if (!same_region) ++report.kinks;
          break;
        }
        step /= 10;
      }
    }
    report.entries.push_back({params.tensors()[t].name, numeric.size(),
                              max_relative_error(grads.tensors()[t].value, numeric)});
  }
  return report;
}

}  // namespace voxelprior
