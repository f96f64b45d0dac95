#include "voxelprior/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "voxelprior/layers.hpp"
#include "voxelprior/rng.hpp"

namespace voxelprior {

std::string_view variant_name(Variant v) {
  return v == Variant::image_only ? "image_only" : "prior_refinement";
}

Variant parse_variant(std::string_view name) {
  if (name == "image_only") return Variant::image_only;
  if (name == "prior_refinement") return Variant::prior_refinement;
  throw std::invalid_argument("unknown model variant '" + std::string(name) + "'");
}

ArchConfig ArchConfig::desk() { return ArchConfig{}; }

ArchConfig ArchConfig::paper() {
  ArchConfig c;
  c.image_size = 128;
  c.voxel_dim = 32;
  c.embed_dim = 128;
  c.image_channels = {96, 128, 256, 256, 256, 256};
  c.shape_channels = {32, 64, 128};
  c.generator_channels = {128, 64, 32};
  return c;
}

ArchConfig ArchConfig::tiny() {
  ArchConfig c;
  c.image_size = 8;
  c.voxel_dim = 4;
  c.embed_dim = 8;
  c.image_channels = {2, 3};
  c.shape_channels = {2, 3};
  c.generator_channels = {3, 2, 2};
  return c;
}

std::size_t ArchConfig::coarse_dim() const {
  return voxel_dim >> (generator_channels.size() - 1);
}

void ArchConfig::validate() const {
  auto bad = [](const std::string& msg) { throw std::invalid_argument("ArchConfig: " + msg); };
  if (embed_dim == 0) bad("embed_dim must be positive");
  if (image_channels.empty()) bad("image_channels must not be empty");
  if (shape_channels.empty()) bad("shape_channels must not be empty");
  if (generator_channels.empty()) bad("generator_channels must not be empty");
  auto positive = [](const std::vector<std::size_t>& v) {
    return std::all_of(v.begin(), v.end(), [](std::size_t c) { return c > 0; });
  };
  if (!positive(image_channels) || !positive(shape_channels) ||
      !positive(generator_channels)) {
    bad("channel counts must be positive");
  }
  const std::size_t pool = std::size_t{1} << image_channels.size();
  if (image_size == 0 || image_size % pool != 0) {
    bad("image_size " + std::to_string(image_size) + " must be divisible by " +
        std::to_string(pool) + " (2^" + std::to_string(image_channels.size()) +
        " pooling stages)");
  }
  const std::size_t up = std::size_t{1} << (generator_channels.size() - 1);
  if (voxel_dim == 0 || voxel_dim % up != 0) {
    bad("voxel_dim " + std::to_string(voxel_dim) + " must be divisible by " +
        std::to_string(up) + " (generator upsampling stages)");
  }
  const std::size_t down = std::size_t{1} << shape_channels.size();
  if (voxel_dim % down != 0) {
    bad("voxel_dim " + std::to_string(voxel_dim) + " must be divisible by " +
        std::to_string(down) + " (shape encoder stride-2 stages)");
  }
  if (!(image_alpha >= 0.0 && image_alpha < 1.0) || !(shape_alpha >= 0.0 && shape_alpha < 1.0)) {
    bad("leaky alphas must lie in [0,1)");
  }
}

ModelParams::ModelParams(ArchConfig config, Variant variant,
                         std::vector<NamedTensor> tensors)
    : config_(std::move(config)), variant_(variant), tensors_(std::move(tensors)) {
  config_.validate();
  const auto layout = parameter_layout(config_, variant_);
  if (layout.size() != tensors_.size()) {
    throw std::invalid_argument("model expects " + std::to_string(layout.size()) +
                                " tensors, got " + std::to_string(tensors_.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (tensors_[i].name != layout[i].first || tensors_[i].value.shape() != layout[i].second) {
      throw std::invalid_argument("tensor " + std::to_string(i) + " should be " +
                                  layout[i].first + shape_string(layout[i].second) +
                                  ", got " + tensors_[i].name +
                                  shape_string(tensors_[i].value.shape()));
    }
  }
}

const Tensor& ModelParams::get(std::string_view name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t.value;
  }
  throw std::out_of_range("model has no tensor named '" + std::string(name) + "'");
}

Tensor& ModelParams::get(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

bool ModelParams::contains(std::string_view name) const noexcept {
  return std::any_of(tensors_.begin(), tensors_.end(),
                     [&](const NamedTensor& t) { return t.name == name; });
}

std::size_t ModelParams::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.value.size();
  return n;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (auto& t : z.tensors_) t.value.fill(0.0);
  return z;
}

ModelParams& ModelParams::operator+=(const ModelParams& other) {
  if (tensors_.size() != other.tensors_.size()) {
    throw std::invalid_argument("cannot add parameter sets of different layouts");
  }
  for (std::size_t i = 0; i < tensors_.size(); ++i) tensors_[i].value += other.tensors_[i].value;
  return *this;
}

void ModelParams::scale(double factor) {
  for (auto& t : tensors_) {
    for (double& v : t.value.values()) v *= factor;
  }
}

namespace {

std::string layer_name(const char* part, const char* kind, std::size_t i) {
  return std::string(part) + "." + kind + std::to_string(i);
}

}  // namespace

std::vector<std::pair<std::string, Shape>> parameter_layout(const ArchConfig& c,
                                                            Variant variant) {
  std::vector<std::pair<std::string, Shape>> out;
  auto add = [&](std::string base, Shape w, std::size_t bias) {
    out.emplace_back(base + ".weight", std::move(w));
    out.emplace_back(base + ".bias", Shape{bias});
  };

  std::size_t cin = 3;
  for (std::size_t i = 0; i < c.image_channels.size(); ++i) {
    const std::size_t k = i == 0 ? 7 : 3;
    add(layer_name("image", "conv", i), {c.image_channels[i], cin, k, k}, c.image_channels[i]);
    cin = c.image_channels[i];
  }
  const std::size_t img_side = c.image_size >> c.image_channels.size();
  add("image.dense", {c.embed_dim, cin * img_side * img_side}, c.embed_dim);

  if (variant == Variant::prior_refinement) {
    cin = 1;
    for (std::size_t i = 0; i < c.shape_channels.size(); ++i) {
      add(layer_name("shape", "conv", i), {c.shape_channels[i], cin, 3, 3, 3},
          c.shape_channels[i]);
      cin = c.shape_channels[i];
    }
    const std::size_t side = c.voxel_dim >> c.shape_channels.size();
    add("shape.dense0", {c.embed_dim, cin * side * side * side}, c.embed_dim);
    add("shape.dense1", {c.embed_dim, c.embed_dim}, c.embed_dim);
  }

  const std::size_t d = c.coarse_dim();
  add("gen.dense", {c.generator_channels[0] * d * d * d, c.embed_dim},
      c.generator_channels[0] * d * d * d);
  for (std::size_t i = 1; i < c.generator_channels.size(); ++i) {
    add(layer_name("gen", "conv", i - 1),
        {c.generator_channels[i], c.generator_channels[i - 1], 3, 3, 3},
        c.generator_channels[i]);
  }
  add("gen.out", {1, c.generator_channels.back(), 3, 3, 3}, 1);
  return out;
}

ModelParams init_model(const ArchConfig& config, Variant variant, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  std::vector<NamedTensor> tensors;
  for (auto& [name, shape] : parameter_layout(config, variant)) {
    Tensor t(shape);
    if (shape.size() > 1) {
      // fan_in = in * receptive field, fan_out = out * receptive field.
      std::size_t receptive = 1;
      for (std::size_t a = 2; a < shape.size(); ++a) receptive *= shape[a];
      const double fan_in = static_cast<double>(shape[1] * receptive);
      const double fan_out = static_cast<double>(shape[0] * receptive);
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (double& v : t.values()) v = uniform(rng, -limit, limit);
    }
    tensors.push_back({name, std::move(t)});
  }
  return ModelParams(config, variant, std::move(tensors));
}

namespace {

void check_image(const ArchConfig& c, const Tensor& image) {
  if (image.shape() != Shape{3, c.image_size, c.image_size}) {
    throw std::invalid_argument("image must be [3," + std::to_string(c.image_size) + "," +
                                std::to_string(c.image_size) + "], got " +
                                shape_string(image.shape()));
  }
}

void check_prior(const ArchConfig& c, const VoxelGrid& prior) {
  if (prior.dim() != c.voxel_dim) {
    throw std::invalid_argument("prior must have extent " + std::to_string(c.voxel_dim) +
                                "^3, got " + std::to_string(prior.dim()) + "^3");
  }
}

void require_variant(const ModelParams& p, Variant v, const char* op) {
  if (p.variant() != v) {
    throw std::invalid_argument(std::string(op) + " needs a " +
                                std::string(variant_name(v)) + " model, got " +
                                std::string(variant_name(p.variant())));
  }
}

Tensor flatten(const Tensor& t) { return t.reshaped({t.size()}); }

void run_image_encoder(const ModelParams& p, const Tensor& image, ForwardPass& f) {
  const ArchConfig& c = p.config();
  const Activation act = Activation::leaky_relu(c.image_alpha);
  Tensor x = image;
  f.image_stages.clear();
  for (std::size_t i = 0; i < c.image_channels.size(); ++i) {
    const std::string base = layer_name("image", "conv", i);
    ForwardPass::ImageStage s;
    s.conv = conv2d(x, p.get(base + ".weight"), p.get(base + ".bias"), Padding::same);
    s.pooled = maxpool2d(s.conv);
    Tensor next = activate(s.pooled, act);
    s.input = std::move(x);
    x = std::move(next);
    f.image_stages.push_back(std::move(s));
  }
  f.image_flat = flatten(x);
}

Tensor image_code(const ModelParams& p, const ForwardPass& f) {
  return dense(f.image_flat, p.get("image.dense.weight"), p.get("image.dense.bias"));
}

void run_shape_encoder(const ModelParams& p, const VoxelGrid& prior, ForwardPass& f) {
  const ArchConfig& c = p.config();
  const Activation act = Activation::leaky_relu(c.shape_alpha);
  Tensor x = prior.to_tensor();
  f.shape_stages.clear();
  for (std::size_t i = 0; i < c.shape_channels.size(); ++i) {
    const std::string base = layer_name("shape", "conv", i);
    ForwardPass::ShapeStage s;
    s.conv = conv3d(x, p.get(base + ".weight"), p.get(base + ".bias"), Padding::same, 2);
    Tensor next = activate(s.conv, act);
    s.input = std::move(x);
    x = std::move(next);
    f.shape_stages.push_back(std::move(s));
  }
  f.shape_flat = flatten(x);
  f.shape_hidden_pre = dense(f.shape_flat, p.get("shape.dense0.weight"), p.get("shape.dense0.bias"));
  f.shape_hidden = activate(f.shape_hidden_pre, act);
}

Tensor shape_code(const ModelParams& p, const ForwardPass& f) {
  return dense(f.shape_hidden, p.get("shape.dense1.weight"), p.get("shape.dense1.bias"));
}

void run_generator(const ModelParams& p, ForwardPass& f) {
  const ArchConfig& c = p.config();
  const std::size_t d = c.coarse_dim();
  f.gen_dense_pre = dense(f.code, p.get("gen.dense.weight"), p.get("gen.dense.bias"));
  f.gen_coarse = activate(f.gen_dense_pre, Activation::relu())
                     .reshaped({c.generator_channels[0], d, d, d});
  Tensor x = f.gen_coarse;
  f.gen_stages.clear();
  for (std::size_t i = 1; i < c.generator_channels.size(); ++i) {
    const std::string base = layer_name("gen", "conv", i - 1);
    ForwardPass::GeneratorStage s;
    s.upsampled = upsample3d(x);
    s.conv = conv3d(s.upsampled, p.get(base + ".weight"), p.get(base + ".bias"), Padding::same);
    x = activate(s.conv, Activation::relu());
    f.gen_stages.push_back(std::move(s));
  }
  f.out_input = std::move(x);
  f.logits = conv3d(f.out_input, p.get("gen.out.weight"), p.get("gen.out.bias"), Padding::same);
  f.output = activate(f.logits, Activation::sigmoid());
}

void add_grad(ModelParams& grads, const std::string& base, const LayerGrad& g) {
  grads.get(base + ".weight") += g.weight_grad;
  grads.get(base + ".bias") += g.bias_grad;
}

}  // namespace

Embedding encode_image(const ModelParams& params, const Tensor& image) {
  check_image(params.config(), image);
  ForwardPass f;
  run_image_encoder(params, image, f);
  return {image_code(params, f)};
}

Embedding encode_shape(const ModelParams& params, const VoxelGrid& prior) {
  require_variant(params, Variant::prior_refinement, "encode_shape");
  check_prior(params.config(), prior);
  ForwardPass f;
  run_shape_encoder(params, prior, f);
  return {shape_code(params, f)};
}

Embedding fuse(const Embedding& image_code, const Embedding& shape_code) {
  if (image_code.size() != shape_code.size()) {
    throw std::invalid_argument("fuse: embedding lengths differ (" +
                                std::to_string(image_code.size()) + " vs " +
                                std::to_string(shape_code.size()) + ")");
  }
  Embedding out = image_code;
  out.values += shape_code.values;
  return out;
}

VoxelGrid decode(const ModelParams& params, const Embedding& code) {
  if (code.size() != params.config().embed_dim) {
    throw std::invalid_argument("decode: embedding length " + std::to_string(code.size()) +
                                " != embed_dim " + std::to_string(params.config().embed_dim));
  }
  ForwardPass f;
  f.code = code.values.reshaped({code.size()});
  run_generator(params, f);
  return VoxelGrid::from_tensor(f.output);
}

ForwardPass forward_pass(const ModelParams& params, const Tensor& image,
                         const VoxelGrid* prior) {
  const ArchConfig& c = params.config();
  check_image(c, image);
  if (params.variant() == Variant::prior_refinement && !prior) {
    throw std::invalid_argument("prior-refinement forward needs a prior");
  }
  if (params.variant() == Variant::image_only && prior) {
    throw std::invalid_argument("image-only forward takes no prior");
  }
  ForwardPass f;
  run_image_encoder(params, image, f);
  f.code = image_code(params, f);
  if (prior) {
    check_prior(c, *prior);
    run_shape_encoder(params, *prior, f);
    f.code += shape_code(params, f);
  }
  run_generator(params, f);
  return f;
}

VoxelGrid forward(const ModelParams& params, const Tensor& image, const VoxelGrid& prior) {
  require_variant(params, Variant::prior_refinement, "forward");
  return VoxelGrid::from_tensor(forward_pass(params, image, &prior).output);
}

VoxelGrid forward_image_only(const ModelParams& params, const Tensor& image) {
  require_variant(params, Variant::image_only, "forward_image_only");
  return VoxelGrid::from_tensor(forward_pass(params, image, nullptr).output);
}

void accumulate_gradients(const ModelParams& p, const ForwardPass& f,
                          const Tensor& grad_output, ModelParams& grads) {
  const ArchConfig& c = p.config();
  require_same_shape(f.output, grad_output, "accumulate_gradients");

  // Generator.
  Tensor g = activate_backward(f.logits, f.output, grad_output, Activation::sigmoid());
  LayerGrad lg = conv3d_backward(f.out_input, p.get("gen.out.weight"), g, Padding::same);
  add_grad(grads, "gen.out", lg);
  g = std::move(lg.input_grad);
  for (std::size_t i = f.gen_stages.size(); i-- > 0;) {
    const auto& s = f.gen_stages[i];
    const std::string base = layer_name("gen", "conv", i);
    g = activate_backward(s.conv, Tensor(), g, Activation::relu());
    lg = conv3d_backward(s.upsampled, p.get(base + ".weight"), g, Padding::same);
    add_grad(grads, base, lg);
    g = upsample3d_backward(lg.input_grad);
  }
  g = activate_backward(f.gen_dense_pre, Tensor(), g.reshaped({g.size()}), Activation::relu());
  lg = dense_backward(f.code, p.get("gen.dense.weight"), g);
  add_grad(grads, "gen.dense", lg);
  const Tensor grad_code = std::move(lg.input_grad);

  // Shape encoder: the fused code is a sum, so both branches see grad_code.
  if (p.variant() == Variant::prior_refinement) {
    const Activation act = Activation::leaky_relu(c.shape_alpha);
    lg = dense_backward(f.shape_hidden, p.get("shape.dense1.weight"), grad_code);
    add_grad(grads, "shape.dense1", lg);
    g = activate_backward(f.shape_hidden_pre, Tensor(), lg.input_grad, act);
    lg = dense_backward(f.shape_flat, p.get("shape.dense0.weight"), g);
    add_grad(grads, "shape.dense0", lg);
    g = lg.input_grad.reshaped(f.shape_stages.back().conv.shape());
    for (std::size_t i = f.shape_stages.size(); i-- > 0;) {
      const auto& s = f.shape_stages[i];
      const std::string base = layer_name("shape", "conv", i);
      g = activate_backward(s.conv, Tensor(), g, act);
      lg = conv3d_backward(s.input, p.get(base + ".weight"), g, Padding::same, 2, i > 0);
      add_grad(grads, base, lg);
      g = std::move(lg.input_grad);
    }
  }

  // Image encoder.
  const Activation act = Activation::leaky_relu(c.image_alpha);
  lg = dense_backward(f.image_flat, p.get("image.dense.weight"), grad_code);
  add_grad(grads, "image.dense", lg);
  g = lg.input_grad.reshaped(f.image_stages.back().pooled.shape());
  for (std::size_t i = f.image_stages.size(); i-- > 0;) {
    const auto& s = f.image_stages[i];
    const std::string base = layer_name("image", "conv", i);
    g = activate_backward(s.pooled, Tensor(), g, act);
    g = maxpool2d_backward(s.conv, g);
    lg = conv2d_backward(s.input, p.get(base + ".weight"), g, Padding::same, i > 0);
    add_grad(grads, base, lg);
    g = std::move(lg.input_grad);
  }
}

double loss_and_gradients(const ModelParams& params, const Tensor& image,
                          const VoxelGrid* prior, const VoxelGrid& target,
                          ModelParams& grads, VoxelGrid* output) {
  const ForwardPass f = forward_pass(params, image, prior);
  const Tensor t = target.to_tensor();
  const double loss = bce_loss(f.output, t);
  accumulate_gradients(params, f, bce_loss_backward(f.output, t), grads);
  if (output) *output = VoxelGrid::from_tensor(f.output);
  return loss;
}

}  // namespace voxelprior
