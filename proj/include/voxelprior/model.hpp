#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "voxelprior/tensor.hpp"
#include "voxelprior/voxel_grid.hpp"

namespace voxelprior {

enum class Variant { prior_refinement, image_only };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

// Layer sizes of both encoders and the generator.
//
// Image encoder: one conv per entry of image_channels (7x7 first, then 3x3),
// each followed by 2x2 max pooling and leaky ReLU, then a dense layer to
// embed_dim. Shape encoder: one stride-2 3x3x3 conv per entry of
// shape_channels with leaky ReLU, then two dense layers. Generator: dense to
// generator_channels[0] x d^3 (d = voxel_dim / 2^(stages-1)), then
// upsample + conv + ReLU per further entry, then a 1-channel conv and sigmoid.
struct ArchConfig {
  std::size_t image_size = 64;
  std::size_t voxel_dim = 16;
  std::size_t embed_dim = 64;
  std::vector<std::size_t> image_channels{8, 16, 32, 32};
  std::vector<std::size_t> shape_channels{8, 16};
  std::vector<std::size_t> generator_channels{32, 16, 8};
  double image_alpha = 0.01;
  double shape_alpha = 0.3;

  static ArchConfig desk();
  static ArchConfig paper();
  // S=8, D=4, E=8: small enough for whole-model finite differences.
  static ArchConfig tiny();

  std::size_t coarse_dim() const;
  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

struct NamedTensor {
  std::string name;
  Tensor value;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// Ordered weight set of one network variant. Gradients use the same type.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(ArchConfig config, Variant variant, std::vector<NamedTensor> tensors);

  const ArchConfig& config() const noexcept { return config_; }
  Variant variant() const noexcept { return variant_; }

  std::vector<NamedTensor>& tensors() noexcept { return tensors_; }
  const std::vector<NamedTensor>& tensors() const noexcept { return tensors_; }

  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);
  bool contains(std::string_view name) const noexcept;

  std::size_t parameter_count() const noexcept;
  ModelParams zeros_like() const;
  ModelParams& operator+=(const ModelParams& other);
  void scale(double factor);

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  ArchConfig config_;
  Variant variant_ = Variant::prior_refinement;
  std::vector<NamedTensor> tensors_;
};

// Names and shapes of every tensor a variant needs, in canonical order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ArchConfig& config,
                                                            Variant variant);

// Glorot-uniform weights, zero biases; deterministic in `seed`.
ModelParams init_model(const ArchConfig& config, Variant variant, std::uint64_t seed);

struct Embedding {
  Tensor values;
  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const Embedding&, const Embedding&) = default;
};

// image: [3,S,S] in [0,1].
Embedding encode_image(const ModelParams& params, const Tensor& image);
Embedding encode_shape(const ModelParams& params, const VoxelGrid& prior);
Embedding fuse(const Embedding& image_code, const Embedding& shape_code);
VoxelGrid decode(const ModelParams& params, const Embedding& code);

VoxelGrid forward(const ModelParams& params, const Tensor& image, const VoxelGrid& prior);
VoxelGrid forward_image_only(const ModelParams& params, const Tensor& image);

// Activations kept for the backward pass.
struct ForwardPass {
  struct ImageStage {
    Tensor input, conv, pooled;
  };
  struct ShapeStage {
    Tensor input, conv;
  };
  struct GeneratorStage {
    Tensor upsampled, conv;
  };

  std::vector<ImageStage> image_stages;
  Tensor image_flat;
  std::vector<ShapeStage> shape_stages;
  Tensor shape_flat, shape_hidden_pre, shape_hidden;
  Tensor code;
  Tensor gen_dense_pre;
  Tensor gen_coarse;
  std::vector<GeneratorStage> gen_stages;
  Tensor out_input;
  Tensor logits;
  Tensor output;  // [1,D,D,D] sigmoid probabilities
};

// `prior` must be non-null exactly for the prior-refinement variant.
ForwardPass forward_pass(const ModelParams& params, const Tensor& image,
                         const VoxelGrid* prior);
// Adds d(loss)/d(params) to `grads` given d(loss)/d(output).
void accumulate_gradients(const ModelParams& params, const ForwardPass& pass,
                          const Tensor& grad_output, ModelParams& grads);

// BCE of one (image, prior, target) example; adds its gradient to `grads`.
double loss_and_gradients(const ModelParams& params, const Tensor& image,
                          const VoxelGrid* prior, const VoxelGrid& target,
                          ModelParams& grads, VoxelGrid* output = nullptr);

}  // namespace voxelprior
