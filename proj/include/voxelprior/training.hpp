#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "voxelprior/dataset.hpp"
#include "voxelprior/model.hpp"
#include "voxelprior/prior.hpp"

namespace voxelprior {

struct AdadeltaState {
  double rho = 0.95;
  double epsilon = 1e-6;
  ModelParams sq_grad;    // running E[g^2]
  ModelParams sq_update;  // running E[dx^2]
};

AdadeltaState make_adadelta(const ModelParams& params, double rho = 0.95, double epsilon = 1e-6);

// One Adadelta update in place. A non-finite gradient throws
// DivergenceError naming the tensor, before anything is modified.
void adadelta_step(ModelParams& params, const ModelParams& grads, AdadeltaState& state);

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t iters = 1;  // refinement steps per batch
  PriorKind prior_kind = PriorKind::kshot;  // kshot or full
  std::size_t prior_k = 1;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;
  // Views drawn (without replacement) per training instance per epoch;
  // 0 takes every view.
  std::size_t views_per_epoch = 4;
  // Leading views of each validation instance that are scored.
  std::size_t val_views = 4;
  double iou_threshold = 0.4;
  double rho = 0.95;
  double epsilon = 1e-6;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument on inconsistent settings.
  void validate(Variant variant) const;
};

struct LossRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  std::size_t iteration = 0;
  double loss = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;                     // over all batches and iterations
  std::map<std::string, double> val_iou;      // per base category
  double val_mean = 0.0;                      // unweighted over categories
  bool improved = false;
};

struct TrainResult {
  ModelParams best;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
  bool stopped_early = false;
  std::vector<LossRecord> losses;
  std::vector<EpochRecord> epochs;
};

// Observers for logging and tests. on_iteration sees the prior fed to the
// network and the (pre-update) output for every example of a step.
struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(std::size_t epoch, std::size_t batch, std::size_t iteration,
                     const std::vector<VoxelGrid>& priors, const std::vector<VoxelGrid>& outputs)>
      on_iteration;
};

// Iterative-refinement training on the base train split with early stopping
// on base validation IoU. Per batch: build priors, then `iters` times take
// a gradient step on (images, priors, targets) and replace the priors with
// the step's outputs. Returns the best-validation parameters.
TrainResult train(ModelParams init, DataSource& data, const TrainConfig& config,
                  const TrainHooks& hooks = {});

// Validation score of `params` on the base val split under `config`.
EpochRecord validate_model(const ModelParams& params, DataSource& data, const TrainConfig& config);

std::string train_log_csv(const TrainResult& result, const std::vector<std::string>& categories);

struct FinetuneConfig {
  std::size_t k = 1;                  // shapes per novel category
  std::size_t renders_per_shape = 1;  // 1, 5 or 24 in the reference setup
  std::size_t steps = 200;
  double learning_rate = 0.005;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct FinetuneResult {
  ModelParams params;
  std::vector<double> losses;  // one per step
  std::vector<std::pair<InstanceRef, std::size_t>> pool;  // (shape, view) pairs used
};

// Plain SGD on image-only parameters over k shapes per novel category and
// their renders, cycling through the pool in batches.
FinetuneResult finetune_baseline(const ModelParams& image_only, DataSource& data,
                                 const FinetuneConfig& config);

}  // namespace voxelprior
