#include "voxelprior/training.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "voxelprior/errors.hpp"
#include "voxelprior/metrics.hpp"
#include "voxelprior/parallel.hpp"
#include "voxelprior/rng.hpp"

namespace voxelprior {
namespace {

struct Example {
  InstanceRef ref;
  std::size_t view;
};

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

// First `n` entries of a seeded permutation of [0, total).
std::vector<std::size_t> pick(std::size_t total, std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + uniform_index(rng, total - i)]);
  idx.resize(n);
  return idx;
}

// Mean gradient and loss over a batch. Each example writes its own buffer
// and the buffers are summed in index order, so the result does not depend
// on how examples are spread over threads.
class BatchStep {
 public:
  double run(const ModelParams& params, const std::vector<Tensor>& images,
             const std::vector<VoxelGrid>* priors, const std::vector<VoxelGrid>& targets,
             std::vector<VoxelGrid>* outputs) {
    const std::size_t n = images.size();
    while (slots_.size() < n) slots_.push_back(params.zeros_like());
    losses_.assign(n, 0.0);
    if (outputs) outputs->assign(n, VoxelGrid());
    parallel_for(n, [&](std::size_t i) {
      for (auto& t : slots_[i].tensors()) t.value.fill(0.0);
      losses_[i] = loss_and_gradients(params, images[i], priors ? &(*priors)[i] : nullptr,
                                      targets[i], slots_[i], outputs ? &(*outputs)[i] : nullptr);
    });
    for (std::size_t i = 1; i < n; ++i) slots_[0] += slots_[i];
    slots_[0].scale(1.0 / static_cast<double>(n));
    double loss = 0.0;
    for (double l : losses_) loss += l;
    return loss / static_cast<double>(n);
  }

  const ModelParams& gradient() const { return slots_.front(); }

 private:
  std::vector<ModelParams> slots_;
  std::vector<double> losses_;
};

std::string context(std::size_t epoch, std::size_t batch, std::size_t iteration) {
  return "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ", iteration " +
         std::to_string(iteration);
}

}  // namespace

AdadeltaState make_adadelta(const ModelParams& params, double rho, double epsilon) {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("Adadelta rho must lie in (0,1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("Adadelta epsilon must be positive");
  return {rho, epsilon, params.zeros_like(), params.zeros_like()};
}

void adadelta_step(ModelParams& params, const ModelParams& grads, AdadeltaState& state) {
  auto& p = params.tensors();
  const auto& g = grads.tensors();
  auto& eg = state.sq_grad.tensors();
  auto& ed = state.sq_update.tensors();
  if (g.size() != p.size() || eg.size() != p.size() || ed.size() != p.size())
    throw std::invalid_argument("adadelta_step: parameter, gradient and state sets differ");
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (g[t].value.shape() != p[t].value.shape() || eg[t].value.shape() != p[t].value.shape() ||
        ed[t].value.shape() != p[t].value.shape())
      throw std::invalid_argument("adadelta_step: shape mismatch for " + p[t].name);
    for (double v : g[t].value.values())
      if (!std::isfinite(v))
        throw DivergenceError("non-finite gradient in tensor " + g[t].name);
  }
  const double rho = state.rho, eps = state.epsilon;
  for (std::size_t t = 0; t < p.size(); ++t) {
    double* x = p[t].value.data();
    const double* dx = g[t].value.data();
    double* acc_g = eg[t].value.data();
    double* acc_d = ed[t].value.data();
    for (std::size_t i = 0, n = p[t].value.size(); i < n; ++i) {
      acc_g[i] = rho * acc_g[i] + (1 - rho) * dx[i] * dx[i];
      const double update = -(std::sqrt(acc_d[i] + eps) / std::sqrt(acc_g[i] + eps)) * dx[i];
      acc_d[i] = rho * acc_d[i] + (1 - rho) * update * update;
      x[i] += update;
    }
  }
}

void TrainConfig::validate(Variant variant) const {
  auto bad = [](const std::string& msg) { throw std::invalid_argument("TrainConfig: " + msg); };
  if (batch_size == 0) bad("batch_size must be >= 1");
  if (iters == 0) bad("iters must be >= 1");
  if (variant == Variant::image_only && iters != 1)
    bad("the image-only variant has no prior to refine; iters must be 1");
  if (prior_kind != PriorKind::kshot && prior_kind != PriorKind::full)
    bad("training priors must be kshot or full");
  if (prior_kind == PriorKind::kshot && prior_k == 0) bad("prior_k must be >= 1");
  if (max_epochs == 0) bad("max_epochs must be >= 1");
  if (val_views == 0) bad("val_views must be >= 1");
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) bad("iou_threshold must lie in (0,1)");
  if (!(rho > 0.0 && rho < 1.0)) bad("rho must lie in (0,1)");
  if (!(epsilon > 0.0)) bad("epsilon must be positive");
}

EpochRecord validate_model(const ModelParams& params, DataSource& data, const TrainConfig& config) {
  const DatasetManifest& m = data.manifest();
  const bool use_prior = params.variant() == Variant::prior_refinement;
  const auto cats = m.categories_with(Role::base);
  EpochRecord rec;
  double total = 0.0;
  for (std::size_t c : cats) {
    const auto refs = m.instances(c, Split::val);
    if (refs.empty())
      throw std::invalid_argument("base category '" + m.categories[c].name + "' has no validation instances");
    std::vector<Example> examples;
    for (InstanceRef r : refs)
      for (std::size_t v = 0; v < std::min(config.val_views, m.at(r).views.size()); ++v)
        examples.push_back({r, v});
    std::vector<Tensor> images(examples.size());
    std::vector<VoxelGrid> targets(examples.size()), priors(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
      images[i] = data.view(examples[i].ref, examples[i].view);
      targets[i] = data.voxel(examples[i].ref);
    }
    if (use_prior) {
      VoxelGrid full;
      if (config.prior_kind == PriorKind::full)
        full = make_prior({PriorKind::full, 0, m.categories[c].name, 0}, data).grid;
      for (std::size_t i = 0; i < examples.size(); ++i) {
        if (config.prior_kind == PriorKind::full) {
          priors[i] = full;
        } else {
          const InstanceRef r = examples[i].ref;
          const auto pool = sample_pool(m, c, config.prior_k,
                                        derive_seed(derive_seed(config.seed, "val-prior"),
                                                    r.instance * 1000 + examples[i].view),
                                        r);
          std::vector<const VoxelGrid*> grids;
          for (InstanceRef p : pool) grids.push_back(&data.voxel(p));
          priors[i] = average_prior(grids);
        }
      }
    }
    std::vector<double> scores(examples.size());
    parallel_for(examples.size(), [&](std::size_t i) {
      VoxelGrid out;
      if (use_prior) {
        VoxelGrid prior = priors[i];
        for (std::size_t it = 0; it < config.iters; ++it) {
          out = forward(params, images[i], prior);
          prior = out;
        }
      } else {
        out = forward_image_only(params, images[i]);
      }
      scores[i] = iou(out, targets[i], config.iou_threshold);
    });
    double sum = 0.0;
    for (double s : scores) sum += s;
    const double mean = sum / static_cast<double>(scores.size());
    rec.val_iou[m.categories[c].name] = mean;
    total += mean;
  }
  rec.val_mean = total / static_cast<double>(cats.size());
  return rec;
}

TrainResult train(ModelParams init, DataSource& data, const TrainConfig& config,
                  const TrainHooks& hooks) {
  config.validate(init.variant());
  const DatasetManifest& m = data.manifest();
  const bool use_prior = init.variant() == Variant::prior_refinement;
  if (init.config().voxel_dim != m.voxel_dim || init.config().image_size != m.image_size)
    throw std::invalid_argument("model expects " + std::to_string(init.config().image_size) +
                                " px images and " + std::to_string(init.config().voxel_dim) +
                                "^3 grids; dataset has " + std::to_string(m.image_size) + " px and " +
                                std::to_string(m.voxel_dim) + "^3");
  const auto train_refs = m.instances(Role::base, Split::train);
  if (train_refs.empty()) throw std::invalid_argument("no base-category training instances");
  if (m.instances(Role::base, Split::val).empty())
    throw std::invalid_argument("no base-category validation instances");

  std::map<std::size_t, VoxelGrid> full_priors;
  if (use_prior && config.prior_kind == PriorKind::full)
    for (std::size_t c : m.categories_with(Role::base))
      full_priors[c] = make_prior({PriorKind::full, 0, m.categories[c].name, 0}, data).grid;

  ModelParams params = std::move(init);
  AdadeltaState state = make_adadelta(params, config.rho, config.epsilon);
  BatchStep step;
  TrainResult result;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, epoch));
    std::vector<Example> examples;
    for (InstanceRef r : train_refs) {
      const std::size_t nv = m.at(r).views.size();
      const std::size_t take = config.views_per_epoch == 0 ? nv : std::min(config.views_per_epoch, nv);
      for (std::size_t v : pick(nv, take, rng)) examples.push_back({r, v});
    }
    shuffle(examples, rng);

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    const std::uint64_t prior_seed = derive_seed(derive_seed(config.seed, "train-prior"), epoch);
    for (std::size_t start = 0, batch = 0; start < examples.size(); start += config.batch_size, ++batch) {
      const std::size_t n = std::min(config.batch_size, examples.size() - start);
      std::vector<Tensor> images(n);
      std::vector<VoxelGrid> targets(n), priors(use_prior ? n : 0), outputs;
      for (std::size_t i = 0; i < n; ++i) {
        const Example& e = examples[start + i];
        images[i] = data.view(e.ref, e.view);
        targets[i] = data.voxel(e.ref);
        if (!use_prior) continue;
        if (config.prior_kind == PriorKind::full) {
          priors[i] = full_priors.at(e.ref.category);
        } else {
          // A fresh k-shot prior per pair, never containing the target itself.
          const auto pool = sample_pool(m, e.ref.category, config.prior_k,
                                        derive_seed(prior_seed, start + i), e.ref);
          std::vector<const VoxelGrid*> grids;
          for (InstanceRef p : pool) grids.push_back(&data.voxel(p));
          priors[i] = average_prior(grids);
        }
      }
      for (std::size_t it = 0; it < config.iters; ++it) {
        const double loss = step.run(params, images, use_prior ? &priors : nullptr, targets,
                                     use_prior ? &outputs : nullptr);
        if (!std::isfinite(loss))
          throw DivergenceError("training diverged at " + context(epoch, batch, it) +
                                ": loss is " + std::to_string(loss));
        try {
          adadelta_step(params, step.gradient(), state);
        } catch (const DivergenceError& e) {
          throw DivergenceError(std::string(e.what()) + " at " + context(epoch, batch, it));
        }
        result.losses.push_back({epoch, batch, it, loss});
        loss_sum += loss;
        ++loss_count;
        if (hooks.on_iteration) hooks.on_iteration(epoch, batch, it, priors, outputs);
        if (use_prior) priors = std::move(outputs);
      }
    }

    EpochRecord rec = validate_model(params, data, config);
    rec.epoch = epoch;
    rec.mean_loss = loss_sum / static_cast<double>(loss_count);
    if (result.epochs.empty() || rec.val_mean > result.best_val) {
      rec.improved = true;
      result.best = params;
      result.best_val = rec.val_mean;
      result.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    result.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (config.patience > 0 && since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

std::string train_log_csv(const TrainResult& result, const std::vector<std::string>& categories) {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  std::string out = "epoch,batch,iteration_index,loss";
  for (const auto& c : categories) out += ",val_iou_" + c;
  out += ",val_iou_mean\n";
  const std::string blanks(categories.size() + 1, ',');
  std::size_t next = 0;
  for (const auto& ep : result.epochs) {
    for (; next < result.losses.size() && result.losses[next].epoch == ep.epoch; ++next) {
      const auto& l = result.losses[next];
      out += std::to_string(l.epoch) + "," + std::to_string(l.batch) + "," +
             std::to_string(l.iteration) + "," + num(l.loss) + blanks + "\n";
    }
    out += std::to_string(ep.epoch) + ",val,," + num(ep.mean_loss);
    for (const auto& c : categories) {
      const auto it = ep.val_iou.find(c);
      out += "," + (it == ep.val_iou.end() ? std::string() : num(it->second));
    }
    out += "," + num(ep.val_mean) + "\n";
  }
  return out;
}

FinetuneResult finetune_baseline(const ModelParams& image_only, DataSource& data,
                                 const FinetuneConfig& config) {
  if (image_only.variant() != Variant::image_only)
    throw std::invalid_argument("the finetuning baseline starts from an image-only model");
  if (config.k == 0) throw std::invalid_argument("finetuning needs k >= 1 shapes per category");
  if (config.renders_per_shape == 0) throw std::invalid_argument("renders_per_shape must be >= 1");
  if (config.batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (!(config.learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  const DatasetManifest& m = data.manifest();
  const auto novel = m.categories_with(Role::novel);
  if (novel.empty()) throw std::invalid_argument("dataset has no novel categories");

  FinetuneResult result;
  Rng rng(derive_seed(config.seed, "finetune"));
  for (std::size_t c : novel) {
    for (InstanceRef r : sample_pool(m, c, config.k, derive_seed(config.seed, "pool"))) {
      const std::size_t nv = m.at(r).views.size();
      if (config.renders_per_shape > nv)
        throw std::invalid_argument("instance " + m.at(r).id + " has only " + std::to_string(nv) +
                                    " renders");
      for (std::size_t v : pick(nv, config.renders_per_shape, rng)) result.pool.push_back({r, v});
    }
  }
  shuffle(result.pool, rng);

  std::vector<Tensor> images;
  std::vector<VoxelGrid> targets;
  for (const auto& [r, v] : result.pool) {
    images.push_back(data.view(r, v));
    targets.push_back(data.voxel(r));
  }

  result.params = image_only;
  const std::size_t batch = std::min(config.batch_size, result.pool.size());
  BatchStep step;
  std::size_t cursor = 0;
  for (std::size_t s = 0; s < config.steps; ++s) {
    std::vector<Tensor> bi(batch);
    std::vector<VoxelGrid> bt(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      bi[i] = images[(cursor + i) % images.size()];
      bt[i] = targets[(cursor + i) % targets.size()];
    }
    cursor = (cursor + batch) % images.size();
    const double loss = step.run(result.params, bi, nullptr, bt, nullptr);
    if (!std::isfinite(loss))
      throw DivergenceError("finetuning diverged at step " + std::to_string(s));
    auto& p = result.params.tensors();
    const auto& g = step.gradient().tensors();
    for (std::size_t t = 0; t < p.size(); ++t) {
      double* x = p[t].value.data();
      const double* dx = g[t].value.data();
      for (std::size_t i = 0, n = p[t].value.size(); i < n; ++i) x[i] -= config.learning_rate * dx[i];
    }
    result.losses.push_back(loss);
  }
  return result;
}

}  // namespace voxelprior
