#include <doctest.h>

#include <cmath>
#include <limits>

#include "support/small_world.hpp"
#include "voxelprior/errors.hpp"
#include "voxelprior/eval.hpp"
#include "voxelprior/training.hpp"

using namespace voxelprior;

namespace {

ModelParams filled(const ModelParams& like, double v) {
  ModelParams out = like.zeros_like();
  for (auto& t : out.tensors())
    for (double& x : t.value.values()) x = v;
  return out;
}

TrainConfig quick_config(std::size_t iters, std::size_t epochs) {
  TrainConfig c;
  c.batch_size = 8;
  c.iters = iters;
  c.max_epochs = epochs;
  c.patience = 100;
  c.views_per_epoch = 1;
  c.val_views = 2;
  return c;
}

}  // namespace

TEST_CASE("adadelta matches the closed-form first step") {
  const ModelParams p = init_model(SmallWorld::arch(), Variant::image_only, 1);
  ModelParams q = p;
  AdadeltaState st = make_adadelta(q);
  adadelta_step(q, filled(p, 1.0), st);
  // E[g^2] = 0.05, E[dx^2] = 0: dx = -sqrt(1e-6) / sqrt(0.05 + 1e-6)
  const double dx = -std::sqrt(1e-6) / std::sqrt(0.05 + 1e-6);
  CHECK(dx == doctest::Approx(-4.4721e-3).epsilon(1e-4));
  for (std::size_t t = 0; t < p.tensors().size(); ++t) {
    const auto a = p.tensors()[t].value.values();
    const auto b = q.tensors()[t].value.values();
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(b[i] - a[i] == doctest::Approx(dx).epsilon(1e-12));
  }
  const double sq_update = st.sq_update.tensors()[0].value.values()[0];
  CHECK(sq_update == doctest::Approx(0.05 * dx * dx).epsilon(1e-12));

  SUBCASE("zero gradient leaves parameters and decays accumulators") {
    const ModelParams before = q;
    const double g2 = st.sq_grad.tensors()[0].value.values()[0];
    adadelta_step(q, p.zeros_like(), st);
    CHECK(q == before);
    CHECK(st.sq_grad.tensors()[0].value.values()[0] == doctest::Approx(0.95 * g2));
    CHECK(st.sq_update.tensors()[0].value.values()[0] == doctest::Approx(0.95 * sq_update));
  }
  SUBCASE("non-finite gradient names the tensor and changes nothing") {
    const ModelParams before = q;
    ModelParams g = p.zeros_like();
    g.tensors().back().value.values()[0] = std::numeric_limits<double>::quiet_NaN();
    try {
      adadelta_step(q, g, st);
      FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
      CHECK(std::string(e.what()).find(p.tensors().back().name) != std::string::npos);
    }
    CHECK(q == before);
  }
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate(Variant::prior_refinement));
  c.iters = 3;
  CHECK_THROWS_AS(c.validate(Variant::image_only), std::invalid_argument);
  c.iters = 0;
  CHECK_THROWS_AS(c.validate(Variant::prior_refinement), std::invalid_argument);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(Variant::prior_refinement), std::invalid_argument);
  c = TrainConfig{};
  c.prior_kind = PriorKind::zero;
  CHECK_THROWS_AS(c.validate(Variant::prior_refinement), std::invalid_argument);
}

TEST_CASE("training loop") {
  SmallWorld world;
  DataSource data(world.manifest);
  const ModelParams init = init_model(SmallWorld::arch(), Variant::prior_refinement, 5);

  SUBCASE("iteration feedback and loss log") {
    TrainConfig cfg = quick_config(3, 1);
    std::vector<std::vector<VoxelGrid>> priors, outputs;
    std::vector<std::size_t> its;
    TrainHooks hooks;
    hooks.on_iteration = [&](std::size_t, std::size_t batch, std::size_t it,
                             const std::vector<VoxelGrid>& p, const std::vector<VoxelGrid>& o) {
      if (batch != 0) return;
      its.push_back(it);
      priors.push_back(p);
      outputs.push_back(o);
    };
    const TrainResult r = train(init, data, cfg, hooks);
    REQUIRE(its == std::vector<std::size_t>{0, 1, 2});
    CHECK(priors[1] == outputs[0]);
    CHECK(priors[2] == outputs[1]);
    // 15 train instances x 2 base categories, 1 view each, batches of 8.
    const std::size_t batches = 4;
    CHECK(r.losses.size() == batches * 3);
    for (std::size_t i = 0; i < r.losses.size(); ++i) {
      CHECK(r.losses[i].batch == i / 3);
      CHECK(r.losses[i].iteration == i % 3);
      CHECK(std::isfinite(r.losses[i].loss));
    }
    CHECK(r.epochs.size() == 1);
    CHECK(r.epochs[0].val_iou.size() == 2);
  }

  SUBCASE("one iteration with a fixed prior is plain training") {
    TrainConfig cfg = quick_config(1, 1);
    std::size_t calls = 0;
    TrainHooks hooks;
    hooks.on_iteration = [&](std::size_t, std::size_t, std::size_t it, const std::vector<VoxelGrid>& p,
                             const std::vector<VoxelGrid>&) {
      CHECK(it == 0);
      for (const auto& g : p) CHECK(g.is_binary());  // 1-shot prior is a single shape
      ++calls;
    };
    const TrainResult r = train(init, data, cfg, hooks);
    CHECK(calls == 4);
    CHECK(r.losses.size() == 4);
  }

  SUBCASE("deterministic and reads no novel data") {
    TrainConfig cfg = quick_config(2, 2);
    DataSource a(world.manifest), b(world.manifest);
    const TrainResult ra = train(init, a, cfg);
    const TrainResult rb = train(init, b, cfg);
    CHECK(ra.best == rb.best);
    CHECK(train_log_csv(ra, {"box", "tower"}) == train_log_csv(rb, {"box", "tower"}));
    const IoAudit audit = audit_training_io(world.manifest, a.io_log());
    CHECK(audit.reads > 0);
    CHECK(audit.clean());
  }

  SUBCASE("loss falls over the first epochs") {
    TrainConfig cfg = quick_config(1, 4);
    cfg.views_per_epoch = 4;
    const TrainResult r = train(init, data, cfg);
    REQUIRE(r.epochs.size() == 4);
    CHECK(r.epochs.back().mean_loss < r.epochs.front().mean_loss);
    CHECK(r.best_epoch >= 1);
    CHECK(r.best == train(init, data, [&] { auto c = cfg; c.max_epochs = r.best_epoch; return c; }()).best);
  }

  SUBCASE("dimension mismatch is rejected") {
    ArchConfig other = SmallWorld::arch();
    other.voxel_dim = 16;
    CHECK_THROWS_AS(train(init_model(other, Variant::prior_refinement, 1), data, quick_config(1, 1)),
                    std::invalid_argument);
  }
}

TEST_CASE("train log csv") {
  TrainResult r;
  r.losses = {{1, 0, 0, 0.5}, {1, 0, 1, 0.25}};
  EpochRecord e;
  e.epoch = 1;
  e.mean_loss = 0.375;
  e.val_iou = {{"box", 0.5}, {"tower", 0.25}};
  e.val_mean = 0.375;
  r.epochs = {e};
  const std::string csv = train_log_csv(r, {"box", "tower"});
  CHECK(csv ==
        "epoch,batch,iteration_index,loss,val_iou_box,val_iou_tower,val_iou_mean\n"
        "1,0,0,0.5,,,\n"
        "1,0,1,0.25,,,\n"
        "1,val,,0.375,0.5,0.25,0.375\n");
}

TEST_CASE("finetune baseline") {
  SmallWorld world;
  DataSource data(world.manifest);
  const ModelParams base = init_model(SmallWorld::arch(), Variant::image_only, 2);

  FinetuneConfig cfg;
  cfg.steps = 30;
  cfg.learning_rate = 0.5;
  const FinetuneResult r = finetune_baseline(base, data, cfg);
  CHECK(r.losses.size() == 30);
  CHECK(r.pool.size() == 2);  // one shape x one render per novel category
  CHECK(r.losses.back() < r.losses.front());
  CHECK_FALSE(r.params == base);
  for (const auto& [ref, view] : r.pool)
    CHECK(world.manifest.categories[ref.category].role == Role::novel);
  CHECK(finetune_baseline(base, data, cfg).params == r.params);

  cfg.learning_rate = 0.0;
  cfg.steps = 5;
  CHECK(finetune_baseline(base, data, cfg).params == base);

  cfg.renders_per_shape = 3;
  cfg.k = 2;
  CHECK(finetune_baseline(base, data, cfg).pool.size() == 12);
  CHECK_THROWS_AS(finetune_baseline(init_model(SmallWorld::arch(), Variant::prior_refinement, 1), data, cfg),
                  std::invalid_argument);
}
