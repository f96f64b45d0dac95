#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "support/small_world.hpp"
#include "voxelprior/eval.hpp"
#include "voxelprior/parallel.hpp"
#include "voxelprior/rng.hpp"

using namespace voxelprior;

namespace {

EvalRow row(std::string cond, std::uint64_t seed, std::string cat, std::string inst, double v) {
  return {std::move(cond), seed, std::move(cat), std::move(inst), "0", "none", 1, v};
}

}  // namespace

TEST_CASE("iou against a set-based oracle") {
  VoxelGrid pred(4), target(4);
  // 8 predicted, 8 occupied, 4 shared: 4 / 12.
  for (std::size_t i = 0; i < 8; ++i) pred.values()[i] = 0.9;
  for (std::size_t i = 4; i < 12; ++i) target.values()[i] = 1.0;
  CHECK(iou(pred, target) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  pred.values()[20] = 0.4;  // at the threshold counts as occupied
  CHECK(iou(pred, target) == doctest::Approx(4.0 / 13.0).epsilon(1e-15));
  pred.values()[20] = 0.399;
  CHECK(iou(pred, target) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  CHECK(iou(VoxelGrid(4), VoxelGrid(4)) == 1.0);
  CHECK(iou(VoxelGrid(4, 0.3), VoxelGrid(4)) == 1.0);
  CHECK(iou(VoxelGrid(4), VoxelGrid(4, 1.0)) == 0.0);
  CHECK_THROWS_AS(iou(VoxelGrid(4), VoxelGrid(5)), std::invalid_argument);
  CHECK_THROWS_AS(iou(VoxelGrid(4), VoxelGrid(4, 0.5)), std::invalid_argument);

  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    VoxelGrid p(6), t(6);
    std::set<std::size_t> sp, st;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p.values()[i] = uniform01(rng);
      t.values()[i] = uniform01(rng) < 0.4 ? 1.0 : 0.0;
      if (p.values()[i] >= kIouThreshold) sp.insert(i);
      if (t.values()[i] == 1.0) st.insert(i);
    }
    std::vector<std::size_t> inter, uni;
    std::set_intersection(sp.begin(), sp.end(), st.begin(), st.end(), std::back_inserter(inter));
    std::set_union(sp.begin(), sp.end(), st.begin(), st.end(), std::back_inserter(uni));
    REQUIRE(iou(p, t) == static_cast<double>(inter.size()) / static_cast<double>(uni.size()));
  }
}

TEST_CASE("report means are category-wise") {
  EvalReport r;
  r.experiment = "demo";
  r.rows = {row("a", 0, "x", "x_000", 1.0), row("a", 0, "y", "y_000", 0.0), row("a", 0, "y", "y_001", 0.0),
            row("a", 0, "y", "y_002", 0.0), row("a", 1, "x", "x_000", 0.5), row("a", 1, "y", "y_000", 0.5),
            row("b", 0, "x", "x_000", 0.25)};
  const auto s = r.summaries();
  REQUIRE(s.size() == 3);
  CHECK(s[0].mean == 0.5);  // not the row mean 0.25
  CHECK(s[0].rows == 4);
  CHECK(s[0].category_mean.at("y") == 0.0);
  CHECK(s[1].mean == 0.5);

  // Repeating rows inside a category leaves its mean alone.
  EvalReport dup = r;
  dup.rows.push_back(row("a", 0, "x", "x_001", 1.0));
  CHECK(dup.summaries()[0].mean == 0.5);

  const ConditionAggregate a = r.aggregate("a");
  CHECK(a.seeds == 2);
  CHECK(a.mean == 0.5);
  CHECK(a.stddev == 0.0);
  CHECK(a.category_mean.at("x") == 0.75);
  CHECK(r.aggregate("b").stddev == 0.0);
  CHECK_THROWS_AS(r.aggregate("c"), std::out_of_range);
  CHECK(r.conditions() == std::vector<std::string>{"a", "b"});
  CHECK(r.rows_for("b").size() == 1);

  EvalReport spread;
  spread.rows = {row("c", 0, "x", "i", 0.2), row("c", 1, "x", "i", 0.4), row("c", 2, "x", "i", 0.9)};
  const double m = 0.5, sd = std::sqrt(((0.3 * 0.3) + (0.1 * 0.1) + (0.4 * 0.4)) / 2.0);
  CHECK(spread.aggregate("c").mean == doctest::Approx(m));
  CHECK(spread.aggregate("c").stddev == doctest::Approx(sd));
}

TEST_CASE("report serialization") {
  EvalReport r;
  r.experiment = "demo";
  r.seed = 4;
  r.config_digest = "abc";
  r.rows = {row("a", 4, "x", "x_000", 0.125)};
  CHECK(r.to_csv() ==
        "experiment,seed,condition,category,instance,views,prior,iterations,iou\n"
        "demo,4,a,x,x_000,0,none,1,0.125\n");
  CHECK(r.digest().size() == 16);
  const auto j = nlohmann::json::parse(r.summary_json());
  CHECK(j["config_digest"] == "abc");
  CHECK(j["conditions"][0]["mean_iou"] == 0.125);

  const EvalReport back = report_from_csv(r.to_csv());
  CHECK(back.to_csv() == r.to_csv());
  CHECK(back.seed == 4);
  CHECK_THROWS_AS(report_from_csv("a,b\n"), std::invalid_argument);
  CHECK_THROWS_AS(report_from_csv(r.to_csv() + "demo,4,a,x,x_001,0,none,1,1.5\n"), std::invalid_argument);

  TempDir dir;
  const auto paths = r.write(dir.path());
  REQUIRE(paths.size() == 2);
  CHECK(paths[0].filename() == "demo_seed4.csv");
  std::ifstream in(paths[0]);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == r.to_csv());
}

TEST_CASE("view order") {
  InstanceRecord inst;
  inst.id = "box_000";
  inst.views.resize(24);
  const auto all = view_order(inst, 0, 0);
  CHECK(all.size() == 24);
  CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == 24);
  const auto five = view_order(inst, 0, 5);
  CHECK(std::equal(five.begin(), five.end(), all.begin()));
  CHECK(view_order(inst, 1, 0) != all);
  CHECK(view_order(inst, 0, 100).size() == 24);
}

TEST_CASE("experiments on a small dataset") {
  SmallWorld world(20, 6);
  DataSource data(world.manifest);
  const ModelParams img = init_model(SmallWorld::arch(), Variant::image_only, 1);
  const ModelParams pr = init_model(SmallWorld::arch(), Variant::prior_refinement, 2);
  const auto& m = world.manifest;
  const InstanceRef target = m.instances(Role::novel, Split::test).front();

  SUBCASE("multiview step 1 is a single forward pass") {
    std::vector<Tensor> views;
    for (std::size_t v = 0; v < 3; ++v) views.push_back(data.view(target, v));
    const VoxelGrid prior(8, 0.25);
    const auto traj = multiview_infer(pr, views, prior);
    REQUIRE(traj.size() == 3);
    CHECK(traj[0] == forward(pr, views[0], prior));
    CHECK(traj[1] == forward(pr, views[1], traj[0]));
    CHECK(traj[2] == forward(pr, views[2], traj[1]));
    CHECK(refine(pr, views[0], prior, 2) == forward(pr, views[0], traj[0]));
    CHECK_THROWS_AS(multiview_infer(img, views, prior), std::invalid_argument);
    CHECK_THROWS_AS(multiview_infer(pr, {}, prior), std::invalid_argument);

    MultiviewConfig mc;
    mc.max_views = 3;
    const auto rep = multiview_experiment({{{"m", &pr, 1}, PriorKind::full, 1}}, data, mc);
    CHECK(rep.conditions() == std::vector<std::string>{"m:views=1", "m:views=2", "m:views=3"});
    CHECK(rep.rows.size() == 3 * m.instances(Role::base, Split::test).size());
    for (const auto& r : rep.rows_for("m:views=2")) CHECK(std::count(r.views.begin(), r.views.end(), ';') == 1);
  }

  SUBCASE("few-shot conditions and determinism") {
    FewshotConfig fc;
    fc.k_values = {1, 3, 0};
    fc.seeds = {0, 1};
    fc.views_per_instance = 2;
    fc.finetune = {{1, 1}};
    const auto rep = fewshot_experiment(&img, {{"p", &pr, 2}}, data, fc);
    CHECK(rep.conditions() ==
          std::vector<std::string>{"image_only", "p:k=1", "p:k=3", "p:k=full", "finetune:k=1;r=1"});
    const std::size_t per_cond = 2 * 2 * m.instances(Role::novel, Split::test).size();
    for (const auto& c : rep.conditions()) CHECK(rep.rows_for(c).size() == per_cond);
    CHECK(rep.aggregate("p:k=1").seeds == 2);

    // The full-prior rows use the average of every training shape.
    const auto full_rows = rep.rows_for("p:k=full");
    const EvalRow& fr = full_rows.front();
    InstanceRef ref{};
    for (InstanceRef r : m.instances(Role::novel, Split::test))
      if (m.at(r).id == fr.instance) ref = r;
    const VoxelGrid full = make_prior({PriorKind::full, 0, fr.category, 0}, data).grid;
    const VoxelGrid out = refine(pr, data.view(ref, std::stoul(fr.views)), full, 2);
    CHECK(fr.iou == iou(out, data.voxel(ref)));
    for (const auto& r : rep.rows_for("image_only")) CHECK(r.prior == "none");

    const std::size_t threads = thread_count();
    set_thread_count(1);
    const auto again = fewshot_experiment(&img, {{"p", &pr, 2}}, data, fc);
    set_thread_count(threads);
    CHECK(again.digest() == rep.digest());

    fc.k_values = {16};
    CHECK_THROWS_AS(fewshot_experiment(&img, {{"p", &pr, 1}}, data, fc), std::invalid_argument);
    CHECK_THROWS_AS(fewshot_experiment(&img, {{"p", &img, 1}}, data, FewshotConfig{}), std::invalid_argument);
  }

  SUBCASE("ablation suite") {
    AblationConfig ac;
    ac.seeds = {0};
    ac.views_per_instance = 1;
    const auto rep = ablation_suite(pr, data, ac);
    const std::size_t n = m.instances(Role::novel, Split::test).size();
    CHECK(rep.conditions().size() == 10);
    for (const auto& c : rep.conditions()) CHECK(rep.rows_for(c).size() == n);
    for (const auto& r : rep.rows_for("random:iters=2")) {
      CHECK(r.prior.rfind("random(", 0) == 0);
      CHECK(r.prior.find(r.category) == std::string::npos);
    }
    const EvalRow t1 = rep.rows_for("target:iters=1").front();
    InstanceRef ref{};
    for (InstanceRef r : m.instances(Role::novel, Split::test))
      if (m.at(r).id == t1.instance) ref = r;
    CHECK(t1.iou == iou(forward(pr, data.view(ref, std::stoul(t1.views)), data.voxel(ref)), data.voxel(ref)));
    CHECK_THROWS_AS(ablation_suite(img, data, ac), std::invalid_argument);
  }

  SUBCASE("variability") {
    const auto full = kshot_variability(pr, data, target, 0, 4, PriorKind::full, 1, 0);
    CHECK(full.ious.size() == 4);
    CHECK(full.stddev == 0.0);
    const auto ks = kshot_variability(pr, data, target, 0, 15, PriorKind::kshot, 1, 0);
    CHECK(ks.ious.size() == 15);
    CHECK(ks.stddev >= 0.0);
    CHECK_THROWS_AS(kshot_variability(pr, data, target, 0, 16, PriorKind::kshot, 1, 0), std::invalid_argument);
    CHECK_THROWS_AS(kshot_variability(pr, data, target, 0, 2, PriorKind::zero, 1, 0), std::invalid_argument);
  }

  SUBCASE("audit flags novel reads") {
    DataSource fresh(m);
    fresh.voxel(m.instances(Role::base, Split::train).front());
    CHECK(audit_training_io(m, fresh.io_log()).clean());
    fresh.view(target, 0);
    const auto audit = audit_training_io(m, fresh.io_log());
    CHECK(audit.reads == 2);
    REQUIRE(audit.novel_reads.size() == 1);
    CHECK(audit.novel_reads[0] == m.at(target).views[0].image);
  }
}

TEST_CASE("distribution report") {
  DistributionSeries a{"a", {row("", 0, "x", "1", 0.5), row("", 0, "x", "2", 0.05), row("", 0, "y", "3", 0.9)}};
  DistributionSeries b{"b", {row("", 0, "y", "3", 0.08), row("", 0, "x", "2", 0.7), row("", 0, "x", "1", 0.2)}};
  const auto rep = distribution_report({a, b});
  CHECK(rep.fraction_below.at("a") == doctest::Approx(1.0 / 3.0));
  CHECK(rep.fraction_below.at("b") == doctest::Approx(1.0 / 3.0));
  CHECK(rep.sorted_csv.find("x,a,1,0.05\nx,a,2,0.5\n") != std::string::npos);
  CHECK(rep.sorted_csv.find("x,b,1,0.2\nx,b,2,0.7\n") != std::string::npos);
  CHECK(rep.paired_csv.find("0,x,1,0,0.5,0.2\n") != std::string::npos);
  CHECK(rep.below_csv.find("b,y,1\n") != std::string::npos);

  DistributionSeries c{"c", {row("", 0, "x", "1", 0.5)}};
  CHECK_THROWS_AS(distribution_report({a, c}), std::invalid_argument);
  CHECK_THROWS_AS(distribution_report({}), std::invalid_argument);
}
