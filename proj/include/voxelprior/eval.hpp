#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "voxelprior/dataset.hpp"
#include "voxelprior/metrics.hpp"
#include "voxelprior/model.hpp"
#include "voxelprior/prior.hpp"
#include "voxelprior/training.hpp"

namespace voxelprior {

// One reconstruction scored against its target. `condition` names the
// model/prior/step setting the row belongs to.
struct EvalRow {
  std::string condition;
  std::uint64_t seed = 0;
  std::string category;
  std::string instance;
  std::string views;  // view indices used, ';'-separated
  std::string prior;  // e.g. "kshot(1)", "full", "none"
  std::size_t iterations = 1;
  double iou = 0.0;
};

// Means for one (condition, seed).
struct ConditionSummary {
  std::string condition;
  std::uint64_t seed = 0;
  std::size_t rows = 0;
  std::map<std::string, double> category_mean;
  double mean = 0.0;  // unweighted over categories
};

// Category-wise means pooled over seeds.
struct ConditionAggregate {
  std::string condition;
  std::size_t seeds = 0;
  double mean = 0.0;    // of the per-seed means
  double stddev = 0.0;  // sample deviation of the per-seed means; 0 for one seed
  std::map<std::string, double> category_mean;
};

struct EvalReport {
  std::string experiment;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::vector<EvalRow> rows;

  // In order of first appearance.
  std::vector<std::string> conditions() const;
  std::vector<ConditionSummary> summaries() const;
  std::vector<ConditionAggregate> aggregates() const;
  // Throws std::out_of_range for an unknown condition.
  ConditionAggregate aggregate(const std::string& condition) const;
  std::vector<EvalRow> rows_for(const std::string& condition) const;

  std::string to_csv() const;
  std::string summary_json() const;
  std::string digest() const;
  // Writes <experiment>_seed<seed>.csv and .json; returns both paths.
  std::vector<std::filesystem::path> write(const std::filesystem::path& dir) const;
};

// Inverse of EvalReport::to_csv; throws std::invalid_argument with the line.
EvalReport report_from_csv(const std::string& csv);

// A trained prior-refinement model plus the refinement steps it runs at
// test time (the count it was trained with).
struct NamedModel {
  std::string name;
  const ModelParams* params = nullptr;
  std::size_t iters = 1;
};

// Views of an instance in experiment order: a seeded permutation, truncated.
std::vector<std::size_t> view_order(const InstanceRecord& inst, std::uint64_t seed,
                                    std::size_t count);

// `iters` refinement steps on one image starting from `prior`.
VoxelGrid refine(const ModelParams& params, const Tensor& image, const VoxelGrid& prior,
                 std::size_t iters);

struct FewshotConfig {
  std::vector<std::size_t> k_values{1, 2, 3, 4, 5, 10, 25, 0};  // 0 = full pool
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t views_per_instance = 0;  // 0 = every view
  // Finetuning baselines run per (k, renders) pair when non-empty.
  std::vector<std::pair<std::size_t, std::size_t>> finetune;
  std::size_t finetune_steps = 200;
};

// Few-shot transfer on the novel test split. Conditions: "image_only",
// "<model>:k=<k>" (k=full for the whole pool) and "finetune:k=<k>;r=<r>".
// The pool of each novel category is drawn once per seed and shared by all k.
EvalReport fewshot_experiment(const ModelParams* image_only, const std::vector<NamedModel>& models,
                              DataSource& data, const FewshotConfig& config);

// Step i feeds view i with the output of step i-1 as prior (initial_prior
// for the first). Returns one grid per view.
std::vector<VoxelGrid> multiview_infer(const ModelParams& params, const std::vector<Tensor>& views,
                                       const VoxelGrid& initial_prior);

struct MultiviewModel {
  NamedModel model;
  PriorKind prior_kind = PriorKind::full;
  std::size_t prior_k = 1;
};

struct MultiviewConfig {
  std::size_t max_views = 5;
  Role role = Role::base;
  std::vector<std::uint64_t> seeds{0};
};

// Conditions "<model>:views=<n>" for n = 1..max_views on the test split.
EvalReport multiview_experiment(const std::vector<MultiviewModel>& models, DataSource& data,
                                const MultiviewConfig& config);

struct AblationConfig {
  std::vector<std::size_t> iterations{1, 2, 3};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t views_per_instance = 0;
};

// Novel test split under: "naive" (the 1-shot prior itself, no network),
// "correct:iters=i", "random:iters=i" (1-shot prior of another category) and
// "target:iters=i" (the target as prior).
EvalReport ablation_suite(const ModelParams& model, DataSource& data, const AblationConfig& config);

// Tables for plotting IoU distributions of several models over the same rows.
struct DistributionSeries {
  std::string name;
  std::vector<EvalRow> rows;
};

struct DistributionReport {
  std::string sorted_csv;  // category,model,rank,iou (nondecreasing per group)
  std::string paired_csv;  // category,instance,views,<model...>
  std::string below_csv;   // model,category,fraction_below
  std::map<std::string, double> fraction_below;  // per model over all rows
};

// Rows are matched on (category, instance, views, seed); a mismatch throws.
DistributionReport distribution_report(const std::vector<DistributionSeries>& series,
                                       double low = 0.1);

struct VariabilityResult {
  std::vector<double> ious;
  double mean = 0.0;
  double stddev = 0.0;  // sample deviation
};

// Reconstructs one (image, target) pair under n priors: n distinct single
// training shapes for kshot, the full prior n times for full.
VariabilityResult kshot_variability(const ModelParams& model, DataSource& data, InstanceRef target,
                                    std::size_t view, std::size_t n, PriorKind kind,
                                    std::size_t iters, std::uint64_t seed);

struct IoAudit {
  std::size_t reads = 0;
  std::vector<std::string> novel_reads;
  bool clean() const { return novel_reads.empty(); }
};

// Flags any logged path that belongs to a novel category.
IoAudit audit_training_io(const DatasetManifest& manifest, const std::vector<std::string>& io_log);

}  // namespace voxelprior
