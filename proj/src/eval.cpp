#include "voxelprior/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#include "voxelprior/digest.hpp"
#include "voxelprior/io.hpp"
#include "voxelprior/parallel.hpp"
#include "voxelprior/rng.hpp"

namespace voxelprior {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string join_views(const std::vector<std::size_t>& views) {
  std::string out;
  for (std::size_t v : views) out += (out.empty() ? "" : ";") + std::to_string(v);
  return out;
}

double sample_stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

std::string prior_label(PriorKind kind, std::size_t k) {
  if (kind == PriorKind::kshot) return "kshot(" + std::to_string(k) + ")";
  return std::string(prior_kind_name(kind));
}

void require_prior_model(const ModelParams& p, const std::string& what) {
  if (p.variant() != Variant::prior_refinement)
    throw std::invalid_argument(what + " needs a prior-refinement model");
}

VoxelGrid mean_of(DataSource& data, const std::vector<InstanceRef>& refs) {
  std::vector<const VoxelGrid*> grids;
  for (InstanceRef r : refs) grids.push_back(&data.voxel(r));
  return average_prior(grids);
}

// A reconstruction to score: rows are appended in job order after the
// parallel pass, so the report does not depend on the thread count.
struct Job {
  EvalRow row;
  std::function<double()> score;
};

bool parse_uint(const std::string& s, std::uint64_t& out) {
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return !s.empty() && ec == std::errc() && p == s.data() + s.size();
}

void run_jobs(std::vector<Job>& jobs, EvalReport& report) {
  std::vector<double> scores(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) { scores[i] = jobs[i].score(); });
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    jobs[i].row.iou = scores[i];
    report.rows.push_back(std::move(jobs[i].row));
  }
  jobs.clear();
}

}  // namespace

std::vector<std::string> EvalReport::conditions() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : rows)
    if (seen.insert(r.condition).second) out.push_back(r.condition);
  return out;
}

std::vector<ConditionSummary> EvalReport::summaries() const {
  std::vector<ConditionSummary> out;
  std::map<std::pair<std::string, std::uint64_t>, std::size_t> index;
  std::vector<std::map<std::string, std::pair<double, std::size_t>>> sums;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.condition, r.seed);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      out.push_back({r.condition, r.seed, 0, {}, 0.0});
      sums.emplace_back();
    }
    auto& s = sums[it->second][r.category];
    s.first += r.iou;
    ++s.second;
    ++out[it->second].rows;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    double total = 0.0;
    for (const auto& [cat, s] : sums[i]) {
      out[i].category_mean[cat] = s.first / static_cast<double>(s.second);
      total += out[i].category_mean[cat];
    }
    out[i].mean = total / static_cast<double>(sums[i].size());
  }
  return out;
}

std::vector<ConditionAggregate> EvalReport::aggregates() const {
  const auto sums = summaries();
  std::vector<ConditionAggregate> out;
  for (const auto& cond : conditions()) {
    ConditionAggregate agg;
    agg.condition = cond;
    std::vector<double> means;
    std::map<std::string, double> cat_sum;
    for (const auto& s : sums) {
      if (s.condition != cond) continue;
      means.push_back(s.mean);
      for (const auto& [c, v] : s.category_mean) cat_sum[c] += v;
    }
    agg.seeds = means.size();
    agg.mean = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size());
    agg.stddev = sample_stddev(means);
    for (const auto& [c, v] : cat_sum) agg.category_mean[c] = v / static_cast<double>(means.size());
    out.push_back(std::move(agg));
  }
  return out;
}

ConditionAggregate EvalReport::aggregate(const std::string& condition) const {
  for (auto& a : aggregates())
    if (a.condition == condition) return a;
  throw std::out_of_range("report '" + experiment + "' has no condition '" + condition + "'");
}

std::vector<EvalRow> EvalReport::rows_for(const std::string& condition) const {
  std::vector<EvalRow> out;
  for (const auto& r : rows)
    if (r.condition == condition) out.push_back(r);
  return out;
}

std::string EvalReport::to_csv() const {
  std::string out = "experiment,seed,condition,category,instance,views,prior,iterations,iou\n";
  for (const auto& r : rows)
    out += experiment + "," + std::to_string(r.seed) + "," + r.condition + "," + r.category + "," +
           r.instance + "," + r.views + "," + r.prior + "," + std::to_string(r.iterations) + "," +
           num(r.iou) + "\n";
  return out;
}

std::string EvalReport::summary_json() const {
  nlohmann::ordered_json j;
  j["experiment"] = experiment;
  j["seed"] = seed;
  j["config_digest"] = config_digest;
  j["report_digest"] = digest();
  j["rows"] = rows.size();
  auto per_seed = nlohmann::ordered_json::array();
  for (const auto& s : summaries())
    per_seed.push_back({{"condition", s.condition},
                        {"seed", s.seed},
                        {"rows", s.rows},
                        {"mean_iou", s.mean},
                        {"category_mean_iou", s.category_mean}});
  auto agg = nlohmann::ordered_json::array();
  for (const auto& a : aggregates())
    agg.push_back({{"condition", a.condition},
                   {"seeds", a.seeds},
                   {"mean_iou", a.mean},
                   {"stddev", a.stddev},
                   {"category_mean_iou", a.category_mean}});
  j["per_seed"] = per_seed;
  j["conditions"] = agg;
  return j.dump(2) + "\n";
}

std::string EvalReport::digest() const { return digest_hex(to_csv()); }

std::vector<std::filesystem::path> EvalReport::write(const std::filesystem::path& dir) const {
  const std::string stem = experiment + "_seed" + std::to_string(seed);
  const auto csv = dir / (stem + ".csv");
  const auto json = dir / (stem + ".json");
  write_file(csv, to_csv());
  write_file(json, summary_json());
  return {csv, json};
}

EvalReport report_from_csv(const std::string& csv) {
  EvalReport report;
  std::size_t line_no = 0, start = 0;
  while (start < csv.size()) {
    std::size_t end = csv.find('\n', start);
    if (end == std::string::npos) end = csv.size();
    const std::string line = csv.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    for (std::size_t a = 0;;) {
      const std::size_t b = line.find(',', a);
      f.push_back(line.substr(a, b == std::string::npos ? std::string::npos : b - a));
      if (b == std::string::npos) break;
      a = b + 1;
    }
    auto bad = [&](const std::string& why) {
      throw std::invalid_argument("report line " + std::to_string(line_no) + ": " + why);
    };
    if (line_no == 1) {
      if (line != "experiment,seed,condition,category,instance,views,prior,iterations,iou")
        bad("unexpected header");
      continue;
    }
    if (f.size() != 9) bad("expected 9 fields, found " + std::to_string(f.size()));
    if (report.experiment.empty()) report.experiment = f[0];
    else if (f[0] != report.experiment) bad("mixes experiments '" + report.experiment + "' and '" + f[0] + "'");
    EvalRow r;
    if (!parse_uint(f[1], r.seed)) bad("bad seed '" + f[1] + "'");
    std::uint64_t iters = 0;
    if (!parse_uint(f[7], iters)) bad("bad iteration count '" + f[7] + "'");
    r.iterations = iters;
    char* stop = nullptr;
    r.iou = std::strtod(f[8].c_str(), &stop);
    if (f[8].empty() || stop != f[8].c_str() + f[8].size() || !(r.iou >= 0.0 && r.iou <= 1.0))
      bad("bad IoU '" + f[8] + "'");
    r.condition = f[2];
    r.category = f[3];
    r.instance = f[4];
    r.views = f[5];
    r.prior = f[6];
    if (report.rows.empty()) report.seed = r.seed;
    report.rows.push_back(std::move(r));
  }
  if (line_no == 0) throw std::invalid_argument("report is empty");
  return report;
}

std::vector<std::size_t> view_order(const InstanceRecord& inst, std::uint64_t seed,
                                    std::size_t count) {
  std::vector<std::size_t> idx(inst.views.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, "views:" + inst.id));
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
  if (count != 0 && count < idx.size()) idx.resize(count);
  return idx;
}

VoxelGrid refine(const ModelParams& params, const Tensor& image, const VoxelGrid& prior,
                 std::size_t iters) {
  if (iters == 0) throw std::invalid_argument("refine needs at least one iteration");
  VoxelGrid out = forward(params, image, prior);
  for (std::size_t i = 1; i < iters; ++i) out = forward(params, image, out);
  return out;
}

EvalReport fewshot_experiment(const ModelParams* image_only, const std::vector<NamedModel>& models,
                              DataSource& data, const FewshotConfig& config) {
  if (!image_only && models.empty() && config.finetune.empty())
    throw std::invalid_argument("fewshot_experiment needs at least one model");
  if (image_only && image_only->variant() != Variant::image_only)
    throw std::invalid_argument("image-only slot holds a prior-refinement model");
  if (!config.finetune.empty() && !image_only)
    throw std::invalid_argument("finetuning baselines need the image-only model");
  for (const auto& nm : models) {
    if (!nm.params) throw std::invalid_argument("model '" + nm.name + "' is missing");
    require_prior_model(*nm.params, "few-shot model '" + nm.name + "'");
  }
  if (config.seeds.empty()) throw std::invalid_argument("fewshot_experiment needs a seed");
  const DatasetManifest& m = data.manifest();
  const auto novel = m.categories_with(Role::novel);
  if (novel.empty()) throw std::invalid_argument("dataset has no novel categories");

  EvalReport report;
  report.experiment = "fewshot";
  report.seed = config.seeds.front();
  std::vector<Job> jobs;

  for (std::uint64_t seed : config.seeds) {
    // Nested pools: one draw per category, every k takes a prefix.
    std::map<std::size_t, std::vector<InstanceRef>> pools;
    for (std::size_t c : novel) {
      const std::size_t avail = m.instances(c, Split::train).size();
      std::size_t kmax = 0;
      for (std::size_t k : config.k_values) {
        if (k > avail)
          throw std::invalid_argument("k=" + std::to_string(k) + " exceeds the " +
                                      std::to_string(avail) + " pool shapes of '" +
                                      m.categories[c].name + "'");
        kmax = std::max(kmax, k);
      }
      pools[c] = sample_pool(m, c, std::max<std::size_t>(kmax, 1), derive_seed(seed, "pool"));
    }

    std::vector<std::pair<std::string, ModelParams>> finetuned;
    for (const auto& [k, r] : config.finetune) {
      FinetuneConfig fc;
      fc.k = k;
      fc.renders_per_shape = r;
      fc.seed = seed;
      fc.steps = config.finetune_steps;
      finetuned.emplace_back("finetune:k=" + std::to_string(k) + ";r=" + std::to_string(r),
                             finetune_baseline(*image_only, data, fc).params);
    }

    for (std::size_t c : novel) {
      std::map<std::size_t, VoxelGrid> priors;
      for (std::size_t k : config.k_values) {
        if (k == 0) {
          priors[k] = mean_of(data, m.instances(c, Split::train));
        } else {
          priors[k] = mean_of(data, std::vector<InstanceRef>(pools[c].begin(), pools[c].begin() + k));
        }
      }
      for (InstanceRef ref : m.instances(c, Split::test)) {
        const InstanceRecord& inst = m.at(ref);
        for (std::size_t v : view_order(inst, seed, config.views_per_instance)) {
          const EvalRow base{"", seed, m.categories[c].name, inst.id, std::to_string(v), "none", 1, 0.0};
          auto image = std::make_shared<Tensor>(data.view(ref, v));
          const VoxelGrid* target = &data.voxel(ref);
          if (image_only) {
            EvalRow row = base;
            row.condition = "image_only";
            jobs.push_back({row, [=] { return iou(forward_image_only(*image_only, *image), *target); }});
          }
          for (const auto& nm : models)
            for (std::size_t k : config.k_values) {
              EvalRow row = base;
              const std::string klabel = k == 0 ? "full" : std::to_string(k);
              row.condition = nm.name + ":k=" + klabel;
              row.prior = k == 0 ? "full" : prior_label(PriorKind::kshot, k);
              row.iterations = nm.iters;
              const VoxelGrid* prior = &priors.at(k);
              jobs.push_back({row, [=] { return iou(refine(*nm.params, *image, *prior, nm.iters), *target); }});
            }
          for (const auto& [name, params] : finetuned) {
            EvalRow row = base;
            row.condition = name;
            const ModelParams* p = &params;
            jobs.push_back({row, [=] { return iou(forward_image_only(*p, *image), *target); }});
          }
        }
      }
      run_jobs(jobs, report);
    }
  }
  return report;
}

std::vector<VoxelGrid> multiview_infer(const ModelParams& params, const std::vector<Tensor>& views,
                                       const VoxelGrid& initial_prior) {
  require_prior_model(params, "multi-view inference");
  if (views.empty()) throw std::invalid_argument("multi-view inference needs at least one view");
  std::vector<VoxelGrid> out;
  out.reserve(views.size());
  for (const Tensor& v : views) out.push_back(forward(params, v, out.empty() ? initial_prior : out.back()));
  return out;
}

EvalReport multiview_experiment(const std::vector<MultiviewModel>& models, DataSource& data,
                                const MultiviewConfig& config) {
  if (models.empty()) throw std::invalid_argument("multiview_experiment needs a model");
  if (config.max_views == 0) throw std::invalid_argument("max_views must be >= 1");
  for (const auto& mm : models) {
    if (!mm.model.params) throw std::invalid_argument("model '" + mm.model.name + "' is missing");
    require_prior_model(*mm.model.params, "multi-view model '" + mm.model.name + "'");
  }
  const DatasetManifest& m = data.manifest();
  EvalReport report;
  report.experiment = "multiview";
  report.seed = config.seeds.empty() ? 0 : config.seeds.front();
  for (std::uint64_t seed : config.seeds)
    for (const auto& mm : models)
      for (std::size_t c : m.categories_with(config.role)) {
        VoxelGrid full;
        if (mm.prior_kind == PriorKind::full) full = mean_of(data, m.instances(c, Split::train));
        const auto refs = m.instances(c, Split::test);
        std::vector<std::vector<VoxelGrid>> trajectories(refs.size());
        std::vector<std::vector<std::size_t>> orders(refs.size());
        std::vector<std::vector<Tensor>> images(refs.size());
        std::vector<VoxelGrid> priors(refs.size());
        for (std::size_t i = 0; i < refs.size(); ++i) {
          orders[i] = view_order(m.at(refs[i]), seed, config.max_views);
          for (std::size_t v : orders[i]) images[i].push_back(data.view(refs[i], v));
          if (mm.prior_kind == PriorKind::full)
            priors[i] = full;
          else
            priors[i] = mean_of(data, sample_pool(m, c, mm.prior_k,
                                                  derive_seed(seed, "multiview:" + m.at(refs[i]).id)));
          data.voxel(refs[i]);
        }
        parallel_for(refs.size(), [&](std::size_t i) {
          trajectories[i] = multiview_infer(*mm.model.params, images[i], priors[i]);
        });
        for (std::size_t i = 0; i < refs.size(); ++i) {
          const VoxelGrid& target = data.voxel(refs[i]);
          for (std::size_t n = 1; n <= trajectories[i].size(); ++n) {
            EvalRow row;
            row.condition = mm.model.name + ":views=" + std::to_string(n);
            row.seed = seed;
            row.category = m.categories[c].name;
            row.instance = m.at(refs[i]).id;
            row.views = join_views(std::vector<std::size_t>(orders[i].begin(), orders[i].begin() + n));
            row.prior = prior_label(mm.prior_kind, mm.prior_k);
            row.iterations = n;
            row.iou = iou(trajectories[i][n - 1], target);
            report.rows.push_back(std::move(row));
          }
        }
      }
  // Group rows by condition so each model's curve reads top to bottom.
  std::stable_sort(report.rows.begin(), report.rows.end(), [](const EvalRow& a, const EvalRow& b) {
    return std::tie(a.seed, a.condition) < std::tie(b.seed, b.condition);
  });
  return report;
}

EvalReport ablation_suite(const ModelParams& model, DataSource& data, const AblationConfig& config) {
  require_prior_model(model, "the ablation suite");
  if (config.iterations.empty()) throw std::invalid_argument("ablation needs iteration counts");
  const std::size_t max_iters = *std::max_element(config.iterations.begin(), config.iterations.end());
  if (max_iters == 0) throw std::invalid_argument("iteration counts must be >= 1");
  const DatasetManifest& m = data.manifest();
  EvalReport report;
  report.experiment = "ablations";
  report.seed = config.seeds.empty() ? 0 : config.seeds.front();

  struct Item {
    EvalRow base;
    Tensor image;
    const VoxelGrid* target;
    VoxelGrid correct, random;
    std::string random_source;
  };
  for (std::uint64_t seed : config.seeds)
    for (std::size_t c : m.categories_with(Role::novel)) {
      std::vector<Item> items;
      for (InstanceRef ref : m.instances(c, Split::test)) {
        const InstanceRecord& inst = m.at(ref);
        for (std::size_t v : view_order(inst, seed, config.views_per_instance)) {
          Item it;
          it.base = {"", seed, m.categories[c].name, inst.id, std::to_string(v), "", 1, 0.0};
          it.image = data.view(ref, v);
          it.target = &data.voxel(ref);
          const std::uint64_t s = derive_seed(seed, inst.id + ":" + std::to_string(v));
          it.correct = make_prior({PriorKind::kshot, 1, m.categories[c].name, s}, data).grid;
          PriorResult rnd = make_prior({PriorKind::random_category, 1, m.categories[c].name, s}, data);
          it.random = std::move(rnd.grid);
          it.random_source = rnd.source_category;
          items.push_back(std::move(it));
        }
      }
      // Scores per item: naive, then correct/random/target chains.
      std::vector<std::vector<double>> scores(items.size());
      parallel_for(items.size(), [&](std::size_t i) {
        const Item& it = items[i];
        auto& out = scores[i];
        out.push_back(iou(it.correct, *it.target));
        for (const VoxelGrid* start : {&it.correct, &it.random, it.target}) {
          VoxelGrid cur = *start;
          for (std::size_t step = 1; step <= max_iters; ++step) {
            cur = forward(model, it.image, cur);
            out.push_back(iou(cur, *it.target));
          }
        }
      });
      for (std::size_t i = 0; i < items.size(); ++i) {
        const Item& it = items[i];
        EvalRow row = it.base;
        row.condition = "naive";
        row.prior = "kshot(1)";
        row.iterations = 0;
        row.iou = scores[i][0];
        report.rows.push_back(row);
        const char* names[] = {"correct", "random", "target"};
        for (std::size_t chain = 0; chain < 3; ++chain)
          for (std::size_t step : config.iterations) {
            EvalRow r = it.base;
            r.condition = std::string(names[chain]) + ":iters=" + std::to_string(step);
            r.prior = chain == 0 ? "kshot(1)" : chain == 1 ? "random(" + it.random_source + ")" : "target";
            r.iterations = step;
            r.iou = scores[i][1 + chain * max_iters + (step - 1)];
            report.rows.push_back(r);
          }
      }
    }
  std::stable_sort(report.rows.begin(), report.rows.end(), [](const EvalRow& a, const EvalRow& b) {
    return std::tie(a.seed, a.condition) < std::tie(b.seed, b.condition);
  });
  return report;
}

DistributionReport distribution_report(const std::vector<DistributionSeries>& series, double low) {
  if (series.empty()) throw std::invalid_argument("distribution_report needs at least one series");
  using Key = std::tuple<std::uint64_t, std::string, std::string, std::string>;
  auto key_of = [](const EvalRow& r) { return Key{r.seed, r.category, r.instance, r.views}; };
  std::vector<std::map<Key, double>> maps;
  for (const auto& s : series) {
    std::map<Key, double> mp;
    for (const auto& r : s.rows)
      if (!mp.emplace(key_of(r), r.iou).second)
        throw std::invalid_argument("series '" + s.name + "' has duplicate rows for " + r.instance);
    maps.push_back(std::move(mp));
  }
  for (std::size_t i = 1; i < maps.size(); ++i) {
    bool same = maps[i].size() == maps[0].size();
    for (auto a = maps[0].begin(), b = maps[i].begin(); same && a != maps[0].end(); ++a, ++b)
      same = a->first == b->first;
    if (!same)
      throw std::invalid_argument("series '" + series[i].name + "' covers a different instance set than '" +
                                  series[0].name + "'");
  }

  DistributionReport out;
  out.sorted_csv = "category,model,rank,iou\n";
  out.below_csv = "model,category,fraction_below\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::map<std::string, std::vector<double>> by_cat;
    for (const auto& [k, v] : maps[s]) by_cat[std::get<1>(k)].push_back(v);
    std::size_t below_all = 0;
    for (auto& [cat, vals] : by_cat) {
      std::sort(vals.begin(), vals.end());
      for (std::size_t r = 0; r < vals.size(); ++r)
        out.sorted_csv += cat + "," + series[s].name + "," + std::to_string(r + 1) + "," + num(vals[r]) + "\n";
      const auto below = static_cast<std::size_t>(std::count_if(vals.begin(), vals.end(), [&](double v) { return v < low; }));
      below_all += below;
      out.below_csv += series[s].name + "," + cat + "," + num(static_cast<double>(below) / static_cast<double>(vals.size())) + "\n";
    }
    const double frac = maps[s].empty() ? 0.0 : static_cast<double>(below_all) / static_cast<double>(maps[s].size());
    out.fraction_below[series[s].name] = frac;
    out.below_csv += series[s].name + ",all," + num(frac) + "\n";
  }
  out.paired_csv = "seed,category,instance,views";
  for (const auto& s : series) out.paired_csv += "," + s.name;
  out.paired_csv += "\n";
  for (const auto& [k, v] : maps[0]) {
    out.paired_csv += std::to_string(std::get<0>(k)) + "," + std::get<1>(k) + "," + std::get<2>(k) + "," + std::get<3>(k);
    for (const auto& mp : maps) out.paired_csv += "," + num(mp.at(k));
    out.paired_csv += "\n";
  }
  return out;
}

VariabilityResult kshot_variability(const ModelParams& model, DataSource& data, InstanceRef target,
                                    std::size_t view, std::size_t n, PriorKind kind,
                                    std::size_t iters, std::uint64_t seed) {
  require_prior_model(model, "kshot_variability");
  if (n == 0) throw std::invalid_argument("kshot_variability needs n >= 1");
  if (kind != PriorKind::kshot && kind != PriorKind::full)
    throw std::invalid_argument("kshot_variability compares kshot or full priors");
  const DatasetManifest& m = data.manifest();
  const Tensor image = data.view(target, view);
  const VoxelGrid& truth = data.voxel(target);
  std::vector<VoxelGrid> priors;
  if (kind == PriorKind::full) {
    priors.assign(n, mean_of(data, m.instances(target.category, Split::train)));
  } else {
    const std::size_t avail = m.instances(target.category, Split::train).size() -
                              (m.at(target).split == Split::train ? 1 : 0);
    if (n > avail)
      throw std::invalid_argument("category '" + m.categories[target.category].name + "' has " +
                                  std::to_string(avail) + " distinct 1-shot choices, " +
                                  std::to_string(n) + " requested");
    for (InstanceRef r : sample_pool(m, target.category, n, seed, target)) priors.push_back(data.voxel(r));
  }
  VariabilityResult out;
  out.ious.resize(n);
  parallel_for(n, [&](std::size_t i) { out.ious[i] = iou(refine(model, image, priors[i], iters), truth); });
  out.mean = std::accumulate(out.ious.begin(), out.ious.end(), 0.0) / static_cast<double>(n);
  out.stddev = sample_stddev(out.ious);
  return out;
}

IoAudit audit_training_io(const DatasetManifest& manifest, const std::vector<std::string>& io_log) {
  std::set<std::string> novel_paths;
  for (std::size_t c : manifest.categories_with(Role::novel))
    for (const auto& inst : manifest.categories[c].instances) {
      novel_paths.insert(inst.voxel);
      for (const auto& v : inst.views) novel_paths.insert(v.image);
    }
  IoAudit audit;
  audit.reads = io_log.size();
  for (const auto& p : io_log)
    if (novel_paths.count(p)) audit.novel_reads.push_back(p);
  return audit;
}

}  // namespace voxelprior
