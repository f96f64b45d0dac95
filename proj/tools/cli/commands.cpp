#include "cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <thread>

#include <json.hpp>

#include "voxelprior/checkpoint.hpp"
#include "voxelprior/digest.hpp"
#include "voxelprior/errors.hpp"
#include "voxelprior/eval.hpp"
#include "voxelprior/gradcheck.hpp"
#include "voxelprior/io.hpp"
#include "voxelprior/parallel.hpp"
#include "voxelprior/rng.hpp"

#ifndef VOXELPRIOR_VERSION
#define VOXELPRIOR_VERSION "0.0.0"
#endif

namespace voxelprior::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path data_path(const RunConfig& c) {
  return c.data_dir.empty() ? output_root() / "data" : fs::path(c.data_dir);
}

fs::path run_path(const RunConfig& c, const std::string& command) {
  if (!c.out.empty()) return c.out;
  if (command == "gen-data") return data_path(c);
  return output_root() / command;
}

// One command invocation: its directory, echoed config and produced files.
struct Run {
  std::string command;
  RunConfig config;
  fs::path dir;
  std::ostream& log;
  json inputs = json::object();
  std::vector<fs::path> artifacts;

  Run(std::string cmd, const RunConfig& cfg, std::ostream& out) : command(std::move(cmd)), config(cfg), log(out) {
    dir = run_path(config, command);
    config.out = dir.string();
    config.data_dir = data_path(config).string();
  }

  std::string config_text() const { return config_to_toml(config); }

  void begin() {
    fs::create_directories(dir);
    save("config.toml", config_text());
  }

  fs::path save(const std::string& name, const std::string& bytes) {
    const fs::path p = dir / name;
    write_file(p, bytes);
    artifacts.push_back(name);
    return p;
  }
  void adopt(const fs::path& relative) { artifacts.push_back(relative); }

  void finish() {
    json info;
    info["tool"] = "voxelprior";
    info["version"] = tool_version();
    info["command"] = command;
    info["seed"] = config.seed;
    info["threads"] = thread_count();
    info["preset"] = config.preset;
    info["config"] = "config.toml";
    info["config_digest"] = digest_hex(config_text());
    info["inputs"] = inputs;
    save("run_info.json", info.dump(2) + "\n");
    json files = json::array();
    for (const auto& rel : artifacts) {
      const fs::path p = dir / rel;
      files.push_back({{"path", rel.generic_string()}, {"bytes", fs::file_size(p)}, {"digest", digest_file(p)}});
    }
    write_file(dir / "artifacts.json", json{{"command", command}, {"files", files}}.dump(2) + "\n");
    log << "wrote " << dir.string() << "\n";
  }
};

DatasetManifest load_dataset(Run& run) {
  const fs::path path = data_path(run.config) / "manifest.json";
  if (!fs::exists(path))
    throw CommandError(ExitCode::missing_input, "dataset manifest not found (run gen-data first)", path.string());
  DatasetManifest m = load_manifest(path);
  const ArchConfig arch = run.config.arch();
  if (m.voxel_dim != arch.voxel_dim || m.image_size != arch.image_size) {
    throw ConfigError("dataset " + path.string() + " has D=" + std::to_string(m.voxel_dim) + ", S=" +
                      std::to_string(m.image_size) + " but preset '" + run.config.preset + "' needs D=" +
                      std::to_string(arch.voxel_dim) + ", S=" + std::to_string(arch.image_size));
  }
  run.inputs["dataset"] = {{"manifest", path.string()}, {"digest", manifest_digest(m)}};
  return m;
}

struct LoadedModel {
  std::string name;
  ModelParams params;
  std::size_t iters = 1;
};

LoadedModel load_run_model(Run& run, const std::string& spec, const std::string& role) {
  LoadedModel out;
  std::string path_text = spec;
  const auto eq = spec.find('=');
  if (eq != std::string::npos && eq > 0 && spec.find('/') > eq) {
    out.name = spec.substr(0, eq);
    path_text = spec.substr(eq + 1);
  }
  const fs::path p(path_text);
  fs::path file = p, meta;
  if (fs::is_directory(p)) {
    file = p / "model.bin";
    meta = p / "training.json";
    if (out.name.empty()) out.name = p.filename().empty() ? p.parent_path().filename().string() : p.filename().string();
  } else {
    meta = p.parent_path() / "training.json";
    if (out.name.empty()) out.name = p.stem() == "model" ? p.parent_path().filename().string() : p.stem().string();
  }
  if (out.name.empty()) out.name = "model";
  if (out.name.find_first_of(",;\n\"") != std::string::npos)
    throw ConfigError("model name '" + out.name + "' may not contain , ; or quotes");
  if (!fs::exists(file)) throw CommandError(ExitCode::missing_input, role + " checkpoint not found", file.string());
  out.params = load_model(file);
  if (fs::exists(meta)) {
    try {
      const auto j = json::parse(read_file(meta));
      if (j.value("model", std::string()) == file.filename().string()) out.iters = j.at("iters").get<std::size_t>();
    } catch (const json::exception& e) {
      throw IoError(IoError::Kind::corrupt, meta, e.what());
    }
  }
  if (run.config.eval.iters != 0) out.iters = run.config.eval.iters;
  run.inputs["models"][out.name] = {{"path", file.string()}, {"digest", model_digest(out.params)}, {"iters", out.iters}};
  return out;
}

std::vector<std::uint64_t> eval_seeds(const RunConfig& c) {
  if (c.eval.runs == 0) throw ConfigError("eval.runs must be >= 1");
  std::vector<std::uint64_t> s;
  for (std::size_t i = 0; i < c.eval.runs; ++i) s.push_back(c.seed + i);
  return s;
}

void print_report(const EvalReport& report, std::ostream& log) {
  for (const auto& a : report.aggregates()) {
    log << "  " << a.condition << ": " << fmt("%.4f", a.mean);
    if (a.seeds > 1) log << " +- " << fmt("%.4f", a.stddev) << " over " << a.seeds << " seeds";
    log << "\n";
  }
}

void write_report(Run& run, EvalReport& report) {
  report.config_digest = digest_hex(run.config_text());
  for (const auto& p : report.write(run.dir)) run.adopt(p.filename());
  print_report(report, run.log);
}

// ---- commands ----

void gen_data(Run& run) {
  run.begin();
  const DatasetManifest m = build_dataset(run.config.data, run.dir);
  run.adopt("manifest.json");
  std::size_t n = 0;
  for (const auto& c : m.categories) n += c.instances.size();
  run.inputs["dataset_digest"] = manifest_digest(m);
  run.log << "dataset: " << m.categories.size() << " categories, " << n << " shapes, digest "
          << manifest_digest(m) << "\n";
  run.finish();
}

void train_cmd(Run& run) {
  TrainConfig tc = run.config.train;
  tc.seed = run.config.seed;
  try {
    tc.validate(run.config.variant);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const DatasetManifest m = load_dataset(run);
  run.begin();
  DataSource data(m);
  const ModelParams init = init_model(run.config.arch(), run.config.variant, derive_seed(run.config.seed, "init"));
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& e) {
    run.log << "epoch " << e.epoch << " loss " << fmt("%.5f", e.mean_loss) << " val " << fmt("%.4f", e.val_mean)
            << (e.improved ? " *" : "") << "\n";
    run.log.flush();
  };
  const TrainResult result = train(init, data, tc, hooks);

  save_model(result.best, run.dir / "model.bin");
  run.adopt("model.bin");
  std::vector<std::string> base;
  for (std::size_t c : m.categories_with(Role::base)) base.push_back(m.categories[c].name);
  run.save("train_log.csv", train_log_csv(result, base));
  std::string io;
  for (const auto& p : data.io_log()) io += p + "\n";
  run.save("io_log.txt", io);
  const IoAudit audit = audit_training_io(m, data.io_log());

  json t;
  t["model"] = "model.bin";
  t["model_digest"] = model_digest(result.best);
  t["variant"] = variant_name(run.config.variant);
  t["iters"] = tc.iters;
  t["prior"] = prior_kind_name(tc.prior_kind);
  t["k"] = tc.prior_k;
  t["epochs_run"] = result.epochs.size();
  t["best_epoch"] = result.best_epoch;
  t["best_val_iou"] = result.best_val;
  t["stopped_early"] = result.stopped_early;
  t["audit"] = {{"reads", audit.reads}, {"novel_reads", audit.novel_reads}};
  run.save("training.json", t.dump(2) + "\n");
  run.log << "best epoch " << result.best_epoch << " val " << fmt("%.4f", result.best_val) << "\n";
  run.finish();
  if (!audit.clean())
    throw CommandError(ExitCode::check_failed, "training read " + std::to_string(audit.novel_reads.size()) +
                                                   " novel-category files", audit.novel_reads.front());
}

void eval_fewshot(Run& run) {
  const auto& e = run.config.eval;
  if (e.models.empty() && e.image_only.empty())
    throw ConfigError("eval-fewshot needs --model and/or --image-only");
  FewshotConfig fc;
  fc.k_values = e.k_values;
  fc.seeds = eval_seeds(run.config);
  fc.views_per_instance = e.views_per_instance;
  fc.finetune_steps = e.finetune_steps;
  for (std::size_t k : e.finetune_k)
    for (std::size_t r : e.finetune_renders) fc.finetune.emplace_back(k, r);
  const DatasetManifest m = load_dataset(run);
  std::vector<LoadedModel> models;
  for (const auto& spec : e.models) models.push_back(load_run_model(run, spec, "model"));
  std::optional<LoadedModel> image_only;
  if (!e.image_only.empty()) image_only = load_run_model(run, e.image_only, "image-only");
  run.begin();
  DataSource data(m);
  std::vector<NamedModel> named;
  for (const auto& lm : models) named.push_back({lm.name, &lm.params, lm.iters});
  EvalReport report = fewshot_experiment(image_only ? &image_only->params : nullptr, named, data, fc);
  write_report(run, report);
  run.finish();
}

void eval_multiview(Run& run) {
  const auto& e = run.config.eval;
  if (e.models.empty()) throw ConfigError("eval-multiview needs --model");
  MultiviewConfig mc;
  mc.max_views = e.max_views;
  mc.role = e.role;
  mc.seeds = eval_seeds(run.config);
  const DatasetManifest m = load_dataset(run);
  std::vector<LoadedModel> models;
  for (const auto& spec : e.models) models.push_back(load_run_model(run, spec, "model"));
  run.begin();
  DataSource data(m);
  std::vector<MultiviewModel> mv;
  for (const auto& lm : models) mv.push_back({{lm.name, &lm.params, lm.iters}, e.prior, e.k});
  EvalReport report = multiview_experiment(mv, data, mc);
  write_report(run, report);
  run.finish();
}

void eval_ablations(Run& run) {
  const auto& e = run.config.eval;
  if (e.models.size() != 1) throw ConfigError("eval-ablations needs exactly one --model");
  AblationConfig ac;
  ac.iterations = e.iterations;
  ac.seeds = eval_seeds(run.config);
  ac.views_per_instance = e.views_per_instance;
  const DatasetManifest m = load_dataset(run);
  const LoadedModel model = load_run_model(run, e.models.front(), "model");
  run.begin();
  DataSource data(m);
  EvalReport report = ablation_suite(model.params, data, ac);
  write_report(run, report);
  run.finish();
}

bool ends_with(const std::string& s, const std::string& tail) {
  return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

void analyze(Run& run) {
  const auto& a = run.config.analyze;
  if (a.report.empty() && a.model.empty() && a.train_run.empty())
    throw ConfigError("analyze needs --report, --model and/or --train-run");
  std::optional<EvalReport> report;
  if (!a.report.empty()) {
    if (!fs::exists(a.report)) throw CommandError(ExitCode::missing_input, "report not found", a.report);
    try {
      report = report_from_csv(read_file(a.report));
    } catch (const std::invalid_argument& e) {
      throw IoError(IoError::Kind::corrupt, a.report, e.what());
    }
    run.inputs["report"] = {{"path", a.report}, {"digest", report->digest()}};
  }
  std::optional<DatasetManifest> m;
  if (!a.model.empty() || !a.train_run.empty()) m = load_dataset(run);
  std::optional<LoadedModel> model;
  if (!a.model.empty()) model = load_run_model(run, a.model, "model");
  std::vector<std::string> io_log;
  if (!a.train_run.empty()) {
    const fs::path p = fs::path(a.train_run) / "io_log.txt";
    if (!fs::exists(p)) throw CommandError(ExitCode::missing_input, "training io log not found", p.string());
    const std::string text = read_file(p);
    for (std::size_t s = 0; s < text.size();) {
      const std::size_t e = text.find('\n', s);
      const std::size_t stop = e == std::string::npos ? text.size() : e;
      if (stop > s) io_log.push_back(text.substr(s, stop - s));
      s = stop + 1;
    }
    run.inputs["io_log"] = {{"path", p.string()}, {"digest", digest_file(p)}};
  }
  run.begin();

  if (report) {
    std::vector<std::string> conds = a.conditions;
    if (conds.empty()) {
      for (const auto& c : report->conditions())
        if (c == "image_only" || ends_with(c, ":k=10")) conds.push_back(c);
      if (conds.size() < 2) conds = report->conditions();
    }
    std::vector<DistributionSeries> series;
    for (const auto& c : conds) {
      auto rows = report->rows_for(c);
      if (rows.empty()) throw ConfigError("report has no condition '" + c + "'");
      series.push_back({c, std::move(rows)});
    }
    const DistributionReport d = distribution_report(series, a.low);
    run.save("distribution_sorted.csv", d.sorted_csv);
    run.save("distribution_paired.csv", d.paired_csv);
    run.save("distribution_below.csv", d.below_csv);
    for (const auto& [name, frac] : d.fraction_below)
      run.log << "  " << name << ": " << fmt("%.3f", frac) << " of reconstructions below IoU " << a.low << "\n";
  }

  if (model) {
    DataSource data(*m);
    std::string csv = "category,instance,view,prior,n,mean,stddev,ious\n";
    for (std::size_t c : m->categories_with(Role::novel)) {
      const auto tests = m->instances(c, Split::test);
      if (tests.empty()) continue;
      const VariabilityResult v = kshot_variability(model->params, data, tests.front(), 0, a.variability_n,
                                                    a.variability_prior, model->iters, run.config.seed);
      std::string ious;
      for (double x : v.ious) ious += (ious.empty() ? "" : ";") + fmt("%.9g", x);
      csv += m->categories[c].name + "," + m->at(tests.front()).id + ",0," +
             std::string(prior_kind_name(a.variability_prior)) + "," + std::to_string(a.variability_n) + "," +
             fmt("%.9g", v.mean) + "," + fmt("%.9g", v.stddev) + "," + ious + "\n";
      run.log << "  " << m->categories[c].name << ": IoU " << fmt("%.4f", v.mean) << " sigma "
              << fmt("%.4f", v.stddev) << "\n";
    }
    run.save("variability.csv", csv);
  }

  std::optional<IoAudit> audit;
  if (!a.train_run.empty()) {
    audit = audit_training_io(*m, io_log);
    run.save("audit.json", json{{"reads", audit->reads}, {"novel_reads", audit->novel_reads},
                                {"clean", audit->clean()}}.dump(2) + "\n");
    run.log << "  audit: " << audit->reads << " reads, " << audit->novel_reads.size() << " novel\n";
  }
  run.finish();
  if (audit && !audit->clean())
    throw CommandError(ExitCode::check_failed, "training read novel-category files", audit->novel_reads.front());
}

void gradcheck(Run& run) {
  run.begin();
  constexpr double tol = 1e-4;
  std::string csv = "scope,name,count,max_rel_error\n";
  double worst = 0.0;
  auto add = [&](const std::string& scope, const GradcheckReport& r) {
    for (const auto& e : r.entries) {
      csv += scope + ",\"" + e.name + "\"," + std::to_string(e.count) + "," + fmt("%.6e", e.max_rel_error) + "\n";
      worst = std::max(worst, e.max_rel_error);
    }
    run.log << "  " << scope << ": max relative error " << fmt("%.3e", r.max_rel_error()) << "\n";
  };
  add("layers", check_layer_gradients(run.config.seed));
  for (Variant v : {Variant::prior_refinement, Variant::image_only})
    add(std::string("model/") + std::string(variant_name(v)),
        check_model_gradients(ArchConfig::tiny(), v, run.config.seed));
  run.save("gradcheck.csv", csv);
  run.log << "max relative error " << fmt("%.3e", worst) << (worst < tol ? " (pass)" : " (FAIL)") << "\n";
  run.finish();
  if (!(worst < tol))
    throw CommandError(ExitCode::check_failed, "gradient check max relative error " + fmt("%.3e", worst) +
                                                   " exceeds " + fmt("%.0e", tol));
}

const std::map<std::string, std::function<void(Run&)>>& table() {
  static const std::map<std::string, std::function<void(Run&)>> t = {
      {"gen-data", gen_data},         {"train", train_cmd},     {"eval-fewshot", eval_fewshot},
      {"eval-multiview", eval_multiview}, {"eval-ablations", eval_ablations}, {"analyze", analyze},
      {"gradcheck", gradcheck}};
  return t;
}

}  // namespace

std::string_view exit_code_name(ExitCode code) {
  switch (code) {
    case ExitCode::ok: return "ok";
    case ExitCode::failure: return "failure";
    case ExitCode::usage: return "usage";
    case ExitCode::config: return "config";
    case ExitCode::missing_input: return "missing_input";
    case ExitCode::io: return "io";
    case ExitCode::divergence: return "divergence";
    case ExitCode::check_failed: return "check_failed";
  }
  return "failure";
}

std::string_view tool_version() { return VOXELPRIOR_VERSION; }

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"gen-data",       "train",   "eval-fewshot", "eval-multiview",
                                                 "eval-ablations", "analyze", "gradcheck"};
  return names;
}

void run_command(const std::string& command, const RunConfig& config, std::ostream& log) {
  const auto it = table().find(command);
  if (it == table().end()) throw CommandError(ExitCode::usage, "unknown command '" + command + "'");
  set_thread_count(config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency()));
  Run run(command, config, log);
  it->second(run);
}

ExitCode describe_error(std::exception_ptr error, std::string& json_line) {
  ExitCode code = ExitCode::failure;
  std::string message, path;
  try {
    std::rethrow_exception(error);
  } catch (const CommandError& e) {
    code = e.code();
    message = e.what();
    path = e.path();
  } catch (const ConfigError& e) {
    code = ExitCode::config;
    message = e.what();
  } catch (const IoError& e) {
    code = e.kind() == IoError::Kind::not_found ? ExitCode::missing_input : ExitCode::io;
    message = e.what();
    path = e.path().string();
  } catch (const DivergenceError& e) {
    code = ExitCode::divergence;
    message = e.what();
  } catch (const std::invalid_argument& e) {
    code = ExitCode::config;
    message = e.what();
  } catch (const std::exception& e) {
    message = e.what();
  }
  json j{{"error", exit_code_name(code)}, {"exit", static_cast<int>(code)}, {"message", message}};
  if (!path.empty()) j["path"] = path;
  json_line = j.dump();
  return code;
}

}  // namespace voxelprior::cli
