#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cli/commands.hpp"
#include "cli/config.hpp"

using namespace voxelprior::cli;

namespace {

struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::string seed, threads, preset, out, data;
  std::string variant, iters, prior, k, views, role, image_only, report, train_run, model_one;
  std::vector<std::string> models;
};

std::string quoted(const std::string& s) { return nlohmann::json(s).dump(); }

std::string k_list(const std::string& text) {
  std::string out = "[";
  std::size_t start = 0;
  for (;;) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    out += (out.size() > 1 ? ", " : "") + (item == "full" ? quoted(item) : item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out + "]";
}

std::string iteration_list(const std::string& text) {
  std::size_t n = 0;
  try {
    n = std::stoul(text);
  } catch (const std::exception&) {
    throw ConfigError("--iters expects a positive integer, got '" + text + "'");
  }
  std::string out = "[";
  for (std::size_t i = 1; i <= n; ++i) out += (i > 1 ? ", " : "") + std::to_string(i);
  return out + "]";
}

RunConfig resolve(const std::string& command, const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  auto set = [&](const char* key, const std::string& v) {
    if (!v.empty()) apply_override(c, key, v);
  };
  auto set_str = [&](const char* key, const std::string& v) {
    if (!v.empty()) apply_override(c, key, quoted(v));
  };
  set("seed", f.seed);
  set("threads", f.threads);
  set_str("preset", f.preset);
  set_str("out", f.out);
  set_str("data.dir", f.data);
  if (command == "train") {
    set_str("train.variant", f.variant);
    set("train.iters", f.iters);
    set_str("train.prior", f.prior);
    set("train.k", f.k);
  } else if (command == "eval-fewshot") {
    if (!f.k.empty()) apply_override(c, "eval.k_values", k_list(f.k));
    set("eval.views_per_instance", f.views);
    set("eval.iters", f.iters);
  } else if (command == "eval-multiview") {
    set("eval.max_views", f.views);
    set_str("eval.prior", f.prior);
    set("eval.k", f.k);
    set_str("eval.role", f.role);
  } else if (command == "eval-ablations") {
    if (!f.iters.empty()) apply_override(c, "eval.iterations", iteration_list(f.iters));
    set("eval.views_per_instance", f.views);
  } else if (command == "analyze") {
    set_str("analyze.report", f.report);
    set_str("analyze.train_run", f.train_run);
    set_str("analyze.model", f.model_one);
    set_str("analyze.variability_prior", f.prior);
  }
  if (!f.models.empty()) {
    std::string list = "[";
    for (const auto& m : f.models) list += (list.size() > 1 ? ", " : "") + quoted(m);
    apply_override(c, "eval.models", list + "]");
  }
  set_str("eval.image_only", f.image_only);
  for (const auto& s : f.sets) apply_override(c, s);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxelprior: single-view voxel reconstruction with category shape priors"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tool_version()));
  app.footer("\n" + config_reference() +
             "\nFlags override config-file values. VOXELPRIOR_OUT sets the default output root (runs)."
             "\nExit codes: 0 ok, 1 failure, 2 usage, 3 config, 4 missing input, 5 I/O, 6 divergence, 7 check failed.");

  Flags f;
  std::string chosen;
  auto common = [&](CLI::App* s) {
    s->add_option("--config", f.config, "TOML config file (strict keys)");
    s->add_option("--seed", f.seed, "master seed");
    s->add_option("--out", f.out, "run directory");
    s->add_option("--threads", f.threads, "worker threads (0 = all cores)");
    s->add_option("--preset", f.preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    s->add_option("--data", f.data, "dataset directory");
    s->add_option("--set", f.sets, "extra key=value override, repeatable");
    s->callback([&chosen, s] { chosen = s->get_name(); });
  };
  const std::vector<std::string> kinds = {"kshot", "full", "random", "target", "zero"};

  auto* gen = app.add_subcommand("gen-data", "generate shapes, renders and the dataset manifest");
  common(gen);

  auto* tr = app.add_subcommand("train", "train a model on the base categories");
  common(tr);
  tr->add_option("--variant", f.variant, "prior_refinement or image_only")
      ->check(CLI::IsMember({"prior_refinement", "image_only"}));
  tr->add_option("--iters", f.iters, "refinement iterations per batch");
  tr->add_option("--prior", f.prior, "training prior: kshot or full")->check(CLI::IsMember(kinds));
  tr->add_option("--k", f.k, "shapes per k-shot prior");

  auto* fs = app.add_subcommand("eval-fewshot", "few-shot transfer to the novel categories");
  common(fs);
  fs->add_option("--model", f.models, "prior-refinement run dir or checkpoint (name=path allowed), repeatable");
  fs->add_option("--image-only", f.image_only, "image-only run dir or checkpoint");
  fs->add_option("--k", f.k, "comma-separated pool sizes, e.g. 1,5,full");
  fs->add_option("--views", f.views, "test views per shape (0 = all)");
  fs->add_option("--iters", f.iters, "test-time refinement steps (0 = as trained)");

  auto* mv = app.add_subcommand("eval-multiview", "iterative inference over several views");
  common(mv);
  mv->add_option("--model", f.models, "prior-refinement run dir or checkpoint, repeatable");
  mv->add_option("--views", f.views, "views per sequence");
  mv->add_option("--prior", f.prior, "initial prior: full or kshot")->check(CLI::IsMember(kinds));
  mv->add_option("--k", f.k, "shapes per k-shot prior");
  mv->add_option("--role", f.role, "base or novel")->check(CLI::IsMember({"base", "novel"}));

  auto* ab = app.add_subcommand("eval-ablations", "naive, random-category and target priors");
  common(ab);
  ab->add_option("--model", f.models, "prior-refinement run dir or checkpoint");
  ab->add_option("--iters", f.iters, "iterations 1..N");
  ab->add_option("--views", f.views, "test views per shape (0 = all)");

  auto* an = app.add_subcommand("analyze", "IoU distributions, prior variability and the training I/O audit");
  common(an);
  an->add_option("--report", f.report, "few-shot report CSV");
  an->add_option("--model", f.model_one, "prior-refinement run for the variability study");
  an->add_option("--train-run", f.train_run, "training run directory to audit");
  an->add_option("--prior", f.prior, "variability prior: kshot or full")->check(CLI::IsMember(kinds));

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every layer and the tiny model");
  common(gc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    const nlohmann::json j{{"error", "usage"}, {"exit", static_cast<int>(ExitCode::usage)}, {"message", e.what()}};
    std::cerr << j.dump() << "\n";
    return static_cast<int>(ExitCode::usage);
  }

  try {
    const RunConfig config = resolve(chosen, f);
    run_command(chosen, config, std::cout);
    return 0;
  } catch (...) {
    std::string line;
    const ExitCode code = describe_error(std::current_exception(), line);
    std::cout.flush();
    std::cerr << line << "\n";
    return static_cast<int>(code);
  }
}
