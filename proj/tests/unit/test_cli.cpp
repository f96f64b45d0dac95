#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "support/temp_dir.hpp"
#include "voxelprior/io.hpp"

using namespace voxelprior;
using namespace voxelprior::cli;

namespace {

std::string config_error(const std::string& text) {
  try {
    config_from_text(text, "cfg.toml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("empty config gives the desk defaults") {
  const RunConfig c = config_from_text("");
  CHECK(c.seed == 0);
  CHECK(c.preset == "desk");
  CHECK(c.arch() == ArchConfig::desk());
  CHECK(c.train.batch_size == 32);
  CHECK(c.train.iters == 1);
  CHECK(c.eval.k_values == std::vector<std::size_t>{1, 2, 3, 4, 5, 10, 25, 0});
  CHECK(config_from_text("# only a comment\n\n").seed == 0);
}

TEST_CASE("config syntax") {
  const RunConfig c = config_from_text(
      "seed = 12  # trailing comment\n"
      "preset = \"paper\"\n"
      "[data]\n"
      "base_categories = [\"box\",\n  \"table\", # two\n]\n"
      "elevation_max = 45\n"
      "[train]\n"
      "rho = 0.9\n"
      "epsilon = 1e-7\n"
      "[eval]\n"
      "k_values = [1, 10, \"full\"]\n");
  CHECK(c.seed == 12);
  CHECK(c.data.voxel_dim == 32);
  CHECK(c.data.image_size == 128);
  CHECK(c.data.base_categories == std::vector<std::string>{"box", "table"});
  CHECK(c.data.elevation_max == 45.0);
  CHECK(c.train.rho == 0.9);
  CHECK(c.train.epsilon == 1e-7);
  CHECK(c.eval.k_values == std::vector<std::size_t>{1, 10, 0});
  CHECK(config_from_text("[train]\nvariant = \"image_only\"\n").variant == Variant::image_only);
  CHECK(config_from_text("train.iters = 3\n").train.iters == 3);
}

TEST_CASE("config errors carry position and suggestions") {
  CHECK(config_error("[train]\nbatchsize = 4\n") ==
        "cfg.toml:2:1: unknown key 'train.batchsize' (did you mean 'train.batch_size'?)");
  CHECK(config_error("sede = 4\n").find("did you mean 'seed'") != std::string::npos);
  CHECK(config_error("[trian]\niters = 2\n").find("did you mean 'train.iters'") != std::string::npos);
  CHECK(config_error("seed 4\n") == "cfg.toml:1:6: expected '=' after key 'seed'");
  CHECK(config_error("out = \"abc\n") == "cfg.toml:1:11: unterminated string");
  CHECK(config_error("seed = 1x\n") == "cfg.toml:1:8: malformed number '1x'");
  CHECK(config_error("seed = 1\nseed = 2\n") == "cfg.toml:2:1: duplicate key 'seed'");
  CHECK(config_error("seed = \"one\"\n") == "cfg.toml:1:8: key 'seed': expected a non-negative integer, got string");
  CHECK(config_error("seed = -1\n").find("non-negative") != std::string::npos);
  CHECK(config_error("preset = desk\n").find("strings need double quotes") != std::string::npos);
  CHECK(config_error("preset = \"huge\"\n").find("preset must be") != std::string::npos);
  CHECK(config_error("[train]\nprior = \"zero\"\n").find("kshot, full") != std::string::npos);
  CHECK(config_error("[eval]\nk_values = [1, 0]\n").find("\"full\"") != std::string::npos);
  CHECK(config_error("seed = 1 2\n").find("unexpected text") != std::string::npos);
  CHECK(config_error("[eval]\nk_values = [1, 2\n").find("unterminated array") != std::string::npos);
  CHECK(config_error("[train\n").find("expected ']'") != std::string::npos);
}

TEST_CASE("overrides beat file values and the echo round-trips") {
  RunConfig c = config_from_text("seed = 3\n[train]\niters = 2\n");
  apply_override(c, "seed", "5");
  apply_override(c, "train.prior=\"full\"");
  CHECK(c.seed == 5);
  CHECK(c.train.iters == 2);
  CHECK(c.train.prior_kind == PriorKind::full);
  CHECK_THROWS_AS(apply_override(c, "train.itres=3"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "novalue"), ConfigError);

  c.eval.models = {"a=runs/x", "runs/y"};
  c.train.epsilon = 1.0 / 3.0;
  const std::string echo = config_to_toml(c);
  CHECK(config_to_toml(config_from_text(echo)) == echo);
  CHECK(config_from_text(echo).train.epsilon == 1.0 / 3.0);
  for (const auto& key : config_keys()) CHECK(config_reference().find(key) != std::string::npos);
  CHECK(nearest_key("views_per_epoch") == "train.views_per_epoch");
}

TEST_CASE("commands: errors and exit codes") {
  TempDir dir;
  std::ostringstream log;
  RunConfig c;
  c.data_dir = (dir / "nodata").string();
  c.out = (dir / "run").string();
  c.eval.models = {(dir / "missing").string()};
  std::string line;
  try {
    run_command("eval-fewshot", c, log);
    FAIL("expected an error");
  } catch (...) {
    CHECK(describe_error(std::current_exception(), line) == ExitCode::missing_input);
  }
  const auto j = nlohmann::json::parse(line);
  CHECK(j["exit"] == 4);
  CHECK(j["path"].get<std::string>().find("nodata") != std::string::npos);

  try {
    run_command("explode", c, log);
  } catch (...) {
    CHECK(describe_error(std::current_exception(), line) == ExitCode::usage);
  }
}

TEST_CASE("commands: end to end on a small dataset") {
  TempDir dir;
  std::ostringstream log;
  RunConfig c = config_from_text(
      "threads = 1\n"
      "[data]\nbase_categories = [\"box\", \"tower\"]\nnovel_categories = [\"rod\"]\n"
      "instances_per_category = 20\nviews_per_instance = 3\n"
      "[train]\nmax_epochs = 1\nbatch_size = 8\nviews_per_epoch = 1\nval_views = 1\n"
      "[eval]\nk_values = [1, \"full\"]\nruns = 1\nviews_per_instance = 1\n");
  c.data_dir = (dir / "data").string();

  c.out = "";
  run_command("gen-data", c, log);
  const std::string digest = manifest_digest(load_manifest(dir / "data" / "manifest.json"));
  c.out = (dir / "data2").string();
  run_command("gen-data", c, log);
  CHECK(manifest_digest(load_manifest(dir / "data2" / "manifest.json")) == digest);
  c.out = "";

  for (const char* name : {"train1", "train2"}) {
    c.out = (dir / name).string();
    run_command("train", c, log);
  }
  CHECK(read_file(dir / "train1" / "model.bin") == read_file(dir / "train2" / "model.bin"));
  for (const char* f : {"config.toml", "run_info.json", "artifacts.json", "train_log.csv", "io_log.txt", "training.json"})
    CHECK(std::filesystem::exists(dir / "train1" / f));
  const auto info = nlohmann::json::parse(read_file(dir / "train1" / "run_info.json"));
  CHECK(info["seed"] == 0);
  CHECK(info["version"] == std::string(tool_version()));
  CHECK(config_from_text(read_file(dir / "train1" / "config.toml")).train.max_epochs == 1);

  c.eval.models = {"p=" + (dir / "train1").string()};
  c.out = (dir / "fewshot").string();
  RunConfig img = c;
  img.variant = Variant::image_only;
  img.out = (dir / "img").string();
  run_command("train", img, log);
  c.eval.image_only = (dir / "train1").string();
  CHECK_THROWS_AS(run_command("eval-fewshot", c, log), std::invalid_argument);
  c.eval.image_only = (dir / "img").string();
  run_command("eval-fewshot", c, log);
  const std::string report = read_file(dir / "fewshot" / "fewshot_seed0.csv");
  CHECK(report.find(",p:k=1,") != std::string::npos);
  CHECK(report.find(",image_only,") != std::string::npos);

  c.analyze.report = (dir / "fewshot" / "fewshot_seed0.csv").string();
  c.analyze.train_run = (dir / "train1").string();
  c.analyze.model = (dir / "train1").string();
  c.analyze.variability_n = 3;
  c.out = (dir / "analysis").string();
  run_command("analyze", c, log);
  CHECK(nlohmann::json::parse(read_file(dir / "analysis" / "audit.json"))["clean"] == true);
  CHECK(std::filesystem::exists(dir / "analysis" / "variability.csv"));
  CHECK(std::filesystem::exists(dir / "analysis" / "distribution_paired.csv"));

  c.out = (dir / "mv").string();
  c.eval.max_views = 2;
  run_command("eval-multiview", c, log);
  CHECK(std::filesystem::exists(dir / "mv" / "multiview_seed0.csv"));
  c.out = (dir / "ab").string();
  c.eval.iterations = {1, 2};
  run_command("eval-ablations", c, log);
  CHECK(std::filesystem::exists(dir / "ab" / "ablations_seed0.csv"));
}
