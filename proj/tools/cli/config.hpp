#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "voxelprior/dataset.hpp"
#include "voxelprior/model.hpp"
#include "voxelprior/prior.hpp"
#include "voxelprior/training.hpp"

namespace voxelprior::cli {

// Parse or validation failure; line/column are 1-based, 0 when unknown.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& message, std::string source = {}, std::size_t line = 0,
              std::size_t column = 0);
  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::string source_;
  std::size_t line_, column_;
};

struct TomlValue {
  enum class Type { integer, real, boolean, string, array };
  Type type = Type::integer;
  std::int64_t integer = 0;
  double real = 0.0;
  bool boolean = false;
  std::string string;
  std::vector<TomlValue> items;
  std::size_t line = 0, column = 0;

  std::string type_name() const;
};

struct TomlEntry {
  std::string key;  // section-qualified, e.g. "train.iters"
  TomlValue value;
  std::size_t line = 0, column = 0;
};

// Strict subset: [section] headers, bare or dotted keys, strings, integers,
// floats, booleans and (possibly multi-line) arrays; '#' comments.
std::vector<TomlEntry> parse_toml(const std::string& text, const std::string& source = "<config>");
// A single value as it would appear after `key =`.
TomlValue parse_toml_value(const std::string& text, const std::string& source = "<override>");

struct EvalSettings {
  std::vector<std::string> models;  // run directories or checkpoint files, optionally name=path
  std::string image_only;
  std::vector<std::size_t> k_values{1, 2, 3, 4, 5, 10, 25, 0};  // 0 = full
  std::size_t runs = 3;             // seeds seed .. seed+runs-1
  std::size_t iters = 0;            // 0: the count each model was trained with
  std::size_t views_per_instance = 0;
  std::size_t max_views = 5;
  Role role = Role::base;
  PriorKind prior = PriorKind::full;
  std::size_t k = 1;
  std::vector<std::size_t> iterations{1, 2, 3};
  std::vector<std::size_t> finetune_k;
  std::vector<std::size_t> finetune_renders{1};
  std::size_t finetune_steps = 200;
};

struct AnalyzeSettings {
  std::string report;
  std::string train_run;
  std::string model;
  std::vector<std::string> conditions;
  double low = 0.1;
  std::size_t variability_n = 10;
  PriorKind variability_prior = PriorKind::kshot;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string preset = "desk";
  std::size_t threads = 0;  // 0: every hardware thread
  std::string out;          // run directory; empty picks <root>/<command>
  std::string data_dir;     // empty picks <root>/data
  DatasetConfig data;
  Variant variant = Variant::prior_refinement;
  TrainConfig train;
  EvalSettings eval;
  AnalyzeSettings analyze;

  ArchConfig arch() const;
};

// Applies one key; `where` locates errors.
void apply_entry(RunConfig& config, const TomlEntry& entry, const std::string& source);
// Parses a config file (strict) on top of the defaults.
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_text(const std::string& text, const std::string& source = "<config>");
// key=value with the value in config syntax.
void apply_override(RunConfig& config, const std::string& assignment);
void apply_override(RunConfig& config, const std::string& key, const std::string& value_text);

// Every key with its resolved value; parses back to the same config.
std::string config_to_toml(const RunConfig& config);
// Key listing with defaults for --help.
std::string config_reference();
std::vector<std::string> config_keys();

// Levenshtein-nearest valid key.
std::string nearest_key(const std::string& key);

// Output root: $VOXELPRIOR_OUT or "runs".
std::filesystem::path output_root();

}  // namespace voxelprior::cli
