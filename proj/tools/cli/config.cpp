#include "cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <set>

#include "voxelprior/io.hpp"

namespace voxelprior::cli {

ConfigError::ConfigError(const std::string& message, std::string source, std::size_t line,
                         std::size_t column)
    : std::runtime_error(line ? source + ":" + std::to_string(line) + ":" + std::to_string(column) +
                                    ": " + message
                              : (source.empty() ? message : source + ": " + message)),
      source_(std::move(source)),
      line_(line),
      column_(column) {}

std::string TomlValue::type_name() const {
  switch (type) {
    case Type::integer: return "integer";
    case Type::real: return "float";
    case Type::boolean: return "boolean";
    case Type::string: return "string";
    case Type::array: return "array";
  }
  return "?";
}

namespace {

class Parser {
 public:
  Parser(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

  std::vector<TomlEntry> document() {
    std::vector<TomlEntry> out;
    std::set<std::string> seen, sections;
    std::string section;
    for (;;) {
      skip_blank();
      if (eof()) break;
      if (peek() == '\n') {
        get();
        continue;
      }
      if (peek() == '[') {
        const std::size_t l = line_, c = col_;
        get();
        skip_blank();
        section = key();
        skip_blank();
        if (peek() != ']') fail("expected ']' to close the section header");
        get();
        if (!sections.insert(section).second)
          throw ConfigError("section [" + section + "] appears twice", source_, l, c);
        end_of_line();
        continue;
      }
      TomlEntry e;
      e.line = line_;
      e.column = col_;
      const std::string k = key();
      skip_blank();
      if (peek() != '=') fail("expected '=' after key '" + k + "'");
      get();
      skip_blank();
      e.value = value();
      end_of_line();
      e.key = section.empty() ? k : section + "." + k;
      if (!seen.insert(e.key).second)
        throw ConfigError("duplicate key '" + e.key + "'", source_, e.line, e.column);
      out.push_back(std::move(e));
    }
    return out;
  }

  TomlValue single_value() {
    skip_blank();
    TomlValue v = value();
    skip_blank();
    if (!eof()) fail("unexpected text after the value");
    return v;
  }

 private:
  bool eof() const { return pos_ >= text_.size(); }
  char peek() const { return eof() ? '\0' : text_[pos_]; }
  char get() {
    const char c = text_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }
  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(msg, source_, line_, col_); }

  void skip_blank() {
    while (!eof()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\r') {
        get();
      } else if (c == '#') {
        while (!eof() && peek() != '\n') get();
      } else {
        break;
      }
    }
  }
  void skip_blank_lines() {
    for (;;) {
      skip_blank();
      if (peek() == '\n') get();
      else break;
    }
  }
  void end_of_line() {
    skip_blank();
    if (!eof() && peek() != '\n') fail("unexpected text after the value");
  }

  static bool bare(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
           c == '-';
  }

  std::string key() {
    std::string out;
    for (;;) {
      const std::size_t start = pos_;
      while (!eof() && bare(peek())) out += get();
      if (pos_ == start) fail(out.empty() ? "expected a key" : "expected a key part after '.'");
      if (peek() != '.') break;
      out += get();
    }
    return out;
  }

  TomlValue value() {
    TomlValue v;
    v.line = line_;
    v.column = col_;
    const char c = peek();
    if (c == '"') {
      v.type = TomlValue::Type::string;
      v.string = string();
    } else if (c == '[') {
      v.type = TomlValue::Type::array;
      get();
      for (;;) {
        skip_blank_lines();
        if (eof()) fail("unterminated array");
        if (peek() == ']') {
          get();
          break;
        }
        v.items.push_back(value());
        skip_blank_lines();
        if (eof()) fail("unterminated array");
        if (peek() == ',') {
          get();
        } else if (peek() != ']') {
          fail("expected ',' or ']' in array");
        }
      }
    } else if (c == 't' || c == 'f') {
      std::string word;
      while (!eof() && bare(peek())) word += get();
      if (word != "true" && word != "false") {
        throw ConfigError("expected a value, found '" + word + "' (strings need double quotes)", source_,
                          v.line, v.column);
      }
      v.type = TomlValue::Type::boolean;
      v.boolean = word == "true";
    } else if ((c >= '0' && c <= '9') || c == '+' || c == '-' || c == '.' || c == 'i' || c == 'n') {
      std::string tok;
      while (!eof() && (bare(peek()) || peek() == '.' || peek() == '+')) tok += get();
      number(tok, v);
    } else if (eof() || c == '\n') {
      fail("expected a value");
    } else {
      std::string word;
      while (!eof() && bare(peek())) word += get();
      throw ConfigError("expected a value, found '" + (word.empty() ? std::string(1, c) : word) +
                            "' (strings need double quotes)",
                        source_, v.line, v.column);
    }
    return v;
  }

  void number(const std::string& tok, TomlValue& v) const {
    auto bad = [&] { throw ConfigError("malformed number '" + tok + "'", source_, v.line, v.column); };
    const bool is_real = tok.find_first_of(".eE") != std::string::npos || tok.find("inf") != std::string::npos ||
                         tok.find("nan") != std::string::npos;
    if (is_real) {
      char* end = nullptr;
      v.real = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size() || tok.front() == '.' || tok.back() == '.') bad();
      v.type = TomlValue::Type::real;
    } else {
      const char* b = tok.data() + (tok.front() == '+' ? 1 : 0);
      const auto [p, ec] = std::from_chars(b, tok.data() + tok.size(), v.integer);
      if (ec != std::errc() || p != tok.data() + tok.size()) bad();
      v.type = TomlValue::Type::integer;
    }
  }

  std::string string() {
    get();
    std::string out;
    for (;;) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = get();
      if (c == '"') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (eof()) fail("unterminated string");
      switch (const char e = get()) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        default: fail(std::string("unknown escape '\\") + e + "'");
      }
    }
    return out;
  }

  const std::string& text_;
  std::string source_;
  std::size_t pos_ = 0, line_ = 1, col_ = 1;
};

// ---- typed access ----

struct Ctx {
  const TomlEntry& e;
  const std::string& source;
  [[noreturn]] void fail(const std::string& msg, const TomlValue* at = nullptr) const {
    const TomlValue& v = at ? *at : e.value;
    throw ConfigError("key '" + e.key + "': " + msg, source, v.line, v.column);
  }
};

std::size_t to_uint(const Ctx& c, const TomlValue& v) {
  if (v.type != TomlValue::Type::integer) c.fail("expected a non-negative integer, got " + v.type_name(), &v);
  if (v.integer < 0) c.fail("expected a non-negative integer, got " + std::to_string(v.integer), &v);
  return static_cast<std::size_t>(v.integer);
}
double to_real(const Ctx& c, const TomlValue& v) {
  if (v.type == TomlValue::Type::integer) return static_cast<double>(v.integer);
  if (v.type != TomlValue::Type::real) c.fail("expected a number, got " + v.type_name(), &v);
  if (!std::isfinite(v.real)) c.fail("expected a finite number", &v);
  return v.real;
}
std::string to_string(const Ctx& c, const TomlValue& v) {
  if (v.type != TomlValue::Type::string) c.fail("expected a string, got " + v.type_name(), &v);
  return v.string;
}
const std::vector<TomlValue>& to_array(const Ctx& c) {
  if (c.e.value.type != TomlValue::Type::array) c.fail("expected an array, got " + c.e.value.type_name());
  return c.e.value.items;
}
std::vector<std::size_t> to_uint_list(const Ctx& c) {
  std::vector<std::size_t> out;
  for (const auto& v : to_array(c)) out.push_back(to_uint(c, v));
  return out;
}
std::vector<std::string> to_string_list(const Ctx& c) {
  std::vector<std::string> out;
  for (const auto& v : to_array(c)) out.push_back(to_string(c, v));
  return out;
}
template <class F>
auto checked(const Ctx& c, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    c.fail(e.what());
  }
}

// ---- formatting ----

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    if (ch == '\n') {
      out += "\\n";
      continue;
    }
    if (ch == '\t') {
      out += "\\t";
      continue;
    }
    out += ch;
  }
  return out + "\"";
}
std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}
template <class T, class F>
std::string fmt_list(const std::vector<T>& xs, F&& f) {
  std::string out = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + f(xs[i]);
  return out + "]";
}
std::string fmt_uints(const std::vector<std::size_t>& xs) {
  return fmt_list(xs, [](std::size_t x) { return std::to_string(x); });
}
std::string fmt_strings(const std::vector<std::string>& xs) { return fmt_list(xs, quote); }
std::string fmt_k(std::size_t k) { return k == 0 ? std::string("\"full\"") : std::to_string(k); }

struct Key {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const Ctx&)> set;
  std::function<std::string(const RunConfig&)> get;
};

PriorKind parse_kind(const Ctx& c, std::initializer_list<PriorKind> allowed) {
  const PriorKind k = checked(c, [&] { return parse_prior_kind(to_string(c, c.e.value)); });
  if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
    std::string names;
    for (PriorKind a : allowed) names += std::string(names.empty() ? "" : ", ") + std::string(prior_kind_name(a));
    c.fail("prior must be one of " + names);
  }
  return k;
}

void set_preset(RunConfig& r, const std::string& name, const Ctx& c) {
  if (name != "desk" && name != "paper") c.fail("preset must be \"desk\" or \"paper\", got \"" + name + "\"");
  r.preset = name;
  const ArchConfig a = r.arch();
  r.data.voxel_dim = a.voxel_dim;
  r.data.image_size = a.image_size;
}

const std::vector<Key>& keys() {
  using R = RunConfig;
  static const std::vector<Key> table = {
      {"seed", "master seed (data, init, pools, view order)",
       [](R& r, const Ctx& c) { r.seed = to_uint(c, c.e.value); }, [](const R& r) { return std::to_string(r.seed); }},
      {"preset", "\"desk\" (S=64, D=16) or \"paper\" (S=128, D=32)",
       [](R& r, const Ctx& c) { set_preset(r, to_string(c, c.e.value), c); }, [](const R& r) { return quote(r.preset); }},
      {"threads", "worker threads, 0 = all cores; outputs do not depend on the count",
       [](R& r, const Ctx& c) { r.threads = to_uint(c, c.e.value); }, [](const R& r) { return std::to_string(r.threads); }},
      {"out", "run directory (default <VOXELPRIOR_OUT or runs>/<command>)",
       [](R& r, const Ctx& c) { r.out = to_string(c, c.e.value); }, [](const R& r) { return quote(r.out); }},

      {"data.dir", "dataset directory (default <VOXELPRIOR_OUT or runs>/data)",
       [](R& r, const Ctx& c) { r.data_dir = to_string(c, c.e.value); }, [](const R& r) { return quote(r.data_dir); }},
      {"data.base_categories", "base categories, [] = all built-in",
       [](R& r, const Ctx& c) { r.data.base_categories = to_string_list(c); },
       [](const R& r) { return fmt_strings(r.data.base_categories); }},
      {"data.novel_categories", "novel categories, [] = all built-in",
       [](R& r, const Ctx& c) { r.data.novel_categories = to_string_list(c); },
       [](const R& r) { return fmt_strings(r.data.novel_categories); }},
      {"data.instances_per_category", "shapes per category (>= 20)",
       [](R& r, const Ctx& c) { r.data.instances_per_category = to_uint(c, c.e.value); },
       [](const R& r) { return std::to_string(r.data.instances_per_category); }},
      {"data.views_per_instance", "rendered views per shape",
       [](R& r, const Ctx& c) { r.data.views_per_instance = to_uint(c, c.e.value); },
       [](const R& r) { return std::to_string(r.data.views_per_instance); }},
      {"data.elevation_min", "lowest camera elevation, degrees",
       [](R& r, const Ctx& c) { r.data.elevation_min = to_real(c, c.e.value); },
       [](const R& r) { return fmt_real(r.data.elevation_min); }},
      {"data.elevation_max", "highest camera elevation, degrees",
       [](R& r, const Ctx& c) { r.data.elevation_max = to_real(c, c.e.value); },
       [](const R& r) { return fmt_real(r.data.elevation_max); }},

      {"train.variant", "\"prior_refinement\" or \"image_only\"",
       [](R& r, const Ctx& c) { r.variant = checked(c, [&] { return parse_variant(to_string(c, c.e.value)); }); },
       [](const R& r) { return quote(std::string(variant_name(r.variant))); }},
      {"train.batch_size", "examples per update",
       [](R& r, const Ctx& c) { r.train.batch_size = to_uint(c, c.e.value); },
       [](const R& r) { return std::to_string(r.train.batch_size); }},
      {"train.iters", "refinement iterations per batch",
       [](R& r, const Ctx& c) { r.train.iters = to_uint(c, c.e.value); },
       [](const R& r) { return std::to_string(r.train.iters); }},
      {"train.prior", "training prior, \"kshot\" or \"full\"",
       [](R& r, const Ctx& c) { r.train.prior_kind = parse_kind(c, {PriorKind::kshot, PriorKind::full}); },
       [](const R& r) { return quote(std::string(prior_kind_name(r.train.prior_kind))); }},
      {"train.k", "shapes per k-shot training prior",
       [](R& r, const Ctx& c) { r.train.prior_k = to_uint(c, c.e.value); },
       [](const R& r) { return std::to_string(r.train.prior_k); }},
      {"train.max_epochs", "epoch limit",
       [](R& r, const Ctx& c) { r.train.max_epochs = to_uint(c, c.e.value); },
       [](const R& r) { return std::to_string(r.train.max_epochs); }},
      {"train.patience", "epochs without validation improvement before stopping",
       [](R& r, const Ctx& c) { r.train.patience = to_uint(c, c.e.value); },
       [](const R& r) { return std::to_string(r.train.patience); }},
      {"train.views_per_epoch", "views drawn per training shape per epoch, 0 = all",
       [](R& r, const Ctx& c) { r.train.views_per_epoch = to_uint(c, c.e.value); },
       [](const R& r) { return std::to_string(r.train.views_per_epoch); }},
      {"train.val_views", "leading views scored per validation shape",
       [](R& r, const Ctx& c) { r.train.val_views = to_uint(c, c.e.value); },
       [](const R& r) { return std::to_string(r.train.val_views); }},
      {"train.rho", "Adadelta decay",
       [](R& r, const Ctx& c) { r.train.rho = to_real(c, c.e.value); },
       [](const R& r) { return fmt_real(r.train.rho); }},
      {"train.epsilon", "Adadelta epsilon",
       [](R& r, const Ctx& c) { r.train.epsilon = to_real(c, c.e.value); },
       [](const R& r) { return fmt_real(r.train.epsilon); }},

      {"eval.models", "prior-refinement runs or checkpoints, optionally name=path",
       [](R& r, const Ctx& c) { r.eval.models = to_string_list(c); },
       [](const R& r) { return fmt_strings(r.eval.models); }},
      {"eval.image_only", "image-only run or checkpoint",
       [](R& r, const Ctx& c) { r.eval.image_only = to_string(c, c.e.value); },
       [](const R& r) { return quote(r.eval.image_only); }},
      {"eval.k_values", "few-shot pool sizes; \"full\" = whole training split",
       [](R& r, const Ctx& c) {
         r.eval.k_values.clear();
         for (const auto& v : to_array(c)) {
           if (v.type == TomlValue::Type::string) {
             if (v.string != "full") c.fail("k values are integers or \"full\"", &v);
             r.eval.k_values.push_back(0);
           } else {
             const std::size_t k = to_uint(c, v);
             if (k == 0) c.fail("k must be >= 1 (write \"full\" for the whole pool)", &v);
             r.eval.k_values.push_back(k);
           }
         }
       },
       [](const R& r) { return fmt_list(r.eval.k_values, fmt_k); }},
      {"eval.runs", "repetitions with seeds seed, seed+1, ...",
       [](R& r, const Ctx& c) { r.eval.runs = to_uint(c, c.e.value); },
       [](const R& r) { return std::to_string(r.eval.runs); }},
      {"eval.iters", "test-time refinement steps, 0 = as trained",
       [](R& r, const Ctx& c) { r.eval.iters = to_uint(c, c.e.value); },
       [](const R& r) { return std::to_string(r.eval.iters); }},
      {"eval.views_per_instance", "test views per shape, 0 = all",
       [](R& r, const Ctx& c) { r.eval.views_per_instance = to_uint(c, c.e.value); },
       [](const R& r) { return std::to_string(r.eval.views_per_instance); }},
      {"eval.max_views", "multi-view sequence length",
       [](R& r, const Ctx& c) { r.eval.max_views = to_uint(c, c.e.value); },
       [](const R& r) { return std::to_string(r.eval.max_views); }},
      {"eval.role", "multi-view categories, \"base\" or \"novel\"",
       [](R& r, const Ctx& c) { r.eval.role = checked(c, [&] { return parse_role(to_string(c, c.e.value)); }); },
       [](const R& r) { return quote(std::string(role_name(r.eval.role))); }},
      {"eval.prior", "multi-view initial prior, \"full\" or \"kshot\"",
       [](R& r, const Ctx& c) { r.eval.prior = parse_kind(c, {PriorKind::kshot, PriorKind::full}); },
       [](const R& r) { return quote(std::string(prior_kind_name(r.eval.prior))); }},
      {"eval.k", "shapes per multi-view k-shot prior",
       [](R& r, const Ctx& c) { r.eval.k = to_uint(c, c.e.value); }, [](const R& r) { return std::to_string(r.eval.k); }},
      {"eval.iterations", "ablation iteration counts",
       [](R& r, const Ctx& c) { r.eval.iterations = to_uint_list(c); },
       [](const R& r) { return fmt_uints(r.eval.iterations); }},
      {"eval.finetune_k", "finetuning baselines: shapes per novel category, [] = none",
       [](R& r, const Ctx& c) { r.eval.finetune_k = to_uint_list(c); },
       [](const R& r) { return fmt_uints(r.eval.finetune_k); }},
      {"eval.finetune_renders", "finetuning baselines: renders per shape",
       [](R& r, const Ctx& c) { r.eval.finetune_renders = to_uint_list(c); },
       [](const R& r) { return fmt_uints(r.eval.finetune_renders); }},
      {"eval.finetune_steps", "finetuning SGD steps",
       [](R& r, const Ctx& c) { r.eval.finetune_steps = to_uint(c, c.e.value); },
       [](const R& r) { return std::to_string(r.eval.finetune_steps); }},

      {"analyze.report", "few-shot report CSV to analyse",
       [](R& r, const Ctx& c) { r.analyze.report = to_string(c, c.e.value); },
       [](const R& r) { return quote(r.analyze.report); }},
      {"analyze.train_run", "training run whose io_log.txt is audited",
       [](R& r, const Ctx& c) { r.analyze.train_run = to_string(c, c.e.value); },
       [](const R& r) { return quote(r.analyze.train_run); }},
      {"analyze.model", "prior-refinement run or checkpoint for the variability study",
       [](R& r, const Ctx& c) { r.analyze.model = to_string(c, c.e.value); },
       [](const R& r) { return quote(r.analyze.model); }},
      {"analyze.conditions", "report conditions compared, [] = image_only and every k=10 condition",
       [](R& r, const Ctx& c) { r.analyze.conditions = to_string_list(c); },
       [](const R& r) { return fmt_strings(r.analyze.conditions); }},
      {"analyze.low", "IoU below which a reconstruction counts as poor",
       [](R& r, const Ctx& c) { r.analyze.low = to_real(c, c.e.value); },
       [](const R& r) { return fmt_real(r.analyze.low); }},
      {"analyze.variability_n", "priors per image in the variability study",
       [](R& r, const Ctx& c) { r.analyze.variability_n = to_uint(c, c.e.value); },
       [](const R& r) { return std::to_string(r.analyze.variability_n); }},
      {"analyze.variability_prior", "\"kshot\" (distinct 1-shot priors) or \"full\"",
       [](R& r, const Ctx& c) { r.analyze.variability_prior = parse_kind(c, {PriorKind::kshot, PriorKind::full}); },
       [](const R& r) { return quote(std::string(prior_kind_name(r.analyze.variability_prior))); }},
  };
  return table;
}

const Key* find_key(const std::string& name) {
  for (const auto& k : keys())
    if (k.name == name) return &k;
  return nullptr;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::vector<TomlEntry> parse_toml(const std::string& text, const std::string& source) {
  return Parser(text, source).document();
}

TomlValue parse_toml_value(const std::string& text, const std::string& source) {
  return Parser(text, source).single_value();
}

ArchConfig RunConfig::arch() const {
  if (preset == "paper") return ArchConfig::paper();
  return ArchConfig::desk();
}

std::string nearest_key(const std::string& key) {
  std::string best;
  std::size_t best_d = std::numeric_limits<std::size_t>::max();
  for (const auto& k : keys()) {
    // Compare against both the qualified name and its last part.
    const std::size_t dot = k.name.rfind('.');
    std::size_t d = edit_distance(key, k.name);
    if (dot != std::string::npos) d = std::min(d, edit_distance(key, k.name.substr(dot + 1)) + 1);
    if (d < best_d) {
      best_d = d;
      best = k.name;
    }
  }
  return best;
}

void apply_entry(RunConfig& config, const TomlEntry& entry, const std::string& source) {
  const Key* k = find_key(entry.key);
  if (!k) {
    throw ConfigError("unknown key '" + entry.key + "' (did you mean '" + nearest_key(entry.key) + "'?)", source,
                      entry.line, entry.column);
  }
  k->set(config, Ctx{entry, source});
}

RunConfig config_from_text(const std::string& text, const std::string& source) {
  RunConfig config;
  for (const auto& e : parse_toml(text, source)) apply_entry(config, e, source);
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  return config_from_text(read_file(path), path.string());
}

void apply_override(RunConfig& config, const std::string& key, const std::string& value_text) {
  TomlEntry e;
  e.key = key;
  e.value = parse_toml_value(value_text, "--set " + key);
  apply_entry(config, e, "--set " + key);
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  apply_override(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string config_to_toml(const RunConfig& config) {
  std::string out = "# resolved configuration\n";
  std::string section;
  for (const auto& k : keys()) {
    const auto dot = k.name.find('.');
    const std::string sec = dot == std::string::npos ? "" : k.name.substr(0, dot);
    if (sec != section) {
      out += "\n[" + sec + "]\n";
      section = sec;
    }
    out += (dot == std::string::npos ? k.name : k.name.substr(dot + 1)) + " = " + k.get(config) + "\n";
  }
  return out;
}

std::string config_reference() {
  const RunConfig defaults;
  std::string out = "Config keys (file sections use the part before the dot):\n";
  for (const auto& k : keys()) out += "  " + k.name + " = " + k.get(defaults) + "\n      " + k.help + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

std::filesystem::path output_root() {
  const char* env = std::getenv("VOXELPRIOR_OUT");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("runs");
}

}  // namespace voxelprior::cli
