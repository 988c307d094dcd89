#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedtrig/flcore/config.hpp"

// Experiment configuration files use a subset of TOML:
//
//   # comment
//   [section]
//   key = "string" | 123 | 0.5 | 1e-3 | true | false | [1, 2, 3]
//
// Tables are one level deep and keys are addressed as "section.key". Every
// key is optional; unknown keys and malformed values are configuration
// errors. See README.md for the full key list.
namespace fedtrig::harness {

struct ConfigValue {
  enum class Kind { boolean, integer, real, string, array };
  Kind kind = Kind::integer;
  bool flag = false;
  long long integer = 0;
  double real = 0.0;
  std::string text;
  std::vector<ConfigValue> items;
};

using ConfigEntries = std::vector<std::pair<std::string, ConfigValue>>;

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Drops a trailing comment, ignoring '#' inside strings.
inline std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && quoted) {
      ++i;
    } else if (line[i] == '"') {
      quoted = !quoted;
    } else if (line[i] == '#' && !quoted) {
      return line.substr(0, i);
    }
  }
  return line;
}

inline bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char ch : k) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-')) return false;
  }
  return true;
}

class ValueParser {
 public:
  ValueParser(std::string_view text, std::string where) : s_(text), where_(std::move(where)) {}

  ConfigValue parse_all() {
    ConfigValue v = parse();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters");
    return v;
  }

 private:
  std::string_view s_;
  std::string where_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(where_ + ": " + what + " in value '" + std::string(s_) + "'");
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  ConfigValue parse() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char ch = s_[pos_];
    if (ch == '"') return parse_string();
    if (ch == '[') return parse_array();
    if (s_.substr(pos_).starts_with("true")) {
      pos_ += 4;
      return boolean(true);
    }
    if (s_.substr(pos_).starts_with("false")) {
      pos_ += 5;
      return boolean(false);
    }
    return parse_number();
  }

  static ConfigValue boolean(bool b) {
    ConfigValue v;
    v.kind = ConfigValue::Kind::boolean;
    v.flag = b;
    return v;
  }

  ConfigValue parse_string() {
    ConfigValue v;
    v.kind = ConfigValue::Kind::string;
    ++pos_;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char ch = s_[pos_++];
      if (ch == '\\') {
        if (pos_ >= s_.size()) fail("unterminated escape");
        const char e = s_[pos_++];
        switch (e) {
          case 'n': ch = '\n'; break;
          case 't': ch = '\t'; break;
          case '"': ch = '"'; break;
          case '\\': ch = '\\'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      v.text.push_back(ch);
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return v;
  }

  ConfigValue parse_array() {
    ConfigValue v;
    v.kind = ConfigValue::Kind::array;
    ++pos_;
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return v;
    }
    while (true) {
      v.items.push_back(parse());
      if (v.items.back().kind == ConfigValue::Kind::array) fail("nested arrays are not supported");
      skip_ws();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          return v;
        }
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return v;
      }
      fail("expected ',' or ']'");
    }
  }

  ConfigValue parse_number() {
    std::size_t end = pos_;
    while (end < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '.' ||
                               s_[end] == '-' || s_[end] == '+' || s_[end] == '_')) {
      ++end;
    }
    std::string token;
    for (char ch : s_.substr(pos_, end - pos_)) {
      if (ch != '_') token.push_back(ch);
    }
    if (token.empty()) fail("expected a value");
    std::string_view digits = token;
    if (digits.front() == '+') digits.remove_prefix(1);
    ConfigValue v;
    const bool is_real = token.find_first_of(".eE") != std::string::npos;
    if (!is_real) {
      long long n = 0;
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
      if (ec != std::errc() || p != digits.data() + digits.size()) fail("bad integer");
      v.kind = ConfigValue::Kind::integer;
      v.integer = n;
      v.real = static_cast<double>(n);
    } else {
      double d = 0.0;
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), d);
      if (ec != std::errc() || p != digits.data() + digits.size() || !std::isfinite(d)) fail("bad number");
      v.kind = ConfigValue::Kind::real;
      v.real = d;
    }
    pos_ = end;
    return v;
  }
};

}  // namespace detail

inline ConfigValue parse_config_value(std::string_view text, const std::string& where = "value") {
  return detail::ValueParser(detail::trim(text), where).parse_all();
}

// Flattens a document into ("section.key", value) pairs in file order.
inline ConfigEntries parse_config_text(std::string_view text, const std::string& source = "config") {
  ConfigEntries entries;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    const std::string_view line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed table header");
      const auto name = detail::trim(line.substr(1, line.size() - 2));
      if (!detail::valid_key(name)) throw ConfigError(where + ": bad table name '" + std::string(name) + "'");
      section = std::string(name);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    const auto key = detail::trim(line.substr(0, eq));
    if (!detail::valid_key(key)) throw ConfigError(where + ": bad key '" + std::string(key) + "'");
    std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
    for (const auto& [k, v] : entries) {
      if (k == full) throw ConfigError(where + ": duplicate key '" + full + "'");
    }
    entries.emplace_back(std::move(full), parse_config_value(line.substr(eq + 1), where));
  }
  return entries;
}

namespace detail {

inline double as_real(const ConfigValue& v, const std::string& key) {
  if (v.kind == ConfigValue::Kind::integer || v.kind == ConfigValue::Kind::real) return v.real;
  throw ConfigError(key + ": expected a number");
}

inline std::size_t as_count(const ConfigValue& v, const std::string& key) {
  if (v.kind != ConfigValue::Kind::integer || v.integer < 0) throw ConfigError(key + ": expected a non-negative integer");
  return static_cast<std::size_t>(v.integer);
}

inline long as_long(const ConfigValue& v, const std::string& key) {
  if (v.kind != ConfigValue::Kind::integer) throw ConfigError(key + ": expected an integer");
  return static_cast<long>(v.integer);
}

inline bool as_bool(const ConfigValue& v, const std::string& key) {
  if (v.kind != ConfigValue::Kind::boolean) throw ConfigError(key + ": expected true or false");
  return v.flag;
}

inline std::string as_text(const ConfigValue& v, const std::string& key) {
  if (v.kind != ConfigValue::Kind::string) throw ConfigError(key + ": expected a quoted string");
  return v.text;
}

inline std::vector<std::size_t> as_counts(const ConfigValue& v, const std::string& key) {
  if (v.kind != ConfigValue::Kind::array) throw ConfigError(key + ": expected an array of integers");
  std::vector<std::size_t> out;
  for (const auto& item : v.items) out.push_back(as_count(item, key));
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const ConfigValue&, const std::string&)>;

inline void add_sgd_keys(std::map<std::string, Setter>& t, const std::string& section,
                         nn::SgdConfig& (*sgd)(ExperimentConfig&)) {
  t[section + ".lr"] = [sgd](auto& c, auto& v, auto& k) { sgd(c).lr = as_real(v, k); };
  t[section + ".momentum"] = [sgd](auto& c, auto& v, auto& k) { sgd(c).momentum = as_real(v, k); };
  t[section + ".weight_decay"] = [sgd](auto& c, auto& v, auto& k) { sgd(c).weight_decay = as_real(v, k); };
  t[section + ".epochs"] = [sgd](auto& c, auto& v, auto& k) { sgd(c).epochs = as_count(v, k); };
  t[section + ".batch_size"] = [sgd](auto& c, auto& v, auto& k) { sgd(c).batch_size = as_count(v, k); };
}

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["dataset.kind"] = [](auto& c, auto& v, auto& k) { c.dataset.kind = as_text(v, k); };
    t["dataset.classes"] = [](auto& c, auto& v, auto& k) { c.dataset.classes = as_count(v, k); };
    t["dataset.per_class"] = [](auto& c, auto& v, auto& k) { c.dataset.per_class = as_count(v, k); };
    t["dataset.test_per_class"] = [](auto& c, auto& v, auto& k) { c.dataset.test_per_class = as_count(v, k); };
    t["dataset.height"] = [](auto& c, auto& v, auto& k) { c.dataset.shape.height = as_count(v, k); };
    t["dataset.width"] = [](auto& c, auto& v, auto& k) { c.dataset.shape.width = as_count(v, k); };
    t["dataset.channels"] = [](auto& c, auto& v, auto& k) { c.dataset.shape.channels = as_count(v, k); };
    t["dataset.train_images"] = [](auto& c, auto& v, auto& k) { c.dataset.train_images = as_text(v, k); };
    t["dataset.train_labels"] = [](auto& c, auto& v, auto& k) { c.dataset.train_labels = as_text(v, k); };
    t["dataset.test_images"] = [](auto& c, auto& v, auto& k) { c.dataset.test_images = as_text(v, k); };
    t["dataset.test_labels"] = [](auto& c, auto& v, auto& k) { c.dataset.test_labels = as_text(v, k); };
    t["dataset.train_limit"] = [](auto& c, auto& v, auto& k) { c.dataset.train_limit = as_count(v, k); };
    t["dataset.test_limit"] = [](auto& c, auto& v, auto& k) { c.dataset.test_limit = as_count(v, k); };

    t["model.hidden"] = [](auto& c, auto& v, auto& k) { c.hidden = as_counts(v, k); };

    t["federation.clients"] = [](auto& c, auto& v, auto& k) { c.clients = as_count(v, k); };
    t["federation.selected"] = [](auto& c, auto& v, auto& k) { c.selected = as_count(v, k); };
    t["federation.selection_fraction"] = [](auto& c, auto& v, auto& k) { c.selection_fraction = as_real(v, k); };
    t["federation.rounds"] = [](auto& c, auto& v, auto& k) { c.rounds = as_count(v, k); };
    t["federation.alpha"] = [](auto& c, auto& v, auto& k) { c.alpha = as_real(v, k); };
    t["federation.eta"] = [](auto& c, auto& v, auto& k) { c.eta = as_real(v, k); };
    t["federation.seed"] = [](auto& c, auto& v, auto& k) { c.seed = as_count(v, k); };
    add_sgd_keys(t, "benign", [](ExperimentConfig& c) -> nn::SgdConfig& { return c.benign; });

    t["attack.kind"] = [](auto& c, auto& v, auto& k) {
      try {
        c.attack.kind = parse_attack_kind(as_text(v, k));
      } catch (const ArgumentError& e) {
        throw ConfigError(k + ": " + e.what());
      }
    };
    t["attack.target"] = [](auto& c, auto& v, auto& k) { c.attack.poison.target = as_count(v, k); };
    t["attack.poison_rate"] = [](auto& c, auto& v, auto& k) { c.attack.poison.rate = as_real(v, k); };
    t["attack.scale"] = [](auto& c, auto& v, auto& k) { c.attack_scale = as_real(v, k); };
    t["attack.dba_parts"] = [](auto& c, auto& v, auto& k) { c.attack.dba_parts = as_count(v, k); };
    t["attack.mask_ratio"] = [](auto& c, auto& v, auto& k) { c.attack.mask_ratio = as_real(v, k); };
    t["attack.trigger_size"] = [](auto& c, auto& v, auto& k) { c.trigger_size = as_count(v, k); };
    t["attack.trigger_margin"] = [](auto& c, auto& v, auto& k) { c.trigger_margin = as_count(v, k); };
    t["attack.trigger_value"] = [](auto& c, auto& v, auto& k) { c.trigger_value = as_real(v, k); };
    add_sgd_keys(t, "attack", [](ExperimentConfig& c) -> nn::SgdConfig& { return c.attack.training; });

    t["defense.kind"] = [](auto& c, auto& v, auto& k) {
      try {
        c.defense.kind = defenses::parse_defense_kind(as_text(v, k));
      } catch (const ArgumentError& e) {
        throw ConfigError(k + ": " + e.what());
      }
    };
    t["defense.krum_f"] = [](auto& c, auto& v, auto& k) { c.defense.krum_f = as_long(v, k); };
    t["defense.eta"] = [](auto& c, auto& v, auto& k) { c.defense.eta = as_real(v, k); };
    t["defense.mkrum_m"] = [](auto& c, auto& v, auto& k) { c.defense.mkrum_m = as_count(v, k); };
    t["defense.trim_k"] = [](auto& c, auto& v, auto& k) { c.defense.trim_k = as_count(v, k); };
    t["defense.rlr_theta"] = [](auto& c, auto& v, auto& k) { c.defense.rlr_theta = as_real(v, k); };
    t["defense.rlr_eta"] = [](auto& c, auto& v, auto& k) { c.defense.rlr_eta = as_real(v, k); };
    t["defense.dp_sigma"] = [](auto& c, auto& v, auto& k) { c.defense.dp_sigma = as_real(v, k); };
    t["defense.epochs"] = [](auto& c, auto& v, auto& k) { c.defense.gen.epochs = as_count(v, k); };
    t["defense.steps_per_epoch"] = [](auto& c, auto& v, auto& k) { c.defense.gen.steps_per_epoch = as_count(v, k); };
    t["defense.gamma_extract"] = [](auto& c, auto& v, auto& k) { c.defense.gen.gamma_extract = as_real(v, k); };
    t["defense.gamma_filter"] = [](auto& c, auto& v, auto& k) { c.defense.gen.gamma_filter = as_real(v, k); };
    t["defense.lambda_filter"] = [](auto& c, auto& v, auto& k) { c.defense.gen.lambda_filter = as_real(v, k); };
    t["defense.lr"] = [](auto& c, auto& v, auto& k) { c.defense.gen.lr = as_real(v, k); };
    t["defense.momentum"] = [](auto& c, auto& v, auto& k) { c.defense.gen.momentum = as_real(v, k); };
    t["defense.rho"] = [](auto& c, auto& v, auto& k) { c.defense.gen.rho = as_real(v, k); };
    t["defense.latent"] = [](auto& c, auto& v, auto& k) { c.defense.gen.latent = as_count(v, k); };
    t["defense.output_bias"] = [](auto& c, auto& v, auto& k) { c.defense.gen.output_bias = as_real(v, k); };
    t["defense.hidden"] = [](auto& c, auto& v, auto& k) { c.defense.gen.hidden = as_counts(v, k); };

    t["output.dir"] = [](auto& c, auto& v, auto& k) { c.output_dir = as_text(v, k); };
    t["output.eval_stride"] = [](auto& c, auto& v, auto& k) { c.eval_stride = as_count(v, k); };
    t["output.record_wall_time"] = [](auto& c, auto& v, auto& k) { c.record_wall_time = as_bool(v, k); };
    t["output.dump_images"] = [](auto& c, auto& v, auto& k) { c.dump_images = as_bool(v, k); };
    t["output.write_checkpoint"] = [](auto& c, auto& v, auto& k) { c.write_checkpoint = as_bool(v, k); };
    return t;
  }();
  return table;
}

}  // namespace detail

// Every key accepted in a config file, sorted.
inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : detail::setters()) keys.push_back(k);
  return keys;
}

// Short names accepted by `sweep --param` and `--set`.
inline std::string canonical_key(const std::string& key) {
  static const std::map<std::string, std::string> aliases{
      {"rho", "defense.rho"},     {"eta", "federation.eta"},       {"alpha", "federation.alpha"},
      {"seed", "federation.seed"}, {"rounds", "federation.rounds"}, {"defense", "defense.kind"},
      {"attack", "attack.kind"}};
  auto it = aliases.find(key);
  return it == aliases.end() ? key : it->second;
}

inline void apply_setting(ExperimentConfig& config, const std::string& key, const ConfigValue& value) {
  const std::string full = canonical_key(key);
  const auto& table = detail::setters();
  auto it = table.find(full);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(config, value, full);
}

// "key=value" with the value in config-file syntax; bare words are taken as
// strings so that `--set defense=krum` works.
inline void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key(detail::trim(std::string_view(assignment).substr(0, eq)));
  const std::string_view raw = detail::trim(std::string_view(assignment).substr(eq + 1));
  ConfigValue value;
  try {
    value = parse_config_value(raw, key);
  } catch (const ConfigError&) {
    value.kind = ConfigValue::Kind::string;
    value.text = std::string(raw);
  }
  apply_setting(config, key, value);
}

// Resolves derived fields and validates.
inline void finalize_config(ExperimentConfig& config) {
  if (config.selection_fraction) {
    const double f = *config.selection_fraction;
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("federation.selection_fraction must be in (0, 1]");
    config.selected = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(f * static_cast<double>(config.clients))));
  }
  config.validate();
}

inline ExperimentConfig config_from_text(std::string_view text, const std::string& source = "config") {
  ExperimentConfig config;
  for (const auto& [key, value] : parse_config_text(text, source)) apply_setting(config, key, value);
  finalize_config(config);
  return config;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline ExperimentConfig load_config_file(const std::filesystem::path& path,
                                         const std::vector<std::string>& overrides = {}) {
  ExperimentConfig config;
  for (const auto& [key, value] : parse_config_text(read_text_file(path), path.string())) {
    apply_setting(config, key, value);
  }
  for (const auto& o : overrides) apply_override(config, o);
  finalize_config(config);
  return config;
}

}  // namespace fedtrig::harness
