#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rvos/matching.hpp"
#include "rvos/model.hpp"
#include "rvos/scene.hpp"

namespace rvos {

struct TrainConfig {
  std::size_t iterations = 2000;
  std::string optimizer = "adamw";  // sgd | adamw
  double lr = 0.003;
  double momentum = 0.9;  // beta1 for adamw
  double beta2 = 0.999;
  double weight_decay = 0.0;
  double clip = 1.0;  // global gradient-norm clip, 0 disables
  std::string schedule = "cosine";  // constant | cosine (decays to 0 at the last iteration)
  std::size_t checkpoint_every = 500;
  bool multi_object = false;
};

struct DataConfig {
  std::size_t scenes = 8;
  std::uint64_t seed = 100;
  SceneKnobs knobs;
};

/// Everything a training run depends on. Serialized as flat `key = value` lines.
struct RunConfig {
  ModelConfig model;
  LossWeights loss;
  TrainConfig train;
  DataConfig data;

  void validate() const {
    model.validate();
    for (double w : {loss.dice, loss.focal, loss.l1, loss.giou, loss.score})
      if (!(w >= 0.0)) throw ConfigError("loss weights must be non-negative");
    if (!(loss.dice_eps > 0.0)) throw ConfigError("loss.dice_eps must be positive");
    if (!(loss.focal_alpha >= 0.0 && loss.focal_alpha <= 1.0)) throw ConfigError("loss.focal_alpha must lie in [0, 1]");
    if (!(loss.focal_gamma >= 0.0)) throw ConfigError("loss.focal_gamma must be non-negative");
    if (train.optimizer != "sgd" && train.optimizer != "adamw") throw ConfigError("train.optimizer must be sgd or adamw");
    if (train.schedule != "constant" && train.schedule != "cosine") {
      throw ConfigError("train.schedule must be constant or cosine");
    }
    if (!(train.lr > 0.0)) throw ConfigError("train.lr must be positive");
    if (!(train.momentum >= 0.0 && train.momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
    if (!(train.beta2 > 0.0 && train.beta2 < 1.0)) throw ConfigError("train.beta2 must lie in (0, 1)");
    if (!(train.weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
    if (!(train.clip >= 0.0)) throw ConfigError("train.clip must be non-negative");
    if (train.checkpoint_every == 0) throw ConfigError("train.checkpoint_every must be positive");
    if (data.scenes == 0) throw ConfigError("data.scenes must be positive");
    if (data.knobs.height % 32 || data.knobs.width % 32 || data.knobs.height == 0 || data.knobs.width == 0) {
      throw ConfigError("data.height and data.width must be positive multiples of 32");
    }
    if (data.knobs.frames == 0) throw ConfigError("data.frames must be positive");
    if (data.knobs.objects == 0 || data.knobs.expressions == 0 || data.knobs.expressions > data.knobs.objects) {
      throw ConfigError("data.expressions must lie in [1, data.objects]");
    }
  }
};

namespace detail {

// One entry per key: how to read it and how to print it.
struct ConfigField {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError("config: bad value '" + text + "' for " + key);
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config: bad boolean '" + text + "' for " + key);
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

#define RVOS_SIZE_FIELD(key, member)                                                          \
  {key, {[](RunConfig& c, const std::string& v) { c.member = parse_number<std::size_t>(key, v); }, \
         [](const RunConfig& c) { return std::to_string(c.member); }}}
#define RVOS_U64_FIELD(key, member)                                                              \
  {key, {[](RunConfig& c, const std::string& v) { c.member = parse_number<std::uint64_t>(key, v); }, \
         [](const RunConfig& c) { return std::to_string(c.member); }}}
#define RVOS_DOUBLE_FIELD(key, member)                                                   \
  {key, {[](RunConfig& c, const std::string& v) { c.member = parse_number<double>(key, v); }, \
         [](const RunConfig& c) { return format_double(c.member); }}}
#define RVOS_BOOL_FIELD(key, member)                                                \
  {key, {[](RunConfig& c, const std::string& v) { c.member = parse_bool(key, v); }, \
         [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}}

inline const std::map<std::string, ConfigField>& config_fields() {
  static const std::map<std::string, ConfigField> fields = {
      RVOS_SIZE_FIELD("model.dim", model.dim),
      RVOS_SIZE_FIELD("model.enc_layers", model.enc_layers),
      RVOS_SIZE_FIELD("model.dec_layers", model.dec_layers),
      RVOS_SIZE_FIELD("model.num_queries", model.num_queries),
      RVOS_BOOL_FIELD("model.position", model.position),
      RVOS_U64_FIELD("model.seed", model.seed),
      RVOS_BOOL_FIELD("scf.enabled", model.scf_enabled),
      RVOS_DOUBLE_FIELD("scf.bandwidth", model.bandwidth),
      RVOS_SIZE_FIELD("cpk.patch", model.patch),
      RVOS_SIZE_FIELD("cpk.hidden", model.cpk_hidden),
      RVOS_BOOL_FIELD("mso.enabled", model.mso_enabled),
      RVOS_SIZE_FIELD("mso.dim", model.mso_dim),
      RVOS_DOUBLE_FIELD("loss.dice", loss.dice),
      RVOS_DOUBLE_FIELD("loss.focal", loss.focal),
      RVOS_DOUBLE_FIELD("loss.l1", loss.l1),
      RVOS_DOUBLE_FIELD("loss.giou", loss.giou),
      RVOS_DOUBLE_FIELD("loss.score", loss.score),
      RVOS_DOUBLE_FIELD("loss.dice_eps", loss.dice_eps),
      RVOS_DOUBLE_FIELD("loss.focal_alpha", loss.focal_alpha),
      RVOS_DOUBLE_FIELD("loss.focal_gamma", loss.focal_gamma),
      RVOS_SIZE_FIELD("train.iterations", train.iterations),
      {"train.optimizer", {[](RunConfig& c, const std::string& v) { c.train.optimizer = v; },
                           [](const RunConfig& c) { return c.train.optimizer; }}},
      RVOS_DOUBLE_FIELD("train.lr", train.lr),
      RVOS_DOUBLE_FIELD("train.momentum", train.momentum),
      RVOS_DOUBLE_FIELD("train.beta2", train.beta2),
      RVOS_DOUBLE_FIELD("train.weight_decay", train.weight_decay),
      RVOS_DOUBLE_FIELD("train.clip", train.clip),
      {"train.schedule", {[](RunConfig& c, const std::string& v) { c.train.schedule = v; },
                          [](const RunConfig& c) { return c.train.schedule; }}},
      RVOS_SIZE_FIELD("train.checkpoint_every", train.checkpoint_every),
      RVOS_BOOL_FIELD("train.multi_object", train.multi_object),
      RVOS_SIZE_FIELD("data.scenes", data.scenes),
      RVOS_U64_FIELD("data.seed", data.seed),
      RVOS_SIZE_FIELD("data.height", data.knobs.height),
      RVOS_SIZE_FIELD("data.width", data.knobs.width),
      RVOS_SIZE_FIELD("data.frames", data.knobs.frames),
      RVOS_SIZE_FIELD("data.objects", data.knobs.objects),
      RVOS_SIZE_FIELD("data.expressions", data.knobs.expressions),
  };
  return fields;
}

#undef RVOS_SIZE_FIELD
#undef RVOS_U64_FIELD
#undef RVOS_DOUBLE_FIELD
#undef RVOS_BOOL_FIELD

}  // namespace detail

/// Parses `key = value` lines on top of the defaults. `#` starts a comment.
/// Unknown keys, duplicates and malformed values are errors.
inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  const auto& fields = detail::config_fields();
  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (seen[key]++) throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    it->second.set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Every key with its current value; parse_config(to_text(c)) reproduces c.
inline std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : detail::config_fields()) out += key + " = " + field.get(cfg) + "\n";
  return out;
}

}  // namespace rvos
