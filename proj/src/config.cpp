#include "ltts/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ltts/errors.hpp"

namespace ltts {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_string(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    cfg.kv_[key] = value;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

std::vector<std::string> KeyValueConfig::keys() const {
  std::vector<std::string> out;
  out.reserve(kv_.size());
  for (const auto& [k, v] : kv_) out.push_back(k);
  return out;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0' || errno == ERANGE)
    throw ConfigError("config key '" + key + "': not a number: " + it->second);
  return v;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0' || errno == ERANGE)
    throw ConfigError("config key '" + key + "': not an integer: " + it->second);
  return v;
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': not a boolean: " + v);
}

std::vector<Block> parse_blocks(const std::string& text) {
  std::vector<Block> blocks;
  std::istringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    const auto colon = part.find(':');
    if (colon == std::string::npos)
      throw ConfigError("blocks: expected begin:end, got '" + part + "'");
    errno = 0;
    char* end = nullptr;
    const std::string b = trim(part.substr(0, colon));
    const std::string e = trim(part.substr(colon + 1));
    const unsigned long long bi = std::strtoull(b.c_str(), &end, 10);
    if (end == b.c_str() || *end != '\0') throw ConfigError("blocks: bad index '" + b + "'");
    const unsigned long long ei = std::strtoull(e.c_str(), &end, 10);
    if (end == e.c_str() || *end != '\0') throw ConfigError("blocks: bad index '" + e + "'");
    blocks.push_back({static_cast<std::size_t>(bi), static_cast<std::size_t>(ei)});
  }
  if (blocks.empty()) throw ConfigError("blocks: empty block list");
  return blocks;
}

TrainConfig train_config_from(const KeyValueConfig& cfg, std::size_t frame_dim,
                              bool duration_model) {
  TrainConfig tc;
  tc.bundle_size = cfg.get_size("k", 1);

  const std::string kind = cfg.get_string("loss.kind", "squared");
  if (kind == "squared") {
    tc.loss = LossConfig::squared(frame_dim);
  } else if (kind == "contaminated") {
    std::vector<Block> blocks = cfg.has("loss.blocks")
                                    ? parse_blocks(cfg.get_string("loss.blocks", ""))
                                    : LossConfig::speech_blocks(frame_dim);
    tc.loss = LossConfig::contaminated(frame_dim, cfg.get_double("loss.epsilon", 0.1),
                                       cfg.get_double("loss.c", 10.0), std::move(blocks));
  } else {
    throw ConfigError("loss.kind must be 'squared' or 'contaminated', got '" + kind + "'");
  }

  tc.learning_rate = cfg.get_double(
      "learning_rate",
      default_learning_rate(duration_model, tc.bundle_size, tc.loss.kind));
  tc.decay = cfg.get_double("decay", tc.decay);
  tc.bptt_horizon = cfg.get_size("horizon", tc.bptt_horizon);
  tc.batch_size = cfg.get_size("batch", tc.batch_size);
  tc.augment = cfg.get_bool("augment", tc.augment);
  tc.silence_keep_fraction = cfg.get_double("silence_keep", tc.silence_keep_fraction);
  tc.max_steps = cfg.get_size("max_steps", tc.max_steps);
  tc.eval_interval = cfg.get_size("eval_interval", tc.eval_interval);
  tc.convergence_window = cfg.get_size("convergence_window", tc.convergence_window);
  tc.convergence_threshold =
      cfg.get_double("convergence_threshold", tc.convergence_threshold);
  tc.seed = cfg.get_u64("seed", tc.seed);
  tc.init_range = cfg.get_double("init_range", tc.init_range);
  tc.validate();
  tc.loss.validate(frame_dim);
  return tc;
}

}  // namespace ltts
