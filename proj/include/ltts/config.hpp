#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ltts/losses.hpp"
#include "ltts/trainer.hpp"

namespace ltts {

// Line-oriented `key = value` text config. '#' starts a comment, blank lines
// are ignored, later assignments override earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_string(const std::string& text);
  static KeyValueConfig parse_file(const std::string& path);

  bool has(const std::string& key) const { return kv_.count(key) != 0; }
  std::vector<std::string> keys() const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

 private:
  std::map<std::string, std::string> kv_;
};

// Parses a block partition like "0:47,47:49".
std::vector<Block> parse_blocks(const std::string& text);

// Assembles a TrainConfig from config keys (learning_rate, decay, horizon,
// k, batch, augment, silence_keep, max_steps, eval_interval,
// convergence_window, convergence_threshold, seed, init_range, loss.kind,
// loss.epsilon, loss.c, loss.blocks). frame_dim fixes the loss block
// defaults; the learning rate defaults to the published value for the
// model/loss combination unless given explicitly.
TrainConfig train_config_from(const KeyValueConfig& cfg, std::size_t frame_dim,
                              bool duration_model);

}  // namespace ltts
