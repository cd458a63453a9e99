#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "xing/adversarial.hpp"
#include "xing/generator.hpp"

namespace xing {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
  std::uint64_t seed = 0;
  std::size_t iters = 500;
  std::size_t batch = 8;
  std::size_t checkpoint_every = 100;
  std::size_t eval_every = 100;
  std::size_t holdout = 32;
  std::string checkpoint_dir = "runs/desk";
  std::string log = "metrics.csv";  // relative to checkpoint_dir

  bool operator==(const TrainConfig&) const = default;
};

struct RunConfig {
  GeneratorConfig model;
  LossWeights weights;
  GanOptions gan;
  AdamConfig optim;
  TrainConfig train;

  /// The criterion-sized desk run: xingpp, T=2, c=32, 64x32, N=3, batch 8.
  static RunConfig desk();

  void validate() const;
  std::filesystem::path log_path() const;

  bool operator==(const RunConfig&) const = default;
};

/// INI-style text: [section] headers, key = value lines, '#' comments.
/// Unknown sections or keys are errors. Missing keys keep their defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& cfg);
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace xing
