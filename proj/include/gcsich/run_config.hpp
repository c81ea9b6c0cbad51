#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcsich/cohort.hpp"
#include "gcsich/ctprep.hpp"
#include "gcsich/explain.hpp"
#include "gcsich/fusionnet.hpp"
#include "gcsich/synth.hpp"
#include "gcsich/trainer.hpp"

namespace gcsich::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every setting a command can read, fully resolved before any stage runs.
// One seed drives the phantom, the splits (seed + repeat) and training.
struct RunConfig {
  std::uint64_t seed = 0;
  net::InputMode mode = net::InputMode::fusion;
  std::size_t cv = 1;  // repeats of the split (seeds seed, seed + 1, ...)

  std::filesystem::path manifest, split, run, predictions, out;

  synth::PhantomSpec synth;
  prep::StripConfig prep;

  double train_fraction = 0.8;
  std::size_t folds = 0;  // >= 2: stratified k-fold per repeat instead of one random split
  cohort::LabelRule label_rule;

  net::ModelConfig model = net::ModelConfig::tiny();
  train::TrainConfig train;
  std::string checkpoint = "final";  // which checkpoint eval and explain load

  explain::SmoothOptions smooth;
  double overlay_alpha = 0.6;
  int target_class = 1;
  std::size_t explain_limit = 0;  // 0 explains every test slice
};

using KeyValues = std::map<std::string, std::string>;

/// TOML-style text: `[section]` headers, `key = value` lines, `#` comments,
/// optional double quotes around values. Keys come back as section.key.
KeyValues parse_key_values(std::istream& in);
KeyValues read_key_values(const std::filesystem::path& path);

/// Applies values over the config; unknown keys and bad values throw.
void apply(RunConfig& config, const KeyValues& values);
/// Parses "key=value".
void apply_assignment(RunConfig& config, const std::string& assignment);

/// All keys with round-trip precision.
KeyValues to_key_values(const RunConfig& config);
std::string to_toml(const RunConfig& config);

void validate(const RunConfig& config);

/// run_config.toml inside dir.
std::filesystem::path write_run_config(const std::filesystem::path& dir, const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace gcsich::cli
