#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cdbandit/env.hpp"
#include "cdbandit/policy.hpp"

namespace cdbandit {

struct EnvConfig {
  std::string kind = "flipping";  ///< flipping, switching or trace
  double delta = 0.1;             ///< flipping gap
  int arms = 2;                   ///< switching arm count
  /// Switching hazard; when unset it is gamma / T.
  std::optional<double> beta;
  double gamma = 10.0;            ///< expected switching breakpoints
  std::string trace;              ///< trace file path
  std::uint64_t seed = 1;         ///< switching schedule seed
  bool resample = false;          ///< switching: fresh schedule per trial
};

/// A complete experiment: environment, policies and run settings.
struct ExperimentConfig {
  std::string preset;
  std::optional<std::int64_t> T;
  std::int64_t trials = 10;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string output;
  std::int64_t trace_every = 1;
  EnvConfig env;
  std::vector<PolicySpec> policies;
};

/// Named presets "flipping", "switching", "trace"; throws ConfigError otherwise.
ExperimentConfig preset_config(std::string_view name);
const std::vector<std::string>& preset_names();

/// A `key = value` assignment. Keys are top-level names (T, trials, ...),
/// `env.<key>`, `policy.<kind>.<key>`, or a bare detector key (epsilon, M,
/// h, alpha, xi) that applies to every listed policy accepting it.
using Override = std::pair<std::string, std::string>;

/// Parses the INI-like config text, then applies `overrides` in order, then
/// validates. Throws ConfigError listing every violation found.
ExperimentConfig parse_config(std::string_view text, const std::vector<Override>& overrides = {});

/// Applies overrides to an existing config without validating.
void apply_overrides(ExperimentConfig& config, const std::vector<Override>& overrides,
                     std::vector<std::string>& violations);

/// Throws ConfigError listing every violation.
void validate_config(const ExperimentConfig& config);

/// Renders a config that parse_config reads back to an equal value. Runtime
/// settings (workers, output) are left out when `include_runtime` is false.
std::string render_config(const ExperimentConfig& config, bool include_runtime = true);

/// The schedule for trial `trial`; the same for every trial unless the
/// switching environment resamples.
MeanSchedule build_environment(const ExperimentConfig& config, std::int64_t trial = 0);

bool operator==(const EnvConfig& a, const EnvConfig& b);
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace cdbandit
