#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cdbandit/config.hpp"
#include "cdbandit/detect.hpp"

namespace cdbandit {

/// Process exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitIo = 2 };

/// Environment variable naming the default output directory of `run`.
inline constexpr const char* kOutputDirEnv = "CDBANDIT_OUTPUT_DIR";
inline constexpr const char* kDefaultOutputDir = "cdbandit-out";

struct RunArgs {
  std::string config_path;  ///< optional config file
  std::vector<Override> overrides;
  bool dry_run = false;
};

/// Runs every configured policy and writes, into the output directory:
/// config.ini, <policy>.trace.csv, comparison.csv and summary.txt. The files
/// depend only on the config and seed (not on workers or output path).
int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err);

struct DetectEvalArgs {
  DetectorKind kind = DetectorKind::cusum;
  DetectorParams params{0.1, 100, 50.0};
  bool gate_burn_in = false;
  double pre_mean = 0.5;
  double post_mean = 0.8;
  /// Defaults to M + 1, so the burn-in sees only pre-change samples.
  std::optional<std::int64_t> change_slot;
  std::int64_t T = 100000;
  std::int64_t trials = 500;
  std::uint64_t seed = 1;
  int workers = 1;
  /// Overrides the lambda computed from {pre_mean, post_mean}.
  std::optional<double> lambda;
  std::int64_t gamma_T = 2;
  int arms = 2;
};

/// Prints empirical delay / false alarms beside the bound values, as
/// `key = value` lines.
int cmd_detect_eval(const DetectEvalArgs& args, std::ostream& out, std::ostream& err);

struct ConstantsArgs {
  double epsilon = 0.1;
  int M = 100;
  std::optional<double> lambda;
  /// Means to derive lambda from when `lambda` is not given.
  std::vector<double> means;
  std::optional<std::int64_t> T;
  std::int64_t gamma_T = 1;
  int arms = 2;
  std::optional<double> u0;
  std::optional<double> u0_hat;
};

int cmd_constants(const ConstantsArgs& args, std::ostream& out, std::ostream& err);

struct FitArgs {
  std::string input;  ///< trace CSV (t,mean_regret[,se]) or one value per line
};

int cmd_fit(const FitArgs& args, std::ostream& out, std::ostream& err);

struct TraceValidateArgs {
  std::string path;
  std::int64_t T = 0;
  double epsilon = 0.005;
  int M = 100;
  double threshold = 0.0;
};

int cmd_trace_validate(const TraceValidateArgs& args, std::ostream& out, std::ostream& err);

}  // namespace cdbandit
