#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cdbandit/commands.hpp"

using namespace cdbandit;

namespace {

// Run-command flags that map one-to-one onto config keys.
struct FlagOverride {
  const char* flag;
  const char* key;
  const char* help;
};

const FlagOverride kRunFlags[] = {
    {"--preset", "preset", "Named preset: flipping, switching or trace"},
    {"--T", "T", "Horizon"},
    {"--trials", "trials", "Independent trials per policy"},
    {"--seed", "seed", "Base seed"},
    {"--workers", "workers", "Worker threads"},
    {"--output", "output", "Output directory (default: $CDBANDIT_OUTPUT_DIR or ./cdbandit-out)"},
    {"--trace-every", "trace_every", "Write every n-th slot to the trace files"},
    {"--policies", "policies", "Comma-separated policy kinds"},
    {"--env", "env.kind", "Environment kind"},
    {"--delta", "env.delta", "Flipping gap"},
    {"--arms", "env.arms", "Switching arm count"},
    {"--beta", "env.beta", "Switching hazard"},
    {"--gamma", "env.gamma", "Switching expected breakpoints (hazard gamma/T)"},
    {"--trace", "env.trace", "Trace file"},
    {"--env-seed", "env.seed", "Switching schedule seed"},
    {"--epsilon", "epsilon", "Detector drift tolerance for every detector policy"},
    {"--M", "M", "Burn-in length for every detector policy"},
    {"--h", "h", "Alarm threshold for every detector policy"},
    {"--alpha", "alpha", "Uniform exploration rate for every CD-UCB policy"},
    {"--xi", "xi", "UCB padding scale for every policy that has one"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Change-detection bandit simulator"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  app.set_version_flag("--version", "cdbandit 0.1.0");

  // run
  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment and write traces");
  run_cmd->add_option("--config", run.config_path, "Config file");
  std::vector<std::optional<std::string>> run_values(std::size(kRunFlags));
  for (std::size_t i = 0; i < std::size(kRunFlags); ++i) {
    run_cmd->add_option(kRunFlags[i].flag, run_values[i], kRunFlags[i].help);
  }
  std::vector<std::string> sets;
  run_cmd->add_option("--set", sets, "Override key=value (env.<k>, policy.<kind>.<k>, or top-level)");
  run_cmd->add_flag("--dry-run", run.dry_run, "Validate and print the resolved config");

  // detect-eval
  DetectEvalArgs de;
  std::string de_kind = "cusum";
  std::optional<std::int64_t> de_change;
  std::optional<double> de_lambda;
  auto* de_cmd = app.add_subcommand("detect-eval", "Monte-Carlo detector metrics beside the bounds");
  de_cmd->add_option("--detector", de_kind, "cusum or pht")->check(CLI::IsMember({"cusum", "pht"}));
  de_cmd->add_option("--epsilon", de.params.epsilon, "Drift tolerance");
  de_cmd->add_option("--M", de.params.M, "Burn-in length");
  de_cmd->add_option("--h", de.params.h, "Threshold (inf allowed)");
  de_cmd->add_flag("--gate-burn-in", de.gate_burn_in, "PHT: silence the first M samples");
  de_cmd->add_option("--pre", de.pre_mean, "Pre-change Bernoulli mean");
  de_cmd->add_option("--post", de.post_mean, "Post-change Bernoulli mean");
  de_cmd->add_option("--change", de_change, "Change slot (default M+1)");
  de_cmd->add_option("--T", de.T, "Horizon");
  de_cmd->add_option("--trials", de.trials, "Trials");
  de_cmd->add_option("--seed", de.seed, "Seed");
  de_cmd->add_option("--workers", de.workers, "Worker threads");
  de_cmd->add_option("--lambda", de_lambda, "Override lambda");
  de_cmd->add_option("--gamma", de.gamma_T, "Breakpoints for the tuned parameters");
  de_cmd->add_option("--arms", de.arms, "Arms for the tuned parameters");

  // constants
  ConstantsArgs ca;
  std::optional<double> ca_lambda, ca_u0, ca_u0_hat;
  std::optional<std::int64_t> ca_T;
  auto* ca_cmd = app.add_subcommand("constants", "Bound constants, tuned parameters and MGF roots");
  ca_cmd->add_option("--epsilon", ca.epsilon, "Drift tolerance");
  ca_cmd->add_option("--M", ca.M, "Burn-in length");
  ca_cmd->add_option("--lambda", ca_lambda, "Lambda");
  ca_cmd->add_option("--means", ca.means, "Arm means to derive lambda from")->delimiter(',');
  ca_cmd->add_option("--T", ca_T, "Horizon for the tuned parameters");
  ca_cmd->add_option("--gamma", ca.gamma_T, "Breakpoints for the tuned parameters");
  ca_cmd->add_option("--arms", ca.arms, "Arms for the tuned parameters");
  ca_cmd->add_option("--u0", ca_u0, "Pre-change mean for the MGF roots");
  ca_cmd->add_option("--u0-hat", ca_u0_hat, "Estimated pre-change mean (default u0)");

  // fit
  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a*t^b + c to a regret series");
  fit_cmd->add_option("input", fa.input, "Trace CSV or one value per line")->required();

  // trace-validate
  TraceValidateArgs tv;
  auto* tv_cmd = app.add_subcommand("trace-validate", "Check a trace file and print its structure");
  tv_cmd->add_option("trace", tv.path, "Trace file")->required();
  tv_cmd->add_option("--T", tv.T, "Horizon")->required();
  tv_cmd->add_option("--epsilon", tv.epsilon, "Drift tolerance for lambda");
  tv_cmd->add_option("--M", tv.M, "Burn-in length for lambda");
  tv_cmd->add_option("--threshold", tv.threshold, "Breakpoint threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  if (*run_cmd) {
    for (std::size_t i = 0; i < std::size(kRunFlags); ++i) {
      if (run_values[i]) run.overrides.emplace_back(kRunFlags[i].key, *run_values[i]);
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        std::cerr << "error: --set expects key=value, got '" << s << "'\n";
        return kExitValidation;
      }
      run.overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return cmd_run(run, std::cout, std::cerr);
  }
  if (*de_cmd) {
    de.kind = de_kind == "pht" ? DetectorKind::pht : DetectorKind::cusum;
    de.change_slot = de_change;
    de.lambda = de_lambda;
    return cmd_detect_eval(de, std::cout, std::cerr);
  }
  if (*ca_cmd) {
    ca.lambda = ca_lambda;
    ca.T = ca_T;
    ca.u0 = ca_u0;
    ca.u0_hat = ca_u0_hat;
    return cmd_constants(ca, std::cout, std::cerr);
  }
  if (*fit_cmd) return cmd_fit(fa, std::cout, std::cerr);
  return cmd_trace_validate(tv, std::cout, std::cerr);
}
