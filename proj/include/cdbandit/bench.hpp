#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdbandit/env.hpp"
#include "cdbandit/policy.hpp"

namespace cdbandit {

/// Cumulative pseudo-regret of one policy over `trials` runs.
struct RegretTrace {
  std::string policy;
  std::int64_t horizon = 0;
  std::int64_t trials = 0;
  /// Mean cumulative regret at t = 1..T (entry t-1).
  Eigen::VectorXd mean;
  /// Standard error of the mean at each slot (0 for a single trial).
  Eigen::VectorXd se;
  /// T x R cumulative regret of every trial, if requested.
  std::optional<Eigen::MatrixXd> per_trial;
  /// Final regret of each trial.
  Eigen::VectorXd final_regret;
  /// K x R count of plays of a strictly suboptimal arm.
  Eigen::MatrixXd suboptimal_plays;
  /// Restarts (alarms or resets) reported by the policy in each trial.
  Eigen::VectorXd restarts;
};

struct RunOptions {
  std::int64_t trials = 1;
  std::uint64_t base_seed = 0;
  int workers = 1;
  bool keep_trials = false;
};

using PolicyFactory = std::function<std::unique_ptr<Policy>()>;
/// Environment for trial r; every returned schedule must share K and T.
using ScheduleSampler = std::function<MeanSchedule(std::int64_t trial)>;

/// mu_t(*) - mu_t(arm).
double pseudo_regret_increment(const MeanSchedule& schedule, std::int64_t t, int arm);

/// Rolls a fresh policy against the schedule for every trial.
///
/// Trial r draws rewards from RewardTape(derive_seed(base_seed, r)), shared by
/// all policies, and gives the policy Rng(derive_seed(base_seed, r,
/// fnv1a64(name))). Trials are reduced in index order, so the result is
/// bitwise independent of `workers`.
RegretTrace run_experiment(const MeanSchedule& schedule, const std::string& name,
                           const PolicyFactory& factory, const RunOptions& options);

/// Builds policies with make_policy; the context is derived from the schedule.
/// Throws ConfigError if the spec is invalid.
RegretTrace run_experiment(const MeanSchedule& schedule, const PolicySpec& spec, const RunOptions& options);

/// As above, but trial r runs against its own schedule `sampler(r)` and the
/// policy is tuned with that schedule's context. Regret is still measured
/// against each trial's own ground truth.
RegretTrace run_experiment(const ScheduleSampler& sampler, const PolicySpec& spec, const RunOptions& options);

// ---------------------------------------------------------------------------
// Power-law fit

struct FitResult {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double residual_norm = 0.0;
  bool converged = false;
  /// The power term carries no information (flat data) or b sits on a bracket edge.
  bool degenerate = false;
  int iterations = 0;
};

inline constexpr double kFitMinExponent = 1e-3;
inline constexpr double kFitMaxExponent = 5.0;
inline constexpr Eigen::Index kFitMaxPoints = 2000;
inline constexpr Eigen::Index kFitSubsampleAbove = 100000;

/// Least-squares fit of y ~ a t^b + c by Levenberg-Marquardt, started from
/// b in {0.1, ..., 1.0} with (a, c) solved linearly for each start. Requires
/// at least 8 finite points and t > 0; throws std::invalid_argument otherwise.
FitResult fit_power_law(const Eigen::VectorXd& t, const Eigen::VectorXd& y);

/// Fits a series indexed by t = 1..n. Series longer than 1e5 are first
/// subsampled at up to 2000 log-spaced slots.
template <class Derived>
FitResult fit_power_law(const Eigen::DenseBase<Derived>& series);

/// Log-spaced distinct 1-based slots covering [1, n], at most `points` of them.
std::vector<Eigen::Index> log_spaced_slots(Eigen::Index n, Eigen::Index points);

template <class Derived>
FitResult fit_power_law(const Eigen::DenseBase<Derived>& series) {
  const Eigen::VectorXd y = series.derived().template cast<double>().reshaped();
  const Eigen::Index n = y.size();
  if (n > kFitSubsampleAbove) {
    const auto slots = log_spaced_slots(n, kFitMaxPoints);
    Eigen::VectorXd ts(static_cast<Eigen::Index>(slots.size()));
    Eigen::VectorXd ys(ts.size());
    for (Eigen::Index i = 0; i < ts.size(); ++i) {
      const auto s = slots[static_cast<std::size_t>(i)];
      ts[i] = static_cast<double>(s);
      ys[i] = y[s - 1];
    }
    return fit_power_law(ts, ys);
  }
  return fit_power_law(Eigen::VectorXd::LinSpaced(n, 1.0, static_cast<double>(n)), y);
}

// ---------------------------------------------------------------------------
// Comparison

struct ComparisonRow {
  std::string policy;
  double final_mean = 0.0;
  double final_se = 0.0;
  std::optional<FitResult> fit;
  /// final_mean / final_mean of policy j; empty on the diagonal.
  std::vector<std::optional<double>> ratios;
};

struct ComparisonTable {
  std::int64_t horizon = 0;
  std::vector<ComparisonRow> rows;
};

/// Throws std::invalid_argument if the traces do not share a horizon.
ComparisonTable compare(const std::vector<RegretTrace>& traces);

/// CSV: policy,final_mean,final_se,a,b,c,fit_converged,fit_degenerate,
/// then one ratio_<policy> column per row (blank on the diagonal).
void write_comparison(std::ostream& out, const ComparisonTable& table);

}  // namespace cdbandit
