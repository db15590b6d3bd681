#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "cdbandit/rng.hpp"

namespace cdbandit {

/// A piecewise-constant block of expected rewards starting at slot `start`.
struct Segment {
  std::int64_t start;
  Eigen::VectorXd means;
};

/// Ground-truth expected reward of every arm at every slot 1..T.
///
/// Stored as one column of means per segment. Immutable once built, so a
/// schedule can be shared freely between concurrent trials.
class MeanSchedule {
 public:
  /// Validates the segments; throws std::invalid_argument naming the first
  /// offending segment.
  MeanSchedule(int num_arms, std::int64_t horizon, const std::vector<Segment>& segments);

  int num_arms() const noexcept { return static_cast<int>(means_.rows()); }
  std::int64_t horizon() const noexcept { return horizon_; }
  std::size_t num_segments() const noexcept { return starts_.size(); }

  std::int64_t segment_start(std::size_t s) const { return starts_.at(s); }
  /// Last slot covered by segment `s` (inclusive).
  std::int64_t segment_end(std::size_t s) const {
    return s + 1 < starts_.size() ? starts_[s + 1] - 1 : horizon_;
  }
  auto segment_means(std::size_t s) const { return means_.col(static_cast<Eigen::Index>(s)); }
  double segment_best(std::size_t s) const { return best_[static_cast<Eigen::Index>(s)]; }
  const Eigen::MatrixXd& means() const noexcept { return means_; }

  /// Segment covering slot t; throws std::out_of_range outside [1, T].
  std::size_t segment_index(std::int64_t t) const;
  double mean_at(std::int64_t t, int arm) const;
  /// mu_t(*).
  double best_mean_at(std::int64_t t) const { return segment_best(segment_index(t)); }
  /// Lowest-index arm attaining mu_t(*).
  int best_arm_at(std::int64_t t) const;

  std::vector<Segment> segments() const;

 private:
  std::int64_t horizon_;
  std::vector<std::int64_t> starts_;
  Eigen::MatrixXd means_;  // K x S
  Eigen::VectorXd best_;   // S
};

/// Structural quantities of a schedule.
struct EnvSummary {
  std::int64_t gamma_T = 0;
  /// Per arm: min gap to the best arm over slots where it is not a best arm;
  /// +inf if the arm is always a best arm.
  Eigen::VectorXd per_arm_delta;
  /// Minimal nonzero distance from mu +- epsilon to the 1/M grid; empty when
  /// every distance is zero.
  std::optional<double> lambda;
};

/// Two arms; arm 0 fixed at 0.5, arm 1 at 0.8 except 0.5 - delta on the
/// window [max(2, ceil(T/3)), floor(2T/3)]. Always exactly two breakpoints.
MeanSchedule flipping_env(std::int64_t horizon, double delta);

/// Each arm's mean starts at U[0,1] and, at every slot, is redrawn from
/// U[0,1] with probability `beta`.
MeanSchedule switching_env(int num_arms, std::int64_t horizon, double beta, Rng& rng);

MeanSchedule from_segments(int num_arms, std::int64_t horizon, const std::vector<Segment>& segments);

/// Trace format: header `t,arm_1,...,arm_K`, then one row per bin with the
/// bin's start slot and K means. The last bin extends to `horizon`.
/// Throws ParseError (with line number) on malformed content.
MeanSchedule read_trace(std::istream& in, std::int64_t horizon);
/// Throws IoError if the file cannot be opened.
MeanSchedule load_trace(const std::filesystem::path& path, std::int64_t horizon);
void write_trace(std::ostream& out, const MeanSchedule& schedule);
void save_trace(const std::filesystem::path& path, const MeanSchedule& schedule);

/// Bernoulli draw with success probability mean_at(t, arm).
double sample_reward(const MeanSchedule& schedule, std::int64_t t, int arm, Rng& rng);

/// Number of slots t < T with max_i |mu_t(i) - mu_{t+1}(i)| > threshold.
std::int64_t count_breakpoints(const MeanSchedule& schedule, double threshold = 0.0);

EnvSummary summarize(const MeanSchedule& schedule, double epsilon, int M);

/// Tolerance below which a distance to the 1/M grid counts as exactly zero.
inline constexpr double kGridSnapTolerance = 1e-9;

}  // namespace cdbandit
