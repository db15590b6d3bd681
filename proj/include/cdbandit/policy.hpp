#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cdbandit/detect.hpp"
#include "cdbandit/env.hpp"
#include "cdbandit/rng.hpp"

namespace cdbandit {

/// A bandit policy driven slot by slot: select(t) then update(arm, reward, t).
/// Arms are 0-based, slots 1-based. Instances are single-threaded state.
class Policy {
 public:
  virtual ~Policy() = default;

  /// Stable name used in result tables and seed derivation.
  virtual std::string_view name() const = 0;
  virtual int num_arms() const = 0;
  virtual int select(std::int64_t t, Rng& rng) = 0;
  /// Returns true if the observation triggered a restart (change alarm or
  /// drift reset).
  virtual bool update(int arm, double reward, std::int64_t t) = 0;
};

/// First index of the maximum (lowest-index tie-break).
inline int argmax_first(std::span<const double> values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

struct CdUcbParams {
  double alpha = 0.0;  ///< uniform-exploration probability, [0, 1)
  double xi = 1.0;     ///< confidence padding scale, > 0
  int countdown = 0;   ///< forced plays after every restart (and at start)

  void validate() const;
};

/// Change-detection UCB: per-arm UCB statistics counted since the arm's last
/// restart, one detector per arm, and optional forced plays after a restart.
///
/// Selection: any arm with a pending countdown (lowest index first), else with
/// probability alpha a uniform arm, else argmax of
///   mean_i + sqrt(xi log n / N_i),   n = sum_i N_i,
/// with unplayed arms at +inf.
template <ChangeDetector Detector>
class CdUcb final : public Policy {
 public:
  CdUcb(int num_arms, CdUcbParams params, const Detector& prototype, std::string name)
      : params_(params),
        name_(std::move(name)),
        counts_(static_cast<std::size_t>(num_arms), 0),
        sums_(static_cast<std::size_t>(num_arms), 0.0),
        restart_slots_(static_cast<std::size_t>(num_arms), 1),
        countdown_(static_cast<std::size_t>(num_arms), params.countdown),
        detectors_(static_cast<std::size_t>(num_arms), prototype),
        indices_(static_cast<std::size_t>(num_arms)) {
    if (num_arms < 1) throw std::invalid_argument("CD-UCB needs at least one arm");
    params_.validate();
  }

  std::string_view name() const override { return name_; }
  int num_arms() const override { return static_cast<int>(counts_.size()); }

  double ucb_index(int arm) const { return index_given_log(arm, std::log(static_cast<double>(total_))); }

  int select(std::int64_t, Rng& rng) override {
    for (std::size_t i = 0; i < countdown_.size(); ++i) {
      if (countdown_[i] > 0) {
        --countdown_[i];
        return static_cast<int>(i);
      }
    }
    if (params_.alpha > 0.0 && uniform01(rng) < params_.alpha) return uniform_index(rng, num_arms());
    const double log_total = std::log(static_cast<double>(total_));
    for (int i = 0; i < num_arms(); ++i) indices_[static_cast<std::size_t>(i)] = index_given_log(i, log_total);
    return argmax_first(indices_);
  }

  bool update(int arm, double reward, std::int64_t t) override {
    const auto a = static_cast<std::size_t>(arm);
    ++counts_[a];
    ++total_;
    sums_[a] += reward;
    if (!detectors_[a].step(reward)) return false;
    restart_arm(arm, t);
    return true;
  }

  /// Alarm handling for `arm` observed at slot t: restart time t+1, statistics
  /// zeroed, detector reset, countdown re-armed. Other arms are untouched.
  void restart_arm(int arm, std::int64_t t) {
    const auto a = static_cast<std::size_t>(arm);
    total_ -= counts_[a];
    counts_[a] = 0;
    sums_[a] = 0.0;
    restart_slots_[a] = t + 1;
    countdown_[a] = params_.countdown;
    detectors_[a].reset();
    ++alarms_;
  }

  const CdUcbParams& params() const noexcept { return params_; }
  std::int64_t count(int arm) const { return counts_.at(static_cast<std::size_t>(arm)); }
  double reward_sum(int arm) const { return sums_.at(static_cast<std::size_t>(arm)); }
  std::int64_t total_count() const noexcept { return total_; }
  std::int64_t restart_slot(int arm) const { return restart_slots_.at(static_cast<std::size_t>(arm)); }
  int countdown(int arm) const { return countdown_.at(static_cast<std::size_t>(arm)); }
  const Detector& detector(int arm) const { return detectors_.at(static_cast<std::size_t>(arm)); }
  std::int64_t alarms() const noexcept { return alarms_; }

 private:
  double index_given_log(int arm, double log_total) const {
    const auto a = static_cast<std::size_t>(arm);
    if (counts_[a] == 0) return std::numeric_limits<double>::infinity();
    const double n = static_cast<double>(counts_[a]);
    return sums_[a] / n + std::sqrt(params_.xi * log_total / n);
  }

  CdUcbParams params_;
  std::string name_;
  std::vector<std::int64_t> counts_;
  std::vector<double> sums_;
  std::vector<std::int64_t> restart_slots_;
  std::vector<int> countdown_;
  std::vector<Detector> detectors_;
  std::vector<double> indices_;
  std::int64_t total_ = 0;
  std::int64_t alarms_ = 0;
};

using CusumUcb = CdUcb<CusumDetector>;
using PhtUcb = CdUcb<PhtDetector>;

// ---------------------------------------------------------------------------
// Baselines

/// Discounted UCB: statistics decay by `discount` every slot; padding
/// 2 sqrt(xi log n(g) / N(g, i)) with n(g) the total discounted count.
class DiscountedUcb final : public Policy {
 public:
  DiscountedUcb(int num_arms, double discount, double xi);
  std::string_view name() const override { return "d-ucb"; }
  int num_arms() const override { return static_cast<int>(counts_.size()); }
  int select(std::int64_t t, Rng& rng) override;
  bool update(int arm, double reward, std::int64_t t) override;

  double discount() const noexcept { return discount_; }
  const Eigen::ArrayXd& discounted_counts() const noexcept { return counts_; }

 private:
  double discount_;
  double xi_;
  Eigen::ArrayXd counts_;
  Eigen::ArrayXd sums_;
  std::vector<double> indices_;
};

/// Sliding-window UCB over the last `window` plays; padding
/// sqrt(xi log n_w / N_w(i)) with n_w = min(plays, window).
class SlidingWindowUcb final : public Policy {
 public:
  SlidingWindowUcb(int num_arms, std::int64_t window, double xi);
  std::string_view name() const override { return "sw-ucb"; }
  int num_arms() const override { return static_cast<int>(counts_.size()); }
  int select(std::int64_t t, Rng& rng) override;
  bool update(int arm, double reward, std::int64_t t) override;

  std::int64_t window() const noexcept { return window_; }
  std::size_t buffered() const noexcept { return size_; }

 private:
  std::int64_t window_;
  double xi_;
  std::vector<std::int64_t> counts_;
  std::vector<double> sums_;
  std::vector<std::pair<int, double>> ring_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  std::vector<double> indices_;
};

/// Exp3.S: p = (1 - explore) w + explore/K; w_i *= exp(eta * x_hat_i) then a
/// fixed share e*share/K of the total weight is added to every arm. Weights
/// live in log domain and are renormalised to sum to one every slot.
class Exp3S final : public Policy {
 public:
  Exp3S(int num_arms, double explore, double eta, double share);
  std::string_view name() const override { return "exp3s"; }
  int num_arms() const override { return static_cast<int>(log_weights_.size()); }
  int select(std::int64_t t, Rng& rng) override;
  bool update(int arm, double reward, std::int64_t t) override;

  Eigen::VectorXd probabilities() const;
  /// Normalised weights.
  Eigen::VectorXd weights() const { return log_weights_.array().exp().matrix(); }

 private:
  double explore_;
  double eta_;
  double share_;
  Eigen::VectorXd log_weights_;
  Eigen::VectorXd probs_;
};

/// Rexp3: Exp3 with exploration rate `explore` restarted every `batch` slots.
/// Weights are kept in log domain.
class Rexp3 final : public Policy {
 public:
  Rexp3(int num_arms, std::int64_t batch, double explore);
  std::string_view name() const override { return "rexp3"; }
  int num_arms() const override { return static_cast<int>(log_weights_.size()); }
  int select(std::int64_t t, Rng& rng) override;
  bool update(int arm, double reward, std::int64_t t) override;

  Eigen::VectorXd probabilities() const;
  std::int64_t batch() const noexcept { return batch_; }

 private:
  std::int64_t batch_;
  double explore_;
  Eigen::VectorXd log_weights_;
  Eigen::VectorXd probs_;
};

/// Exp3.R: Exp3 plus a drift test run every `interval` slots on the rewards of
/// uniform-exploration pulls. When every arm has at least half of its expected
/// explore*interval/K such samples and some arm's empirical mean exceeds that
/// of the arm Exp3 currently favours by 2 eps,
/// eps = sqrt(K log(1/delta) / (2 explore interval)), the weights are reset.
class Exp3R final : public Policy {
 public:
  Exp3R(int num_arms, double explore, std::int64_t interval, double delta);
  std::string_view name() const override { return "exp3r"; }
  int num_arms() const override { return static_cast<int>(log_weights_.size()); }
  int select(std::int64_t t, Rng& rng) override;
  bool update(int arm, double reward, std::int64_t t) override;

  Eigen::VectorXd probabilities() const;
  double drift_threshold() const noexcept { return drift_eps_; }
  std::int64_t resets() const noexcept { return resets_; }

 private:
  double explore_;
  std::int64_t interval_;
  double drift_eps_;
  Eigen::VectorXd log_weights_;
  Eigen::VectorXd probs_;
  Eigen::ArrayXd explore_sums_;
  Eigen::ArrayXd explore_counts_;
  bool last_explored_ = false;
  std::int64_t resets_ = 0;
};

/// Plays a best arm of the true schedule at every slot.
class OraclePolicy final : public Policy {
 public:
  explicit OraclePolicy(std::shared_ptr<const MeanSchedule> schedule);
  std::string_view name() const override { return "oracle"; }
  int num_arms() const override { return schedule_->num_arms(); }
  int select(std::int64_t t, Rng& rng) override;
  bool update(int, double, std::int64_t) override { return false; }

 private:
  std::shared_ptr<const MeanSchedule> schedule_;
  std::size_t segment_ = 0;
  Eigen::VectorXi best_arms_;
};

/// Always plays the same arm.
class FixedArmPolicy final : public Policy {
 public:
  FixedArmPolicy(int num_arms, int arm);
  std::string_view name() const override { return "fixed"; }
  int num_arms() const override { return num_arms_; }
  int select(std::int64_t, Rng&) override { return arm_; }
  bool update(int, double, std::int64_t) override { return false; }

 private:
  int num_arms_;
  int arm_;
};

// ---------------------------------------------------------------------------
// Factory

/// Policy kind plus named numeric parameters, e.g.
/// {"cusum-ucb", {{"epsilon", 0.1}, {"M", 100}, {"h", 50}, {"alpha", 0.001}}}.
struct PolicySpec {
  std::string kind;
  std::map<std::string, double> params;

  bool operator==(const PolicySpec&) const = default;
};

/// What the factory may know about the environment: baselines are tuned with
/// knowledge of T and the number of breakpoints.
struct PolicyContext {
  int num_arms = 0;
  std::int64_t horizon = 0;
  std::int64_t breakpoints = 0;
  /// Sum over slots of max_i |mu_t(i) - mu_{t+1}(i)| (Rexp3 tuning).
  double variation = 0.0;
  /// Required by "oracle" only.
  std::shared_ptr<const MeanSchedule> schedule;
};

PolicyContext make_context(std::shared_ptr<const MeanSchedule> schedule);

/// Known kinds: cusum-ucb, pht-ucb, ucb, d-ucb, sw-ucb, exp3s, rexp3, exp3r,
/// oracle, fixed.
const std::vector<std::string>& policy_kinds();
/// Parameter keys accepted by `kind`; throws ConfigError for unknown kinds.
const std::vector<std::string>& policy_keys(std::string_view kind);

/// Throws ConfigError naming an unknown kind, an unknown key, or a missing
/// required parameter.
std::unique_ptr<Policy> make_policy(const PolicySpec& spec, const PolicyContext& context);

/// Default baseline tuning from (K, T, breakpoints); see policy.cpp.
struct BaselineDefaults {
  double discount;
  std::int64_t window;
  double exp3s_explore;
  double exp3s_eta;
  double exp3s_share;
  std::int64_t rexp3_batch;
  double rexp3_explore;
  double exp3r_explore;
  std::int64_t exp3r_interval;
  double exp3r_delta;
};

BaselineDefaults baseline_defaults(int num_arms, std::int64_t horizon, std::int64_t breakpoints,
                                   double variation_budget);

}  // namespace cdbandit
