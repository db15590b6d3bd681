#pragma once

#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace cdbandit {

/// Detector parameters: drift tolerance epsilon in (0, 0.5), burn-in length
/// M >= 1 and alarm threshold h >= 0 (h = +inf never alarms).
struct DetectorParams {
  double epsilon = 0.1;
  int M = 100;
  double h = std::numeric_limits<double>::infinity();

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

/// Anything CD-UCB can drive: consumes one observation, reports an alarm, and
/// can be reset to its initial state by the caller.
template <class D>
concept ChangeDetector = requires(D d, const D cd, double y) {
  { d.step(y) } -> std::same_as<bool>;
  d.reset();
  { cd.samples() } -> std::convertible_to<std::int64_t>;
};

/// Two-sided CUSUM with a burn-in estimate of the pre-change mean.
///
/// The first M samples only accumulate the reference mean u0_hat, which is
/// then frozen until reset. Afterwards
///
///   s+ = y - u0_hat - eps,   s- = u0_hat - y - eps,
///   g+ = max(0, g+ + s+),    g- = max(0, g- + s-),
///
/// and an alarm is raised while either walk is >= h. The detector never resets
/// itself; the caller owns that decision.
///
/// The deviation y - u0_hat is evaluated as (M*y - sum)/M so that feeding the
/// complemented stream 1 - y negates it exactly (bitwise) whenever the inputs
/// are exactly representable, e.g. Bernoulli rewards.
class CusumDetector {
 public:
  explicit CusumDetector(DetectorParams params);

  /// A detector whose burn-in is already complete with the given reference
  /// mean. Used to evaluate behaviour conditional on u0_hat.
  static CusumDetector with_reference(DetectorParams params, double u0_hat);

  /// Throws std::domain_error if y is outside [0,1].
  bool step(double y);
  void reset();

  const DetectorParams& params() const noexcept { return params_; }
  std::int64_t samples() const noexcept { return k_; }
  bool in_burn_in() const noexcept { return k_ < params_.M; }
  std::optional<double> reference_mean() const;
  double burn_in_sum() const noexcept { return burnin_sum_; }
  double g_plus() const noexcept { return g_plus_; }
  double g_minus() const noexcept { return g_minus_; }

 private:
  DetectorParams params_;
  std::int64_t k_ = 0;
  double burnin_sum_ = 0.0;
  double g_plus_ = 0.0;
  double g_minus_ = 0.0;
};

/// Page-Hinkley variant: the reference is the running mean of all samples
/// since reset, including the current one. No burn-in by default; with
/// `gate_burn_in` the walks stay at zero for the first M samples.
class PhtDetector {
 public:
  explicit PhtDetector(DetectorParams params, bool gate_burn_in = false);

  bool step(double y);
  void reset();

  const DetectorParams& params() const noexcept { return params_; }
  bool gates_burn_in() const noexcept { return gate_; }
  std::int64_t samples() const noexcept { return k_; }
  /// Running mean y_hat_k; 0 before the first sample.
  double running_mean() const noexcept { return k_ ? sum_ / static_cast<double>(k_) : 0.0; }
  double g_plus() const noexcept { return g_plus_; }
  double g_minus() const noexcept { return g_minus_; }

 private:
  DetectorParams params_;
  bool gate_;
  std::int64_t k_ = 0;
  double sum_ = 0.0;
  double g_plus_ = 0.0;
  double g_minus_ = 0.0;
};

static_assert(ChangeDetector<CusumDetector>);
static_assert(ChangeDetector<PhtDetector>);

// ---------------------------------------------------------------------------
// Bound calculators

/// C1- and C1+, each evaluated as log1p of a binomial-times-power term that is
/// assembled in log space. For large M the constants fall below the double
/// range; `log_minus`/`log_plus` (natural logs of C1-/C1+) stay exact and
/// `minus`/`plus` then underflow to 0.
struct C1Parts {
  double minus;
  double plus;
  double log_minus;
  double log_plus;
  double value() const noexcept { return log_minus < log_plus ? minus : plus; }
  double log_value() const noexcept { return log_minus < log_plus ? log_minus : log_plus; }
};

struct Theorem3Constants {
  double c1;
  double c2;
  C1Parts c1_parts;
};

C1Parts theorem3_c1(double epsilon, int M);
/// log 3 + 2 exp(-2 eps^2 M) / lambda.
double theorem3_c2(double epsilon, int M, double lambda);
/// Throws std::domain_error("lambda undefined") when `lambda` is empty.
Theorem3Constants theorem3_constants(double epsilon, int M, std::optional<double> lambda);

/// Expected detection delay bound C2 (h + 1).
double theorem3_delay_bound(double c2, double h);
/// Expected false alarms up to T: 2T / ((1 - 2 exp(-2 eps^2 M)) exp(C1 h)).
/// +inf when the leading factor is non-positive (bound vacuous).
double theorem3_false_alarm_bound(double c1, double epsilon, int M, double h, std::int64_t T);
double theorem3_false_alarm_bound(const C1Parts& c1, double epsilon, int M, double h, std::int64_t T);

struct TunedParams {
  double h;
  double alpha_raw;
  double alpha;          ///< alpha_raw clamped to [0, 1)
  bool alpha_clamped;
};

/// h = log(T/gamma)/C1,  alpha = K sqrt(C2 gamma / (C1 T) * log(T/gamma)).
TunedParams tuned_params(std::int64_t T, std::int64_t gamma_T, int K, double c1, double c2);
/// Same, from log C1; h is +inf when C1 is below the double range.
TunedParams tuned_params(std::int64_t T, std::int64_t gamma_T, int K, const C1Parts& c1, double c2);

/// Log-moment-generating functions of the CUSUM steps for a Bernoulli(u0)
/// stream with reference u0_hat. Lambda-(r) = log(u0 e^-r + 1 - u0) + r (u0_hat - eps),
/// Lambda+(r) = log(u0 e^r + 1 - u0) - r (u0_hat + eps).
double log_mgf_lower(double r, double u0, double u0_hat, double epsilon);
double log_mgf_upper(double r, double u0, double u0_hat, double epsilon);

struct MgfRoots {
  double r_minus;      ///< nonzero root of Lambda-
  double r_plus;       ///< nonzero root of Lambda+
  double r_hat_minus;  ///< minimiser of Lambda- (closed form)
  double r_hat_plus;   ///< minimiser of Lambda+ (closed form)
  double r() const noexcept { return r_minus < r_plus ? r_minus : r_plus; }
};

/// Requires u0 in (2 eps, 1 - 2 eps) and |u0_hat - u0| < eps; throws
/// std::domain_error otherwise. Roots are bracketed and bisected to 1e-12.
MgfRoots compute_mgf_roots(double u0, double u0_hat, double epsilon);

enum class Prop1Branch {
  conditional,   ///< |u0_hat - u0| < eps: delay and false alarm bounds
  misestimated,  ///< |u0_hat - u0| > eps: bound on the slots until restart
};

struct Prop1Bounds {
  Prop1Branch branch;
  /// (h+1)/(|u1 - u0_hat| - eps) or, when misestimated, (h+1)/(|u0_hat - u0| - eps).
  double delay_bound;
  /// 2T / exp(r h); empty when misestimated or the MGF roots are undefined.
  std::optional<double> false_alarm_bound;
};

Prop1Bounds prop1_bounds(double u0_hat, double u0, double u1, double epsilon, double h, std::int64_t T);

// ---------------------------------------------------------------------------
// Monte-Carlo detection metrics

enum class DetectorKind { cusum, pht };

struct DetectionSetup {
  DetectorKind kind = DetectorKind::cusum;
  DetectorParams params;
  bool pht_gate_burn_in = false;
  /// CUSUM only: skip burn-in and use this reference mean (conditioning on
  /// u0_hat).
  std::optional<double> pinned_reference;
};

struct TrialDetection {
  bool detected = false;
  /// Alarm slot minus max(change slot, first post-burn-in slot); censored at
  /// T - change slot for misses.
  std::int64_t delay = 0;
  std::int64_t false_alarms = 0;
  /// CUSUM reference mean in force when the post-change run ended (NaN for PHT).
  double reference = 0.0;
};

struct DetectionMetrics {
  double mean_delay = 0.0;           ///< over detected trials (NaN if none)
  double delay_se = 0.0;
  double censored_mean_delay = 0.0;  ///< misses counted as T - change slot
  std::int64_t misses = 0;
  double false_alarms = 0.0;         ///< mean count of alarms before the change
  std::int64_t trials = 0;
  std::vector<TrialDetection> per_trial;
};

/// Runs `trials` independent Bernoulli streams (pre_mean before `change_slot`,
/// post_mean from it on) through a fresh detector. Alarms before the change
/// are false alarms, each followed by a reset; the first alarm at or after the
/// change ends the trial. When pre_mean == post_mean the whole horizon is
/// pre-change. Trial r uses derive_seed(seed, r); results do not depend on
/// `workers`.
DetectionMetrics estimate_detection_metrics(const DetectionSetup& setup, double pre_mean,
                                            double post_mean, std::int64_t change_slot,
                                            std::int64_t T, std::int64_t trials,
                                            std::uint64_t seed, int workers = 1);

}  // namespace cdbandit
