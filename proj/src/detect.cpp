#include "cdbandit/detect.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <type_traits>

#include "cdbandit/format.hpp"
#include "cdbandit/parallel.hpp"
#include "cdbandit/rng.hpp"

namespace cdbandit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kIntegralTolerance = 1e-9;

void check_observation(double y) {
  if (!(y >= 0.0 && y <= 1.0)) {
    throw std::domain_error("detector observation " + format_double(y) + " is outside [0,1]");
  }
}

/// log(1 + e^z) without overflow or loss of precision for tiny e^z.
double log1p_exp(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

/// log(log(1 + e^z)), accurate when log1p(e^z) underflows.
double log_log1p_exp(double z) {
  if (z > -30.0) return std::log(log1p_exp(z));
  const double u = std::exp(z);
  return z + std::log1p(-0.5 * u + u * u / 3.0);
}

/// log C(n, k) via log-gamma.
double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

void DetectorParams::validate() const {
  if (!(epsilon > 0.0 && epsilon < 0.5)) {
    throw std::invalid_argument("epsilon must lie in (0, 0.5), got " + format_double(epsilon));
  }
  if (M < 1) throw std::invalid_argument("M must be >= 1, got " + std::to_string(M));
  if (!(h >= 0.0)) throw std::invalid_argument("h must be >= 0, got " + format_double(h));
}

// ---------------------------------------------------------------------------

CusumDetector::CusumDetector(DetectorParams params) : params_(params) { params_.validate(); }

CusumDetector CusumDetector::with_reference(DetectorParams params, double u0_hat) {
  if (!(u0_hat >= 0.0 && u0_hat <= 1.0)) throw std::domain_error("reference mean must lie in [0,1]");
  CusumDetector d(params);
  d.k_ = params.M;
  d.burnin_sum_ = u0_hat * params.M;
  return d;
}

bool CusumDetector::step(double y) {
  check_observation(y);
  const double M = params_.M;
  ++k_;
  if (k_ <= params_.M) {
    burnin_sum_ += y;
    return false;
  }
  const double dev = (M * y - burnin_sum_) / M;
  g_plus_ = std::max(0.0, g_plus_ + (dev - params_.epsilon));
  g_minus_ = std::max(0.0, g_minus_ + (-dev - params_.epsilon));
  return g_plus_ >= params_.h || g_minus_ >= params_.h;
}

void CusumDetector::reset() {
  k_ = 0;
  burnin_sum_ = 0.0;
  g_plus_ = 0.0;
  g_minus_ = 0.0;
}

std::optional<double> CusumDetector::reference_mean() const {
  if (k_ < params_.M) return std::nullopt;
  return burnin_sum_ / params_.M;
}

PhtDetector::PhtDetector(DetectorParams params, bool gate_burn_in) : params_(params), gate_(gate_burn_in) {
  params_.validate();
}

bool PhtDetector::step(double y) {
  check_observation(y);
  ++k_;
  sum_ += y;
  if (gate_ && k_ <= params_.M) return false;
  const double k = static_cast<double>(k_);
  const double dev = (k * y - sum_) / k;
  g_plus_ = std::max(0.0, g_plus_ + (dev - params_.epsilon));
  g_minus_ = std::max(0.0, g_minus_ + (-dev - params_.epsilon));
  return g_plus_ >= params_.h || g_minus_ >= params_.h;
}

void PhtDetector::reset() {
  k_ = 0;
  sum_ = 0.0;
  g_plus_ = 0.0;
  g_minus_ = 0.0;
}

// ---------------------------------------------------------------------------

C1Parts theorem3_c1(double epsilon, int M) {
  DetectorParams{epsilon, M, 0.0}.validate();
  // 2 eps M is usually meant to be an integer; snap float noise before
  // taking floor/ceil.
  const double x = 2.0 * epsilon * M;
  const double nearest = std::round(x);
  const bool integral = std::abs(x - nearest) < kIntegralTolerance * std::max(1.0, x);
  const int k_floor = static_cast<int>(integral ? nearest : std::floor(x));
  const int k_ceil = static_cast<int>(integral ? nearest : std::ceil(x));

  const double log_power = M * std::log(2.0 * epsilon);
  const double log_minus =
      std::log(4.0 * epsilon) - 2.0 * std::log1p(-epsilon) + log_binomial(M, k_floor) + log_power;
  const double log_plus =
      std::log(4.0 * epsilon) - 2.0 * std::log1p(epsilon) + log_binomial(M, k_ceil) + log_power;
  return {log1p_exp(log_minus), log1p_exp(log_plus), log_log1p_exp(log_minus), log_log1p_exp(log_plus)};
}

double theorem3_c2(double epsilon, int M, double lambda) {
  DetectorParams{epsilon, M, 0.0}.validate();
  if (!(lambda > 0.0)) throw std::domain_error("lambda must be > 0");
  return std::log(3.0) + 2.0 * std::exp(-2.0 * epsilon * epsilon * M) / lambda;
}

Theorem3Constants theorem3_constants(double epsilon, int M, std::optional<double> lambda) {
  if (!lambda) throw std::domain_error("lambda undefined");
  const auto parts = theorem3_c1(epsilon, M);
  return {parts.value(), theorem3_c2(epsilon, M, *lambda), parts};
}

double theorem3_delay_bound(double c2, double h) { return c2 * (h + 1.0); }

namespace {

double false_alarm_bound_log(double log_c1, double epsilon, int M, double h, std::int64_t T) {
  const double lead = -std::expm1(std::log(2.0) - 2.0 * epsilon * epsilon * M);  // 1 - 2 e^{-2 eps^2 M}
  if (!(lead > 0.0)) return kInf;
  const double c1h = h > 0.0 ? std::exp(log_c1 + std::log(h)) : 0.0;
  return std::exp(std::log(2.0 * static_cast<double>(T)) - std::log(lead) - c1h);
}

TunedParams tuned_from_log(std::int64_t T, std::int64_t gamma_T, int K, double log_c1, double c2) {
  if (gamma_T < 1) throw std::invalid_argument("gamma_T must be >= 1");
  if (gamma_T >= T) throw std::invalid_argument("gamma_T must be < T");
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  if (!std::isfinite(log_c1) || !(c2 > 0.0)) throw std::invalid_argument("C1 and C2 must be > 0");

  const double log_ratio = std::log(static_cast<double>(T) / static_cast<double>(gamma_T));
  TunedParams out{};
  if (log_ratio <= 0.0) {
    out.h = 0.0;
    out.alpha_raw = 0.0;
  } else {
    out.h = std::exp(std::log(log_ratio) - log_c1);
    out.alpha_raw = K * std::exp(0.5 * (std::log(c2) + std::log(static_cast<double>(gamma_T)) - log_c1 -
                                        std::log(static_cast<double>(T)) + std::log(log_ratio)));
  }
  out.alpha_clamped = !(out.alpha_raw < 1.0);
  out.alpha = out.alpha_clamped ? std::nextafter(1.0, 0.0) : std::max(0.0, out.alpha_raw);
  return out;
}

}  // namespace

double theorem3_false_alarm_bound(double c1, double epsilon, int M, double h, std::int64_t T) {
  if (!(c1 > 0.0)) throw std::invalid_argument("C1 must be > 0");
  return false_alarm_bound_log(std::log(c1), epsilon, M, h, T);
}

double theorem3_false_alarm_bound(const C1Parts& c1, double epsilon, int M, double h, std::int64_t T) {
  return false_alarm_bound_log(c1.log_value(), epsilon, M, h, T);
}

TunedParams tuned_params(std::int64_t T, std::int64_t gamma_T, int K, double c1, double c2) {
  if (!(c1 > 0.0)) throw std::invalid_argument("C1 and C2 must be > 0");
  return tuned_from_log(T, gamma_T, K, std::log(c1), c2);
}

TunedParams tuned_params(std::int64_t T, std::int64_t gamma_T, int K, const C1Parts& c1, double c2) {
  return tuned_from_log(T, gamma_T, K, c1.log_value(), c2);
}

double log_mgf_lower(double r, double u0, double u0_hat, double epsilon) {
  return std::log1p(u0 * std::expm1(-r)) + r * (u0_hat - epsilon);
}

double log_mgf_upper(double r, double u0, double u0_hat, double epsilon) {
  return std::log1p(u0 * std::expm1(r)) - r * (u0_hat + epsilon);
}

namespace {

/// Nonzero root of a convex f with f(0) = 0 and f'(0) < 0.
template <class F>
double positive_root(F f) {
  double lo = 1e-9;
  double hi = 50.0;
  if (!(f(lo) < 0.0)) throw std::domain_error("log-MGF is not negative near 0");
  for (int i = 0; f(hi) <= 0.0; ++i) {
    if (i == 60) throw std::domain_error("log-MGF root bracket did not close");
    lo = hi;
    hi *= 2.0;
  }
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

MgfRoots compute_mgf_roots(double u0, double u0_hat, double epsilon) {
  if (!(epsilon > 0.0)) throw std::domain_error("epsilon must be > 0");
  if (!(u0 > 2.0 * epsilon && u0 < 1.0 - 2.0 * epsilon)) {
    throw std::domain_error("u0 must lie in (2 eps, 1 - 2 eps)");
  }
  if (!(std::abs(u0_hat - u0) < epsilon)) throw std::domain_error("|u0_hat - u0| must be < eps");

  MgfRoots out{};
  out.r_hat_minus = std::log((u0 / (u0_hat - epsilon) - u0) / (1.0 - u0));
  out.r_hat_plus = std::log((1.0 - u0) / (u0 / (u0_hat + epsilon) - u0));
  out.r_minus = positive_root([&](double r) { return log_mgf_lower(r, u0, u0_hat, epsilon); });
  out.r_plus = positive_root([&](double r) { return log_mgf_upper(r, u0, u0_hat, epsilon); });
  return out;
}

Prop1Bounds prop1_bounds(double u0_hat, double u0, double u1, double epsilon, double h, std::int64_t T) {
  if (!(epsilon > 0.0)) throw std::domain_error("epsilon must be > 0");
  if (!(h >= 0.0)) throw std::domain_error("h must be >= 0");
  const double misestimate = std::abs(u0_hat - u0);
  if (misestimate > epsilon) {
    return {Prop1Branch::misestimated, (h + 1.0) / (misestimate - epsilon), std::nullopt};
  }
  if (!(misestimate < epsilon)) throw std::domain_error("|u0_hat - u0| == eps: no bound applies");
  const double shift = std::abs(u1 - u0_hat);
  if (!(shift > epsilon)) throw std::domain_error("|u1 - u0_hat| must exceed eps");

  Prop1Bounds out{Prop1Branch::conditional, (h + 1.0) / (shift - epsilon), std::nullopt};
  if (u0 > 2.0 * epsilon && u0 < 1.0 - 2.0 * epsilon) {
    const double r = compute_mgf_roots(u0, u0_hat, epsilon).r();
    out.false_alarm_bound = 2.0 * static_cast<double>(T) * std::exp(-r * h);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

template <class Detector, class Fresh>
TrialDetection run_detection_trial(Fresh fresh, std::int64_t burn_in, double pre_mean, double post_mean,
                                   std::int64_t change_slot, std::int64_t T, Rng& rng) {
  const bool no_change = pre_mean == post_mean;
  TrialDetection out;
  out.reference = kNaN;
  Detector det = fresh();
  std::int64_t live_start = det.samples() >= burn_in ? 1 : burn_in + 1;

  for (std::int64_t t = 1; t <= T; ++t) {
    const bool before = no_change || t < change_slot;
    const double y = bernoulli(rng, before ? pre_mean : post_mean) ? 1.0 : 0.0;
    if (!det.step(y)) continue;
    if (before) {
      ++out.false_alarms;
      det = fresh();
      live_start = det.samples() >= burn_in ? t + 1 : t + burn_in + 1;
      continue;
    }
    out.detected = true;
    out.delay = t - std::max(change_slot, live_start);
    if constexpr (std::is_same_v<Detector, CusumDetector>) out.reference = det.reference_mean().value_or(kNaN);
    return out;
  }
  if (!no_change) {
    out.delay = T - change_slot;
    if constexpr (std::is_same_v<Detector, CusumDetector>) out.reference = det.reference_mean().value_or(kNaN);
  }
  return out;
}

}  // namespace

DetectionMetrics estimate_detection_metrics(const DetectionSetup& setup, double pre_mean, double post_mean,
                                            std::int64_t change_slot, std::int64_t T, std::int64_t trials,
                                            std::uint64_t seed, int workers) {
  setup.params.validate();
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (T < 1) throw std::invalid_argument("T must be >= 1");
  if (change_slot < 1 || change_slot > T) throw std::invalid_argument("change slot must lie in [1, T]");
  if (!(pre_mean >= 0.0 && pre_mean <= 1.0 && post_mean >= 0.0 && post_mean <= 1.0)) {
    throw std::invalid_argument("stream means must lie in [0,1]");
  }
  if (setup.pinned_reference && setup.kind != DetectorKind::cusum) {
    throw std::invalid_argument("a pinned reference mean applies to CUSUM only");
  }

  DetectionMetrics out;
  out.trials = trials;
  out.per_trial.resize(static_cast<std::size_t>(trials));

  parallel_for(0, trials, workers, [&](std::int64_t r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    auto& slot = out.per_trial[static_cast<std::size_t>(r)];
    if (setup.kind == DetectorKind::cusum) {
      auto fresh = [&] {
        return setup.pinned_reference ? CusumDetector::with_reference(setup.params, *setup.pinned_reference)
                                      : CusumDetector(setup.params);
      };
      slot = run_detection_trial<CusumDetector>(fresh, setup.params.M, pre_mean, post_mean, change_slot, T, rng);
    } else {
      auto fresh = [&] { return PhtDetector(setup.params, setup.pht_gate_burn_in); };
      const std::int64_t burn_in = setup.pht_gate_burn_in ? setup.params.M : 0;
      slot = run_detection_trial<PhtDetector>(fresh, burn_in, pre_mean, post_mean, change_slot, T, rng);
    }
  });

  const bool no_change = pre_mean == post_mean;
  double delay_sum = 0.0, delay_sq = 0.0, censored_sum = 0.0, fa_sum = 0.0;
  std::int64_t detected = 0;
  for (const auto& tr : out.per_trial) {
    fa_sum += static_cast<double>(tr.false_alarms);
    censored_sum += static_cast<double>(tr.delay);
    if (tr.detected) {
      ++detected;
      delay_sum += static_cast<double>(tr.delay);
      delay_sq += static_cast<double>(tr.delay) * static_cast<double>(tr.delay);
    }
  }
  out.false_alarms = fa_sum / static_cast<double>(trials);
  if (no_change) {
    out.mean_delay = out.delay_se = out.censored_mean_delay = kNaN;
    return out;
  }
  out.misses = trials - detected;
  out.censored_mean_delay = censored_sum / static_cast<double>(trials);
  if (detected == 0) {
    out.mean_delay = out.delay_se = kNaN;
  } else {
    const double n = static_cast<double>(detected);
    out.mean_delay = delay_sum / n;
    const double var = detected > 1 ? std::max(0.0, (delay_sq - n * out.mean_delay * out.mean_delay) / (n - 1.0)) : 0.0;
    out.delay_se = std::sqrt(var / n);
  }
  return out;
}

}  // namespace cdbandit
