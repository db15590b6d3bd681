#include "cdbandit/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cdbandit/errors.hpp"

namespace cdbandit {

void CdUcbParams::validate() const {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in [0, 1)");
  if (!(xi > 0.0) || !std::isfinite(xi)) throw std::invalid_argument("xi must be positive and finite");
  if (countdown < 0) throw std::invalid_argument("countdown must be nonnegative");
}

namespace {

void require_arms(int k) {
  if (k < 1) throw std::invalid_argument("policy needs at least one arm");
}

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::exp(v[i] - m);
  return m + std::log(acc);
}

// log(exp(a) + exp(b))
double log_add_exp(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

void normalise_log(Eigen::VectorXd& lw) { lw.array() -= log_sum_exp(lw); }

// p = (1 - explore) softmax(lw) + explore / K, for normalised lw.
void mix_probabilities(const Eigen::VectorXd& lw, double explore, Eigen::VectorXd& probs) {
  const double floor = explore / static_cast<double>(lw.size());
  for (Eigen::Index i = 0; i < lw.size(); ++i) probs[i] = (1.0 - explore) * std::exp(lw[i]) + floor;
}

int sample_from(const Eigen::VectorXd& probs, double total, Rng& rng) {
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size() - 1);
}

int sample_from(const Eigen::VectorXd& probs, Rng& rng) { return sample_from(probs, probs.sum(), rng); }

}  // namespace

// ---------------------------------------------------------------------------
// D-UCB

DiscountedUcb::DiscountedUcb(int num_arms, double discount, double xi)
    : discount_(discount),
      xi_(xi),
      counts_(Eigen::ArrayXd::Zero(num_arms)),
      sums_(Eigen::ArrayXd::Zero(num_arms)),
      indices_(static_cast<std::size_t>(num_arms)) {
  require_arms(num_arms);
  if (!(discount > 0.0 && discount <= 1.0)) throw std::invalid_argument("discount must be in (0, 1]");
  if (!(xi > 0.0) || !std::isfinite(xi)) throw std::invalid_argument("xi must be positive and finite");
}

int DiscountedUcb::select(std::int64_t, Rng&) {
  const double log_total = std::log(counts_.sum());
  for (int i = 0; i < num_arms(); ++i) {
    const double n = counts_[i];
    indices_[static_cast<std::size_t>(i)] =
        n > 0.0 ? sums_[i] / n + 2.0 * std::sqrt(xi_ * log_total / n)
                : std::numeric_limits<double>::infinity();
  }
  return argmax_first(indices_);
}

bool DiscountedUcb::update(int arm, double reward, std::int64_t) {
  if (discount_ != 1.0) {
    counts_ *= discount_;
    sums_ *= discount_;
  }
  counts_[arm] += 1.0;
  sums_[arm] += reward;
  return false;
}

// ---------------------------------------------------------------------------
// SW-UCB

SlidingWindowUcb::SlidingWindowUcb(int num_arms, std::int64_t window, double xi)
    : window_(window),
      xi_(xi),
      counts_(static_cast<std::size_t>(num_arms), 0),
      sums_(static_cast<std::size_t>(num_arms), 0.0),
      indices_(static_cast<std::size_t>(num_arms)) {
  require_arms(num_arms);
  if (window < 1) throw std::invalid_argument("window must be at least 1");
  if (!(xi > 0.0) || !std::isfinite(xi)) throw std::invalid_argument("xi must be positive and finite");
}

int SlidingWindowUcb::select(std::int64_t, Rng&) {
  const double log_total = std::log(static_cast<double>(size_));
  for (int i = 0; i < num_arms(); ++i) {
    const auto a = static_cast<std::size_t>(i);
    const auto n = static_cast<double>(counts_[a]);
    indices_[a] = counts_[a] > 0 ? sums_[a] / n + std::sqrt(xi_ * log_total / n)
                                 : std::numeric_limits<double>::infinity();
  }
  return argmax_first(indices_);
}

bool SlidingWindowUcb::update(int arm, double reward, std::int64_t) {
  const auto cap = static_cast<std::size_t>(window_);
  if (size_ < cap) {
    // grow until the window is full; the ring never exceeds T entries
    ring_.emplace_back(arm, reward);
    ++size_;
  } else {
    auto& slot = ring_[head_];
    const auto old = static_cast<std::size_t>(slot.first);
    --counts_[old];
    sums_[old] -= slot.second;
    if (counts_[old] == 0) sums_[old] = 0.0;
    slot = {arm, reward};
    head_ = (head_ + 1) % cap;
  }
  ++counts_[static_cast<std::size_t>(arm)];
  sums_[static_cast<std::size_t>(arm)] += reward;
  return false;
}

// ---------------------------------------------------------------------------
// Exp3.S

Exp3S::Exp3S(int num_arms, double explore, double eta, double share)
    : explore_(explore), eta_(eta), share_(share) {
  require_arms(num_arms);
  if (!(explore > 0.0 && explore <= 1.0)) throw std::invalid_argument("explore must be in (0, 1]");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw std::invalid_argument("eta must be nonnegative");
  if (!(share >= 0.0 && share <= 1.0)) throw std::invalid_argument("share must be in [0, 1]");
  log_weights_ = Eigen::VectorXd::Constant(num_arms, -std::log(static_cast<double>(num_arms)));
  probs_.resize(num_arms);
  mix_probabilities(log_weights_, explore_, probs_);
}

Eigen::VectorXd Exp3S::probabilities() const { return probs_; }

int Exp3S::select(std::int64_t, Rng& rng) { return sample_from(probs_, rng); }

bool Exp3S::update(int arm, double reward, std::int64_t) {
  const double k = static_cast<double>(num_arms());
  log_weights_[arm] += eta_ * reward / probs_[arm];
  if (share_ > 0.0) {
    const double add = std::log(std::numbers::e * share_ / k) + log_sum_exp(log_weights_);
    for (Eigen::Index i = 0; i < log_weights_.size(); ++i) log_weights_[i] = log_add_exp(log_weights_[i], add);
  }
  normalise_log(log_weights_);
  mix_probabilities(log_weights_, explore_, probs_);
  return false;
}

// ---------------------------------------------------------------------------
// Rexp3

Rexp3::Rexp3(int num_arms, std::int64_t batch, double explore) : batch_(batch), explore_(explore) {
  require_arms(num_arms);
  if (batch < 1) throw std::invalid_argument("batch must be at least 1");
  if (!(explore > 0.0 && explore <= 1.0)) throw std::invalid_argument("explore must be in (0, 1]");
  log_weights_ = Eigen::VectorXd::Constant(num_arms, -std::log(static_cast<double>(num_arms)));
  probs_.resize(num_arms);
  mix_probabilities(log_weights_, explore_, probs_);
}

Eigen::VectorXd Rexp3::probabilities() const { return probs_; }

int Rexp3::select(std::int64_t t, Rng& rng) {
  if (t > 1 && (t - 1) % batch_ == 0) {
    log_weights_.setConstant(-std::log(static_cast<double>(num_arms())));
    mix_probabilities(log_weights_, explore_, probs_);
  }
  return sample_from(probs_, rng);
}

bool Rexp3::update(int arm, double reward, std::int64_t) {
  const double k = static_cast<double>(num_arms());
  log_weights_[arm] += explore_ * reward / (probs_[arm] * k);
  normalise_log(log_weights_);
  mix_probabilities(log_weights_, explore_, probs_);
  return false;
}

// ---------------------------------------------------------------------------
// Exp3.R

Exp3R::Exp3R(int num_arms, double explore, std::int64_t interval, double delta)
    : explore_(explore), interval_(interval) {
  require_arms(num_arms);
  if (!(explore > 0.0 && explore <= 1.0)) throw std::invalid_argument("explore must be in (0, 1]");
  if (interval < 1) throw std::invalid_argument("interval must be at least 1");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0, 1)");
  drift_eps_ = std::sqrt(num_arms * std::log(1.0 / delta) / (2.0 * explore * static_cast<double>(interval)));
  log_weights_ = Eigen::VectorXd::Constant(num_arms, -std::log(static_cast<double>(num_arms)));
  explore_sums_ = Eigen::ArrayXd::Zero(num_arms);
  explore_counts_ = Eigen::ArrayXd::Zero(num_arms);
  probs_.resize(num_arms);
  mix_probabilities(log_weights_, explore_, probs_);
}

Eigen::VectorXd Exp3R::probabilities() const { return probs_; }

int Exp3R::select(std::int64_t, Rng& rng) {
  // Same marginal as sampling from probs_, but remembers the exploration branch.
  last_explored_ = uniform01(rng) < explore_;
  if (last_explored_) return uniform_index(rng, num_arms());
  // probs_ minus the uniform floor is proportional to the Exp3 weights
  const double floor = explore_ / static_cast<double>(num_arms());
  const double u = uniform01(rng) * (1.0 - explore_);
  double acc = 0.0;
  for (int i = 0; i < num_arms(); ++i) {
    acc += probs_[i] - floor;
    if (u < acc) return i;
  }
  return num_arms() - 1;
}

bool Exp3R::update(int arm, double reward, std::int64_t t) {
  const double k = static_cast<double>(num_arms());
  log_weights_[arm] += explore_ * reward / (probs_[arm] * k);
  normalise_log(log_weights_);
  if (last_explored_) {
    explore_sums_[arm] += reward;
    explore_counts_[arm] += 1.0;
  }
  bool reset = false;
  if (t % interval_ == 0) {
    const double needed = 0.5 * explore_ * static_cast<double>(interval_) / k;
    if ((explore_counts_ >= needed).all()) {
      const Eigen::ArrayXd means = explore_sums_ / explore_counts_;
      Eigen::Index favoured = 0;
      log_weights_.maxCoeff(&favoured);
      if (means.maxCoeff() - means[favoured] >= 2.0 * drift_eps_) {
        log_weights_.setConstant(-std::log(k));
        ++resets_;
        reset = true;
      }
    }
    explore_sums_.setZero();
    explore_counts_.setZero();
  }
  mix_probabilities(log_weights_, explore_, probs_);
  return reset;
}

// ---------------------------------------------------------------------------
// Oracle and fixed arm

OraclePolicy::OraclePolicy(std::shared_ptr<const MeanSchedule> schedule) : schedule_(std::move(schedule)) {
  if (!schedule_) throw std::invalid_argument("oracle policy needs a schedule");
  const auto s = static_cast<Eigen::Index>(schedule_->num_segments());
  best_arms_.resize(s);
  for (Eigen::Index j = 0; j < s; ++j) {
    Eigen::Index arg = 0;
    schedule_->segment_means(static_cast<std::size_t>(j)).maxCoeff(&arg);
    best_arms_[j] = static_cast<int>(arg);
  }
}

int OraclePolicy::select(std::int64_t t, Rng&) {
  if (segment_ >= schedule_->num_segments() || t < schedule_->segment_start(segment_) ||
      t > schedule_->segment_end(segment_)) {
    segment_ = schedule_->segment_index(t);
  }
  return best_arms_[static_cast<Eigen::Index>(segment_)];
}

FixedArmPolicy::FixedArmPolicy(int num_arms, int arm) : num_arms_(num_arms), arm_(arm) {
  require_arms(num_arms);
  if (arm < 0 || arm >= num_arms) throw std::out_of_range("fixed arm out of range");
}

// ---------------------------------------------------------------------------
// Factory

PolicyContext make_context(std::shared_ptr<const MeanSchedule> schedule) {
  if (!schedule) throw std::invalid_argument("context needs a schedule");
  PolicyContext ctx;
  ctx.num_arms = schedule->num_arms();
  ctx.horizon = schedule->horizon();
  ctx.breakpoints = count_breakpoints(*schedule);
  const auto& m = schedule->means();
  for (Eigen::Index s = 1; s < m.cols(); ++s) ctx.variation += (m.col(s) - m.col(s - 1)).cwiseAbs().maxCoeff();
  ctx.schedule = std::move(schedule);
  return ctx;
}

BaselineDefaults baseline_defaults(int num_arms, std::int64_t horizon, std::int64_t breakpoints,
                                   double variation_budget) {
  require_arms(num_arms);
  if (horizon < 1) throw std::invalid_argument("horizon must be positive");
  const double k = num_arms;
  const auto T = static_cast<double>(horizon);
  const double g = static_cast<double>(std::max<std::int64_t>(1, breakpoints));
  const double v = variation_budget > 0.0 ? variation_budget : g;
  const double log_t = std::max(std::log(T), 1.0);
  const double e1 = std::numbers::e - 1.0;
  auto clamp_len = [&](double x) {
    return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil(x)), 1, horizon);
  };

  BaselineDefaults d{};
  d.discount = 1.0 - 0.25 * std::sqrt(g / T);
  d.window = clamp_len(2.0 * std::sqrt(T * log_t / g));
  d.exp3s_eta = std::sqrt(g * std::log(k * T) / (k * T));
  d.exp3s_explore = std::clamp(k * d.exp3s_eta, 1e-12, 1.0);
  d.exp3s_share = 1.0 / T;
  const double klogk = std::max(k * std::log(k), 1.0);
  d.rexp3_batch = clamp_len(std::cbrt(klogk) * std::pow(T / v, 2.0 / 3.0));
  d.rexp3_explore = std::clamp(std::sqrt(klogk / (e1 * static_cast<double>(d.rexp3_batch))), 1e-12, 1.0);
  d.exp3r_interval = clamp_len(2.0 * std::sqrt(T * log_t / g));
  d.exp3r_explore = std::clamp(std::sqrt(klogk / (e1 * static_cast<double>(d.exp3r_interval))), 1e-12, 1.0);
  d.exp3r_delta = horizon > 1 ? 1.0 / T : 0.5;
  return d;
}

namespace {

struct KindInfo {
  std::string kind;
  std::vector<std::string> required;
  std::vector<std::string> keys;  // required + optional
};

const std::vector<KindInfo>& kind_table() {
  static const std::vector<KindInfo> table = {
      {"cusum-ucb", {"epsilon", "M", "h", "alpha"}, {"epsilon", "M", "h", "alpha", "xi", "countdown"}},
      {"pht-ucb", {"epsilon", "h", "alpha"}, {"epsilon", "h", "alpha", "xi", "M", "gate_burn_in", "countdown"}},
      {"ucb", {}, {"xi"}},
      {"d-ucb", {}, {"discount", "xi"}},
      {"sw-ucb", {}, {"window", "xi"}},
      {"exp3s", {}, {"explore", "eta", "share"}},
      {"rexp3", {}, {"batch", "explore", "variation"}},
      {"exp3r", {}, {"explore", "interval", "delta"}},
      {"oracle", {}, {}},
      {"fixed", {"arm"}, {"arm"}},
  };
  return table;
}

const KindInfo* find_kind(std::string_view kind) {
  for (const auto& k : kind_table()) {
    if (k.kind == kind) return &k;
  }
  return nullptr;
}

class ParamReader {
 public:
  ParamReader(const PolicySpec& spec) : spec_(spec) {}

  double real(const std::string& key, double fallback) const {
    auto it = spec_.params.find(key);
    return it == spec_.params.end() ? fallback : it->second;
  }

  double real(const std::string& key) const { return spec_.params.at(key); }

  std::int64_t integer(const std::string& key, std::int64_t fallback) const {
    auto it = spec_.params.find(key);
    if (it == spec_.params.end()) return fallback;
    const double v = it->second;
    if (!std::isfinite(v) || v != std::floor(v) || std::abs(v) > 9.0e15) {
      throw ConfigError(prefix() + "parameter '" + key + "' must be an integer");
    }
    return static_cast<std::int64_t>(v);
  }

  std::int64_t integer(const std::string& key) const { return integer(key, 0); }

  std::string prefix() const { return "policy '" + spec_.kind + "': "; }

 private:
  const PolicySpec& spec_;
};

DetectorParams detector_params(const ParamReader& p, int default_m) {
  DetectorParams d;
  d.epsilon = p.real("epsilon");
  d.M = static_cast<int>(p.integer("M", default_m));
  d.h = p.real("h");
  d.validate();
  return d;
}

}  // namespace

const std::vector<std::string>& policy_kinds() {
  static const std::vector<std::string> kinds = [] {
    std::vector<std::string> v;
    for (const auto& k : kind_table()) v.push_back(k.kind);
    return v;
  }();
  return kinds;
}

const std::vector<std::string>& policy_keys(std::string_view kind) {
  const KindInfo* info = find_kind(kind);
  if (!info) throw ConfigError("unknown policy kind '" + std::string(kind) + "'");
  return info->keys;
}

std::unique_ptr<Policy> make_policy(const PolicySpec& spec, const PolicyContext& context) {
  const KindInfo* info = find_kind(spec.kind);
  if (!info) throw ConfigError("unknown policy kind '" + spec.kind + "'");
  const ParamReader p(spec);

  std::vector<std::string> violations;
  for (const auto& [key, value] : spec.params) {
    if (std::find(info->keys.begin(), info->keys.end(), key) == info->keys.end()) {
      violations.push_back(p.prefix() + "unknown parameter '" + key + "'");
    }
  }
  for (const auto& key : info->required) {
    if (!spec.params.contains(key)) violations.push_back(p.prefix() + "missing parameter '" + key + "'");
  }
  if (context.num_arms < 1) violations.push_back(p.prefix() + "context has no arms");
  if (context.horizon < 1) violations.push_back(p.prefix() + "context has no horizon");
  if (!violations.empty()) throw ConfigError(std::move(violations));

  const int k = context.num_arms;
  try {
    if (spec.kind == "cusum-ucb") {
      const DetectorParams d = detector_params(p, 100);
      CdUcbParams c{p.real("alpha"), p.real("xi", 1.0), static_cast<int>(p.integer("countdown", d.M))};
      return std::make_unique<CusumUcb>(k, c, CusumDetector(d), "cusum-ucb");
    }
    if (spec.kind == "pht-ucb") {
      const DetectorParams d = detector_params(p, 100);
      const bool gate = p.real("gate_burn_in", 0.0) != 0.0;
      CdUcbParams c{p.real("alpha"), p.real("xi", 1.0), static_cast<int>(p.integer("countdown", 0))};
      return std::make_unique<PhtUcb>(k, c, PhtDetector(d, gate), "pht-ucb");
    }
    if (spec.kind == "ucb") {
      CdUcbParams c{0.0, p.real("xi", 1.0), 0};
      return std::make_unique<CusumUcb>(k, c, CusumDetector(DetectorParams{}), "ucb");
    }
    if (spec.kind == "oracle") {
      if (!context.schedule) throw ConfigError(p.prefix() + "requires the environment schedule");
      if (context.schedule->num_arms() != k) throw ConfigError(p.prefix() + "schedule arm count mismatch");
      return std::make_unique<OraclePolicy>(context.schedule);
    }
    if (spec.kind == "fixed") {
      const auto arm = p.integer("arm");
      if (arm < 1 || arm > k) throw ConfigError(p.prefix() + "arm must be in [1, " + std::to_string(k) + "]");
      return std::make_unique<FixedArmPolicy>(k, static_cast<int>(arm - 1));
    }

    const BaselineDefaults d =
        baseline_defaults(k, context.horizon, context.breakpoints, p.real("variation", context.variation));
    if (spec.kind == "d-ucb") return std::make_unique<DiscountedUcb>(k, p.real("discount", d.discount), p.real("xi", 0.6));
    if (spec.kind == "sw-ucb") return std::make_unique<SlidingWindowUcb>(k, p.integer("window", d.window), p.real("xi", 0.6));
    if (spec.kind == "exp3s") {
      return std::make_unique<Exp3S>(k, p.real("explore", d.exp3s_explore), p.real("eta", d.exp3s_eta),
                                     p.real("share", d.exp3s_share));
    }
    if (spec.kind == "rexp3") {
      return std::make_unique<Rexp3>(k, p.integer("batch", d.rexp3_batch), p.real("explore", d.rexp3_explore));
    }
    return std::make_unique<Exp3R>(k, p.real("explore", d.exp3r_explore), p.integer("interval", d.exp3r_interval),
                                   p.real("delta", d.exp3r_delta));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(p.prefix() + e.what());
  } catch (const std::out_of_range& e) {
    throw ConfigError(p.prefix() + e.what());
  }
}

}  // namespace cdbandit
