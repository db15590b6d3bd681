#include "cdbandit/bench.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "cdbandit/errors.hpp"
#include "cdbandit/format.hpp"
#include "cdbandit/parallel.hpp"

namespace cdbandit {

double pseudo_regret_increment(const MeanSchedule& schedule, std::int64_t t, int arm) {
  if (arm < 0 || arm >= schedule.num_arms()) throw std::out_of_range("arm index out of range");
  const auto s = schedule.segment_index(t);
  return schedule.segment_best(s) - schedule.segment_means(s)[arm];
}

namespace {

struct TrialOutcome {
  Eigen::VectorXd cumulative;
  Eigen::VectorXd suboptimal;
  double restarts = 0.0;
};

void roll_trial(const MeanSchedule& schedule, Policy& policy, const RewardTape& tape, Rng& rng,
                TrialOutcome& out) {
  const std::int64_t T = schedule.horizon();
  const int K = schedule.num_arms();
  out.cumulative.resize(T);
  out.suboptimal = Eigen::VectorXd::Zero(K);
  out.restarts = 0.0;
  const Eigen::MatrixXd& means = schedule.means();
  std::size_t seg = 0;
  std::int64_t seg_end = schedule.segment_end(0);
  double best = schedule.segment_best(0);
  double cumulative = 0.0;
  for (std::int64_t t = 1; t <= T; ++t) {
    if (t > seg_end) {
      ++seg;
      seg_end = schedule.segment_end(seg);
      best = schedule.segment_best(seg);
    }
    const int arm = policy.select(t, rng);
    if (arm < 0 || arm >= K) throw std::out_of_range("policy selected an arm out of range");
    const double mu = means(arm, static_cast<Eigen::Index>(seg));
    if (policy.update(arm, tape.draw(mu, t, arm), t)) out.restarts += 1.0;
    if (mu < best) {
      cumulative += best - mu;
      out.suboptimal[arm] += 1.0;
    }
    out.cumulative[t - 1] = cumulative;
  }
}

using TrialSchedule = std::function<std::shared_ptr<const MeanSchedule>(std::int64_t)>;
using TrialPolicy = std::function<std::unique_ptr<Policy>(const std::shared_ptr<const MeanSchedule>&)>;

RegretTrace run_core(std::int64_t horizon, int num_arms, const std::string& name, const TrialSchedule& schedule_for,
                     const TrialPolicy& policy_for, const RunOptions& options) {
  if (options.trials < 1) throw std::invalid_argument("trials must be at least 1");
  const std::int64_t T = horizon;
  const int K = num_arms;
  const std::int64_t R = options.trials;
  const auto salt = fnv1a64(name);

  RegretTrace trace;
  trace.policy = name;
  trace.horizon = T;
  trace.trials = R;
  trace.final_regret.resize(R);
  trace.suboptimal_plays.resize(K, R);
  trace.restarts.resize(R);
  if (options.keep_trials) trace.per_trial.emplace(T, R);

  // Neumaier sum for the mean, Welford for the spread; both in trial order.
  Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(T);
  Eigen::ArrayXd comp = Eigen::ArrayXd::Zero(T);
  Eigen::ArrayXd run_mean = Eigen::ArrayXd::Zero(T);
  Eigen::ArrayXd m2 = Eigen::ArrayXd::Zero(T);

  const std::int64_t chunk = std::max(1, options.workers);
  std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(std::min(chunk, R)));
  for (std::int64_t first = 0; first < R; first += chunk) {
    const std::int64_t last = std::min(R, first + chunk);
    parallel_for(first, last, options.workers, [&](std::int64_t r) {
      const auto schedule = schedule_for(r);
      if (schedule->horizon() != T || schedule->num_arms() != K) {
        throw std::invalid_argument("trial " + std::to_string(r) + ": schedule shape differs from trial 0");
      }
      auto policy = policy_for(schedule);
      if (!policy) throw std::invalid_argument("policy factory returned null");
      if (policy->num_arms() != K) {
        throw ConfigError("policy '" + name + "' has " + std::to_string(policy->num_arms()) +
                          " arms but the environment has " + std::to_string(K));
      }
      const auto ur = static_cast<std::uint64_t>(r);
      const RewardTape tape(derive_seed(options.base_seed, ur));
      Rng rng(derive_seed(options.base_seed, ur, salt));
      roll_trial(*schedule, *policy, tape, rng, outcomes[static_cast<std::size_t>(r - first)]);
    });
    for (std::int64_t r = first; r < last; ++r) {
      const auto& o = outcomes[static_cast<std::size_t>(r - first)];
      const Eigen::ArrayXd& x = o.cumulative.array();
      const Eigen::ArrayXd s = sum + x;
      comp += (sum.abs() >= x.abs()).select((sum - s) + x, (x - s) + sum);
      sum = s;
      const double k = static_cast<double>(r + 1);
      const Eigen::ArrayXd delta = x - run_mean;
      run_mean += delta / k;
      m2 += delta * (x - run_mean);
      trace.final_regret[r] = o.cumulative[T - 1];
      trace.suboptimal_plays.col(r) = o.suboptimal;
      trace.restarts[r] = o.restarts;
      if (trace.per_trial) trace.per_trial->col(r) = o.cumulative;
    }
  }

  const auto rd = static_cast<double>(R);
  trace.mean = ((sum + comp) / rd).matrix();
  if (R > 1) {
    trace.se = (m2 / (rd - 1.0)).max(0.0).sqrt().matrix() / std::sqrt(rd);
  } else {
    trace.se = Eigen::VectorXd::Zero(T);
  }
  return trace;
}

std::shared_ptr<const MeanSchedule> borrow(const MeanSchedule& schedule) {
  return {std::shared_ptr<void>{}, &schedule};
}

}  // namespace

RegretTrace run_experiment(const MeanSchedule& schedule, const std::string& name,
                           const PolicyFactory& factory, const RunOptions& options) {
  const auto shared = borrow(schedule);
  return run_core(schedule.horizon(), schedule.num_arms(), name, [&](std::int64_t) { return shared; },
                  [&](const std::shared_ptr<const MeanSchedule>&) { return factory(); }, options);
}

RegretTrace run_experiment(const MeanSchedule& schedule, const PolicySpec& spec, const RunOptions& options) {
  const PolicyContext context = make_context(borrow(schedule));
  const std::string name(make_policy(spec, context)->name());
  return run_experiment(schedule, name, [&] { return make_policy(spec, context); }, options);
}

RegretTrace run_experiment(const ScheduleSampler& sampler, const PolicySpec& spec, const RunOptions& options) {
  const MeanSchedule first = sampler(0);
  const std::string name(make_policy(spec, make_context(borrow(first)))->name());
  return run_core(
      first.horizon(), first.num_arms(), name,
      [&](std::int64_t r) { return std::make_shared<const MeanSchedule>(sampler(r)); },
      [&](const std::shared_ptr<const MeanSchedule>& s) { return make_policy(spec, make_context(s)); }, options);
}

// ---------------------------------------------------------------------------
// Power-law fit

std::vector<Eigen::Index> log_spaced_slots(Eigen::Index n, Eigen::Index points) {
  std::vector<Eigen::Index> out;
  if (n <= 0) return out;
  if (points >= n || points < 2) {
    for (Eigen::Index i = 1; i <= std::min(n, std::max<Eigen::Index>(points, 1)); ++i) out.push_back(i);
    if (points < 2 && n > 1) out.back() = n;
    return out;
  }
  const double top = std::log(static_cast<double>(n));
  for (Eigen::Index i = 0; i < points; ++i) {
    const double x = std::exp(top * static_cast<double>(i) / static_cast<double>(points - 1));
    const auto s = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::llround(x)), 1, n);
    if (out.empty() || s > out.back()) out.push_back(s);
  }
  if (out.back() != n) out.push_back(n);
  return out;
}

namespace {

struct FitProblem {
  const Eigen::VectorXd& t;
  const Eigen::VectorXd& y;
  Eigen::VectorXd log_t;

  Eigen::VectorXd residual(const Eigen::Vector3d& p) const {
    return (p[0] * (p[1] * log_t.array()).exp() + p[2] - y.array()).matrix();
  }

  Eigen::MatrixXd jacobian(const Eigen::Vector3d& p) const {
    Eigen::MatrixXd J(t.size(), 3);
    const Eigen::ArrayXd tb = (p[1] * log_t.array()).exp();
    J.col(0) = tb.matrix();
    J.col(1) = (p[0] * tb * log_t.array()).matrix();
    J.col(2).setOnes();
    return J;
  }
};

// (a, c) minimising ||a t^b + c - y|| for fixed b.
Eigen::Vector3d linear_start(const FitProblem& prob, double b) {
  Eigen::MatrixXd X(prob.t.size(), 2);
  X.col(0) = (b * prob.log_t.array()).exp().matrix();
  X.col(1).setOnes();
  const Eigen::Vector2d ac = X.colPivHouseholderQr().solve(prob.y);
  return {ac[0], b, ac[1]};
}

FitResult levenberg_marquardt(const FitProblem& prob, Eigen::Vector3d p) {
  constexpr int kMaxIterations = 500;
  const Eigen::Index n = prob.t.size();
  Eigen::VectorXd r = prob.residual(p);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  Eigen::Vector3d scale = Eigen::Vector3d::Zero();
  const double scale_y = std::max(1.0, prob.y.squaredNorm());

  FitResult out;
  int it = 0;
  for (; it < kMaxIterations; ++it) {
    if (cost <= 1e-32 * scale_y) {
      out.converged = true;
      break;
    }
    const Eigen::MatrixXd J = prob.jacobian(p);
    scale = scale.cwiseMax(J.colwise().norm().transpose());
    const Eigen::Vector3d d = scale.cwiseMax(1e-12);
    bool accepted = false;
    bool small_step = false;
    while (!accepted) {
      Eigen::MatrixXd A(n + 3, 3);
      A.topRows(n) = J;
      A.bottomRows(3) = (std::sqrt(lambda) * d).asDiagonal();
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 3);
      rhs.head(n) = -r;
      const Eigen::Vector3d step = A.householderQr().solve(rhs);
      Eigen::Vector3d cand = p + step;
      cand[1] = std::clamp(cand[1], kFitMinExponent, kFitMaxExponent);
      const Eigen::Vector3d actual = cand - p;
      if (actual.cwiseProduct(d).norm() <= 1e-14 * (p.cwiseProduct(d).norm() + 1e-300)) {
        small_step = true;
        break;
      }
      const Eigen::VectorXd rc = prob.residual(cand);
      const double cc = rc.squaredNorm();
      if (std::isfinite(cc) && cc < cost) {
        const bool tiny_gain = cost - cc <= 1e-15 * cost;
        p = cand;
        r = rc;
        cost = cc;
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
        small_step = tiny_gain;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          small_step = true;
          break;
        }
      }
    }
    if (small_step) {
      out.converged = true;
      ++it;
      break;
    }
  }
  out.a = p[0];
  out.b = p[1];
  out.c = p[2];
  out.residual_norm = std::sqrt(cost);
  out.iterations = it;
  return out;
}

}  // namespace

FitResult fit_power_law(const Eigen::VectorXd& t, const Eigen::VectorXd& y) {
  if (t.size() != y.size()) throw std::invalid_argument("fit: t and y differ in length");
  if (y.size() < 8) throw std::invalid_argument("fit: need at least 8 points");
  if (!y.allFinite() || !t.allFinite()) throw std::invalid_argument("fit: series contains non-finite values");
  if ((t.array() <= 0.0).any()) throw std::invalid_argument("fit: t must be positive");

  FitProblem prob{t, y, t.array().log().matrix()};
  FitResult best;
  bool have = false;
  for (int i = 1; i <= 10; ++i) {
    const FitResult f = levenberg_marquardt(prob, linear_start(prob, 0.1 * i));
    if (!have || f.residual_norm < best.residual_norm) {
      best = f;
      have = true;
    }
  }

  const double tmin = t.minCoeff();
  const double tmax = t.maxCoeff();
  const double span = std::abs(best.a) * std::abs(std::pow(tmax, best.b) - std::pow(tmin, best.b));
  const double y_scale = std::max(1.0, y.cwiseAbs().maxCoeff());
  const bool flat = span <= 1e-9 * y_scale;
  const bool edge = best.b <= kFitMinExponent * (1.0 + 1e-9) || best.b >= kFitMaxExponent * (1.0 - 1e-9);
  best.degenerate = flat || edge;
  return best;
}

// ---------------------------------------------------------------------------
// Comparison

ComparisonTable compare(const std::vector<RegretTrace>& traces) {
  ComparisonTable table;
  if (traces.empty()) return table;
  table.horizon = traces.front().horizon;
  for (const auto& tr : traces) {
    if (tr.horizon != table.horizon) {
      throw std::invalid_argument("trace '" + tr.policy + "' has horizon " + std::to_string(tr.horizon) +
                                  ", expected " + std::to_string(table.horizon));
    }
  }
  for (const auto& tr : traces) {
    ComparisonRow row;
    row.policy = tr.policy;
    if (tr.mean.size() > 0) {
      row.final_mean = tr.mean[tr.mean.size() - 1];
      row.final_se = tr.se.size() ? tr.se[tr.se.size() - 1] : 0.0;
    }
    if (tr.mean.size() >= 8) row.fit = fit_power_law(tr.mean);
    table.rows.push_back(std::move(row));
  }
  for (auto& row : table.rows) {
    for (const auto& other : table.rows) {
      if (&row == &other) {
        row.ratios.emplace_back();
      } else {
        row.ratios.emplace_back(row.final_mean / other.final_mean);
      }
    }
  }
  return table;
}

void write_comparison(std::ostream& out, const ComparisonTable& table) {
  out << "policy,final_mean,final_se,a,b,c,fit_converged,fit_degenerate";
  for (const auto& row : table.rows) out << ",ratio_" << row.policy;
  out << '\n';
  for (const auto& row : table.rows) {
    out << row.policy << ',' << format_double(row.final_mean) << ',' << format_double(row.final_se);
    if (row.fit) {
      out << ',' << format_double(row.fit->a) << ',' << format_double(row.fit->b) << ','
          << format_double(row.fit->c) << ',' << (row.fit->converged ? 1 : 0) << ','
          << (row.fit->degenerate ? 1 : 0);
    } else {
      out << ",,,,,";
    }
    for (const auto& r : row.ratios) {
      out << ',';
      if (r) out << format_double(*r);
    }
    out << '\n';
  }
}

}  // namespace cdbandit
