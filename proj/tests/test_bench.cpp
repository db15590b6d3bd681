#include <cmath>
#include <memory>
#include <sstream>

#include "doctest.h"

#include "cdbandit/bench.hpp"
#include "cdbandit/errors.hpp"

using namespace cdbandit;

namespace {

RunOptions opts(std::int64_t trials, std::uint64_t seed, int workers = 1, bool keep = false) {
  RunOptions o;
  o.trials = trials;
  o.base_seed = seed;
  o.workers = workers;
  o.keep_trials = keep;
  return o;
}

PolicySpec cusum_spec() {
  return {"cusum-ucb", {{"epsilon", 0.1}, {"M", 20}, {"h", 10}, {"alpha", 0.01}}};
}

double max_gap(const MeanSchedule& s) {
  double g = 0.0;
  for (std::size_t i = 0; i < s.num_segments(); ++i) {
    g = std::max(g, s.segment_best(i) - s.segment_means(i).minCoeff());
  }
  return g;
}

}  // namespace

TEST_CASE("pseudo-regret increments") {
  const auto s = flipping_env(9, 0.1);
  CHECK(pseudo_regret_increment(s, 1, 1) == 0.0);
  CHECK(pseudo_regret_increment(s, 1, 0) == doctest::Approx(0.3));
  CHECK(pseudo_regret_increment(s, 4, 0) == 0.0);
  Eigen::VectorXd eq(3);
  eq << 0.4, 0.4, 0.4;
  const auto flat = from_segments(3, 5, {{1, eq}});
  for (int i = 0; i < 3; ++i) CHECK(pseudo_regret_increment(flat, 2, i) == 0.0);
}

TEST_CASE("oracle has zero regret") {
  Rng rng(5);
  const auto s = switching_env(4, 5000, 1e-3, rng);
  const auto tr = run_experiment(s, PolicySpec{"oracle", {}}, opts(3, 1));
  CHECK(tr.mean.maxCoeff() == 0.0);
  CHECK(tr.suboptimal_plays.sum() == 0.0);
}

TEST_CASE("always playing arm 2 on the nine-slot flip") {
  const auto s = flipping_env(9, 0.1);
  const auto tr = run_experiment(s, PolicySpec{"fixed", {{"arm", 2}}}, opts(2, 1));
  CHECK(tr.final_regret[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(tr.mean[8] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(tr.suboptimal_plays(1, 0) == 4.0);
  CHECK(tr.suboptimal_plays(0, 0) == 0.0);
}

TEST_CASE("runs are deterministic and independent of the worker count") {
  const auto s = flipping_env(3000, 0.1);
  const auto a = run_experiment(s, cusum_spec(), opts(12, 7, 1, true));
  const auto b = run_experiment(s, cusum_spec(), opts(12, 7, 1, true));
  const auto c = run_experiment(s, cusum_spec(), opts(12, 7, 5, true));
  CHECK(a.mean == b.mean);
  CHECK(a.se == b.se);
  CHECK(a.mean == c.mean);
  CHECK(a.se == c.se);
  CHECK(*a.per_trial == *c.per_trial);
  CHECK(a.restarts == c.restarts);
  const auto d = run_experiment(s, cusum_spec(), opts(12, 8));
  CHECK(a.mean != d.mean);
}

TEST_CASE("regret trace invariants") {
  Rng rng(3);
  const auto s = switching_env(3, 4000, 1e-3, rng);
  const double gap = max_gap(s);
  for (const PolicySpec& spec : {cusum_spec(), PolicySpec{"sw-ucb", {}}, PolicySpec{"exp3s", {}}}) {
    const auto tr = run_experiment(s, spec, opts(6, 2, 3, true));
    const Eigen::MatrixXd& per = *tr.per_trial;
    for (Eigen::Index r = 0; r < per.cols(); ++r) {
      CHECK(per(0, r) >= 0.0);
      for (Eigen::Index t = 1; t < per.rows(); ++t) {
        REQUIRE(per(t, r) >= per(t - 1, r));
        REQUIRE(per(t, r) <= static_cast<double>(t + 1) * gap + 1e-9);
      }
      const double plays = tr.suboptimal_plays.col(r).sum();
      CHECK(plays <= 4000.0);
      CHECK(tr.final_regret[r] <= plays * gap + 1e-9);
    }
    // mean is the trial average, summed in trial order
    for (Eigen::Index t = 0; t < per.rows(); t += 97) {
      long double sum = 0.0L;
      for (Eigen::Index r = 0; r < per.cols(); ++r) sum += per(t, r);
      CHECK(tr.mean[t] == doctest::Approx(static_cast<double>(sum / per.cols())).epsilon(1e-13));
    }
  }
}

TEST_CASE("policy and schedule must agree on K") {
  const auto s = flipping_env(100, 0.1);
  auto factory = [] { return std::unique_ptr<Policy>(std::make_unique<FixedArmPolicy>(3, 0)); };
  CHECK_THROWS_AS(run_experiment(s, "fixed", factory, opts(1, 1)), ConfigError);
}

TEST_CASE("per-trial schedules") {
  auto sampler = [](std::int64_t r) {
    Rng rng(derive_seed(11, static_cast<std::uint64_t>(r)));
    return switching_env(3, 2000, 1e-3, rng);
  };
  const auto a = run_experiment(sampler, PolicySpec{"oracle", {}}, opts(4, 1, 2));
  CHECK(a.mean.maxCoeff() == 0.0);
  const auto b = run_experiment(sampler, cusum_spec(), opts(4, 1, 1));
  const auto c = run_experiment(sampler, cusum_spec(), opts(4, 1, 4));
  CHECK(b.mean == c.mean);
}

TEST_CASE("power-law fit on exact models") {
  const int n = 1000;
  Eigen::VectorXd y(n);
  SUBCASE("2 t^0.7 + 1") {
    for (int t = 1; t <= n; ++t) y[t - 1] = 2.0 * std::pow(t, 0.7) + 1.0;
    const auto f = fit_power_law(y);
    CHECK(f.converged);
    CHECK_FALSE(f.degenerate);
    CHECK(std::abs(f.a - 2.0) < 1e-6);
    CHECK(std::abs(f.b - 0.7) < 1e-6);
    CHECK(std::abs(f.c - 1.0) < 1e-6);
    CHECK(f.residual_norm < 1e-6);
  }
  SUBCASE("3 t + 5") {
    for (int t = 1; t <= n; ++t) y[t - 1] = 3.0 * t + 5.0;
    const auto f = fit_power_law(y);
    CHECK(std::abs(f.a - 3.0) < 1e-6);
    CHECK(std::abs(f.b - 1.0) < 1e-6);
    CHECK(std::abs(f.c - 5.0) < 1e-6);
  }
  SUBCASE("constant") {
    y.setConstant(4.0);
    const auto f = fit_power_law(y);
    CHECK(f.degenerate);
    CHECK(std::abs(f.a) < 1e-9);
    CHECK(f.c == doctest::Approx(4.0));
  }
}

TEST_CASE("power-law fit recovers a planted grid") {
  for (double a : {0.5, 2.0, 10.0}) {
    for (double b : {0.3, 0.7, 1.0}) {
      for (double c : {0.0, 5.0}) {
        Eigen::VectorXd y(1000);
        for (int t = 1; t <= 1000; ++t) y[t - 1] = a * std::pow(t, b) + c;
        const auto f = fit_power_law(y);
        CAPTURE(a);
        CAPTURE(b);
        CAPTURE(c);
        CHECK(std::abs(f.a - a) < 1e-3);
        CHECK(std::abs(f.b - b) < 1e-3);
        CHECK(std::abs(f.c - c) < 1e-3);
      }
    }
  }
}

TEST_CASE("power-law fit on long series subsamples") {
  const auto slots = log_spaced_slots(200000, kFitMaxPoints);
  CHECK(slots.size() <= static_cast<std::size_t>(kFitMaxPoints));
  CHECK(slots.front() == 1);
  CHECK(slots.back() == 200000);
  for (std::size_t i = 1; i < slots.size(); ++i) CHECK(slots[i] > slots[i - 1]);
  Eigen::VectorXd y(200000);
  for (int t = 1; t <= 200000; ++t) y[t - 1] = 0.8 * std::pow(t, 0.6) + 2.0;
  const auto f = fit_power_law(y);
  CHECK(std::abs(f.b - 0.6) < 1e-6);
}

TEST_CASE("power-law fit input checks") {
  CHECK_THROWS_AS(fit_power_law(Eigen::VectorXd::Ones(7)), std::invalid_argument);
  Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(20, 1, 20);
  y[3] = std::nan("");
  CHECK_THROWS_AS(fit_power_law(y), std::invalid_argument);
}

TEST_CASE("comparison table") {
  const auto s = flipping_env(2000, 0.1);
  const auto sw = run_experiment(s, PolicySpec{"sw-ucb", {}}, opts(4, 1));
  const auto oracle = run_experiment(s, PolicySpec{"oracle", {}}, opts(4, 1));

  const auto one = compare({sw});
  REQUIRE(one.rows.size() == 1);
  REQUIRE(one.rows[0].ratios.size() == 1);
  CHECK_FALSE(one.rows[0].ratios[0]);

  auto twin = sw;
  twin.policy = "sw-ucb-copy";
  const auto two = compare({sw, twin});
  REQUIRE(two.rows[0].ratios[1]);
  CHECK(*two.rows[0].ratios[1] == 1.0);

  const auto with_oracle = compare({sw, oracle});
  REQUIRE(with_oracle.rows[1].fit);
  CHECK(with_oracle.rows[1].fit->degenerate);

  std::ostringstream csv;
  write_comparison(csv, two);
  CHECK(csv.str().rfind("policy,final_mean,final_se,a,b,c,fit_converged,fit_degenerate,ratio_sw-ucb,ratio_sw-ucb-copy\n", 0) == 0);

  const auto shorter = run_experiment(flipping_env(1000, 0.1), PolicySpec{"sw-ucb", {}}, opts(1, 1));
  CHECK_THROWS_AS(compare({sw, shorter}), std::invalid_argument);
}
