#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"

#include "cdbandit/env.hpp"
#include "cdbandit/errors.hpp"

using namespace cdbandit;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Slot-by-slot scan, independent of the segment representation.
std::int64_t brute_breakpoints(const MeanSchedule& s, double threshold) {
  std::int64_t n = 0;
  for (std::int64_t t = 1; t < s.horizon(); ++t) {
    double diff = 0.0;
    for (int i = 0; i < s.num_arms(); ++i) diff = std::max(diff, std::abs(s.mean_at(t, i) - s.mean_at(t + 1, i)));
    if (diff > threshold) ++n;
  }
  return n;
}

// Means and epsilon on the finer grid 1/(M*Q) make every distance an exact
// integer count of fine cells.
struct FineGridCase {
  int M;
  int Q;
  std::vector<long> mu_cells;
  long eps_cells;
};

std::optional<double> exact_lambda(const FineGridCase& c) {
  long best = -1;
  for (long m : c.mu_cells) {
    const long lo = m - c.eps_cells;
    const long hi = m + c.eps_cells;
    const long down = ((lo % c.Q) + c.Q) % c.Q;
    const long up = (c.Q - ((hi % c.Q) + c.Q) % c.Q) % c.Q;
    for (long d : {down, up}) {
      if (d > 0 && (best < 0 || d < best)) best = d;
    }
  }
  if (best < 0) return std::nullopt;
  return static_cast<double>(best) / (static_cast<double>(c.M) * c.Q);
}

}  // namespace

TEST_CASE("flipping schedule on nine slots") {
  const auto s = flipping_env(9, 0.1);
  CHECK(s.num_arms() == 2);
  const double expected[] = {0.8, 0.8, 0.4, 0.4, 0.4, 0.4, 0.8, 0.8, 0.8};
  for (std::int64_t t = 1; t <= 9; ++t) {
    CHECK(s.mean_at(t, 0) == 0.5);
    CHECK(s.mean_at(t, 1) == doctest::Approx(expected[t - 1]).epsilon(1e-15));
  }
  CHECK(count_breakpoints(s) == 2);
}

TEST_CASE("flipping schedule breakpoints at the preset horizon") {
  CHECK(count_breakpoints(flipping_env(100000, 0.1)) == 2);
}

TEST_CASE("flipping schedule on the smallest horizon") {
  const auto s = flipping_env(3, 0.3);
  REQUIRE(s.num_segments() == 3);
  CHECK(s.segment_start(0) == 1);
  CHECK(s.segment_start(1) == 2);
  CHECK(s.segment_start(2) == 3);
  CHECK(s.mean_at(1, 1) == 0.8);
  CHECK(s.mean_at(2, 1) == doctest::Approx(0.2));
  CHECK(s.mean_at(3, 1) == 0.8);
  CHECK(count_breakpoints(s) == 2);
}

TEST_CASE("flipping parameter checks") {
  CHECK_THROWS_AS(flipping_env(9, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(flipping_env(9, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(flipping_env(2, 0.1), std::invalid_argument);
}

TEST_CASE("flipping always has two breakpoints") {
  for (std::int64_t T = 3; T <= 300; ++T) {
    const auto s = flipping_env(T, 0.1);
    CHECK(count_breakpoints(s) == 2);
    CHECK(brute_breakpoints(s, 0.0) == 2);
  }
}

TEST_CASE("switching schedule") {
  SUBCASE("zero hazard is stationary") {
    Rng rng(7);
    const auto s = switching_env(4, 5000, 0.0, rng);
    CHECK(count_breakpoints(s) == 0);
    CHECK(s.num_segments() == 1);
  }
  SUBCASE("same seed gives the same schedule") {
    Rng a(42), b(42);
    const auto s1 = switching_env(5, 10000, 1e-3, a);
    const auto s2 = switching_env(5, 10000, 1e-3, b);
    CHECK(s1.means() == s2.means());
    CHECK(s1.segments().size() == s2.segments().size());
    for (std::size_t i = 0; i < s1.num_segments(); ++i) CHECK(s1.segment_start(i) == s2.segment_start(i));
  }
  SUBCASE("hazard one redraws every slot") {
    Rng rng(3);
    const auto s = switching_env(1, 1000, 1.0, rng);
    CHECK(count_breakpoints(s) == 999);
  }
  SUBCASE("bit-stable first draws") {
    Rng rng(1);
    const auto s = switching_env(2, 10, 0.0, rng);
    Rng ref(1);
    CHECK(s.mean_at(1, 0) == uniform01(ref));
    CHECK(s.mean_at(1, 1) == uniform01(ref));
  }
  SUBCASE("bad hazard") {
    Rng rng(1);
    CHECK_THROWS_AS(switching_env(2, 10, 1.5, rng), std::invalid_argument);
    CHECK_THROWS_AS(switching_env(0, 10, 0.1, rng), std::invalid_argument);
  }
}

TEST_CASE("breakpoints match a slot-by-slot scan") {
  Rng rng(2024);
  for (int rep = 0; rep < 40; ++rep) {
    const int K = 1 + static_cast<int>(rng() % 5);
    const std::int64_t T = 1 + static_cast<std::int64_t>(rng() % 10000);
    const double beta = 0.002 * static_cast<double>(rng() % 5);
    const auto s = switching_env(K, T, beta, rng);
    CHECK(count_breakpoints(s) == brute_breakpoints(s, 0.0));
    CHECK(count_breakpoints(s, 0.3) == brute_breakpoints(s, 0.3));
    CHECK(count_breakpoints(s) <= T - 1);
  }
}

TEST_CASE("breakpoint threshold") {
  const auto s = from_segments(1, 10, {{1, vec({0.5})}, {6, vec({0.504})}});
  CHECK(count_breakpoints(s, 0.005) == 0);
  CHECK(count_breakpoints(s, 0.0) == 1);
  CHECK_THROWS_AS(count_breakpoints(s, -1.0), std::invalid_argument);
}

TEST_CASE("from_segments validation") {
  CHECK(count_breakpoints(from_segments(2, 10, {{1, vec({0.1, 0.2})}})) == 0);
  CHECK_THROWS_AS(from_segments(1, 10, {{1, vec({1.2})}}), std::invalid_argument);
  CHECK_THROWS_AS(from_segments(1, 10, {{1, vec({0.2})}, {5, vec({0.3})}, {5, vec({0.4})}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(from_segments(1, 10, {{2, vec({0.2})}}), std::invalid_argument);
  CHECK_THROWS_AS(from_segments(1, 10, {{1, vec({0.2})}, {4, vec({0.3})}, {3, vec({0.4})}}),
                  std::invalid_argument);
  try {
    from_segments(1, 10, {{1, vec({0.2})}, {5, vec({0.3})}, {5, vec({0.4})}});
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("segment 3") != std::string::npos);
  }
}

TEST_CASE("every slot belongs to exactly one segment") {
  Rng rng(9);
  const auto s = switching_env(3, 3000, 0.01, rng);
  std::int64_t covered = 0;
  for (std::size_t i = 0; i < s.num_segments(); ++i) {
    CHECK(s.segment_end(i) >= s.segment_start(i));
    covered += s.segment_end(i) - s.segment_start(i) + 1;
    if (i + 1 < s.num_segments()) CHECK(s.segment_end(i) + 1 == s.segment_start(i + 1));
  }
  CHECK(covered == s.horizon());
  for (std::int64_t t = 1; t <= s.horizon(); ++t) {
    const auto idx = s.segment_index(t);
    CHECK(s.segment_start(idx) <= t);
    CHECK(t <= s.segment_end(idx));
  }
  CHECK_THROWS_AS(s.mean_at(0, 0), std::out_of_range);
  CHECK_THROWS_AS(s.mean_at(3001, 0), std::out_of_range);
  CHECK_THROWS_AS(s.mean_at(1, 3), std::out_of_range);
}

TEST_CASE("trace round trip") {
  const auto s = from_segments(2, 10000, {{1, vec({0.1, 1.0 / 3.0})}, {5000, vec({0.7, 0.123456789012345678})}});
  std::stringstream ss;
  write_trace(ss, s);
  const auto back = read_trace(ss, 10000);
  CHECK(back.num_segments() == 2);
  CHECK(back.segment_start(1) == 5000);
  CHECK(back.means() == s.means());
}

TEST_CASE("trace parse errors") {
  SUBCASE("bin starts out of order") {
    std::istringstream in("t,arm_1,arm_2\n1,0.1,0.2\n5000,0.3,0.4\n3000,0.5,0.6\n");
    try {
      read_trace(in, 10000);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 4);
    }
  }
  SUBCASE("non-numeric mean") {
    std::istringstream in("t,arm_1\n1,0.5;\n");
    try {
      read_trace(in, 100);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(std::string(e.what()).find("0.5;") != std::string::npos);
    }
  }
  SUBCASE("missing header") {
    std::istringstream in("1,0.5\n");
    CHECK_THROWS_AS(read_trace(in, 100), ParseError);
  }
  SUBCASE("mean out of range") {
    std::istringstream in("t,arm_1\n1,1.5\n");
    CHECK_THROWS_AS(read_trace(in, 100), ParseError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_trace("/nonexistent/trace.csv", 100), IoError);
  }
}

TEST_CASE("reward sampling") {
  const auto s = from_segments(3, 100, {{1, vec({1.0, 0.0, 0.5})}});
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    CHECK(sample_reward(s, 1 + i % 100, 0, rng) == 1.0);
    CHECK(sample_reward(s, 1 + i % 100, 1, rng) == 0.0);
  }
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += sample_reward(s, 50, 2, rng);
  // 6 sigma of Binomial(1e5, 0.5) / 1e5 is about 0.0095
  CHECK(std::abs(sum / n - 0.5) < 0.01);
  CHECK_THROWS_AS(sample_reward(s, 101, 0, rng), std::out_of_range);
  CHECK_THROWS_AS(sample_reward(s, 1, 3, rng), std::out_of_range);
}

TEST_CASE("summary of the nine-slot flipping schedule") {
  const auto sum = summarize(flipping_env(9, 0.1), 0.1, 10);
  CHECK(sum.gamma_T == 2);
  REQUIRE(sum.per_arm_delta.size() == 2);
  CHECK(sum.per_arm_delta[0] == doctest::Approx(0.3));
  CHECK(sum.per_arm_delta[1] == doctest::Approx(0.1));
}

TEST_CASE("per-arm gap is infinite only for an always-best arm") {
  const auto s = from_segments(2, 10, {{1, vec({0.9, 0.2})}});
  const auto sum = summarize(s, 0.1, 10);
  CHECK(std::isinf(sum.per_arm_delta[0]));
  CHECK(sum.per_arm_delta[1] == doctest::Approx(0.7));
}

TEST_CASE("lambda examples") {
  const auto a = summarize(from_segments(1, 10, {{1, vec({0.55})}}), 0.1, 10);
  REQUIRE(a.lambda);
  CHECK(*a.lambda == doctest::Approx(0.05).epsilon(1e-12));
  const auto b = summarize(from_segments(1, 10, {{1, vec({0.5})}}), 0.1, 10);
  CHECK_FALSE(b.lambda);
}

TEST_CASE("lambda agrees with exact grid arithmetic and stays in range") {
  Rng rng(77);
  for (int rep = 0; rep < 500; ++rep) {
    FineGridCase c;
    c.M = 1 + static_cast<int>(rng() % 200);
    c.Q = 1 << (1 + rng() % 6);
    const long cells = static_cast<long>(c.M) * c.Q;
    c.eps_cells = 1 + static_cast<long>(rng() % static_cast<std::uint64_t>(cells / 2 - 1 > 0 ? cells / 2 - 1 : 1));
    Eigen::VectorXd m(3);
    for (int i = 0; i < 3; ++i) {
      long j = static_cast<long>(rng() % static_cast<std::uint64_t>(cells + 1));
      // half the time snap onto the coarse grid so zero distances occur
      if (rng() % 2) j -= j % c.Q;
      c.mu_cells.push_back(j);
      m[i] = static_cast<double>(j) / static_cast<double>(cells);
    }
    const double eps = static_cast<double>(c.eps_cells) / static_cast<double>(cells);
    if (!(eps > 0.0 && eps < 0.5)) continue;
    const auto sum = summarize(from_segments(3, 5, {{1, m}}), eps, c.M);
    const auto ref = exact_lambda(c);
    REQUIRE(sum.lambda.has_value() == ref.has_value());
    if (sum.lambda) {
      CHECK(*sum.lambda == doctest::Approx(*ref).epsilon(1e-9));
      CHECK(*sum.lambda > 0.0);
      CHECK(*sum.lambda < 1.0 / c.M);
    }
  }
}
