#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include "cdbandit/env.hpp"
#include "cdbandit/policy.hpp"
#include "cdbandit/rng.hpp"

namespace support {

using Big = boost::multiprecision::cpp_dec_float_50;

inline Big big_binomial(int n, int k) {
  Big r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// C1- or C1+ evaluated directly in 50-digit arithmetic.
inline Big big_c1(double epsilon, int M, bool plus) {
  const Big eps(epsilon);
  const double two_eps_m = 2.0 * epsilon * M;
  const int k = plus ? static_cast<int>(std::ceil(two_eps_m - 1e-12)) : static_cast<int>(std::floor(two_eps_m + 1e-12));
  const Big base = plus ? Big(1 + eps) : Big(1 - eps);
  const Big lead = 4 * eps / (base * base);
  return log1p(lead * big_binomial(M, k) * pow(2 * eps, M));
}

inline Big big_c2(double epsilon, int M, double lambda) {
  const Big eps(epsilon);
  return log(Big(3)) + 2 * exp(-2 * eps * eps * M) / Big(lambda);
}

/// Root of an increasing function on [lo, hi] by 200 bisection steps.
template <class F>
Big big_root(F f, Big lo, Big hi) {
  for (int i = 0; i < 200; ++i) {
    const Big mid = (lo + hi) / 2;
    if (f(mid) < 0) lo = mid; else hi = mid;
  }
  return (lo + hi) / 2;
}

struct BigRoots {
  Big r_minus, r_plus, r_hat_minus, r_hat_plus;
};

inline BigRoots big_mgf_roots(double u0, double u0_hat, double epsilon) {
  const Big bu0(u0), bhat(u0_hat), beps(epsilon);
  auto lower = [&](const Big& x) { return log(exp(-x) * bu0 + 1 - bu0) + x * (bhat - beps); };
  auto upper = [&](const Big& x) { return log(exp(x) * bu0 + 1 - bu0) - x * (bhat + beps); };
  BigRoots out;
  out.r_hat_minus = log((bu0 / (bhat - beps) - bu0) / (1 - bu0));
  out.r_hat_plus = log((1 - bu0) / (bu0 / (bhat + beps) - bu0));
  // the nonzero root lies beyond the minimiser, where the function increases
  out.r_minus = big_root(lower, out.r_hat_minus, Big(60));
  out.r_plus = big_root(upper, out.r_hat_plus, Big(60));
  return out;
}

inline double rel_err(double x, const Big& ref) { return static_cast<double>(abs((Big(x) - ref) / ref)); }

/// Textbook UCB on integer counts, independent of the library's policies.
class ReferenceUcb {
 public:
  explicit ReferenceUcb(int k) : n_(static_cast<std::size_t>(k), 0), s_(static_cast<std::size_t>(k), 0.0) {}

  int select() const {
    int best = 0;
    double best_index = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_.size(); ++i) {
      const double n = static_cast<double>(n_[i]);
      const double index = n_[i] == 0 ? std::numeric_limits<double>::infinity()
                                      : s_[i] / n + std::sqrt(std::log(static_cast<double>(total_)) / n);
      if (index > best_index) {
        best_index = index;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  void update(int arm, double r) {
    ++n_[static_cast<std::size_t>(arm)];
    s_[static_cast<std::size_t>(arm)] += r;
    ++total_;
  }

 private:
  std::vector<long> n_;
  std::vector<double> s_;
  long total_ = 0;
};

/// Slots where `policy` and the reference UCB choose differently, each on its
/// own trajectory over the shared reward tape `seed`.
inline std::int64_t ucb_mismatches(cdbandit::Policy& policy, const cdbandit::MeanSchedule& s, std::uint64_t seed) {
  const cdbandit::RewardTape tape(seed);
  ReferenceUcb ref(s.num_arms());
  cdbandit::Rng rng(seed ^ 0xabcdefULL);
  std::int64_t bad = 0;
  for (std::int64_t t = 1; t <= s.horizon(); ++t) {
    const int a = policy.select(t, rng);
    const int b = ref.select();
    if (a != b) ++bad;
    policy.update(a, tape.draw(s.mean_at(t, a), t, a), t);
    ref.update(b, tape.draw(s.mean_at(t, b), t, b));
  }
  return bad;
}

}  // namespace support
