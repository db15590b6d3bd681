#include "cdbandit/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "cdbandit/errors.hpp"
#include "cdbandit/format.hpp"

namespace cdbandit {

namespace {

std::string segment_label(std::size_t s) { return "segment " + std::to_string(s + 1); }

}  // namespace

MeanSchedule::MeanSchedule(int num_arms, std::int64_t horizon, const std::vector<Segment>& segments)
    : horizon_(horizon) {
  if (num_arms < 1) throw std::invalid_argument("num_arms must be >= 1");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (segments.empty()) throw std::invalid_argument("schedule needs at least one segment");

  means_.resize(num_arms, static_cast<Eigen::Index>(segments.size()));
  best_.resize(static_cast<Eigen::Index>(segments.size()));
  starts_.reserve(segments.size());

  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = segments[s];
    if (s == 0 && seg.start != 1) {
      throw std::invalid_argument(segment_label(s) + ": first segment must start at slot 1, got " +
                                  std::to_string(seg.start));
    }
    if (s > 0) {
      if (seg.start == starts_.back()) {
        throw std::invalid_argument(segment_label(s) + ": duplicate start slot " +
                                    std::to_string(seg.start));
      }
      if (seg.start < starts_.back()) {
        throw std::invalid_argument(segment_label(s) + ": start slot " + std::to_string(seg.start) +
                                    " precedes previous start " + std::to_string(starts_.back()));
      }
    }
    if (seg.start > horizon) {
      throw std::invalid_argument(segment_label(s) + ": start slot " + std::to_string(seg.start) +
                                  " exceeds horizon " + std::to_string(horizon));
    }
    if (seg.means.size() != num_arms) {
      throw std::invalid_argument(segment_label(s) + ": expected " + std::to_string(num_arms) +
                                  " means, got " + std::to_string(seg.means.size()));
    }
    for (Eigen::Index i = 0; i < seg.means.size(); ++i) {
      const double m = seg.means[i];
      if (!(m >= 0.0 && m <= 1.0)) {
        throw std::invalid_argument(segment_label(s) + ": mean " + format_double(m) + " of arm " +
                                    std::to_string(i + 1) + " is outside [0,1]");
      }
    }
    starts_.push_back(seg.start);
    means_.col(static_cast<Eigen::Index>(s)) = seg.means;
    best_[static_cast<Eigen::Index>(s)] = seg.means.maxCoeff();
  }
}

std::size_t MeanSchedule::segment_index(std::int64_t t) const {
  if (t < 1 || t > horizon_) {
    throw std::out_of_range("slot " + std::to_string(t) + " outside [1, " + std::to_string(horizon_) + "]");
  }
  const auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
  return static_cast<std::size_t>(it - starts_.begin()) - 1;
}

double MeanSchedule::mean_at(std::int64_t t, int arm) const {
  if (arm < 0 || arm >= num_arms()) {
    throw std::out_of_range("arm " + std::to_string(arm) + " outside [0, " + std::to_string(num_arms()) + ")");
  }
  return means_(arm, static_cast<Eigen::Index>(segment_index(t)));
}

int MeanSchedule::best_arm_at(std::int64_t t) const {
  const auto s = static_cast<Eigen::Index>(segment_index(t));
  Eigen::Index arm = 0;
  means_.col(s).maxCoeff(&arm);  // first maximal coefficient
  return static_cast<int>(arm);
}

std::vector<Segment> MeanSchedule::segments() const {
  std::vector<Segment> out;
  out.reserve(starts_.size());
  for (std::size_t s = 0; s < starts_.size(); ++s) {
    out.push_back({starts_[s], means_.col(static_cast<Eigen::Index>(s))});
  }
  return out;
}

MeanSchedule from_segments(int num_arms, std::int64_t horizon, const std::vector<Segment>& segments) {
  return MeanSchedule(num_arms, horizon, segments);
}

MeanSchedule flipping_env(std::int64_t horizon, double delta) {
  if (horizon < 3) throw std::invalid_argument("flipping environment needs T >= 3");
  if (!(delta > 0.0 && delta < 0.5)) {
    throw std::invalid_argument("flipping delta must lie in (0, 0.5), got " + format_double(delta));
  }
  // ceil(T/3) == 1 only for T == 3; starting the window at slot 2 keeps both
  // breakpoints inside the horizon.
  const std::int64_t lo = std::max<std::int64_t>(2, (horizon + 2) / 3);
  const std::int64_t hi = (2 * horizon) / 3;

  Eigen::Vector2d outer(0.5, 0.8);
  Eigen::Vector2d inner(0.5, 0.5 - delta);
  return MeanSchedule(2, horizon, {{1, outer}, {lo, inner}, {hi + 1, outer}});
}

MeanSchedule switching_env(int num_arms, std::int64_t horizon, double beta, Rng& rng) {
  if (num_arms < 1) throw std::invalid_argument("switching environment needs K >= 1");
  if (horizon < 1) throw std::invalid_argument("switching environment needs T >= 1");
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw std::invalid_argument("hazard beta must lie in [0,1], got " + format_double(beta));
  }
  Eigen::VectorXd current(num_arms);
  for (int i = 0; i < num_arms; ++i) current[i] = uniform01(rng);  // mu_0

  std::vector<Segment> segments;
  Eigen::VectorXd next = current;
  for (std::int64_t t = 1; t <= horizon; ++t) {
    for (int i = 0; i < num_arms; ++i) {
      if (uniform01(rng) < beta) next[i] = uniform01(rng);
    }
    if (t == 1 || next != current) {
      segments.push_back({t, next});
      current = next;
    }
  }
  return MeanSchedule(num_arms, horizon, segments);
}

MeanSchedule read_trace(std::istream& in, std::int64_t horizon) {
  std::string raw;
  std::size_t line_no = 0;
  int num_arms = 0;
  bool have_header = false;
  std::vector<Segment> segments;

  auto split = [](std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t pos = 0;
    while (true) {
      const auto comma = line.find(',', pos);
      cells.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    return cells;
  };

  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    const auto cells = split(line);

    if (!have_header) {
      if (cells.size() < 2 || cells[0] != "t") {
        throw ParseError(line_no, "missing header row 't,arm_1,...,arm_K'");
      }
      for (std::size_t c = 1; c < cells.size(); ++c) {
        if (cells[c] != "arm_" + std::to_string(c)) {
          throw ParseError(line_no, "header column " + std::to_string(c + 1) + " must be 'arm_" +
                                        std::to_string(c) + "', got '" + std::string(cells[c]) + "'");
        }
      }
      num_arms = static_cast<int>(cells.size()) - 1;
      have_header = true;
      continue;
    }

    if (static_cast<int>(cells.size()) != num_arms + 1) {
      throw ParseError(line_no, "expected " + std::to_string(num_arms + 1) + " cells, got " +
                                    std::to_string(cells.size()));
    }
    const auto start = parse_int(cells[0]);
    if (!start) {
      throw ParseError(line_no, "column 1: bin start '" + std::string(cells[0]) + "' is not an integer");
    }
    if (segments.empty() && *start != 1) {
      throw ParseError(line_no, "first bin must start at slot 1, got " + std::to_string(*start));
    }
    if (!segments.empty() && *start <= segments.back().start) {
      throw ParseError(line_no, "bin start " + std::to_string(*start) +
                                    " is not greater than previous start " +
                                    std::to_string(segments.back().start));
    }
    if (*start > horizon) {
      throw ParseError(line_no, "bin start " + std::to_string(*start) + " exceeds horizon " +
                                    std::to_string(horizon));
    }
    Eigen::VectorXd means(num_arms);
    for (int i = 0; i < num_arms; ++i) {
      const auto cell = cells[static_cast<std::size_t>(i) + 1];
      const auto v = parse_double(cell);
      if (!v) {
        throw ParseError(line_no, "column " + std::to_string(i + 2) + ": '" + std::string(cell) +
                                      "' is not a number");
      }
      if (!(*v >= 0.0 && *v <= 1.0)) {
        throw ParseError(line_no, "column " + std::to_string(i + 2) + ": mean " + std::string(cell) +
                                      " is outside [0,1]");
      }
      means[i] = *v;
    }
    segments.push_back({*start, std::move(means)});
  }

  if (!have_header) throw ParseError(line_no == 0 ? 1 : line_no, "missing header row 't,arm_1,...,arm_K'");
  if (segments.empty()) throw ParseError(line_no, "trace contains no bins");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  return MeanSchedule(num_arms, horizon, segments);
}

MeanSchedule load_trace(const std::filesystem::path& path, std::int64_t horizon) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace file '" + path.string() + "'");
  return read_trace(in, horizon);
}

void write_trace(std::ostream& out, const MeanSchedule& schedule) {
  out << 't';
  for (int i = 1; i <= schedule.num_arms(); ++i) out << ",arm_" << i;
  out << '\n';
  for (std::size_t s = 0; s < schedule.num_segments(); ++s) {
    out << schedule.segment_start(s);
    const auto col = schedule.segment_means(s);
    for (Eigen::Index i = 0; i < col.size(); ++i) out << ',' << format_double(col[i]);
    out << '\n';
  }
}

void save_trace(const std::filesystem::path& path, const MeanSchedule& schedule) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace file '" + path.string() + "'");
  write_trace(out, schedule);
  if (!out) throw IoError("failed writing trace file '" + path.string() + "'");
}

double sample_reward(const MeanSchedule& schedule, std::int64_t t, int arm, Rng& rng) {
  return bernoulli(rng, schedule.mean_at(t, arm)) ? 1.0 : 0.0;
}

std::int64_t count_breakpoints(const MeanSchedule& schedule, double threshold) {
  if (!(threshold >= 0.0)) throw std::invalid_argument("breakpoint threshold must be >= 0");
  const auto& m = schedule.means();
  std::int64_t count = 0;
  for (Eigen::Index s = 0; s + 1 < m.cols(); ++s) {
    if ((m.col(s + 1) - m.col(s)).cwiseAbs().maxCoeff() > threshold) ++count;
  }
  return count;
}

EnvSummary summarize(const MeanSchedule& schedule, double epsilon, int M) {
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw std::invalid_argument("epsilon must lie in (0, 0.5)");
  if (M < 1) throw std::invalid_argument("M must be >= 1");

  const auto& m = schedule.means();
  const int K = schedule.num_arms();
  EnvSummary out;
  out.gamma_T = count_breakpoints(schedule, 0.0);
  out.per_arm_delta = Eigen::VectorXd::Constant(K, std::numeric_limits<double>::infinity());

  double lambda = std::numeric_limits<double>::infinity();
  auto grid_distance = [M](double scaled, bool down) {
    // Distance, in grid cells, from `scaled` to the grid point below/above it.
    const double frac = scaled - std::floor(scaled);
    if (frac < kGridSnapTolerance || 1.0 - frac < kGridSnapTolerance) return 0.0;
    return (down ? frac : 1.0 - frac) / M;
  };

  for (Eigen::Index s = 0; s < m.cols(); ++s) {
    const double best = schedule.segment_best(static_cast<std::size_t>(s));
    for (int i = 0; i < K; ++i) {
      const double mu = m(i, s);
      if (mu < best) out.per_arm_delta[i] = std::min(out.per_arm_delta[i], best - mu);
      for (double d : {grid_distance((mu - epsilon) * M, true), grid_distance((mu + epsilon) * M, false)}) {
        if (d > 0.0) lambda = std::min(lambda, d);
      }
    }
  }
  if (std::isfinite(lambda)) out.lambda = lambda;
  return out;
}

}  // namespace cdbandit
