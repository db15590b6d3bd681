#include "cdbandit/commands.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cdbandit/bench.hpp"
#include "cdbandit/errors.hpp"
#include "cdbandit/format.hpp"

namespace cdbandit {

namespace fs = std::filesystem;

namespace {

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    for (const auto& v : e.violations()) err << "error: " << v << '\n';
    return kExitValidation;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::logic_error& e) {  // invalid_argument, domain_error, out_of_range
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read '" + path + "'");
  return ss.str();
}

class FileWriter {
 public:
  explicit FileWriter(const fs::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot write '" + path.string() + "'");
  }
  std::ostream& stream() { return out_; }
  void close() {
    out_.close();
    if (!out_) throw IoError("failed writing '" + path_.string() + "'");
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

/// A positive value given by its natural log; printed in decimal scientific
/// form even when it lies below the double range.
std::string format_from_log(double value, double log_value) {
  if (value > 0.0 && std::isfinite(value)) return format_double(value);
  const double log10_value = log_value / std::log(10.0);
  const double exponent = std::floor(log10_value);
  std::ostringstream os;
  os << std::setprecision(15) << std::pow(10.0, log10_value - exponent) << 'e' << static_cast<long long>(exponent);
  return os.str();
}

void kv(std::ostream& out, const std::string& key, double value) { out << key << " = " << format_double(value) << '\n'; }
void kv(std::ostream& out, const std::string& key, std::int64_t value) { out << key << " = " << value << '\n'; }
void kv(std::ostream& out, const std::string& key, const std::string& value) { out << key << " = " << value << '\n'; }
void kv(std::ostream& out, const std::string& key, const std::optional<double>& value) {
  out << key << " =";
  if (value) out << ' ' << format_double(*value);
  out << '\n';
}

fs::path output_dir(const ExperimentConfig& cfg) {
  if (!cfg.output.empty()) return cfg.output;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return kDefaultOutputDir;
}

std::string prefixed(const std::string& text, const std::string& prefix) {
  std::ostringstream out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out << prefix << line << '\n';
  return out.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// run

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const std::string text = args.config_path.empty() ? std::string() : read_file(args.config_path);
    const ExperimentConfig cfg = parse_config(text, args.overrides);
    if (args.dry_run) {
      out << render_config(cfg);
      return kExitOk;
    }

    const fs::path dir = output_dir(cfg);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");

    const std::string provenance = render_config(cfg, false);
    {
      FileWriter f(dir / "config.ini");
      f.stream() << provenance;
      f.close();
    }

    const std::int64_t T = *cfg.T;
    const RunOptions options{cfg.trials, cfg.seed, cfg.workers, false};
    std::optional<MeanSchedule> fixed;
    double gamma_T = 0.0;
    int K = 0;
    if (cfg.env.kind == "switching" && cfg.env.resample) {
      for (std::int64_t r = 0; r < cfg.trials; ++r) {
        const auto s = build_environment(cfg, r);
        gamma_T += static_cast<double>(count_breakpoints(s));
        K = s.num_arms();
      }
      gamma_T /= static_cast<double>(cfg.trials);
    } else {
      fixed.emplace(build_environment(cfg));
      gamma_T = static_cast<double>(count_breakpoints(*fixed));
      K = fixed->num_arms();
    }

    std::vector<RegretTrace> traces;
    for (const auto& spec : cfg.policies) {
      if (fixed) {
        traces.push_back(run_experiment(*fixed, spec, options));
      } else {
        traces.push_back(run_experiment([&](std::int64_t r) { return build_environment(cfg, r); }, spec, options));
      }
      const auto& tr = traces.back();
      FileWriter f(dir / (tr.policy + ".trace.csv"));
      auto& o = f.stream();
      o << "# cdbandit regret trace\n# policy = " << tr.policy << '\n' << prefixed(provenance, "# ");
      o << "t,mean_regret,se\n";
      for (std::int64_t t = 1; t <= T; ++t) {
        if (t % cfg.trace_every != 0 && t != T && t != 1) continue;
        o << t << ',' << format_double(tr.mean[t - 1]) << ',' << format_double(tr.se[t - 1]) << '\n';
      }
      f.close();
    }

    const ComparisonTable table = compare(traces);
    {
      FileWriter f(dir / "comparison.csv");
      write_comparison(f.stream(), table);
      f.close();
    }

    std::ostringstream summary;
    kv(summary, "environment", cfg.env.kind);
    kv(summary, "K", static_cast<std::int64_t>(K));
    kv(summary, "T", T);
    kv(summary, "trials", cfg.trials);
    kv(summary, "seed", static_cast<std::int64_t>(cfg.seed));
    kv(summary, cfg.env.resample && cfg.env.kind == "switching" ? "gamma_T_mean" : "gamma_T", gamma_T);
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const auto& tr = traces[i];
      const auto& row = table.rows[i];
      const std::string p = "policy." + tr.policy + ".";
      kv(summary, p + "final_mean", row.final_mean);
      kv(summary, p + "final_se", row.final_se);
      if (row.fit) {
        kv(summary, p + "fit_a", row.fit->a);
        kv(summary, p + "fit_b", row.fit->b);
        kv(summary, p + "fit_c", row.fit->c);
        kv(summary, p + "fit_degenerate", std::string(row.fit->degenerate ? "true" : "false"));
      }
      kv(summary, p + "restarts_mean", tr.restarts.mean());
      kv(summary, p + "suboptimal_plays_mean", tr.suboptimal_plays.colwise().sum().mean());
    }
    {
      FileWriter f(dir / "summary.txt");
      f.stream() << summary.str();
      f.close();
    }

    auto fmt_fixed = [](double x, int prec) {
      std::ostringstream os;
      os << std::fixed << std::setprecision(prec) << x;
      return os.str();
    };
    out << std::left << std::setw(14) << "policy" << std::right << std::setw(14) << "final_regret" << std::setw(12)
        << "se" << std::setw(10) << "fit_b" << '\n';
    for (const auto& row : table.rows) {
      out << std::left << std::setw(14) << row.policy << std::right << std::setw(14) << fmt_fixed(row.final_mean, 2)
          << std::setw(12) << fmt_fixed(row.final_se, 2) << std::setw(10)
          << (row.fit ? fmt_fixed(row.fit->b, 3) : std::string("-")) << '\n';
    }
    out << "wrote " << traces.size() << " traces to " << dir.string() << '\n';
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// detect-eval

int cmd_detect_eval(const DetectEvalArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    a.params.validate();
    const DetectorParams& p = a.params;
    const std::int64_t change = a.change_slot.value_or(static_cast<std::int64_t>(p.M) + 1);
    const bool cusum = a.kind == DetectorKind::cusum;

    std::optional<double> lambda = a.lambda;
    if (!lambda) {
      Eigen::VectorXd means(2);
      means << a.pre_mean, a.post_mean;
      lambda = summarize(from_segments(2, 1, {{1, means}}), p.epsilon, p.M).lambda;
    }
    const C1Parts c1 = theorem3_c1(p.epsilon, p.M);
    std::optional<double> c2;
    if (lambda) {
      c2 = theorem3_c2(p.epsilon, p.M, *lambda);
    } else {
      err << "warning: lambda undefined for these means; bounds that need C2 are left blank\n";
    }

    DetectionSetup setup{a.kind, p, a.gate_burn_in, std::nullopt};
    const DetectionMetrics shift =
        estimate_detection_metrics(setup, a.pre_mean, a.post_mean, change, a.T, a.trials, a.seed, a.workers);
    const DetectionMetrics quiet =
        estimate_detection_metrics(setup, a.pre_mean, a.pre_mean, 1, a.T, a.trials, a.seed ^ 0x5a5a5a5aULL, a.workers);

    out << "detector = " << (cusum ? "cusum" : "pht") << '\n';
    kv(out, "epsilon", p.epsilon);
    kv(out, "M", static_cast<std::int64_t>(p.M));
    kv(out, "h", p.h);
    kv(out, "pre_mean", a.pre_mean);
    kv(out, "post_mean", a.post_mean);
    kv(out, "change_slot", change);
    kv(out, "T", a.T);
    kv(out, "trials", a.trials);
    kv(out, "seed", static_cast<std::int64_t>(a.seed));
    if (lambda) {
      kv(out, "lambda", *lambda);
    } else {
      kv(out, "lambda", std::string("undefined"));
    }
    kv(out, "C1", format_from_log(c1.value(), c1.log_value()));
    kv(out, "C2", c2);

    kv(out, "empirical_mean_delay", shift.mean_delay);
    kv(out, "empirical_delay_se", shift.delay_se);
    kv(out, "misses", shift.misses);
    kv(out, "censored_mean_delay", shift.censored_mean_delay);
    kv(out, "empirical_false_alarms", quiet.false_alarms);

    std::optional<double> conditional_delay;
    if (cusum) {
      DetectionSetup pinned = setup;
      pinned.pinned_reference = a.pre_mean;
      const DetectionMetrics cond =
          estimate_detection_metrics(pinned, a.pre_mean, a.post_mean, change, a.T, a.trials, a.seed, a.workers);
      conditional_delay = cond.mean_delay;
      // average of the per-trial conditional bounds at the realised reference
      double sum = 0.0;
      std::int64_t n = 0;
      for (const auto& tr : shift.per_trial) {
        const double ref = tr.reference;
        if (std::isnan(ref) || !(std::abs(ref - a.pre_mean) < p.epsilon) || !(std::abs(a.post_mean - ref) > p.epsilon)) {
          continue;
        }
        sum += (p.h + 1.0) / (std::abs(a.post_mean - ref) - p.epsilon);
        ++n;
      }
      kv(out, "conditional_mean_delay", conditional_delay);
      kv(out, "mean_conditional_delay_bound", n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt);
    }

    std::optional<double> prop1_delay, prop1_fa;
    if (std::abs(a.post_mean - a.pre_mean) > p.epsilon) {
      const Prop1Bounds b = prop1_bounds(a.pre_mean, a.pre_mean, a.post_mean, p.epsilon, p.h, a.T);
      prop1_delay = b.delay_bound;
      prop1_fa = b.false_alarm_bound;
    }
    kv(out, "prop1_delay_bound", prop1_delay);
    kv(out, "prop1_false_alarm_bound", prop1_fa);
    kv(out, "theorem3_delay_bound", c2 ? std::optional<double>(theorem3_delay_bound(*c2, p.h)) : std::nullopt);
    kv(out, "theorem3_false_alarm_bound", theorem3_false_alarm_bound(c1, p.epsilon, p.M, p.h, a.T));

    if (c2 && a.T > a.gamma_T && a.gamma_T >= 1) {
      const TunedParams tp = tuned_params(a.T, a.gamma_T, a.arms, c1, *c2);
      kv(out, "tuned_h", tp.h);
      kv(out, "tuned_alpha_raw", tp.alpha_raw);
      kv(out, "tuned_alpha", tp.alpha);
      kv(out, "tuned_alpha_clamped", std::string(tp.alpha_clamped ? "true" : "false"));
      if (tp.alpha_clamped) err << "warning: tuned alpha exceeds 1 and was clamped\n";
    } else {
      kv(out, "tuned_h", std::nullopt);
      kv(out, "tuned_alpha", std::nullopt);
    }
    const std::optional<double> checked = cusum ? conditional_delay : std::optional<double>(shift.mean_delay);
    if (prop1_delay && checked && !std::isnan(*checked)) {
      kv(out, "delay_within_bound", std::string(*checked <= *prop1_delay ? "true" : "false"));
    } else {
      kv(out, "delay_within_bound", std::string());
    }
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// constants

int cmd_constants(const ConstantsArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    DetectorParams{a.epsilon, a.M, 0.0}.validate();
    std::optional<double> lambda = a.lambda;
    if (!lambda && !a.means.empty()) {
      Eigen::VectorXd m = Eigen::Map<const Eigen::VectorXd>(a.means.data(), static_cast<Eigen::Index>(a.means.size()));
      lambda = summarize(from_segments(static_cast<int>(m.size()), 1, {{1, m}}), a.epsilon, a.M).lambda;
    }
    if (lambda && !(*lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
    const C1Parts c1 = theorem3_c1(a.epsilon, a.M);
    kv(out, "epsilon", a.epsilon);
    kv(out, "M", static_cast<std::int64_t>(a.M));
    if (lambda) {
      kv(out, "lambda", *lambda);
    } else {
      kv(out, "lambda", std::string("undefined"));
      err << "warning: lambda undefined; C2 left blank\n";
    }
    kv(out, "C1_minus", format_from_log(c1.minus, c1.log_minus));
    kv(out, "C1_plus", format_from_log(c1.plus, c1.log_plus));
    kv(out, "C1", format_from_log(c1.value(), c1.log_value()));
    const std::optional<double> c2 = lambda ? std::optional<double>(theorem3_c2(a.epsilon, a.M, *lambda)) : std::nullopt;
    kv(out, "C2", c2);
    if (a.T) {
      if (c2) {
        const TunedParams tp = tuned_params(*a.T, a.gamma_T, a.arms, c1, *c2);
        kv(out, "tuned_h", tp.h);
        kv(out, "tuned_alpha_raw", tp.alpha_raw);
        kv(out, "tuned_alpha", tp.alpha);
        kv(out, "tuned_alpha_clamped", std::string(tp.alpha_clamped ? "true" : "false"));
        if (tp.alpha_clamped) err << "warning: tuned alpha exceeds 1 and was clamped\n";
      }
    }
    if (a.u0) {
      const MgfRoots r = compute_mgf_roots(*a.u0, a.u0_hat.value_or(*a.u0), a.epsilon);
      kv(out, "r_minus", r.r_minus);
      kv(out, "r_plus", r.r_plus);
      kv(out, "r_hat_minus", r.r_hat_minus);
      kv(out, "r_hat_plus", r.r_hat_plus);
      kv(out, "r", r.r());
    }
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// fit

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const std::string text = read_file(a.input);
    std::vector<double> ts, ys;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    bool explicit_t = false;
    while (std::getline(in, raw)) {
      ++line_no;
      const auto line = trim(raw);
      if (line.empty() || line.front() == '#') continue;
      std::vector<std::string_view> cells;
      std::size_t pos = 0;
      while (true) {
        const auto comma = line.find(',', pos);
        cells.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
      }
      if (ys.empty() && ts.empty() && !parse_double(cells[0])) continue;  // header row
      if (cells.size() == 1) {
        const auto y = parse_double(cells[0]);
        if (!y) throw ParseError(line_no, "'" + std::string(cells[0]) + "' is not a number");
        ys.push_back(*y);
        ts.push_back(static_cast<double>(ys.size()));
      } else {
        const auto t = parse_double(cells[0]);
        const auto y = parse_double(cells[1]);
        if (!t) throw ParseError(line_no, "'" + std::string(cells[0]) + "' is not a number");
        if (!y) throw ParseError(line_no, "'" + std::string(cells[1]) + "' is not a number");
        ts.push_back(*t);
        ys.push_back(*y);
        explicit_t = true;
      }
    }
    const Eigen::Map<const Eigen::VectorXd> y(ys.data(), static_cast<Eigen::Index>(ys.size()));
    const Eigen::Map<const Eigen::VectorXd> t(ts.data(), static_cast<Eigen::Index>(ts.size()));
    const FitResult f = explicit_t ? fit_power_law(Eigen::VectorXd(t), Eigen::VectorXd(y)) : fit_power_law(y);
    kv(out, "points", static_cast<std::int64_t>(ys.size()));
    kv(out, "a", f.a);
    kv(out, "b", f.b);
    kv(out, "c", f.c);
    kv(out, "residual_norm", f.residual_norm);
    kv(out, "converged", std::string(f.converged ? "true" : "false"));
    kv(out, "degenerate", std::string(f.degenerate ? "true" : "false"));
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// trace-validate

int cmd_trace_validate(const TraceValidateArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (a.T < 1) throw ConfigError("T must be a positive integer");
    if (!(a.threshold >= 0.0)) throw ConfigError("threshold must be nonnegative");
    const MeanSchedule s = load_trace(a.path, a.T);
    const EnvSummary sum = summarize(s, a.epsilon, a.M);
    kv(out, "K", static_cast<std::int64_t>(s.num_arms()));
    kv(out, "T", s.horizon());
    kv(out, "segments", static_cast<std::int64_t>(s.num_segments()));
    kv(out, "breakpoints", count_breakpoints(s, a.threshold));
    kv(out, "gamma_T", sum.gamma_T);
    for (int i = 0; i < s.num_arms(); ++i) kv(out, "delta.arm_" + std::to_string(i + 1), sum.per_arm_delta[i]);
    if (sum.lambda) {
      kv(out, "lambda", *sum.lambda);
    } else {
      kv(out, "lambda", std::string("undefined"));
    }
    return kExitOk;
  });
}

}  // namespace cdbandit
