#include "cdbandit/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "cdbandit/errors.hpp"
#include "cdbandit/format.hpp"

namespace cdbandit {

namespace {

PolicySpec cusum_spec(double eps, int m, double h, double alpha) {
  return {"cusum-ucb", {{"epsilon", eps}, {"M", m}, {"h", h}, {"alpha", alpha}}};
}

PolicySpec pht_spec(double eps, int m, double h, double alpha) {
  return {"pht-ucb", {{"epsilon", eps}, {"M", m}, {"h", h}, {"alpha", alpha}}};
}

std::vector<PolicySpec> full_lineup(double eps, int m, double h, double alpha) {
  return {cusum_spec(eps, m, h, alpha), pht_spec(eps, m, h, alpha), {"d-ucb", {}}, {"sw-ucb", {}},
          {"exp3s", {}},                {"rexp3", {}},                {"exp3r", {}}};
}

const std::vector<std::string> kDetectorKeys = {"epsilon", "M", "h", "alpha", "xi"};
const std::vector<std::string> kEnvKinds = {"flipping", "switching", "trace"};

bool contains(const std::vector<std::string>& v, std::string_view s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const auto item = trim(s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::optional<bool> parse_bool(std::string_view s) {
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  return std::nullopt;
}

// Applies one assignment; `where` prefixes any violation message.
class Assigner {
 public:
  Assigner(ExperimentConfig& cfg, std::vector<std::string>& violations) : cfg_(cfg), v_(violations) {}

  void top(const std::string& where, const std::string& key, std::string_view value) {
    if (key == "preset") return;  // resolved before assignments
    if (key == "T") {
      if (auto x = integer(where, key, value)) cfg_.T = *x;
    } else if (key == "trials") {
      if (auto x = integer(where, key, value)) cfg_.trials = *x;
    } else if (key == "seed") {
      if (auto x = seed(where, key, value)) cfg_.seed = *x;
    } else if (key == "workers") {
      if (auto x = integer(where, key, value)) cfg_.workers = static_cast<int>(std::clamp<long long>(*x, -1, 1 << 20));
    } else if (key == "output") {
      cfg_.output = std::string(value);
    } else if (key == "trace_every") {
      if (auto x = integer(where, key, value)) cfg_.trace_every = *x;
    } else if (key == "policies") {
      set_policy_list(where, split_list(value));
    } else if (contains(kDetectorKeys, key)) {
      detector_everywhere(where, key, value);
    } else {
      v_.push_back(where + "unknown key '" + key + "'");
    }
  }

  void env(const std::string& where, const std::string& key, std::string_view value) {
    auto& e = cfg_.env;
    if (key == "kind") {
      e.kind = std::string(value);
    } else if (key == "delta") {
      if (auto x = real(where, "env." + key, value)) e.delta = *x;
    } else if (key == "arms") {
      if (auto x = integer(where, "env." + key, value)) e.arms = static_cast<int>(std::clamp<long long>(*x, -1, 1 << 20));
    } else if (key == "beta") {
      if (auto x = real(where, "env." + key, value)) e.beta = *x;
    } else if (key == "gamma") {
      if (auto x = real(where, "env." + key, value)) e.gamma = *x;
    } else if (key == "trace") {
      e.trace = std::string(value);
    } else if (key == "seed") {
      if (auto x = seed(where, "env." + key, value)) e.seed = *x;
    } else if (key == "resample") {
      if (auto b = parse_bool(value)) {
        e.resample = *b;
      } else {
        v_.push_back(where + "env.resample expects a boolean, got '" + std::string(value) + "'");
      }
    } else {
      v_.push_back(where + "unknown key 'env." + key + "'");
    }
  }

  void policy(const std::string& where, const std::string& kind, const std::string& key, std::string_view value) {
    if (!contains(policy_kinds(), kind)) {
      v_.push_back(where + "unknown policy kind '" + kind + "'");
      return;
    }
    if (!contains(policy_keys(kind), key)) {
      v_.push_back(where + "unknown key '" + key + "' for policy '" + kind + "'");
      return;
    }
    std::optional<double> x;
    if (key == "gate_burn_in") {
      if (auto b = parse_bool(value)) x = *b ? 1.0 : 0.0;
    } else {
      x = parse_double(value);
    }
    if (!x) {
      v_.push_back(where + "policy '" + kind + "' key '" + key + "' expects a number, got '" + std::string(value) + "'");
      return;
    }
    ensure_policy(kind).params[key] = *x;
  }

  PolicySpec& ensure_policy(const std::string& kind) {
    for (auto& p : cfg_.policies) {
      if (p.kind == kind) return p;
    }
    cfg_.policies.push_back({kind, {}});
    return cfg_.policies.back();
  }

 private:
  void set_policy_list(const std::string& where, const std::vector<std::string>& kinds) {
    std::vector<PolicySpec> next;
    for (const auto& k : kinds) {
      if (!contains(policy_kinds(), k)) {
        v_.push_back(where + "unknown policy kind '" + k + "'");
        continue;
      }
      auto it = std::find_if(cfg_.policies.begin(), cfg_.policies.end(), [&](const PolicySpec& p) { return p.kind == k; });
      next.push_back(it != cfg_.policies.end() ? *it : PolicySpec{k, {}});
    }
    cfg_.policies = std::move(next);
  }

  void detector_everywhere(const std::string& where, const std::string& key, std::string_view value) {
    auto x = parse_double(value);
    if (!x) {
      v_.push_back(where + "'" + key + "' expects a number, got '" + std::string(value) + "'");
      return;
    }
    bool any = false;
    for (auto& p : cfg_.policies) {
      if (contains(policy_keys(p.kind), key)) {
        p.params[key] = *x;
        any = true;
      }
    }
    if (!any) v_.push_back(where + "no configured policy accepts '" + key + "'");
  }

  std::optional<long long> integer(const std::string& where, const std::string& key, std::string_view value) {
    auto x = parse_int(value);
    if (!x) v_.push_back(where + "'" + key + "' expects an integer, got '" + std::string(value) + "'");
    return x;
  }

  std::optional<double> real(const std::string& where, const std::string& key, std::string_view value) {
    auto x = parse_double(value);
    if (!x) v_.push_back(where + "'" + key + "' expects a number, got '" + std::string(value) + "'");
    return x;
  }

  std::optional<std::uint64_t> seed(const std::string& where, const std::string& key, std::string_view value) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (value.empty() || ec != std::errc{} || ptr != value.data() + value.size()) {
      v_.push_back(where + "'" + key + "' expects an unsigned 64-bit integer, got '" + std::string(value) + "'");
      return std::nullopt;
    }
    return v;
  }

  ExperimentConfig& cfg_;
  std::vector<std::string>& v_;
};

struct Line {
  std::size_t number;
  std::string section;  // "", "env" or "policy <kind>"
  std::string key;
  std::string value;
};

std::vector<Line> tokenize(std::string_view text, std::vector<std::string>& violations) {
  std::vector<Line> out;
  std::string section;
  std::size_t number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++number;
    const auto hash = raw.find('#');
    auto line = trim(hash == std::string_view::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(number) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') {
        violations.push_back(where + "unterminated section header");
        continue;
      }
      auto name = trim(line.substr(1, line.size() - 2));
      if (name == "env") {
        section = "env";
      } else if (name.starts_with("policy ") || name.starts_with("policy\t")) {
        section = "policy " + std::string(trim(name.substr(7)));
        out.push_back({number, section, "", ""});  // declares the policy
      } else {
        violations.push_back(where + "unknown section '" + std::string(name) + "'");
        section = "?";
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      violations.push_back(where + "expected 'key = value'");
      continue;
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) {
      violations.push_back(where + "missing key");
      continue;
    }
    out.push_back({number, section, std::string(key), std::string(trim(line.substr(eq + 1)))});
  }
  return out;
}

std::string policy_list(const ExperimentConfig& cfg) {
  std::string s;
  for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
    if (i) s += ',';
    s += cfg.policies[i].kind;
  }
  return s;
}

int env_arms(const ExperimentConfig& cfg, std::vector<std::string>& violations) {
  if (cfg.env.kind == "flipping") return 2;
  if (cfg.env.kind == "switching") return cfg.env.arms;
  if (cfg.env.kind == "trace" && !cfg.env.trace.empty() && cfg.T && *cfg.T >= 1) {
    try {
      return load_trace(cfg.env.trace, *cfg.T).num_arms();
    } catch (const ParseError& e) {
      violations.push_back("env.trace '" + cfg.env.trace + "': " + e.what());
    } catch (const std::invalid_argument& e) {
      violations.push_back("env.trace '" + cfg.env.trace + "': " + e.what());
    }
  }
  return 0;
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"flipping", "switching", "trace"};
  return names;
}

ExperimentConfig preset_config(std::string_view name) {
  ExperimentConfig c;
  c.preset = std::string(name);
  if (name == "flipping") {
    c.T = 100000;
    c.trials = 100;
    c.env.kind = "flipping";
    c.env.delta = 0.1;
    c.policies = {cusum_spec(0.1, 100, 50, 0.001), {"sw-ucb", {}}, {"d-ucb", {}}};
  } else if (name == "switching") {
    c.T = 1000000;
    c.trials = 10;
    c.env.kind = "switching";
    c.env.arms = 5;
    c.env.gamma = 10;
    c.policies = full_lineup(0.1, 100, 20, 0.01);
  } else if (name == "trace") {
    c.trials = 10;
    c.env.kind = "trace";
    c.policies = full_lineup(0.005, 100, 200, 0.024);
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "'");
  }
  return c;
}

void apply_overrides(ExperimentConfig& cfg, const std::vector<Override>& overrides,
                     std::vector<std::string>& violations) {
  Assigner assign(cfg, violations);
  for (const auto& [key, value] : overrides) {
    const std::string where = "override '" + key + "': ";
    const auto v = trim(value);
    if (key.starts_with("env.")) {
      assign.env(where, key.substr(4), v);
    } else if (key.starts_with("policy.")) {
      const auto rest = key.substr(7);
      const auto dot = rest.rfind('.');
      if (dot == std::string::npos || dot == 0) {
        violations.push_back(where + "expected policy.<kind>.<key>");
        continue;
      }
      assign.policy(where, rest.substr(0, dot), rest.substr(dot + 1), v);
    } else {
      assign.top(where, key, v);
    }
  }
}

ExperimentConfig parse_config(std::string_view text, const std::vector<Override>& overrides) {
  std::vector<std::string> violations;
  const auto lines = tokenize(text, violations);

  std::optional<std::string> preset;
  for (const auto& l : lines) {
    if (l.section.empty() && l.key == "preset") preset = l.value;
  }
  for (const auto& [k, v] : overrides) {
    if (k == "preset") preset = std::string(trim(v));
  }

  ExperimentConfig cfg;
  cfg.policies.clear();
  if (preset && !preset->empty()) {
    if (contains(preset_names(), *preset)) {
      cfg = preset_config(*preset);
    } else {
      violations.push_back("unknown preset '" + *preset + "'");
    }
  }

  Assigner assign(cfg, violations);
  for (const auto& l : lines) {
    const std::string where = "line " + std::to_string(l.number) + ": ";
    if (l.section.empty()) {
      assign.top(where, l.key, l.value);
    } else if (l.section == "env") {
      assign.env(where, l.key, l.value);
    } else if (l.section.starts_with("policy ")) {
      const auto kind = l.section.substr(7);
      if (l.key.empty()) {
        if (contains(policy_kinds(), kind)) {
          assign.ensure_policy(kind);
        } else {
          violations.push_back(where + "unknown policy kind '" + kind + "'");
        }
      } else if (contains(policy_kinds(), kind)) {
        assign.policy(where, kind, l.key, l.value);
      }
    }
  }
  apply_overrides(cfg, overrides, violations);

  try {
    validate_config(cfg);
  } catch (const ConfigError& e) {
    violations.insert(violations.end(), e.violations().begin(), e.violations().end());
  }
  if (!violations.empty()) throw ConfigError(std::move(violations));
  return cfg;
}

void validate_config(const ExperimentConfig& cfg) {
  std::vector<std::string> v;
  if (!cfg.T) {
    v.push_back("T is required" + (cfg.preset.empty() ? std::string() : " for preset '" + cfg.preset + "'"));
  } else if (*cfg.T < 1) {
    v.push_back("T must be a positive integer, got " + std::to_string(*cfg.T));
  } else if (cfg.env.kind == "flipping" && *cfg.T < 3) {
    v.push_back("flipping environment needs T >= 3, got " + std::to_string(*cfg.T));
  }
  if (cfg.trials < 1) v.push_back("trials must be a positive integer, got " + std::to_string(cfg.trials));
  if (cfg.workers < 1) v.push_back("workers must be a positive integer, got " + std::to_string(cfg.workers));
  if (cfg.trace_every < 1) v.push_back("trace_every must be a positive integer, got " + std::to_string(cfg.trace_every));

  const auto& e = cfg.env;
  if (!contains(kEnvKinds, e.kind)) {
    v.push_back("env.kind must be one of flipping, switching, trace; got '" + e.kind + "'");
  } else if (e.kind == "flipping") {
    if (!(e.delta > 0.0 && e.delta < 0.5)) v.push_back("env.delta must lie in (0, 0.5), got " + format_double(e.delta));
  } else if (e.kind == "switching") {
    if (e.arms < 1) v.push_back("env.arms must be a positive integer, got " + std::to_string(e.arms));
    if (e.beta && !(*e.beta >= 0.0 && *e.beta <= 1.0)) v.push_back("env.beta must lie in [0, 1], got " + format_double(*e.beta));
    if (!e.beta && !(e.gamma >= 0.0 && std::isfinite(e.gamma))) v.push_back("env.gamma must be nonnegative, got " + format_double(e.gamma));
    if (!e.beta && cfg.T && *cfg.T >= 1 && e.gamma > static_cast<double>(*cfg.T)) {
      v.push_back("env.gamma must not exceed T");
    }
  } else if (e.trace.empty()) {
    v.push_back("env.trace (path to a trace file) is required for the trace environment");
  }

  if (cfg.policies.empty()) v.push_back("at least one policy is required");
  for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (cfg.policies[i].kind == cfg.policies[j].kind) v.push_back("policy '" + cfg.policies[i].kind + "' listed twice");
    }
  }

  const int arms = contains(kEnvKinds, e.kind) ? env_arms(cfg, v) : 0;
  if (arms >= 1) {
    PolicyContext ctx;
    ctx.num_arms = arms;
    ctx.horizon = cfg.T && *cfg.T >= 1 ? *cfg.T : 1;
    ctx.breakpoints = 1;
    for (const auto& p : cfg.policies) {
      if (p.kind == "oracle") continue;  // needs the realised schedule
      try {
        make_policy(p, ctx);
      } catch (const ConfigError& err) {
        v.insert(v.end(), err.violations().begin(), err.violations().end());
      }
    }
  }
  if (!v.empty()) throw ConfigError(std::move(v));
}

std::string render_config(const ExperimentConfig& cfg, bool include_runtime) {
  std::ostringstream out;
  if (!cfg.preset.empty()) out << "preset = " << cfg.preset << '\n';
  if (cfg.T) out << "T = " << *cfg.T << '\n';
  out << "trials = " << cfg.trials << '\n';
  out << "seed = " << cfg.seed << '\n';
  out << "trace_every = " << cfg.trace_every << '\n';
  if (include_runtime) {
    out << "workers = " << cfg.workers << '\n';
    if (!cfg.output.empty()) out << "output = " << cfg.output << '\n';
  }
  out << "policies = " << policy_list(cfg) << '\n';

  const auto& e = cfg.env;
  out << "\n[env]\n";
  out << "kind = " << e.kind << '\n';
  out << "delta = " << format_double(e.delta) << '\n';
  out << "arms = " << e.arms << '\n';
  if (e.beta) out << "beta = " << format_double(*e.beta) << '\n';
  out << "gamma = " << format_double(e.gamma) << '\n';
  if (!e.trace.empty()) out << "trace = " << e.trace << '\n';
  out << "seed = " << e.seed << '\n';
  out << "resample = " << (e.resample ? 1 : 0) << '\n';

  for (const auto& p : cfg.policies) {
    out << "\n[policy " << p.kind << "]\n";
    for (const auto& [k, v] : p.params) out << k << " = " << format_double(v) << '\n';
  }
  return out.str();
}

MeanSchedule build_environment(const ExperimentConfig& cfg, std::int64_t trial) {
  if (!cfg.T) throw ConfigError("T is required");
  const std::int64_t T = *cfg.T;
  const auto& e = cfg.env;
  if (e.kind == "flipping") return flipping_env(T, e.delta);
  if (e.kind == "switching") {
    Rng rng(derive_seed(e.seed, e.resample ? static_cast<std::uint64_t>(trial) : 0));
    const double beta = e.beta.value_or(e.gamma / static_cast<double>(T));
    return switching_env(e.arms, T, beta, rng);
  }
  if (e.kind == "trace") return load_trace(e.trace, T);
  throw ConfigError("unknown environment kind '" + e.kind + "'");
}

bool operator==(const EnvConfig& a, const EnvConfig& b) {
  return a.kind == b.kind && a.delta == b.delta && a.arms == b.arms && a.beta == b.beta && a.gamma == b.gamma &&
         a.trace == b.trace && a.seed == b.seed && a.resample == b.resample;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.preset == b.preset && a.T == b.T && a.trials == b.trials && a.seed == b.seed && a.workers == b.workers &&
         a.output == b.output && a.trace_every == b.trace_every && a.env == b.env && a.policies == b.policies;
}

}  // namespace cdbandit
