#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "cdbandit/commands.hpp"
#include "cdbandit/config.hpp"
#include "cdbandit/errors.hpp"

using namespace cdbandit;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("cdbandit-test-" + name);
  fs::remove_all(dir);
  return dir;
}

struct Captured {
  int code;
  std::string out;
  std::string err;
};

Captured run(std::vector<Override> overrides, bool dry_run = false) {
  RunArgs args;
  args.overrides = std::move(overrides);
  args.dry_run = dry_run;
  std::ostringstream out, err;
  const int code = cmd_run(args, out, err);
  return {code, out.str(), err.str()};
}

const PolicySpec* find_policy(const ExperimentConfig& c, const std::string& kind) {
  for (const auto& p : c.policies) {
    if (p.kind == kind) return &p;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("flipping preset carries the table row") {
  const auto c = preset_config("flipping");
  CHECK(c.env.kind == "flipping");
  CHECK(c.T == 100000);
  const auto* p = find_policy(c, "cusum-ucb");
  REQUIRE(p);
  CHECK(p->params.at("epsilon") == 0.1);
  CHECK(p->params.at("M") == 100);
  CHECK(p->params.at("h") == 50);
  CHECK(p->params.at("alpha") == 0.001);
}

TEST_CASE("switching and trace presets") {
  const auto s = preset_config("switching");
  CHECK(s.env.arms == 5);
  CHECK(s.T == 1000000);
  CHECK(s.env.gamma == 10);
  CHECK(find_policy(s, "cusum-ucb")->params.at("h") == 20);
  CHECK(find_policy(s, "cusum-ucb")->params.at("alpha") == 0.01);
  const auto t = preset_config("trace");
  CHECK(find_policy(t, "cusum-ucb")->params.at("epsilon") == 0.005);
  CHECK(find_policy(t, "cusum-ucb")->params.at("h") == 200);
  CHECK(find_policy(t, "cusum-ucb")->params.at("alpha") == 0.024);
  CHECK_THROWS_AS(preset_config("nope"), ConfigError);
}

TEST_CASE("overrides replace preset values") {
  const auto c = parse_config("preset = flipping\n", {{"alpha", "0.01"}});
  CHECK(find_policy(c, "cusum-ucb")->params.at("alpha") == 0.01);
  CHECK(find_policy(c, "cusum-ucb")->params.at("h") == 50);
  const auto d = parse_config("preset = flipping\n", {{"policy.cusum-ucb.h", "30"}, {"env.delta", "0.3"}, {"T", "500"}});
  CHECK(find_policy(d, "cusum-ucb")->params.at("h") == 30);
  CHECK(d.env.delta == 0.3);
  CHECK(d.T == 500);
}

TEST_CASE("validation lists every violation") {
  try {
    parse_config("preset = flipping\nbogus = 1\n", {{"T", "-5"}, {"alpha", "x"}});
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.violations().size() >= 3);
    const std::string all = e.what();
    CHECK(all.find("bogus") != std::string::npos);
    CHECK(all.find("T") != std::string::npos);
    CHECK(all.find("alpha") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("preset = flipping\n[policy thompson]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("preset = switching\n[env]\narms = 0\n"), ConfigError);
}

TEST_CASE("rendered config parses back to the same value") {
  for (const auto& name : {"flipping", "switching"}) {
    auto c = preset_config(name);
    c.workers = 3;
    c.output = "somewhere";
    const auto back = parse_config(render_config(c));
    CHECK(back == c);
    CHECK(render_config(back) == render_config(c));
  }
  const auto custom = parse_config(
      "T = 5000\ntrials = 3\npolicies = cusum-ucb,d-ucb\n[env]\nkind = switching\narms = 3\nbeta = 0.001\n"
      "resample = 1\n[policy cusum-ucb]\nepsilon = 0.05\nM = 30\nh = 12.5\nalpha = 0.02\nxi = 0.5\n"
      "[policy d-ucb]\ndiscount = 0.999\n");
  CHECK(parse_config(render_config(custom)) == custom);
}

TEST_CASE("dry run prints the resolved config only") {
  const auto dir = scratch_dir("dry");
  const auto r = run({{"preset", "flipping"}, {"output", dir.string()}}, true);
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("[policy cusum-ucb]") != std::string::npos);
  CHECK_FALSE(fs::exists(dir));
  CHECK(parse_config(r.out) == parse_config(r.out));
}

TEST_CASE("run exit codes") {
  CHECK(run({{"preset", "flipping"}, {"T", "-5"}}).code == kExitValidation);
  const auto blocker = scratch_dir("blocker");
  { std::ofstream(blocker) << "not a directory"; }
  const auto r = run({{"preset", "flipping"}, {"T", "200"}, {"trials", "1"}, {"output", (blocker / "out").string()}});
  CHECK(r.code == kExitIo);
  CHECK(r.err.find("error") != std::string::npos);
  fs::remove(blocker);
}

TEST_CASE("run writes traces, comparison and summary") {
  const auto dir = scratch_dir("files");
  const auto r = run({{"preset", "flipping"}, {"T", "600"}, {"trials", "3"}, {"policies", "cusum-ucb,sw-ucb"},
                      {"output", dir.string()}});
  REQUIRE(r.code == kExitOk);
  CHECK(fs::exists(dir / "cusum-ucb.trace.csv"));
  CHECK(fs::exists(dir / "sw-ucb.trace.csv"));
  CHECK_FALSE(fs::exists(dir / "d-ucb.trace.csv"));
  CHECK(fs::exists(dir / "comparison.csv"));
  CHECK(fs::exists(dir / "summary.txt"));
  const auto trace = slurp(dir / "cusum-ucb.trace.csv");
  CHECK(trace.find("t,mean_regret,se\n1,") != std::string::npos);
  CHECK(trace.find("\n600,") != std::string::npos);
  const auto echoed = parse_config(slurp(dir / "config.ini"));
  CHECK(echoed.T == 600);
  fs::remove_all(dir);
}

TEST_CASE("output directory from the environment") {
  const auto dir = scratch_dir("envdir");
  ::setenv(kOutputDirEnv, dir.string().c_str(), 1);
  const auto r = run({{"preset", "flipping"}, {"T", "100"}, {"trials", "1"}, {"policies", "sw-ucb"}});
  ::unsetenv(kOutputDirEnv);
  CHECK(r.code == kExitOk);
  CHECK(fs::exists(dir / "sw-ucb.trace.csv"));
  fs::remove_all(dir);
}

TEST_CASE("run output is byte-identical across runs and worker counts") {
  std::vector<fs::path> dirs;
  const std::vector<std::string> workers = {"1", "1", "8"};
  for (std::size_t i = 0; i < workers.size(); ++i) {
    dirs.push_back(scratch_dir("det" + std::to_string(i)));
    const auto r = run({{"preset", "switching"}, {"T", "3000"}, {"trials", "6"}, {"env.arms", "3"},
                        {"workers", workers[i]}, {"output", dirs.back().string()}});
    REQUIRE(r.code == kExitOk);
  }
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(dirs[0])) {
    const auto name = entry.path().filename();
    const auto ref = slurp(entry.path());
    CHECK(slurp(dirs[1] / name) == ref);
    CHECK(slurp(dirs[2] / name) == ref);
    ++files;
  }
  CHECK(files == 7 + 3);
  for (const auto& d : dirs) fs::remove_all(d);
}

TEST_CASE("detect-eval") {
  SUBCASE("infinite threshold gives no false alarms") {
    DetectEvalArgs a;
    a.params.h = std::numeric_limits<double>::infinity();
    a.T = 5000;
    a.trials = 20;
    std::ostringstream out, err;
    CHECK(cmd_detect_eval(a, out, err) == kExitOk);
    CHECK(out.str().find("empirical_false_alarms = 0\n") != std::string::npos);
  }
  SUBCASE("undefined lambda leaves C2 blank and warns") {
    DetectEvalArgs a;
    a.T = 5000;
    a.trials = 20;
    std::ostringstream out, err;
    CHECK(cmd_detect_eval(a, out, err) == kExitOk);
    CHECK(out.str().find("lambda = undefined\n") != std::string::npos);
    CHECK(out.str().find("C2 =\n") != std::string::npos);
    CHECK(err.str().find("warning") != std::string::npos);
  }
  SUBCASE("delay within the bound at the flipping detector") {
    DetectEvalArgs a;
    a.trials = 200;
    std::ostringstream out, err;
    CHECK(cmd_detect_eval(a, out, err) == kExitOk);
    CHECK(out.str().find("delay_within_bound = true") != std::string::npos);
  }
}

TEST_CASE("constants subcommand") {
  ConstantsArgs a;
  a.lambda = 0.05;
  a.T = 100000;
  a.gamma_T = 2;
  a.u0 = 0.5;
  std::ostringstream out, err;
  CHECK(cmd_constants(a, out, err) == kExitOk);
  CHECK(out.str().find("C2 = 6.5120") != std::string::npos);
  CHECK(out.str().find("tuned_alpha_clamped = true") != std::string::npos);
  ConstantsArgs bad;
  bad.epsilon = 0.7;
  CHECK(cmd_constants(bad, out, err) == kExitValidation);
}

TEST_CASE("fit and trace-validate subcommands") {
  const auto dir = scratch_dir("sub");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "series.csv");
    f << "# comment\nt,mean_regret,se\n";
    for (int t = 1; t <= 200; ++t) f << t << ',' << 2.0 * std::pow(t, 0.5) + 1.0 << ",0\n";
  }
  {
    std::ofstream f(dir / "trace.csv");
    f << "t,arm_1,arm_2\n1,0.1,0.2\n50,0.3,0.2\n";
  }
  std::ostringstream out, err;
  CHECK(cmd_fit({(dir / "series.csv").string()}, out, err) == kExitOk);
  CHECK(out.str().find("b = 0.5") != std::string::npos);
  CHECK(cmd_fit({(dir / "missing.csv").string()}, out, err) == kExitIo);

  TraceValidateArgs tv;
  tv.path = (dir / "trace.csv").string();
  tv.T = 100;
  std::ostringstream tout;
  CHECK(cmd_trace_validate(tv, tout, err) == kExitOk);
  CHECK(tout.str().find("breakpoints = 1") != std::string::npos);
  {
    std::ofstream f(dir / "bad.csv");
    f << "t,arm_1\n1,0.5;\n";
  }
  tv.path = (dir / "bad.csv").string();
  CHECK(cmd_trace_validate(tv, tout, err) == kExitValidation);
  fs::remove_all(dir);
}
