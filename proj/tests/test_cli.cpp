#include "mmfg/cli/run.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mmfg;
using namespace mmfg::cli;

namespace {

json base() { return json{{"schema_version", 1}}; }

// Field path of the ConfigError raised by parsing j, or "" if it parses.
std::string error_path(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "";
}

std::string error_text(const json& j) {
  try {
    parse_config(j);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

std::size_t count_lines(const std::string& s) { return std::size_t(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Config, DefaultsAreTheBaseline) {
  auto c = parse_config(base());
  EXPECT_EQ(c.command, "verify");
  EXPECT_EQ(c.problem.d, 1);
  EXPECT_EQ(c.problem.n, 64);
  EXPECT_EQ(c.problem.hamiltonian.alpha, 2.0);
  EXPECT_EQ(c.epsilon, 1e-2);
  EXPECT_EQ(c.schedule, (std::vector<double>{1e-1, 1e-2, 1e-3, 1e-4}));
  auto pb = c.stationary_problem<double>();
  EXPECT_NEAR(pb.V()[0], 0.5, 1e-15);
  EXPECT_NEAR(pb.V()[16], 0.0, 1e-15);  // x = 1/4
  for (std::size_t j = 0; j < pb.grid().size(); ++j) EXPECT_NEAR(pb.phi()[j], 1.0, 1e-15);
}

TEST(Config, RejectsWithFieldPaths) {
  auto j = base();
  j["problem"] = {{"hamiltonian", {{"alpha", 1.0}}}};
  EXPECT_EQ(error_path(j), "problem.hamiltonian.alpha");
  EXPECT_NE(error_text(j).find("α > 1"), std::string::npos);

  j = base();
  j["schema_version"] = 2;
  EXPECT_EQ(error_path(j), "schema_version");
  j = base();
  j.erase("schema_version");
  EXPECT_EQ(error_path(j), "schema_version");

  j = base();
  j["problem"] = {{"n", 63}};
  EXPECT_EQ(error_path(j).rfind("problem", 0), 0u);

  j = base();
  j["epsilon"] = 1.5;
  EXPECT_EQ(error_path(j), "epsilon");

  j = base();
  j["schedule"] = {1e-1, 1e-1};
  EXPECT_EQ(error_path(j), "schedule[1]");

  j = base();
  j["solver"] = {{"picard", {{"theta", 0.0}}}};
  EXPECT_EQ(error_path(j).rfind("solver", 0), 0u);

  j = base();
  j["timedep"] = {{"m0", {{"constant", 0.0}}}};
  EXPECT_EQ(error_path(j), "timedep.m0");

  j = base();
  j["typo"] = 1;
  EXPECT_EQ(error_path(j), "typo");

  j = base();
  j["seed"] = "one";
  EXPECT_EQ(error_path(j), "seed");
}

TEST(Config, GeometricScheduleObject) {
  auto j = base();
  j["schedule"] = {{"start", 1e-1}, {"stop", 1e-3}, {"count", 3}};
  auto c = parse_config(j);
  ASSERT_EQ(c.schedule.size(), 3u);
  EXPECT_DOUBLE_EQ(c.schedule[0], 1e-1);
  EXPECT_NEAR(c.schedule[1], 1e-2, 1e-17);
  EXPECT_NEAR(c.schedule[2], 1e-3, 1e-18);
}

TEST(Config, DensityPresetIsSquaredAndNormalized) {
  auto j = base();
  j["problem"] = json::parse(R"({"phi": {"constant": 1, "terms": [{"k": [1, 0], "cos": 0.5}]}})");
  auto pb = parse_config(j).stationary_problem<double>();
  EXPECT_NEAR(integrate(pb.phi()), 1.0, 1e-14);
  // (1 + 0.5 cos)^2 / 1.125
  EXPECT_NEAR(pb.phi()[0], 2.25 / 1.125, 1e-14);
}

TEST(Config, EchoRoundTrips) {
  auto j = base();
  j["command"] = "sweep";
  j["seed"] = 11;
  j["schedule"] = {0.2, 0.02};
  auto c = parse_config(j);
  auto again = parse_config(to_json(c));
  EXPECT_EQ(dump_report(to_json(c)), dump_report(to_json(again)));
}

TEST(Report, FloatsUseSeventeenDigitsAndNonFiniteBecomesNull) {
  json j;
  j["x"] = 0.1;
  j["y"] = std::numeric_limits<double>::infinity();
  j["v"] = {1.0, 2.5};
  EXPECT_EQ(dump_report(j), "{\n  \"x\": 0.10000000000000001,\n  \"y\": null,\n  \"v\": [1, 2.5]\n}\n");
}

TEST(Report, TableHeaderHasThirteenColumns) {
  auto t = format_table({});
  EXPECT_EQ(t, "epsilon,mgm,mDu,phiDu,regQuad,intM,intU,intUM,intH,minM,maxWeakVI,iters,residual\n");
  TableRow r;
  r.epsilon = 0.5;
  r.iters = 3;
  auto line = format_table({r});
  EXPECT_EQ(line.substr(line.find('\n') + 1), "0.5,0,0,0,0,0,0,0,0,0,0,3,0\n");
}

TEST(Report, OutputDirectoryPriority) {
  RunConfig c;
  ::setenv("MMFG_OUTPUT_DIR", "/tmp/from_env", 1);
  EXPECT_EQ(resolve_output_dir(c, ""), "/tmp/from_env");
  c.output.dir = "cfgdir";
  EXPECT_EQ(resolve_output_dir(c, ""), "cfgdir");
  EXPECT_EQ(resolve_output_dir(c, "flag"), "flag");
  ::unsetenv("MMFG_OUTPUT_DIR");
  c.output.dir.clear();
  EXPECT_EQ(resolve_output_dir(c, ""), ".");
}

TEST(Report, FilesystemErrorsCarryTheOsMessage) {
  ReportBundle b;
  b.report = base();
  try {
    emit_report(b, "/proc/definitely/not/here", "x");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("/proc/definitely/not/here"), std::string::npos);
  }
}

TEST(Run, EmptySweepGivesHeaderOnlyTable) {
  auto j = base();
  j["command"] = "sweep";
  j["schedule"] = json::array();
  auto c = parse_config(j);
  std::ostringstream log;
  auto out = run_command(c, c.command, log);
  EXPECT_EQ(out.exit_code, kOk);
  EXPECT_EQ(count_lines(format_table(out.bundle.rows)), 1u);
}

TEST(Run, SweepRowCountMatchesScheduleAndIsDeterministic) {
  auto j = base();
  j["command"] = "sweep";
  j["schedule"] = {1e-1, 1e-2, 1e-3};
  auto c = parse_config(j);
  std::ostringstream log;
  auto a = run_command(c, c.command, log), b = run_command(c, c.command, log);
  EXPECT_EQ(a.exit_code, kOk);
  EXPECT_EQ(a.bundle.rows.size(), 3u);
  EXPECT_EQ(a.bundle.report["rows"].size(), 3u);
  EXPECT_EQ(format_table(a.bundle.rows), format_table(b.bundle.rows));
  EXPECT_EQ(dump_report(a.bundle.report), dump_report(b.bundle.report));
}

TEST(Run, SingleEpsilonSweepEqualsSolveStationary) {
  auto j = base();
  j["epsilon"] = 1e-2;
  j["schedule"] = {1e-2};
  auto c = parse_config(j);
  std::ostringstream log;
  auto s = run_command(c, "sweep", log), t = run_command(c, "solve-stationary", log);
  EXPECT_EQ(format_table(s.bundle.rows), format_table(t.bundle.rows));
  EXPECT_EQ(dump_report(s.bundle.report["rows"]), dump_report(t.bundle.report["rows"]));
}

TEST(Run, LinearAndTimedepSucceedOnDefaults) {
  RunConfig c;
  std::ostringstream log;
  auto lin = run_command(c, "solve-linear", log);
  EXPECT_EQ(lin.exit_code, kOk);
  EXPECT_EQ(lin.bundle.report["methods"].size(), 3u);
  EXPECT_FALSE(lin.bundle.has_table);
  auto td = run_command(c, "solve-timedep", log);
  EXPECT_EQ(td.exit_code, kOk);
  EXPECT_EQ(td.bundle.rows.size(), c.timedep.schedule.size());
  for (const auto& r : td.bundle.report["rows"]) EXPECT_TRUE(r["boundary_slices_exact"].get<bool>());
}

TEST(Run, NonConvergenceMapsToExitThree) {
  auto j = base();
  j["command"] = "solve-stationary";
  j["solver"] = {{"method", "picard"}, {"picard", {{"max_iter", 2}}}};
  auto c = parse_config(j);
  std::ostringstream log;
  auto out = run_command(c, c.command, log);
  EXPECT_EQ(out.exit_code, kNoConvergence);
  EXPECT_EQ(out.bundle.report["status"], "maxIter");
}

TEST(Verify, DefaultConfigPassesAndSeedDoesNotChangeTheOutcome) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    RunConfig c;
    c.seed = seed;
    std::ostringstream log;
    auto out = run_verify(c, log);
    EXPECT_EQ(out.exit_code, kOk) << "seed " << seed << "\n" << log.str();
  }
}

TEST(Verify, DivergenceSignFlipFailsAdjointness) {
  test_hooks::flip_divergence_sign = true;
  auto r = verify::operator_calculus(VerifyOptions{});
  test_hooks::flip_divergence_sign = false;
  EXPECT_FALSE(r.passed());
  EXPECT_TRUE(verify::operator_calculus(VerifyOptions{}).passed());
}
