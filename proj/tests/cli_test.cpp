#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "confjet/cli.hpp"

using namespace confjet;
using namespace confjet::cli;

namespace {

const std::string kSpecs = CONFJET_SPEC_DIR;

struct Run {
  int code;
  std::string out, err;
  json report() const { return json::parse(out); }
};

Run run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "confjet");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string spec(const std::string& name) { return kSpecs + "/" + name; }

std::string write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / ("confjet_cli_test_" + name);
  std::ofstream(path) << text;
  return path.string();
}

bool all_zero(const json& j) {
  if (j.is_array()) {
    for (const auto& e : j)
      if (!all_zero(e)) return false;
    return true;
  }
  return j == "0" || (j.is_number() && j.get<double>() == 0.0);
}

}  // namespace

TEST(CliReport, FlatIsAllZero) {
  const auto path = write_temp("flat.json", R"({"kind": "builtin", "dimension": 4, "name": "flat", "degree": 4})");
  auto r = run_cli({"report", path});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = r.report();
  for (const char* key : {"riemann", "ricci", "scalar", "schouten", "weyl", "cotton", "bach", "q_curvature"})
    EXPECT_TRUE(all_zero(j[key])) << key;
  EXPECT_TRUE(j.contains("conventions"));
}

TEST(CliReport, SphereScalarCurvature) {
  auto r = run_cli({"report", spec("sphere4.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = r.report();
  EXPECT_EQ(j["scalar"], "12");
  EXPECT_EQ(j["q_curvature"], "6");
  EXPECT_EQ(j["ricci"][1][1], "3");
  EXPECT_TRUE(all_zero(j["weyl"]));
  auto t = run_cli({"report", spec("sphere4.json"), "--table"});
  EXPECT_NE(t.out.find("scalar = 12\n"), std::string::npos);
}

TEST(CliReport, FloatBackendOverride) {
  auto r = run_cli({"report", spec("sphere4.json"), "--backend", "float"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = r.report();
  EXPECT_EQ(j["backend"], "float");
  EXPECT_DOUBLE_EQ(j["scalar"].get<double>(), 12.0);
}

TEST(CliErrors, MalformedJsonReportsPosition) {
  const auto path = write_temp("bad.json", "{\n  \"kind\": \"jet\",\n  \"dimension\": 3,\n}\n");
  auto r = run_cli({"report", path});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("bad.json:4:"), std::string::npos) << r.err;
}

TEST(CliErrors, FieldPathDiagnostics) {
  const auto path = write_temp("missing.json", R"({"kind": "jet", "dimension": 2, "degree": 2,
    "components": [{"i": 0, "j": 0, "terms": [{"exponents": [0, 0]}]}]})");
  auto r = run_cli({"report", path});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("spec.components[0].terms[0].value: missing field"), std::string::npos) << r.err;

  const auto bad_exp = write_temp("exp.json", R"({"kind": "jet", "dimension": 2, "degree": 1,
    "components": [{"i": 0, "j": 0, "terms": [{"exponents": [1, 1], "value": 1}]}]})");
  r = run_cli({"report", bad_exp});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("spec.components[0].terms[0].exponents"), std::string::npos) << r.err;

  const auto twice = write_temp("twice.json", R"({"kind": "jet", "dimension": 2, "degree": 1, "components": [
    {"i": 0, "j": 1, "terms": []}, {"i": 1, "j": 0, "terms": []}]})");
  r = run_cli({"report", twice});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("spec.components[1]"), std::string::npos) << r.err;

  r = run_cli({"report", "/nonexistent/spec.json"});
  EXPECT_EQ(r.code, 1);
  r = run_cli({"frobnicate", spec("sphere4.json")});
  EXPECT_EQ(r.code, 1);
}

TEST(CliErrors, NumericalFailures) {
  const auto singular = write_temp("singular.json", R"({"kind": "jet", "dimension": 2, "degree": 2,
    "components": [{"i": 0, "j": 0, "terms": [{"exponents": [0, 0], "value": 1}]}]})");
  auto r = run_cli({"report", singular});
  EXPECT_EQ(r.code, 2) << r.err;
  r = run_cli({"fg-expand", spec("sphere4.json"), "--degree", "2"});
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_NE(r.err.find("degree cap"), std::string::npos);
}

TEST(CliObstruction, FourDimensionalPathsAgree) {
  auto r = run_cli({"obstruction", spec("random4.json"), "--path", "both"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = r.report();
  EXPECT_EQ(j["equal"], true);
  EXPECT_FALSE(all_zero(j["obstruction_fg"]));
  EXPECT_EQ(j["obstruction_fg"], j["obstruction_closed"]);
}

TEST(CliObstruction, SixSphereVanishes) {
  auto r = run_cli({"obstruction", spec("sphere6.json"), "--path", "fg"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(all_zero(r.report()["obstruction_fg"]));
  EXPECT_EQ(r.report()["conventions"]["c_n"], "16");
  EXPECT_EQ(r.report()["conventions"]["k_n"], "-384");
}

TEST(CliObstruction, OddDimensionRejected) {
  auto r = run_cli({"obstruction", spec("jet3.json")});
  EXPECT_EQ(r.code, 1);
}

TEST(CliFgExpand, SphereSecondCoefficient) {
  auto r = run_cli({"fg-expand", spec("sphere4.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = r.report();
  const auto& g2 = j["coefficients"][2]["value"];
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) EXPECT_EQ(g2[i][k], i == k ? "-1/2" : "0");
  EXPECT_EQ(j["coefficients"][4]["value"][0][0], "1/16");
  EXPECT_TRUE(all_zero(j["obstruction"]));
}

TEST(CliVolume, SphereCoefficients) {
  auto r = run_cli({"volume", spec("sphere4.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = r.report();
  EXPECT_EQ(j["v"]["2"], "-1");
  EXPECT_EQ(j["v"]["4"], "3/8");
  EXPECT_EQ(j["determinant_log_term"], "0");
}

TEST(CliQCheck, FlatTorusBothZero) {
  auto r = run_cli({"q-check", spec("flat_torus4.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = r.report();
  EXPECT_EQ(j["from_log"], 0.0);
  EXPECT_EQ(j["from_q4"], 0.0);
}

TEST(CliQCheck, SphereClosedForm) {
  auto r = run_cli({"q-check", spec("sphere4.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = r.report();
  const double pi2 = std::numbers::pi * std::numbers::pi;
  EXPECT_NEAR(j["L"].get<double>(), pi2, 1e-12);
  EXPECT_NEAR(j["from_log"].get<double>(), 16 * pi2, 1e-11);
  EXPECT_NEAR(j["from_q4"].get<double>(), 16 * pi2, 1e-11);
}

TEST(CliQCheck, ToleranceFailureExitsThree) {
  auto r = run_cli({"q-check", spec("torus4.json"), "--grid", "5", "--tol", "0"});
  EXPECT_EQ(r.code, 3);
  EXPECT_FALSE(r.out.empty());
}

TEST(CliVariation, ConformalDirectionIsDegenerate) {
  auto r = run_cli({"variation", spec("torus4.json"), "--perturbation", spec("conformal4.json"), "--grid", "7"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = r.report();
  EXPECT_EQ(j["degenerate"], true);
  EXPECT_LT(std::abs(j["dq_richardson"].get<double>()), 1e-8);
  EXPECT_LT(std::abs(j["theorem_rhs"].get<double>()), 1e-8);
}

TEST(CliSpec, RoundTrip) {
  for (const auto& entry : std::filesystem::directory_iterator(kSpecs)) {
    const auto s = load_spec(entry.path().string());
    const auto again = parse_spec(json::parse(to_json(s).dump()));
    EXPECT_EQ(s, again) << entry.path();
  }
  // decimal input is kept exactly
  const auto s = parse_spec(json::parse(R"({"kind": "jet", "dimension": 1, "degree": 0,
    "components": [{"i": 0, "j": 0, "terms": [{"exponents": [0], "value": 0.1}]}]})"));
  EXPECT_EQ(s.jet[0].terms[0].value, ratio(1, 10));
  EXPECT_EQ(to_json(s)["components"][0]["terms"][0]["value"], "1/10");
}

TEST(CliSpec, ReportsAreDeterministic) {
  for (const std::vector<std::string>& args :
       {std::vector<std::string>{"report", spec("random4.json")},
        std::vector<std::string>{"q-check", spec("torus4.json"), "--grid", "5"},
        std::vector<std::string>{"q-check", spec("torus4.json"), "--grid", "5", "--threads", "3"}}) {
    auto a = run_cli(args), b = run_cli(args);
    EXPECT_EQ(a.code, b.code);
    EXPECT_EQ(a.out, b.out);
  }
  EXPECT_EQ(run_cli({"q-check", spec("torus4.json"), "--grid", "5"}).out,
            run_cli({"q-check", spec("torus4.json"), "--grid", "5", "--threads", "3"}).out);
}

TEST(CliSpec, SeedFlagChangesRandomBuiltin) {
  auto a = run_cli({"report", spec("random4.json"), "--degree", "2"});
  auto b = run_cli({"report", spec("random4.json"), "--degree", "2", "--seed", "99"});
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  EXPECT_NE(a.report()["metric"], b.report()["metric"]);
}
