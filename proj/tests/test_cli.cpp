#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include "ccphot/cli.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ccphot");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = ccphot::cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

json load(const fs::path& p) { return json::parse(testutil::read(p)); }

const char* kDecaySpec = R"({
  "seed": 42, "kind": "decay",
  "truth": {"background": 20, "pulse_time_ns": 100, "components": [{"A": 10000, "tau_ns": 164.2}]},
  "noise": "poisson",
  "sampling": {"start": 0, "step": 1, "count": 1500}
})";

std::vector<std::string> budget_k(const fs::path& dir) {
  return {"-o", dir.string(), "budget", "--tau-rad", "704", "--tau-tot", "163", "--dw", "0.39", "--s", "0.66",
          "--site", "k"};
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(run_cli({"no-such-command"}).code == ccphot::cli::kUsage);
  CHECK(run_cli({}).code == ccphot::cli::kUsage);
  CHECK(run_cli({"budget", "--bogus", "1"}).code == ccphot::cli::kUsage);
  const auto v = run_cli({"--version"});
  CHECK(v.code == 0);
  CHECK_FALSE(v.out.empty());
}

TEST_CASE("missing input file exits 2 naming the path") {
  const auto dir = testutil::scratch("cli_missing");
  const std::string path = (dir / "absent_trace.txt").string();
  const auto r = run_cli({"-o", dir.string(), "fit-decay", "--trace", path});
  CHECK(r.code == ccphot::cli::kValidation);
  CHECK(r.err.find(path) != std::string::npos);
}

TEST_CASE("budget report for row k") {
  const auto dir = testutil::scratch("cli_budget");
  const auto r = run_cli(budget_k(dir));
  REQUIRE(r.code == 0);
  const auto rep = load(dir / "budget.json");
  CHECK(rep["site"] == "k");
  CHECK(rep["parameters"]["eta_tot"].get<double>() == doctest::Approx(0.0903).epsilon(2e-3));
  CHECK(rep["parameters"]["tau_NR_ns"].get<double>() == doctest::Approx(212.1).epsilon(1e-3));
  bool rounding_note = false;
  for (const auto& n : rep["notes"]) rounding_note |= n.get<std::string>().find("rounding") != std::string::npos;
  CHECK(rounding_note);
  for (const auto& inv : rep["invariants"]) CHECK(inv["passed"].get<bool>());

  const auto m = load(dir / "manifest.json");
  CHECK(m["command"] == "budget");
  CHECK(m.contains("tool_version"));
  CHECK(m.contains("config_hash"));
  CHECK(m["config"]["parameters"]["tau_rad_ns"].get<double>() == 704.0);
}

TEST_CASE("budget inconsistency is a fit failure; bad values are validation errors") {
  const auto dir = testutil::scratch("cli_budget_bad");
  CHECK(run_cli({"-o", dir.string(), "budget", "--tau-rad", "100", "--tau-tot", "150", "--dw", "0.4", "--s", "0.5"})
            .code == ccphot::cli::kFitFailure);
  CHECK(run_cli({"-o", dir.string(), "budget", "--tau-rad", "100", "--tau-tot", "50", "--dw", "1.5", "--s", "0.5"})
            .code == ccphot::cli::kValidation);
  CHECK(run_cli({"-o", dir.string(), "budget", "--tau-rad", "abc", "--tau-tot", "50", "--dw", "0.5", "--s", "0.5"})
            .code != 0);
}

TEST_CASE("simulate then fit-decay round trip") {
  const auto dir = testutil::scratch("cli_decay");
  testutil::write(dir / "spec.json", kDecaySpec);
  const auto trace = (dir / "trace.txt").string();
  REQUIRE(run_cli({"-o", dir.string(), "simulate", "--spec", (dir / "spec.json").string(), "--out", trace}).code == 0);
  CHECK(fs::exists(trace));

  const auto out = dir / "fit";
  const auto r = run_cli({"-o", out.string(), "--emit-plot-data", "fit-decay", "--trace", trace, "--kind", "auto"});
  REQUIRE(r.code == 0);
  const auto rep = load(out / "fit-decay.json");
  CHECK(rep["model"] == "single");
  const double tau = rep["parameters"]["tau1_ns"]["value"].get<double>();
  const double s3 = rep["parameters"]["tau1_ns"]["sigma3"].get<double>();
  CHECK(std::abs(tau - 164.2) <= s3);
  CHECK(fs::exists(out / "fit-decay_data.txt"));
  CHECK(fs::exists(out / "fit-decay_fit.txt"));

  const auto m = load(out / "manifest.json");
  REQUIRE(m["inputs"].size() == 1);
  CHECK(m["inputs"][0]["path"] == trace);
}

TEST_CASE("fit-decay can hold the slow lifetime") {
  const auto dir = testutil::scratch("cli_pinned");
  testutil::write(dir / "spec.json", R"({
    "seed": 42, "kind": "decay",
    "truth": {"background": 10, "pulse_time_ns": 100,
              "components": [{"A": 5000, "tau_ns": 158.5}, {"A": 5000, "tau_ns": 43.3}]},
    "noise": "poisson", "sampling": {"start": 0, "step": 1, "count": 1200}
  })");
  const auto trace = (dir / "trace.txt").string();
  REQUIRE(run_cli({"-o", dir.string(), "simulate", "--spec", (dir / "spec.json").string(), "--out", trace}).code == 0);
  REQUIRE(run_cli({"-o", dir.string(), "fit-decay", "--trace", trace, "--kind", "double", "--pin-slow-tau-ns",
                   "158.5"})
              .code == 0);
  const auto rep = load(dir / "fit-decay.json");
  CHECK(rep["parameters"]["tau1_ns"]["value"].get<double>() == 158.5);
  CHECK(rep["parameters"]["tau1_ns"]["sigma3"].get<double>() == 0.0);
  CHECK(std::abs(rep["parameters"]["tau2_ns"]["value"].get<double>() - 43.3) <=
        rep["parameters"]["tau2_ns"]["sigma3"].get<double>());
}

TEST_CASE("reports are byte-identical on rerun") {
  const auto dir = testutil::scratch("cli_rerun");
  testutil::write(dir / "spec.json", kDecaySpec);
  const auto trace = (dir / "trace.txt").string();
  REQUIRE(run_cli({"-o", dir.string(), "simulate", "--spec", (dir / "spec.json").string(), "--out", trace}).code == 0);
  const auto first = testutil::read(trace);
  REQUIRE(run_cli({"-o", dir.string(), "simulate", "--spec", (dir / "spec.json").string(), "--out", trace}).code == 0);
  CHECK(testutil::read(trace) == first);

  REQUIRE(run_cli({"-o", (dir / "a").string(), "fit-decay", "--trace", trace}).code == 0);
  const auto rep = testutil::read(dir / "a" / "fit-decay.json");
  const auto man = testutil::read(dir / "a" / "manifest.json");
  REQUIRE(run_cli({"-o", (dir / "a").string(), "fit-decay", "--trace", trace}).code == 0);
  CHECK(testutil::read(dir / "a" / "fit-decay.json") == rep);
  CHECK(testutil::read(dir / "a" / "manifest.json") == man);
}

TEST_CASE("config file drives the same run as flags") {
  const auto flags = testutil::scratch("cli_flags");
  REQUIRE(run_cli(budget_k(flags)).code == 0);
  const auto cfgdir = testutil::scratch("cli_config");
  json cfg = {{"command", "budget"},
              {"parameters", {{"tau_rad_ns", 704}, {"tau_tot_ns", 163}, {"dw_exp", 0.39}, {"S_th", 0.66}, {"site", "k"}}},
              {"output_dir", cfgdir.string()}};
  testutil::write(cfgdir / "run.json", cfg.dump());
  REQUIRE(run_cli({"--config", (cfgdir / "run.json").string()}).code == 0);
  CHECK(testutil::read(cfgdir / "budget.json") == testutil::read(flags / "budget.json"));

  cfg["parameters"]["not_a_key"] = 1;
  testutil::write(cfgdir / "bad.json", cfg.dump());
  CHECK(run_cli({"--config", (cfgdir / "bad.json").string()}).code == ccphot::cli::kValidation);
}

TEST_CASE("report bundle builds the site table") {
  const auto dir = testutil::scratch("cli_bundle");
  REQUIRE(run_cli(budget_k(dir / "k")).code == 0);
  REQUIRE(run_cli({"-o", (dir / "h").string(), "budget", "--tau-rad", "277", "--tau-tot", "43", "--dw", "0.22", "--s",
                   "0.79", "--site", "h"})
              .code == 0);
  const auto k = (dir / "k" / "budget.json").string();
  const auto h = (dir / "h" / "budget.json").string();

  REQUIRE(run_cli({"-o", (dir / "both").string(), "report", "--input", h, k}).code == 0);
  const auto summary = load(dir / "both" / "report.json");
  REQUIRE(summary["rows"].size() == 2);
  CHECK(summary["columns"][0] == "site");
  CHECK(summary["rows"][0][0] == "k");
  CHECK(summary["rows"][1][0] == "h");
  const auto md = testutil::read(dir / "both" / "summary.md");
  CHECK(md.find("| k ") != std::string::npos);
  CHECK(md.find("47") != std::string::npos);

  REQUIRE(run_cli({"-o", (dir / "one").string(), "report", "--input", k}).code == 0);
  CHECK(load(dir / "one" / "report.json")["rows"].size() == 1);

  REQUIRE(run_cli({"-o", (dir / "k2").string(), "budget", "--tau-rad", "704", "--tau-tot", "160", "--dw", "0.39",
                   "--s", "0.66", "--site", "k"})
              .code == 0);
  const auto k2 = (dir / "k2" / "budget.json").string();
  CHECK(run_cli({"-o", (dir / "dup").string(), "report", "--input", k, k2}).code == ccphot::cli::kValidation);
}

TEST_CASE("cavity with sweep") {
  const auto dir = testutil::scratch("cli_cavity");
  const auto r = run_cli({"-o", dir.string(), "cavity", "--lambda-nm", "1279", "--finesse", "34000", "--roc-mm", "1.3",
                          "--lvac-um", "5", "--lsic-um", "5", "--eta-tot", "0.089", "--sweep", "finesse=100:100000:31"});
  REQUIRE(r.code == 0);
  const auto rep = load(dir / "cavity.json");
  CHECK(std::abs(rep["parameters"]["eta_cav"].get<double>() - 0.82) <= 0.05);
  CHECK(fs::exists(dir / "cavity_sweep.txt"));
  for (const auto& inv : rep["invariants"]) CHECK(inv["passed"].get<bool>());
  CHECK(run_cli({"-o", dir.string(), "cavity", "--roc-mm", "0.005"}).code == ccphot::cli::kValidation);
}

TEST_CASE("fit-psb on a simulated composite") {
  const auto dir = testutil::scratch("cli_psb");
  testutil::write(dir / "spec.json",
                  R"({"seed": 42, "kind": "spectrum", "preset": "reference_composite", "noise": "poisson"})");
  const auto spec = (dir / "spectrum.txt").string();
  REQUIRE(run_cli({"-o", dir.string(), "simulate", "--spec", (dir / "spec.json").string(), "--out", spec}).code == 0);
  testutil::write(dir / "zpl.json", R"({"lines": [
    {"label": "alpha3", "center_nm": 1278.6, "half_window_nm": 0.9},
    {"label": "alpha2", "center_nm": 1280.55, "half_window_nm": 0.9},
    {"label": "beta", "center_nm": 1334.0, "half_window_nm": 1.2}]})");
  const auto r = run_cli({"-o", dir.string(), "--emit-plot-data", "fit-psb", "--spectrum", spec, "--zpl-config",
                          (dir / "zpl.json").string()});
  REQUIRE(r.code == 0);
  const auto rep = load(dir / "fit-psb.json");
  CHECK(std::abs(rep["partition"]["dw_mean"].get<double>() - 0.34) <= 0.02);
  for (const auto& inv : rep["invariants"]) CHECK(inv["passed"].get<bool>());
  CHECK(fs::exists(dir / "fit-psb_reconstructed.txt"));
  CHECK(fs::exists(dir / "fit-psb_beta_residual.txt"));

  const auto z = run_cli({"-o", dir.string(), "zpl", "--spectrum", spec, "--zpl-config", (dir / "zpl.json").string()});
  REQUIRE(z.code == 0);
  CHECK(std::abs(load(dir / "zpl.json")["doublet_splitting_meV"].get<double>() - 1.47) < 0.05);
}

TEST_CASE("flat spectrum is a fit failure") {
  const auto dir = testutil::scratch("cli_flat");
  std::string text;
  for (int i = 0; i <= 400; ++i) text += std::to_string(1270.0 + 0.2 * i) + " 100\n";
  testutil::write(dir / "flat.txt", text);
  testutil::write(dir / "zpl.json", R"({"lines": [{"label": "beta", "center_nm": 1300.0, "half_window_nm": 1.0}]})");
  const auto r =
      run_cli({"-o", dir.string(), "zpl", "--spectrum", (dir / "flat.txt").string(), "--zpl-config", (dir / "zpl.json").string()});
  CHECK(r.code == ccphot::cli::kFitFailure);
}
