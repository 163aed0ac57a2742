#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "meritmatch/config.hpp"
#include "meritmatch/pipeline.hpp"

using namespace meritmatch;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const fs::path p = fs::temp_directory_path() / "meritmatch_tests" / (std::string{info->test_suite_name()} + "." + info->name());
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void put(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

/// Six years, 1900-1905, small cohort: covers both regime families quickly.
json small_json() {
  return json{{"population", {{"applicants_per_year", 800}, {"first_year", 1900}, {"last_year", 1905}}}, {"total_capacity", 160}};
}

Config small() { return parse_config(small_json()); }

std::map<std::string, std::string> run_into(const fs::path& dir, Config cfg, int jobs = 1) {
  std::map<std::string, std::string> out;
  for (const auto& name : run(RunOptions{std::move(cfg), dir, jobs})) out[name] = slurp(dir / name);
  return out;
}

struct Cli {
  int code;
  std::string err;
};

Cli cli(const std::string& args, const std::string& env = "") {
  const fs::path err = fs::temp_directory_path() / "meritmatch_tests" / "stderr.txt";
  fs::create_directories(err.parent_path());
  const std::string cmd = env + " " + MERITSIM_BIN + " " + args + " >/dev/null 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

TEST(Config, DefaultsWhenEmpty) {
  const auto cfg = parse_config(json::object());
  EXPECT_EQ(cfg.scenario.population.applicants_per_year, 10777);
  EXPECT_EQ(cfg.scenario.schools.size(), 8u);
  EXPECT_EQ(cfg.run.seeds, 1);
  EXPECT_EQ(cfg.scenario.schedule.at(1902).kind, RegimeKind::centralized);
}

TEST(Config, UnknownKeysAreErrors) {
  for (const auto& [j, needle] : std::vector<std::pair<json, std::string>>{
           {{{"populaton", json::object()}}, "unknown key 'populaton'"},
           {{{"population", {{"applicants", 5}}}}, "unknown key 'population.applicants'"},
           {{{"behavior", {{"dampening", 0.5}}}}, "unknown key 'behavior.dampening'"},
           {{{"schedule", {{{"from", 1900}, {"to", 1930}, {"regime", "Centralized"}, {"group", json::array()}}}}}, "schedule[0].group"},
       }) {
    try {
      parse_config(j);
      ADD_FAILURE() << j.dump();
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  }
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(parse_config(json{{"population", {{"applicants_per_year", "many"}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"population", {{"applicants_per_year", 1.5}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"population", {{"score_sd", -1.0}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"behavior", {{"damping", 0.0}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"run", {{"seeds", 0}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"version", "0000000000000000"}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"lottery_mode", "coin"}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"total_capacity", 0}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"total_capacity", 100}, {"schools_csv", "x.csv"}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"schedule", {{{"from", 1900}, {"to", 1930}, {"regime", "boston"}}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"schedule", {{{"from", 1900}, {"to", 1920}, {"regime", "Centralized"}}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"schedule",
                                  {{{"from", 1900}, {"to", 1930}, {"regime", "Centralized"}}, {{"from", 1930}, {"to", 1930}, {"regime", "Decentralized"}}}}}),
               ConfigError);
  EXPECT_THROW(parse_config(json{{"selectivity_order", {1, 2, 3, 4, 5, 6, 7, 8}}}), ConfigError);
}

TEST(Config, ResolvedJsonRoundTrips) {
  auto j = small_json();
  j["run"] = {{"seed", 17}, {"seeds", 3}, {"stages", {"simulate", "metrics"}}};
  j["lottery_mode"] = "per_step";
  const auto cfg = parse_config(j);
  const auto r1 = resolved_json(cfg);
  const auto back = parse_config(r1);
  EXPECT_EQ(resolved_json(back), r1);
  EXPECT_EQ(back.run.seed, 17u);
  EXPECT_EQ(back.scenario.lottery_mode, LotteryMode::per_step);
  EXPECT_EQ(back.scenario.schools, cfg.scenario.schools);
  EXPECT_EQ(back.scenario.schedule.years().size(), 6u);
  EXPECT_EQ(r1["version"], version_hash());
  // Spans collapse: 1900, 1901, 1902-1905.
  EXPECT_EQ(r1["schedule"].size(), 3u);
  const auto full = resolved_json(parse_config(json::object()));
  EXPECT_EQ(full["schedule"].size(), 8u);
  EXPECT_EQ(resolved_json(parse_config(full)), full);
}

TEST(Config, TablesFromFilesResolveRelativeToTheConfig) {
  const auto dir = scratch();
  fs::create_directories(dir / "tables");
  {
    std::ofstream os(dir / "tables" / "geo.csv");
    write_geography_csv(os, default_geography());
  }
  put(dir / "tables" / "schools.csv", "id,name,prefecture_id,capacity\n1,A,12,30\n2,B,26,20\n");
  put(dir / "cfg.json", json{{"geography_csv", "tables/geo.csv"},
                             {"schools_csv", "tables/schools.csv"},
                             {"population", {{"prestige", {10.0, 5.0}}}}}
                            .dump());
  const auto cfg = load_config((dir / "cfg.json").string());
  ASSERT_EQ(cfg.scenario.schools.size(), 2u);
  EXPECT_EQ(cfg.scenario.schools[1].capacity, 20);
  EXPECT_EQ(cfg.scenario.schools[0].prestige, 10.0);
  EXPECT_TRUE(cfg.scenario.selectivity_order.empty());
  EXPECT_EQ(cfg.scenario.schedule.at(1926).groups, default_groups(2));
  EXPECT_EQ(cfg.scenario.geography.size(), 47u);
  put(dir / "bad.json", "{ not json");
  EXPECT_THROW(load_config((dir / "bad.json").string()), ConfigError);
  EXPECT_THROW(load_config((dir / "missing.json").string()), ConfigError);
}

TEST(Stages, Resolution) {
  EXPECT_EQ(resolve_stages({"metrics"}), std::set<Stage>{Stage::metrics});
  EXPECT_THROW(resolve_stages({}), ConfigError);
  EXPECT_THROW(resolve_stages({"simulate", "plot"}), ConfigError);
  EXPECT_THROW(resolve_stages({"simulate", "estimate"}), ConfigError);
  EXPECT_EQ(artifact_names({Stage::simulate}, 8), (std::vector<std::string>{"flows.csv", "equilibrium.csv", "manifest.lock"}));
  EXPECT_EQ(artifact_names({Stage::simulate, Stage::metrics, Stage::estimate}, 2).size(), 8u);
}

TEST(Pipeline, SimulateOnlyWritesSimulationArtifacts) {
  const auto dir = scratch();
  auto cfg = small();
  cfg.run.stages = {"simulate"};
  run_into(dir, cfg);
  std::set<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) files.insert(e.path().filename().string());
  EXPECT_EQ(files, (std::set<std::string>{"flows.csv", "equilibrium.csv", "manifest.lock"}));
}

TEST(Pipeline, DeterministicAcrossRunsAndJobs) {
  const auto a = scratch() / "a", b = a.parent_path() / "b", c = a.parent_path() / "c";
  auto cfg = small();
  cfg.run.seeds = 3;
  const auto x = run_into(a, cfg, 1), y = run_into(b, cfg, 1), z = run_into(c, cfg, 3);
  EXPECT_EQ(x.size(), 14u);
  EXPECT_EQ(x, y);
  EXPECT_EQ(x, z);
}

TEST(Pipeline, LockfileReplay) {
  const auto a = scratch() / "a", b = a.parent_path() / "b";
  auto cfg = small();
  cfg.run.seed = 5;
  cfg.run.seeds = 2;
  const auto x = run_into(a, cfg);
  const auto y = run_into(b, load_config((a / "manifest.lock").string()));
  EXPECT_EQ(x, y);
  EXPECT_EQ(x.at("manifest.lock"), resolved_json(cfg).dump(2) + "\n");
}

TEST(Pipeline, StagesCanResumeFromDisk) {
  const auto a = scratch() / "a", b = a.parent_path() / "b";
  auto cfg = small();
  cfg.run.seeds = 2;
  const auto whole = run_into(a, cfg);
  cfg.run.stages = {"simulate"};
  run_into(b, cfg);
  cfg.run.stages = {"metrics"};
  run_into(b, cfg);
  cfg.run.stages = {"estimate"};
  run_into(b, cfg);
  for (const auto& [name, body] : whole)
    if (name != "manifest.lock") { EXPECT_EQ(slurp(b / name), body) << name; }
}

TEST(Pipeline, MissingInputsAreIoErrors) {
  const auto dir = scratch();
  auto cfg = small();
  cfg.run.stages = {"metrics"};
  EXPECT_THROW(run(RunOptions{cfg, dir}), IoError);
  EXPECT_FALSE(fs::exists(dir / ".staging"));
  EXPECT_FALSE(fs::exists(dir / "manifest.lock"));
}

TEST(Pipeline, RegressionRowsPerSpecTermSeedPlusPooled) {
  const auto dir = scratch();
  auto cfg = small();
  cfg.run.seeds = 2;
  run_into(dir, cfg);
  const csv::Document d{csv::parse(slurp(dir / "regressions.csv"))};
  std::map<std::pair<std::string, std::string>, std::set<std::string>> seeds;
  for (std::size_t r = 0; r < d.size(); ++r) {
    const auto key = std::make_pair(d.at(r, "spec"), d.at(r, "term"));
    EXPECT_TRUE(seeds[key].insert(d.at(r, "seed")).second) << key.first << " " << key.second;
  }
  EXPECT_TRUE(seeds.contains({"did_tokyo_area", "centralized_x_tokyo_area"}));
  EXPECT_TRUE(seeds.contains({"local_monopoly_school1", "centralized_x_located_in"}));
  EXPECT_TRUE(seeds.contains({"regime_diff_mean_enrollment_distance_km", "centralized"}));
  for (const auto& [key, s] : seeds) EXPECT_EQ(s, (std::set<std::string>{"0", "1", "pooled"})) << key.first << " " << key.second;
}

TEST(Pipeline, PanelsAddUpAndMatchOutcomes) {
  const auto dir = scratch();
  auto cfg = small();
  cfg.run.stages = {"simulate", "metrics"};
  run_into(dir, cfg);
  const auto outcomes = read_year_outcomes(csv::Document{csv::parse(slurp(dir / "year_outcomes.csv"))}).at(0);
  const csv::Document panel{csv::parse(slurp(dir / "panel_all.csv"))};
  EXPECT_EQ(panel.size(), 47u * 6u);
  for (const auto& o : outcomes) {
    long total = 0;
    for (std::size_t r = 0; r < panel.size(); ++r)
      if (csv::to_int(panel.at(r, "year")) == o.year) total += csv::to_int(panel.at(r, "y"));
    EXPECT_EQ(total, o.entrants_total);
    EXPECT_LE(o.entrants_total, 160);
  }
}

TEST(DiffRegimes, ConstantSeriesHasZeroDifference) {
  std::vector<YearOutcome> v;
  for (int y = 1900; y <= 1910; ++y) v.push_back({y, default_schedule().at(y).kind, 100, 0.3, 200.0, 0.25, 50, 50});
  for (const auto& d : diff_regimes(v)) {
    EXPECT_EQ(d.difference, 0.0);
    EXPECT_EQ(d.n_years, 11);
    ASSERT_TRUE(d.trend);
    EXPECT_NEAR(d.trend->coef("centralized"), 0.0, 1e-9);
  }
}

TEST(DiffRegimes, NeedsBothRegimes) {
  std::vector<YearOutcome> v;
  for (int y = 1902; y <= 1907; ++y) v.push_back({y, RegimeKind::centralized, 100, 0.3, 200.0, 0.25, 50, 50});
  EXPECT_THROW(diff_regimes(v), DomainError);
  v.push_back({1908, RegimeKind::decentralized_unified_exam, 100, 0.2, 150.0, 0.2, 50, 50});
  const auto d = diff_regimes(v);
  EXPECT_NEAR(d[0].difference, 0.1, 1e-12);
  EXPECT_NEAR(d[1].difference, 50.0, 1e-12);
}

TEST(Golden, ArtifactHeaders) {
  const auto dir = scratch();
  run_into(dir, small());
  std::ostringstream got;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.ends_with(".csv")) got << name << ": " << first_line(slurp(e.path())) << "\n";
  }
  // Directory order is unspecified; compare sorted lines.
  auto sorted = [](const std::string& s) {
    std::set<std::string> lines;
    std::istringstream is(s);
    for (std::string l; std::getline(is, l);) lines.insert(l);
    return lines;
  };
  EXPECT_EQ(sorted(got.str()), sorted(slurp(fs::path(GOLDEN_DIR) / "headers.txt")));
}

// Regression snapshot of the default scenario at seed 0 (not ground truth).
TEST(Golden, DefaultSeedZero) {
  const auto dir = scratch();
  Config cfg;
  cfg.run.stages = {"simulate", "metrics"};
  run_into(dir, cfg);
  EXPECT_EQ(slurp(dir / "year_outcomes.csv"), slurp(fs::path(GOLDEN_DIR) / "year_outcomes_seed0.csv"));
  EXPECT_EQ(slurp(dir / "equilibrium.csv"), slurp(fs::path(GOLDEN_DIR) / "equilibrium_seed0.csv"));
  const csv::Document eq{csv::parse(slurp(dir / "equilibrium.csv"))};
  for (std::size_t r = 0; r < eq.size(); ++r) EXPECT_EQ(eq.at(r, "converged"), "1") << r;
}

TEST(Pipeline, DefaultScenarioTokyoAreaGains) {
  const auto dir = scratch();
  run_into(dir, Config{});
  const csv::Document reg{csv::parse(slurp(dir / "regressions.csv"))};
  int seen = 0;
  for (std::size_t r = 0; r < reg.size(); ++r)
    if (reg.at(r, "spec") == "did_tokyo_area" && reg.at(r, "seed") == "0") {
      ++seen;
      EXPECT_EQ(reg.at(r, "term"), econ::kDidTerm);
      EXPECT_GT(csv::to_double(reg.at(r, "estimate")), 0.0);
    }
  EXPECT_EQ(seen, 1);
}

TEST(Cli, ExitCodesAndErrorLine) {
  const auto dir = scratch();
  put(dir / "small.json", small_json().dump());
  put(dir / "typo.json", json{{"populaton", json::object()}}.dump());

  const auto ok = cli("run --config " + (dir / "small.json").string() + " --stages simulate --out " + (dir / "out").string());
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_TRUE(fs::exists(dir / "out" / "flows.csv"));

  const auto typo = cli("run --config " + (dir / "typo.json").string() + " --out " + (dir / "x").string());
  EXPECT_EQ(typo.code, 2);
  EXPECT_EQ(first_line(typo.err).rfind("error category=config message=\"", 0), 0u) << typo.err;
  EXPECT_NE(typo.err.find("populaton"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "x"));

  EXPECT_EQ(cli("run --bogus").code, 2);
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("run --config " + (dir / "small.json").string() + " --stages plot --out " + (dir / "y").string()).code, 2);
  EXPECT_EQ(cli("run --config " + (dir / "small.json").string() + " --format parquet").code, 2);
  EXPECT_EQ(cli("run --config " + (dir / "nope.json").string()).code, 2);

  put(dir / "file", "");
  const auto io = cli("run --config " + (dir / "small.json").string() + " --out " + (dir / "file" / "sub").string());
  EXPECT_EQ(io.code, 3) << io.err;
  EXPECT_EQ(first_line(io.err).rfind("error category=io ", 0), 0u) << io.err;

  const auto metrics_only = cli("run --config " + (dir / "small.json").string() + " --stages metrics --out " + (dir / "empty").string());
  EXPECT_EQ(metrics_only.code, 3) << metrics_only.err;
  EXPECT_EQ(cli("diff_regimes " + (dir / "missing.csv").string()).code, 3);
}

TEST(Cli, OutputDirectoryFromEnvironment) {
  const auto dir = scratch();
  put(dir / "small.json", small_json().dump());
  const auto env = cli("run --config " + (dir / "small.json").string() + " --stages simulate", "MERITSIM_OUT=" + (dir / "env").string());
  EXPECT_EQ(env.code, 0) << env.err;
  EXPECT_TRUE(fs::exists(dir / "env" / "flows.csv"));
  const auto flag = cli("run --config " + (dir / "small.json").string() + " --stages simulate --out " + (dir / "flag").string(),
                        "MERITSIM_OUT=" + (dir / "env2").string());
  EXPECT_EQ(flag.code, 0);
  EXPECT_TRUE(fs::exists(dir / "flag" / "flows.csv"));
  EXPECT_FALSE(fs::exists(dir / "env2"));
}

TEST(Cli, DiffRegimesTable) {
  const auto dir = scratch();
  put(dir / "small.json", small_json().dump());
  ASSERT_EQ(cli("run --config " + (dir / "small.json").string() + " --seeds 2 --stages simulate,metrics --out " + (dir / "o").string()).code, 0);
  ASSERT_EQ(cli("diff_regimes " + (dir / "o" / "year_outcomes.csv").string() + " --out " + (dir / "diff.csv").string()).code, 0);
  const csv::Document d{csv::parse(slurp(dir / "diff.csv"))};
  EXPECT_EQ(d.header(), regime_diff_header());
  EXPECT_EQ(d.size(), 9u);
  EXPECT_EQ(d.at(8, "seed"), "pooled");
}
