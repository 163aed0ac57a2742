// meritsim: simulate admission regimes, tabulate outcomes, estimate.
//
//   meritsim run [--config PATH] [--seed N] [--seeds K] [--out DIR] [--stages simulate,metrics,estimate] [--jobs N]
//   meritsim diff_regimes [--out FILE] year_outcomes.csv
//
// Exit codes: 0 ok, 2 config error, 3 IO error, 4 invariant violation.
// Failures print one line to stderr: error category=<config|io|invariant> message="...".

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "meritmatch/pipeline.hpp"

namespace {

using namespace meritmatch;

constexpr int kConfigError = 2;
constexpr int kIoError = 3;
constexpr int kInvariant = 4;

int fail(const char* category, const std::string& message, int code) {
  std::string flat = message;
  for (char& c : flat)
    if (c == '\n' || c == '\r') c = ' ';
  std::cerr << "error category=" << category << " message=" << nlohmann::json(flat).dump() << '\n';
  return code;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

int diff_command(const std::string& in, const std::string& out) {
  const auto by_seed = read_year_outcomes(csv::Document::from_file(in));
  std::ostringstream os;
  csv::write_row(os, regime_diff_header());
  std::map<std::string, std::vector<RegimeDiff>> per_metric;
  for (const auto& [seed, outcomes] : by_seed)
    for (auto& d : diff_regimes(outcomes)) {
      write_regime_diff(os, csv::format(seed), d);
      per_metric[d.metric].push_back(std::move(d));
    }
  if (by_seed.size() > 1)
    for (const auto& metric : regime_metrics()) {
      const auto& ds = per_metric[metric];
      RegimeDiff mean{metric};
      double coef = 0.0;
      int with_trend = 0;
      for (const auto& d : ds) {
        mean.mean_centralized += d.mean_centralized / ds.size();
        mean.mean_decentralized += d.mean_decentralized / ds.size();
        mean.difference += d.difference / ds.size();
        mean.n_years += d.n_years;
        if (d.trend) {
          coef += d.trend->coef("centralized");
          ++with_trend;
        }
      }
      csv::write_row(os, {"pooled", metric, csv::format(mean.mean_centralized), csv::format(mean.mean_decentralized),
                          csv::format(mean.difference), with_trend ? csv::format(coef / with_trend) : std::string{csv::kMissing},
                          std::string{csv::kMissing}, std::string{csv::kMissing}, csv::format(mean.n_years)});
    }
  if (out.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(out, std::ios::binary);
    f << os.str();
    if (!f) throw IoError("cannot write " + out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Admission-regime simulator and estimator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, stages, format = "csv";
  std::uint64_t seed = 0;
  int seeds = 1, jobs = 1;
  auto* run_cmd = app.add_subcommand("run", "simulate, tabulate and estimate");
  auto* config_opt = run_cmd->add_option("--config", config_path, "JSON scenario config (defaults apply to missing keys)");
  auto* seed_opt = run_cmd->add_option("--seed", seed, "first root seed");
  auto* seeds_opt = run_cmd->add_option("--seeds", seeds, "number of consecutive seeds");
  auto* out_opt = run_cmd->add_option("--out", out_dir, "output directory (else $MERITSIM_OUT, else ./out)");
  auto* stages_opt = run_cmd->add_option("--stages", stages, "comma-separated subset of simulate,metrics,estimate");
  run_cmd->add_option("--jobs", jobs, "seeds run in parallel");
  run_cmd->add_option("--format", format, "artifact format (csv)");

  std::string diff_in, diff_out;
  auto* diff_cmd = app.add_subcommand("diff_regimes", "centralized-minus-decentralized summary of year_outcomes.csv");
  diff_cmd->add_option("input", diff_in, "year_outcomes.csv")->required();
  diff_cmd->add_option("--out", diff_out, "write the table here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("config", e.what(), kConfigError);
  }

  try {
    if (*diff_cmd) return diff_command(diff_in, diff_out);

    if (format != "csv") return fail("config", "unsupported format '" + format + "'", kConfigError);
    RunOptions opt;
    opt.config = *config_opt ? load_config(config_path) : Config{};
    if (*seed_opt) opt.config.run.seed = seed;
    if (*seeds_opt) opt.config.run.seeds = seeds;
    if (*stages_opt) opt.config.run.stages = split_list(stages);
    const char* env_out = std::getenv("MERITSIM_OUT");
    opt.out = *out_opt ? out_dir : (env_out && *env_out ? env_out : "out");
    opt.jobs = jobs;
    for (const auto& name : run(opt)) std::cout << (opt.out / name).string() << '\n';
    return 0;
  } catch (const ConfigError& e) {
    return fail("config", e.what(), kConfigError);
  } catch (const IoError& e) {
    return fail("io", e.what(), kIoError);
  } catch (const csv::CsvError& e) {
    return fail("io", e.what(), kIoError);
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("io", e.what(), kIoError);
  } catch (const std::exception& e) {
    return fail("invariant", e.what(), kInvariant);
  }
}
