#pragma once

// End-to-end runner behind the meritsim tool.
//
// Stages and the artifacts each one writes into the output directory:
//   simulate  flows.csv, equilibrium.csv
//   metrics   year_outcomes.csv, panel_all.csv, panel_school_<s>.csv
//   estimate  regressions.csv
// plus manifest.lock (the resolved config) on every run. A stage whose
// predecessor is not selected reads that predecessor's artifacts from the
// output directory. Files are built in a staging directory and moved into
// place only after every stage succeeded.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "config.hpp"
#include "econometrics.hpp"
#include "metrics.hpp"
#include "simulate.hpp"

namespace meritmatch {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Stage { simulate, metrics, estimate };

inline Stage stage_from_string(const std::string& s) {
  if (s == "simulate") return Stage::simulate;
  if (s == "metrics") return Stage::metrics;
  if (s == "estimate") return Stage::estimate;
  throw ConfigError("unknown stage '" + s + "' (expected simulate, metrics or estimate)");
}

struct RunOptions {
  Config config;
  std::filesystem::path out = "out";
  int jobs = 1;
};

// ---------------------------------------------------------------- regime differences

struct RegimeDiff {
  std::string metric;
  double mean_centralized = 0.0;
  double mean_decentralized = 0.0;
  double difference = 0.0;
  std::optional<econ::RegressionResult> trend;  // centralized coefficient with a quadratic trend; needs > 4 years
  int n_years = 0;
};

inline constexpr int kTrendOrigin = 1899;
inline constexpr int kNeweyWestLag = 3;

inline const std::vector<std::string>& regime_metrics() {
  static const std::vector<std::string> m{"share_first_choice_school1", "mean_enrollment_distance_km", "tokyo_area_entrant_share"};
  return m;
}

inline std::optional<double> metric_of(const YearOutcome& o, const std::string& metric) {
  if (metric == "share_first_choice_school1") return o.share_first_choice_school1;
  if (metric == "mean_enrollment_distance_km") return o.mean_enrollment_distance_km;
  if (metric == "tokyo_area_entrant_share") return o.tokyo_area_entrant_share;
  throw DomainError("unknown metric '" + metric + "'");
}

/// Centralized minus decentralized means per metric, plus the centralized
/// coefficient from OLS on [1, centralized, trend, trend^2] with Newey-West(3)
/// errors, where trend = year - 1899.
inline std::vector<RegimeDiff> diff_regimes(std::vector<YearOutcome> outcomes) {
  std::sort(outcomes.begin(), outcomes.end(), [](const auto& a, const auto& b) { return a.year < b.year; });
  std::vector<RegimeDiff> out;
  for (const auto& metric : regime_metrics()) {
    RegimeDiff d{metric};
    std::vector<double> y, c, t1, t2;
    double sum[2] = {0, 0};
    int n[2] = {0, 0};
    for (const auto& o : outcomes) {
      const auto v = metric_of(o, metric);
      if (!v) continue;
      const int k = is_centralized(o.regime);
      sum[k] += *v;
      ++n[k];
      const double t = o.year - kTrendOrigin;
      y.push_back(*v);
      c.push_back(k);
      t1.push_back(t);
      t2.push_back(t * t);
    }
    if (n[0] == 0 || n[1] == 0)
      throw DomainError("diff_regimes: " + metric + " needs at least one centralized and one decentralized year");
    d.mean_centralized = sum[1] / n[1];
    d.mean_decentralized = sum[0] / n[0];
    d.difference = d.mean_centralized - d.mean_decentralized;
    d.n_years = n[0] + n[1];
    if (d.n_years > 4) {
      econ::Table t;
      t.add("y", y).add("centralized", c).add("trend", t1).add("trend_sq", t2);
      econ::RegressionSpec spec{"y", {"centralized", "trend", "trend_sq"}};
      spec.nw_lag = std::min(kNeweyWestLag, d.n_years - 1);
      try {
        d.trend = econ::newey_west_ols(t, spec);
      } catch (const econ::EstimationError&) {
        // Regime perfectly predicted by the trend; the raw difference stands alone.
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

inline std::vector<std::string> regime_diff_header() {
  return {"seed", "metric", "mean_centralized", "mean_decentralized", "difference", "coefficient", "se", "p", "n_years"};
}

inline void write_regime_diff(std::ostream& os, const std::string& seed, const RegimeDiff& d) {
  auto pick = [&](auto f) { return d.trend ? csv::format(f(*d.trend)) : std::string{csv::kMissing}; };
  csv::write_row(os, {seed, d.metric, csv::format(d.mean_centralized), csv::format(d.mean_decentralized), csv::format(d.difference),
                      pick([](const auto& r) { return r.coef("centralized"); }),
                      pick([](const auto& r) { return r.se_of("centralized"); }),
                      pick([](const auto& r) { return r.p[r.index("centralized")]; }), csv::format(d.n_years)});
}

// ---------------------------------------------------------------- regressions

struct RegressionRow {
  std::string spec;
  std::string term;
  std::string seed;  // seed number, or "pooled"
  double estimate = 0.0;
  double se = 0.0;
  double t = 0.0;
  double p = 0.0;
  std::optional<int> n_obs;
  std::optional<int> n_clusters;
  std::string covariance;
};

inline std::vector<std::string> regressions_header() {
  return {"spec", "term", "seed", "estimate", "se", "t", "p", "n_obs", "n_clusters", "covariance"};
}

inline void write_regression_row(std::ostream& os, const RegressionRow& r) {
  auto opt = [](std::optional<int> v) { return v ? csv::format(*v) : std::string{csv::kMissing}; };
  csv::write_row(os, {r.spec, r.term, r.seed, csv::format(r.estimate), csv::format(r.se), csv::format(r.t), csv::format(r.p),
                      opt(r.n_obs), opt(r.n_clusters), r.covariance});
}

inline std::vector<std::string> panel_columns() {
  return {"prefecture", "year", "y", "centralized", "located_in", "within_100km", "tokyo", "near_tokyo", "tokyo_area", "graduates"};
}

namespace detail {

inline std::vector<double> product(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

inline bool varies(const std::vector<double>& v) {
  return std::any_of(v.begin(), v.end(), [&](double x) { return x != v.front(); });
}

inline void add_rows(std::vector<RegressionRow>& out, const std::string& spec, const std::vector<std::string>& terms,
                     const econ::RegressionResult& r, std::uint64_t seed, const std::string& cov) {
  for (const auto& term : terms) {
    const auto k = r.index(term);
    out.push_back({spec, term, csv::format(seed), r.beta[static_cast<Eigen::Index>(k)], r.se[k], r.t[k], r.p[k], r.n_obs,
                   r.n_clusters ? std::optional<int>{r.n_clusters} : std::nullopt, cov});
  }
}

/// Prefecture x year effects, prefecture-clustered errors, focal terms first.
inline void two_way(std::vector<RegressionRow>& out, const std::string& spec, const econ::Table& t, std::vector<std::string> focal,
                    const std::vector<std::string>& controls, std::uint64_t seed) {
  focal.erase(std::remove_if(focal.begin(), focal.end(), [&](const auto& c) { return !varies(t.col(c)); }), focal.end());
  if (focal.empty()) return;
  std::vector<std::string> regs = focal;
  for (const auto& c : controls)
    if (varies(t.col(c))) regs.push_back(c);
  const auto r = econ::fe_ols(t, {"y", regs, {"prefecture", "year"}, "prefecture", econ::Covariance::cluster_robust});
  add_rows(out, spec, focal, r, seed, "cluster_prefecture");
}

inline econ::Table with_interactions(econ::Table t) {
  const auto c = t.col("centralized");
  for (const char* flag : {"located_in", "within_100km", "tokyo", "near_tokyo"})
    t.add(std::string{"centralized_x_"} + flag, product(c, t.col(flag)));
  return t;
}

}  // namespace detail

/// All per-seed regressions, in a fixed order.
inline std::vector<RegressionRow> estimate_seed(std::uint64_t seed, const econ::Table& panel_all, const std::vector<econ::Table>& panel_school,
                                                const std::vector<YearOutcome>& outcomes) {
  std::vector<RegressionRow> out;
  for (std::size_t s = 0; s < panel_school.size(); ++s)
    detail::two_way(out, "local_monopoly_school" + std::to_string(s + 1), detail::with_interactions(panel_school[s]),
                    {"centralized_x_located_in", "centralized_x_within_100km"}, {"graduates"}, seed);

  const auto all = detail::with_interactions(panel_all);
  detail::two_way(out, "tokyo_gain", all, {"centralized_x_tokyo", "centralized_x_near_tokyo"},
                  {"centralized_x_located_in", "centralized_x_within_100km", "graduates"}, seed);

  const auto did = econ::did_centralization(panel_all);
  detail::add_rows(out, "did_tokyo_area", {econ::kDidTerm}, did, seed, "cluster_prefecture");

  for (const auto& d : diff_regimes(outcomes))
    if (d.trend) detail::add_rows(out, "regime_diff_" + d.metric, {"centralized"}, *d.trend, seed, "newey_west_3");
  return out;
}

/// Mean estimate across seeds with SE = sd / sqrt(K), one row per (spec, term).
inline std::vector<RegressionRow> pool(const std::vector<RegressionRow>& rows) {
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<double>> est;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.spec, r.term);
    if (!est.contains(key)) order.push_back(key);
    est[key].push_back(r.estimate);
  }
  std::vector<RegressionRow> out;
  for (const auto& key : order) {
    const auto& v = est[key];
    const double k = static_cast<double>(v.size());
    double mean = 0.0;
    for (const double x : v) mean += x / k;
    RegressionRow r{key.first, key.second, "pooled", mean};
    r.se = r.t = r.p = std::nan("");
    if (v.size() > 1) {
      double ss = 0.0;
      for (const double x : v) ss += (x - mean) * (x - mean);
      r.se = std::sqrt(ss / (k - 1.0)) / std::sqrt(k);
      r.t = r.se > 0.0 ? mean / r.se : std::nan("");
      r.p = econ::detail::two_sided_p(r.t, k - 1.0, false);
    }
    r.covariance = "across_seeds";
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------- run

namespace detail {

struct SeedOutput {
  std::string flows, equilibrium, outcomes, panel_all;
  std::vector<std::string> panel_school;
  std::vector<RegressionRow> regressions;
};

inline std::string header_line(const std::vector<std::string>& h) {
  std::ostringstream os;
  csv::write_row(os, h);
  return os.str();
}

inline std::vector<std::string> equilibrium_header() {
  return {"seed", "year", "school", "cutoff", "iterations", "residual", "converged"};
}

inline csv::Document read_doc(const std::filesystem::path& p) {
  try {
    return csv::Document::from_file(p.string());
  } catch (const csv::CsvError& e) {
    throw IoError(e.what());
  }
}

/// Row indices of a seed-keyed CSV grouped by seed.
inline std::map<std::uint64_t, std::vector<std::size_t>> rows_by_seed(const csv::Document& doc) {
  std::map<std::uint64_t, std::vector<std::size_t>> out;
  const auto c = doc.column("seed");
  for (std::size_t r = 0; r < doc.size(); ++r) out[static_cast<std::uint64_t>(csv::to_int(doc.row(r)[c]))].push_back(r);
  return out;
}

inline econ::Table table_rows(const csv::Document& doc, const std::vector<std::size_t>& rows) {
  econ::Table t;
  for (const auto& name : panel_columns()) {
    const auto c = doc.column(name);
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto r : rows) v.push_back(csv::to_double(doc.row(r)[c]));
    t.add(name, std::move(v));
  }
  return t;
}

/// Runs `work(i)` for i in [0, n) on up to `jobs` threads; rethrows the first failure.
template <class F>
void parallel_for(std::size_t n, int jobs, F work) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex m;
  auto loop = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        work(i);
      } catch (...) {
        std::lock_guard lock{m};
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 1; j < std::min<int>(jobs, static_cast<int>(n)); ++j) pool.emplace_back(loop);
  loop();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream os(p, std::ios::binary);
  os << content;
  if (!os) throw IoError("cannot write " + p.string());
}

}  // namespace detail

inline std::set<Stage> resolve_stages(const std::vector<std::string>& names) {
  if (names.empty()) throw ConfigError("stages: at least one stage required");
  std::set<Stage> out;
  for (const auto& n : names) out.insert(stage_from_string(n));
  // Estimating fresh simulations from stale metrics on disk would mix runs.
  if (out.contains(Stage::simulate) && out.contains(Stage::estimate) && !out.contains(Stage::metrics))
    throw ConfigError("stages: simulate,estimate needs metrics in between");
  return out;
}

/// Names of the files a run with these stages writes.
inline std::vector<std::string> artifact_names(const std::set<Stage>& stages, std::size_t num_schools) {
  std::vector<std::string> out;
  if (stages.contains(Stage::simulate)) out.insert(out.end(), {"flows.csv", "equilibrium.csv"});
  if (stages.contains(Stage::metrics)) {
    out.insert(out.end(), {"year_outcomes.csv", "panel_all.csv"});
    for (std::size_t s = 1; s <= num_schools; ++s) out.push_back("panel_school_" + std::to_string(s) + ".csv");
  }
  if (stages.contains(Stage::estimate)) out.push_back("regressions.csv");
  out.push_back("manifest.lock");
  return out;
}

/// Executes the selected stages for seeds [seed, seed + seeds) and returns the files written.
inline std::vector<std::string> run(const RunOptions& opt) {
  namespace fs = std::filesystem;
  const Config& cfg = opt.config;
  const Scenario& sc = cfg.scenario;
  const auto stages = resolve_stages(cfg.run.stages);
  if (cfg.run.seeds < 1) throw ConfigError("seeds must be >= 1");
  if (opt.jobs < 1) throw ConfigError("jobs must be >= 1");
  const std::size_t S = sc.schools.size();
  const auto K = static_cast<std::size_t>(cfg.run.seeds);

  std::error_code ec;
  const bool created_out = !fs::exists(opt.out);
  fs::create_directories(opt.out, ec);
  if (ec) throw IoError("cannot create " + opt.out.string() + ": " + ec.message());
  const fs::path staging = opt.out / ".staging";
  fs::remove_all(staging, ec);
  fs::create_directories(staging, ec);
  if (ec) throw IoError("cannot create " + staging.string() + ": " + ec.message());

  try {
    std::vector<detail::SeedOutput> results(K);
    std::vector<std::vector<YearFlows>> flows(K);
    std::vector<std::vector<YearOutcome>> outcomes(K);
    std::vector<std::optional<econ::Table>> panel_all(K);
    std::vector<std::vector<econ::Table>> panel_school(K);
    auto seed_of = [&](std::size_t i) { return cfg.run.seed + i; };

    // Inputs for stages whose predecessor is not selected.
    if (!stages.contains(Stage::simulate) && stages.contains(Stage::metrics)) {
      const auto by_seed = read_flows(detail::read_doc(opt.out / "flows.csv"));
      for (std::size_t i = 0; i < K; ++i) {
        const auto it = by_seed.find(seed_of(i));
        if (it == by_seed.end()) throw IoError("flows.csv has no rows for seed " + std::to_string(seed_of(i)));
        flows[i] = it->second;
      }
    }
    if (!stages.contains(Stage::metrics) && stages.contains(Stage::estimate)) {
      const auto oc = read_year_outcomes(detail::read_doc(opt.out / "year_outcomes.csv"));
      const auto all = detail::read_doc(opt.out / "panel_all.csv");
      const auto all_rows = detail::rows_by_seed(all);
      std::vector<csv::Document> school_docs;
      std::vector<std::map<std::uint64_t, std::vector<std::size_t>>> school_rows;
      for (std::size_t s = 1; s <= S; ++s) {
        school_docs.push_back(detail::read_doc(opt.out / ("panel_school_" + std::to_string(s) + ".csv")));
        school_rows.push_back(detail::rows_by_seed(school_docs.back()));
      }
      for (std::size_t i = 0; i < K; ++i) {
        const auto seed = seed_of(i);
        if (!oc.contains(seed) || !all_rows.contains(seed)) throw IoError("metrics artifacts have no rows for seed " + std::to_string(seed));
        outcomes[i] = oc.at(seed);
        panel_all[i] = detail::table_rows(all, all_rows.at(seed));
        for (std::size_t s = 0; s < S; ++s) {
          if (!school_rows[s].contains(seed)) throw IoError("panel_school_" + std::to_string(s + 1) + ".csv has no rows for seed " + std::to_string(seed));
          panel_school[i].push_back(detail::table_rows(school_docs[s], school_rows[s].at(seed)));
        }
      }
    }

    detail::parallel_for(K, opt.jobs, [&](std::size_t i) {
      const auto seed = seed_of(i);
      auto& res = results[i];
      if (stages.contains(Stage::simulate)) {
        std::ostringstream fl, eq;
        for (auto& yr : simulate_seed(sc, seed)) {
          write_flows(fl, seed, yr.flows);
          if (yr.equilibrium)
            for (std::size_t s = 0; s < S; ++s)
              csv::write_row(eq, {csv::format(seed), csv::format(yr.flows.year), csv::format(s + 1),
                                  csv::format(yr.equilibrium->beliefs.cutoff[s]), csv::format(yr.equilibrium->iterations),
                                  csv::format(yr.equilibrium->residual), yr.equilibrium->converged ? "1" : "0"});
          flows[i].push_back(std::move(yr.flows));
        }
        res.flows = fl.str();
        res.equilibrium = eq.str();
      }
      if (stages.contains(Stage::metrics)) {
        std::ostringstream oc;
        for (const auto& yf : flows[i]) {
          outcomes[i].push_back(outcome_from_flows(yf, sc.geography, sc.schools));
          write_year_outcome(oc, seed, outcomes[i].back());
        }
        const auto panels = build_panel(flows[i], sc.geography, sc.schools);
        for (std::size_t t = 0; t < outcomes[i].size(); ++t) {
          int total = 0;
          for (const auto& r : panels.all)
            if (r.year == outcomes[i][t].year) total += r.y;
          if (total != outcomes[i][t].entrants_total)
            throw DomainError("panel rows do not add up to entrants in " + std::to_string(outcomes[i][t].year));
        }
        std::ostringstream pa;
        for (const auto& r : panels.all) write_panel_row(pa, seed, r);
        res.outcomes = oc.str();
        res.panel_all = pa.str();
        for (const auto& rows : panels.by_school) {
          std::ostringstream ps;
          for (const auto& r : rows) write_panel_row(ps, seed, r);
          res.panel_school.push_back(ps.str());
        }
        if (stages.contains(Stage::estimate)) {
          auto doc_of = [&](const std::string& body) { return csv::Document{csv::parse(detail::header_line(panel_header()) + body)}; };
          auto all_rows = [](const csv::Document& d) {
            std::vector<std::size_t> r(d.size());
            std::iota(r.begin(), r.end(), 0);
            return r;
          };
          const auto pa_doc = doc_of(res.panel_all);
          panel_all[i] = detail::table_rows(pa_doc, all_rows(pa_doc));
          for (const auto& body : res.panel_school) {
            const auto d = doc_of(body);
            panel_school[i].push_back(detail::table_rows(d, all_rows(d)));
          }
        }
      }
      if (stages.contains(Stage::estimate)) res.regressions = estimate_seed(seed, *panel_all[i], panel_school[i], outcomes[i]);
    });

    auto emit = [&](const std::string& name, const std::vector<std::string>& header, auto body) {
      std::string text = detail::header_line(header);
      for (std::size_t i = 0; i < K; ++i) text += body(results[i]);
      detail::write_file(staging / name, text);
    };
    if (stages.contains(Stage::simulate)) {
      emit("flows.csv", flows_header(), [](const auto& r) { return r.flows; });
      emit("equilibrium.csv", detail::equilibrium_header(), [](const auto& r) { return r.equilibrium; });
    }
    if (stages.contains(Stage::metrics)) {
      emit("year_outcomes.csv", year_outcome_header(), [](const auto& r) { return r.outcomes; });
      emit("panel_all.csv", panel_header(), [](const auto& r) { return r.panel_all; });
      for (std::size_t s = 0; s < S; ++s)
        emit("panel_school_" + std::to_string(s + 1) + ".csv", panel_header(), [s](const auto& r) { return r.panel_school[s]; });
    }
    if (stages.contains(Stage::estimate)) {
      std::vector<RegressionRow> all;
      for (const auto& r : results) all.insert(all.end(), r.regressions.begin(), r.regressions.end());
      std::ostringstream os;
      csv::write_row(os, regressions_header());
      for (const auto& r : all) write_regression_row(os, r);
      for (const auto& r : pool(all)) write_regression_row(os, r);
      detail::write_file(staging / "regressions.csv", os.str());
    }
    detail::write_file(staging / "manifest.lock", resolved_json(cfg).dump(2) + "\n");

    const auto names = artifact_names(stages, S);
    for (const auto& name : names) {
      fs::rename(staging / name, opt.out / name, ec);
      if (ec) throw IoError("cannot move " + name + " into " + opt.out.string() + ": " + ec.message());
    }
    fs::remove_all(staging, ec);
    return names;
  } catch (...) {
    fs::remove_all(staging, ec);
    if (created_out && fs::is_empty(opt.out, ec)) fs::remove(opt.out, ec);
    throw;
  }
}

}  // namespace meritmatch
