#pragma once

// JSON scenario configuration.
//
// Every key is optional and falls back to the default scenario; unknown keys
// are errors. `resolved_json` writes the complete configuration with the
// geography and school tables inline, so its output loads back into an
// identical Scenario (the lockfile relies on this).
//
//   {
//     "run":        {"seed": 0, "seeds": 1, "stages": ["simulate", "metrics", "estimate"]},
//     "population": {"applicants_per_year": 10777, "score_sd": 100, "prestige": [...], ...},
//     "behavior":   {"score_noise_sd": 250, "max_iter": 100, "tol": 0.5, "damping": 0.2},
//     "lottery_mode": "single_draw",
//     "geography":  {"tokyo": 12, "prefectures": [{"id": 0, "name": "Hokkaido", ...}]},
//     "geography_csv": "prefectures.csv",
//     "total_capacity": 2007,
//     "schools":    [{"id": 1, "name": "School 1", "prefecture_id": 12, "capacity": 251}],
//     "schools_csv": "schools.csv",
//     "selectivity_order": [1, 3, 4, 2, 8, 6, 5, 7],
//     "schedule":   [{"from": 1900, "to": 1900, "regime": "Decentralized"},
//                    {"from": 1926, "to": 1927, "regime": "GroupedCentralized", "groups": [[1, 3], [2, 4]]}]
//   }
//
// Relative CSV paths resolve against the config file's directory.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geography.hpp"
#include "popgen.hpp"
#include "rng.hpp"

namespace meritmatch {

inline constexpr std::string_view kVersion = "meritsim 1.0.0";

/// Identifies the code revision that produced an artifact.
inline std::string version_hash() {
  char buf[17];
  const auto res = std::to_chars(buf, buf + 16, fnv1a64(kVersion), 16);
  std::string hex(buf, res.ptr);
  return std::string(16 - hex.size(), '0') + hex;
}

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunSettings {
  std::uint64_t seed = 0;
  int seeds = 1;
  std::vector<std::string> stages{"simulate", "metrics", "estimate"};
};

struct Config {
  Scenario scenario = default_scenario();
  RunSettings run;
};

namespace detail {

using nlohmann::json;

/// Reads keys off one JSON object and rejects the ones nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_{j}, where_{std::move(where)} {
    if (!j.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  [[nodiscard]] bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    out = as<T>(j_.at(key), path(key));
  }

  [[nodiscard]] const json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  [[nodiscard]] std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.contains(key)) throw ConfigError("unknown key '" + path(key) + "'");
  }

  template <class T>
  static T as(const json& v, const std::string& where) {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(where + ": expected a number");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(where + ": expected a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline std::string resolve(const std::string& path, const std::filesystem::path& base) {
  const std::filesystem::path p{path};
  return p.is_absolute() || base.empty() ? path : (base / p).string();
}

inline SchoolGroups parse_groups(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(where + ": expected two groups");
  SchoolGroups g;
  for (std::size_t i = 0; i < 2; ++i) g[i] = ObjectReader::as<std::vector<SchoolId>>(j[i], where);
  return g;
}

inline const char* lottery_name(LotteryMode m) { return m == LotteryMode::per_step ? "per_step" : "single_draw"; }

}  // namespace detail

/// Builds a Config from parsed JSON; `base` anchors relative CSV paths.
inline Config parse_config(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  using detail::ObjectReader;
  Config cfg;
  ObjectReader top{j, ""};
  Scenario& sc = cfg.scenario;

  if (top.has("version")) {
    const auto v = ObjectReader::as<std::string>(top.at("version"), "version");
    if (v != version_hash()) throw ConfigError("version: config was written by " + v + ", this build is " + version_hash());
  }

  if (top.has("run")) {
    ObjectReader r{top.at("run"), "run"};
    r.get("seed", cfg.run.seed);
    r.get("seeds", cfg.run.seeds);
    r.get("stages", cfg.run.stages);
    r.finish();
  }

  auto& pop = sc.population;
  if (top.has("population")) {
    ObjectReader r{top.at("population"), "population"};
    r.get("applicants_per_year", pop.applicants_per_year);
    r.get("applicants_trend_per_year", pop.applicants_trend_per_year);
    r.get("score_mean_base", pop.score_mean_base);
    r.get("score_sd", pop.score_sd);
    r.get("urban_score_shift", pop.urban_score_shift);
    r.get("score_granularity", pop.score_granularity);
    r.get("prestige", pop.prestige);
    r.get("distance_cost_per_km", pop.distance_cost_per_km);
    r.get("preference_noise_sd", pop.preference_noise_sd);
    r.get("outside_option_mean", pop.outside_option_mean);
    r.get("outside_option_sd", pop.outside_option_sd);
    r.get("first_year", pop.first_year);
    r.get("last_year", pop.last_year);
    r.finish();
  }

  if (top.has("behavior")) {
    ObjectReader r{top.at("behavior"), "behavior"};
    r.get("score_noise_sd", sc.behavior.score_noise_sd);
    r.get("max_iter", sc.behavior.max_iter);
    r.get("tol", sc.behavior.tol);
    r.get("damping", sc.behavior.damping);
    r.finish();
  }

  if (top.has("lottery_mode")) {
    const auto m = ObjectReader::as<std::string>(top.at("lottery_mode"), "lottery_mode");
    if (m == "single_draw") sc.lottery_mode = LotteryMode::single_draw;
    else if (m == "per_step") sc.lottery_mode = LotteryMode::per_step;
    else throw ConfigError("lottery_mode: expected single_draw or per_step, got '" + m + "'");
  }

  const bool inline_geo = top.has("geography"), csv_geo = top.has("geography_csv");
  if (inline_geo && csv_geo) throw ConfigError("geography: give either geography or geography_csv");
  if (csv_geo) {
    const auto path = detail::resolve(ObjectReader::as<std::string>(top.at("geography_csv"), "geography_csv"), base);
    try {
      sc.geography = load_geography_csv(path);
    } catch (const csv::CsvError& e) {
      throw ConfigError(std::string{"geography_csv: "} + e.what());
    }
  }
  if (inline_geo) {
    ObjectReader g{top.at("geography"), "geography"};
    PrefectureId tokyo = detail::kTokyo;
    g.get("tokyo", tokyo);
    std::vector<Prefecture> prefs;
    if (!g.has("prefectures")) throw ConfigError("geography.prefectures: required");
    const auto& rows = g.at("prefectures");
    if (!rows.is_array()) throw ConfigError("geography.prefectures: expected an array");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      ObjectReader r{rows[i], "geography.prefectures[" + std::to_string(i) + "]"};
      Prefecture p;
      r.get("id", p.id);
      r.get("name", p.name);
      r.get("x_km", p.coord.x_km);
      r.get("y_km", p.coord.y_km);
      r.get("weight", p.pop_weight);
      r.get("edu_index", p.edu_index);
      r.finish();
      if (p.id != static_cast<PrefectureId>(i)) throw ConfigError("geography.prefectures: ids must equal their position");
      prefs.push_back(std::move(p));
    }
    g.finish();
    if (tokyo < 0 || static_cast<std::size_t>(tokyo) >= prefs.size()) throw ConfigError("geography.tokyo: not a prefecture id");
    assign_urban_flags(prefs, tokyo);
    sc.geography = Geography{std::move(prefs), tokyo};
  }

  int total_capacity = 2007;
  top.get("total_capacity", total_capacity);
  const bool inline_schools = top.has("schools"), csv_schools = top.has("schools_csv");
  if (inline_schools + csv_schools + top.has("total_capacity") > 1)
    throw ConfigError("schools: give only one of schools, schools_csv, total_capacity");
  if (total_capacity < 1) throw ConfigError("total_capacity: must be positive");
  if (top.has("total_capacity")) sc.schools = default_schools(total_capacity);
  if (csv_schools) {
    const auto path = detail::resolve(ObjectReader::as<std::string>(top.at("schools_csv"), "schools_csv"), base);
    try {
      sc.schools = load_schools_csv(path);
    } catch (const csv::CsvError& e) {
      throw ConfigError(std::string{"schools_csv: "} + e.what());
    }
  }
  if (inline_schools) {
    const auto& rows = top.at("schools");
    if (!rows.is_array()) throw ConfigError("schools: expected an array");
    sc.schools.clear();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      ObjectReader r{rows[i], "schools[" + std::to_string(i) + "]"};
      School s;
      r.get("id", s.id);
      r.get("name", s.name);
      r.get("prefecture_id", s.prefecture_id);
      r.get("capacity", s.capacity);
      r.finish();
      sc.schools.push_back(std::move(s));
    }
  }
  apply_prestige(sc.schools, pop);

  if (top.has("selectivity_order")) top.get("selectivity_order", sc.selectivity_order);
  else if (sc.schools.size() != 8) sc.selectivity_order.clear();

  const int num_schools = static_cast<int>(sc.schools.size());
  if (top.has("schedule")) {
    const auto& rows = top.at("schedule");
    if (!rows.is_array()) throw ConfigError("schedule: expected an array");
    sc.schedule = RegimeSchedule{};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string where = "schedule[" + std::to_string(i) + "]";
      ObjectReader r{rows[i], where};
      int from = 0, to = 0;
      std::string kind;
      if (!r.has("from") || !r.has("to") || !r.has("regime")) throw ConfigError(where + ": from, to and regime are required");
      r.get("from", from);
      r.get("to", to);
      r.get("regime", kind);
      Regime reg;
      try {
        reg.kind = regime_kind_from_string(kind);
      } catch (const DomainError& e) {
        throw ConfigError(where + ": " + e.what());
      }
      if (r.has("groups")) reg.groups = detail::parse_groups(r.at("groups"), r.path("groups"));
      else if (reg.kind == RegimeKind::grouped_centralized) reg.groups = default_groups(num_schools);
      r.finish();
      if (from > to) throw ConfigError(where + ": from after to");
      for (int y = from; y <= to; ++y) {
        if (sc.schedule.years().contains(y)) throw ConfigError(where + ": year " + std::to_string(y) + " scheduled twice");
        reg.year = y;
        sc.schedule.set(reg);
      }
    }
  } else {
    sc.schedule = default_schedule(pop.first_year, pop.last_year, num_schools);
  }
  top.finish();

  if (cfg.run.seeds < 1) throw ConfigError("run.seeds: must be >= 1");
  const auto problems = validate(sc);
  if (!problems.empty()) throw ConfigError(problems.front().code + ": " + problems.front().message);
  return cfg;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j, std::filesystem::path{path}.parent_path());
}

/// Complete configuration with tables inline; parse_config(resolved_json(c)) == c.
inline nlohmann::json resolved_json(const Config& cfg) {
  using nlohmann::json;
  const Scenario& sc = cfg.scenario;
  const auto& pop = sc.population;
  json j;
  j["version"] = version_hash();
  j["run"] = {{"seed", cfg.run.seed}, {"seeds", cfg.run.seeds}, {"stages", cfg.run.stages}};
  j["population"] = {{"applicants_per_year", pop.applicants_per_year},
                     {"applicants_trend_per_year", pop.applicants_trend_per_year},
                     {"score_mean_base", pop.score_mean_base},
                     {"score_sd", pop.score_sd},
                     {"urban_score_shift", pop.urban_score_shift},
                     {"score_granularity", pop.score_granularity},
                     {"prestige", pop.prestige},
                     {"distance_cost_per_km", pop.distance_cost_per_km},
                     {"preference_noise_sd", pop.preference_noise_sd},
                     {"outside_option_mean", pop.outside_option_mean},
                     {"outside_option_sd", pop.outside_option_sd},
                     {"first_year", pop.first_year},
                     {"last_year", pop.last_year}};
  j["behavior"] = {{"score_noise_sd", sc.behavior.score_noise_sd},
                   {"max_iter", sc.behavior.max_iter},
                   {"tol", sc.behavior.tol},
                   {"damping", sc.behavior.damping}};
  j["lottery_mode"] = detail::lottery_name(sc.lottery_mode);

  json prefs = json::array();
  for (const auto& p : sc.geography.prefectures())
    prefs.push_back({{"id", p.id}, {"name", p.name}, {"x_km", p.coord.x_km}, {"y_km", p.coord.y_km},
                     {"weight", p.pop_weight}, {"edu_index", p.edu_index}});
  j["geography"] = {{"tokyo", sc.geography.tokyo()}, {"prefectures", prefs}};

  json schools = json::array();
  for (const auto& s : sc.schools)
    schools.push_back({{"id", s.id}, {"name", s.name}, {"prefecture_id", s.prefecture_id}, {"capacity", s.capacity}});
  j["schools"] = schools;
  j["selectivity_order"] = sc.selectivity_order;

  // Consecutive years with the same regime collapse into one span.
  json sched = json::array();
  const Regime* open = nullptr;
  int from = 0, prev = 0;
  auto close = [&] {
    json row = {{"from", from}, {"to", prev}, {"regime", std::string{to_string(open->kind)}}};
    if (open->groups) row["groups"] = {(*open->groups)[0], (*open->groups)[1]};
    sched.push_back(row);
  };
  for (const auto& [year, reg] : sc.schedule.years()) {
    if (open && year == prev + 1 && reg.kind == open->kind && reg.groups == open->groups) {
      prev = year;
      continue;
    }
    if (open) close();
    open = &reg;
    from = prev = year;
  }
  if (open) close();
  j["schedule"] = sched;
  return j;
}

}  // namespace meritmatch
