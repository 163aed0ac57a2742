#pragma once

// Synthetic yearly applicant cohorts and the shipped default scenario.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "geography.hpp"
#include "market.hpp"
#include "mechanisms.hpp"
#include "rng.hpp"
#include "strategy.hpp"

namespace meritmatch {

struct PopulationConfig {
  int applicants_per_year = 10777;
  // Linear cohort-size trend (applicants added per year after first_year); 0 keeps cohorts invariant.
  double applicants_trend_per_year = 0.0;
  double score_mean_base = 400.0;
  double score_sd = 100.0;
  double urban_score_shift = 40.0;  // score mean = base + shift * edu_index(birth prefecture)
  double score_granularity = 1.0;   // exam scores are whole points; 0 keeps them continuous
  std::vector<double> prestige{120.0, 64.0, 80.0, 70.0, 50.0, 55.0, 45.0, 60.0};
  double distance_cost_per_km = 0.06;
  double preference_noise_sd = 20.0;
  double outside_option_mean = 0.0;
  double outside_option_sd = 10.0;
  int first_year = 1900;
  int last_year = 1930;
};

inline std::vector<Violation> validate(const PopulationConfig& c, std::size_t num_schools) {
  std::vector<Violation> out;
  auto bad = [&out](std::string msg) { out.push_back({"bad population config", std::move(msg)}); };
  if (c.applicants_per_year <= 0) bad("applicants_per_year must be positive");
  if (!(c.score_sd >= 0.0)) bad("score_sd must be >= 0");
  if (!(c.preference_noise_sd >= 0.0)) bad("preference_noise_sd must be >= 0");
  if (!(c.outside_option_sd >= 0.0)) bad("outside_option_sd must be >= 0");
  if (!(c.score_granularity >= 0.0)) bad("score_granularity must be >= 0");
  if (!(c.distance_cost_per_km >= 0.0)) bad("distance_cost_per_km must be >= 0");
  if (c.prestige.size() != num_schools) bad("prestige needs one value per school");
  if (c.first_year > c.last_year) bad("first_year after last_year");
  for (const double v : {c.score_mean_base, c.urban_score_shift, c.outside_option_mean, c.applicants_trend_per_year})
    if (!std::isfinite(v)) bad("nonfinite parameter");
  return out;
}

inline int cohort_size(const PopulationConfig& c, int year) {
  const double n = c.applicants_per_year + c.applicants_trend_per_year * (year - c.first_year);
  return std::max(1, static_cast<int>(std::lround(n)));
}

/// One cohort. Draws are consumed in a fixed per-applicant order, so a given
/// (rng seed, rng stream) always yields the same cohort.
inline std::vector<Applicant> generate_applicants(const PopulationConfig& config, const Geography& geo,
                                                  std::span<const School> schools, int year, SeededRng rng) {
  if (const auto v = validate(config, schools.size()); !v.empty()) throw DomainError(v.front().message);
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& p : geo.prefectures()) cumulative.push_back(acc += p.pop_weight);

  // distance from every prefecture to every school
  std::vector<std::vector<double>> dist(geo.size(), std::vector<double>(schools.size()));
  for (const auto& p : geo.prefectures())
    for (std::size_t s = 0; s < schools.size(); ++s) dist[static_cast<std::size_t>(p.id)][s] = geo.distance(p.id, schools[s].prefecture_id);

  const int n = cohort_size(config, year);
  std::vector<Applicant> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Applicant a;
    a.id = i;
    a.birth_prefecture = static_cast<PrefectureId>(rng.categorical(cumulative));
    const auto& home = geo.at(a.birth_prefecture);
    a.score = rng.normal(config.score_mean_base + config.urban_score_shift * home.edu_index, config.score_sd);
    if (config.score_granularity > 0.0) a.score = std::round(a.score / config.score_granularity) * config.score_granularity;
    a.utility.resize(schools.size());
    for (std::size_t s = 0; s < schools.size(); ++s)
      a.utility[s] = config.prestige[s] - config.distance_cost_per_km * dist[static_cast<std::size_t>(a.birth_prefecture)][s] +
                     rng.normal(0.0, config.preference_noise_sd);
    a.outside_option = rng.normal(config.outside_option_mean, config.outside_option_sd);
    out.push_back(std::move(a));
  }
  return out;
}

/// Admission rule per calendar year.
class RegimeSchedule {
 public:
  RegimeSchedule() = default;
  explicit RegimeSchedule(std::map<int, Regime> by_year) : by_year_{std::move(by_year)} {}

  [[nodiscard]] const Regime& at(int year) const {
    const auto it = by_year_.find(year);
    if (it == by_year_.end()) throw DomainError("no regime scheduled for " + std::to_string(year));
    return it->second;
  }
  [[nodiscard]] const std::map<int, Regime>& years() const { return by_year_; }
  void set(Regime r) { by_year_[r.year] = std::move(r); }

 private:
  std::map<int, Regime> by_year_;
};

/// Synthetic grouping for 1926-27: odd ids vs even ids.
inline SchoolGroups default_groups(int num_schools) {
  SchoolGroups g;
  for (int s = 1; s <= num_schools; ++s) g[static_cast<std::size_t>((s - 1) % 2)].push_back(s);
  return g;
}

inline RegimeKind default_regime_kind(int year) {
  if (year <= 1900) return RegimeKind::decentralized;
  if ((year >= 1902 && year <= 1907) || (year >= 1917 && year <= 1918)) return RegimeKind::centralized;
  if (year >= 1926 && year <= 1927) return RegimeKind::grouped_centralized;
  return RegimeKind::decentralized_unified_exam;
}

inline RegimeSchedule default_schedule(int first_year = 1900, int last_year = 1930, int num_schools = 8) {
  RegimeSchedule sched;
  for (int y = first_year; y <= last_year; ++y) {
    Regime r{default_regime_kind(y), y, std::nullopt};
    if (r.kind == RegimeKind::grouped_centralized) r.groups = default_groups(num_schools);
    sched.set(std::move(r));
  }
  return sched;
}

struct Scenario {
  Geography geography;
  std::vector<School> schools;
  PopulationConfig population;
  BehaviorParams behavior;
  RegimeSchedule schedule;
  LotteryMode lottery_mode = LotteryMode::single_draw;
  std::vector<SchoolId> selectivity_order;  // most selective first
};

/// Copies the config's prestige values onto the school table.
inline void apply_prestige(std::vector<School>& schools, const PopulationConfig& config) {
  for (std::size_t s = 0; s < schools.size() && s < config.prestige.size(); ++s) schools[s].prestige = config.prestige[s];
}

/// 47 prefectures, Schools 1-8 with 2007 seats in total, and the 1900-1930 regime chronology.
inline Scenario default_scenario() {
  Scenario sc;
  sc.geography = default_geography();
  sc.schools = default_schools(2007);
  apply_prestige(sc.schools, sc.population);
  sc.schedule = default_schedule(sc.population.first_year, sc.population.last_year, static_cast<int>(sc.schools.size()));
  sc.selectivity_order = {1, 3, 4, 2, 8, 6, 5, 7};
  return sc;
}

inline std::vector<Violation> validate(const Scenario& sc) {
  auto out = validate_market(sc.geography, sc.schools, {});
  auto add = [&out](std::vector<Violation> v) { out.insert(out.end(), v.begin(), v.end()); };
  add(validate(sc.population, sc.schools.size()));
  add(validate(sc.behavior));
  if (!sc.selectivity_order.empty()) add(validate_selectivity(sc.schools, sc.selectivity_order));
  for (int y = sc.population.first_year; y <= sc.population.last_year; ++y) {
    if (!sc.schedule.years().contains(y)) {
      out.push_back({"bad schedule", "no regime for " + std::to_string(y)});
      continue;
    }
    const auto& r = sc.schedule.at(y);
    if (r.kind == RegimeKind::grouped_centralized) {
      if (!r.groups) out.push_back({"bad schedule", "grouped regime without groups in " + std::to_string(y)});
      else add(validate_groups(sc.schools.size(), *r.groups));
    } else if (r.groups) {
      out.push_back({"bad schedule", "groups given for a non-grouped regime in " + std::to_string(y)});
    }
  }
  return out;
}

}  // namespace meritmatch
