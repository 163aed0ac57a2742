#pragma once

// Short-run outcome statistics and prefecture x year panels.
//
// Everything is computed from a year's flow table: applicant counts keyed by
// (birth prefecture, first choice, school entered). The table is a
// sufficient statistic for every outcome and panel here, and it is what the
// simulate stage writes to disk.

#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <tuple>
#include <vector>

#include "csv.hpp"
#include "market.hpp"
#include "strategy.hpp"

namespace meritmatch {

inline constexpr SchoolId kNoSchool = 0;

struct FlowCell {
  PrefectureId birth = 0;
  SchoolId first_choice = kNoSchool;  // kNoSchool: abstained
  SchoolId school = kNoSchool;        // kNoSchool: not placed
  int count = 0;

  friend bool operator==(const FlowCell&, const FlowCell&) = default;
};

struct YearFlows {
  int year = 0;
  RegimeKind regime = RegimeKind::decentralized;
  std::vector<FlowCell> cells;  // sorted by (birth, first_choice, school), counts > 0

  friend bool operator==(const YearFlows&, const YearFlows&) = default;
};

inline YearFlows tabulate(const Market& market, const Submission& sub, const Assignment& assignment, int year, RegimeKind regime) {
  const auto first = first_choices(sub);
  std::map<std::tuple<PrefectureId, SchoolId, SchoolId>, int> counts;
  for (const auto& a : market.applicants) {
    const auto fc = first.find(a.id);
    const SchoolId f = fc == first.end() ? kNoSchool : fc->second;
    const auto pl = assignment.placed.find(a.id);
    const SchoolId s = pl == assignment.placed.end() ? kNoSchool : pl->second.school;
    if (f == kNoSchool && s != kNoSchool) throw DomainError("applicant " + std::to_string(a.id) + " placed without applying");
    ++counts[{a.birth_prefecture, f, s}];
  }
  YearFlows out{year, regime, {}};
  for (const auto& [key, n] : counts) out.cells.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), n});
  return out;
}

struct YearOutcome {
  int year = 0;
  RegimeKind regime = RegimeKind::decentralized;
  int applicants_total = 0;  // applicants who filed at least one application
  std::optional<double> share_first_choice_school1;
  std::optional<double> mean_enrollment_distance_km;  // over entrants; missing when nobody entered
  std::optional<double> tokyo_area_entrant_share;     // over entrants; missing when nobody entered
  int entrants_total = 0;
  int unassigned_total = 0;
};

inline YearOutcome outcome_from_flows(const YearFlows& flows, const Geography& geo, std::span<const School> schools) {
  YearOutcome o{flows.year, flows.regime};
  long long school1_first = 0, tokyo_entrants = 0;
  double dist_sum = 0.0;
  for (const auto& c : flows.cells) {
    if (c.first_choice == kNoSchool) continue;
    o.applicants_total += c.count;
    if (c.first_choice == 1) school1_first += c.count;
    if (c.school == kNoSchool) {
      o.unassigned_total += c.count;
      continue;
    }
    const auto& s = schools[static_cast<std::size_t>(c.school - 1)];
    o.entrants_total += c.count;
    dist_sum += c.count * geo.distance(c.birth, s.prefecture_id);
    if (geo.in_tokyo_area(c.birth)) tokyo_entrants += c.count;
  }
  if (o.applicants_total > 0) o.share_first_choice_school1 = static_cast<double>(school1_first) / o.applicants_total;
  if (o.entrants_total > 0) {
    o.mean_enrollment_distance_km = dist_sum / o.entrants_total;
    o.tokyo_area_entrant_share = static_cast<double>(tokyo_entrants) / o.entrants_total;
  }
  return o;
}

inline YearOutcome year_outcome(const Submission& sub, const Assignment& assignment, const Market& market, int year, RegimeKind regime) {
  return outcome_from_flows(tabulate(market, sub, assignment, year, regime), market.geography, market.schools);
}

struct PanelRow {
  PrefectureId prefecture = 0;
  int year = 0;
  SchoolId school = kNoSchool;  // kNoSchool: all schools pooled
  int y = 0;                    // entrants born in the prefecture (to `school`, if set)
  bool centralized = false;
  bool located_in = false;    // the school (any school, when pooled) is in the prefecture
  bool within_100km = false;  // the school (any school) is 1-100 km away; exclusive of located_in
  bool tokyo = false;
  bool near_tokyo = false;  // 1-100 km from Tokyo
  bool tokyo_area = false;  // tokyo || near_tokyo
  int graduates = 0;        // cohort members born in the prefecture (middle-school-graduate proxy)
};

struct Panels {
  std::vector<PanelRow> all;
  std::vector<std::vector<PanelRow>> by_school;  // by_school[s - 1]
};

/// Prefecture x year panel for all schools and for each school.
inline Panels build_panel(std::span<const YearFlows> years, const Geography& geo, std::span<const School> schools) {
  if (years.size() < 2) throw DomainError("build_panel: need at least two years");
  bool any_central = false, any_decentral = false;
  std::set<int> seen_years;
  for (const auto& yf : years) {
    if (!seen_years.insert(yf.year).second) throw DomainError("build_panel: year " + std::to_string(yf.year) + " repeated");
    (is_centralized(yf.regime) ? any_central : any_decentral) = true;
  }
  if (!any_central || !any_decentral) throw DomainError("build_panel: years must span centralized and decentralized regimes");

  const std::size_t P = geo.size(), S = schools.size();
  std::vector<std::vector<double>> d(P, std::vector<double>(S));
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t s = 0; s < S; ++s) d[p][s] = geo.distance(static_cast<PrefectureId>(p), schools[s].prefecture_id);

  Panels out;
  out.by_school.resize(S);
  for (const auto& yf : years) {
    std::vector<int> grads(P, 0);
    std::vector<std::vector<int>> entrants(P, std::vector<int>(S + 1, 0));
    std::vector<int> seats_used(S + 1, 0);
    for (const auto& c : yf.cells) {
      if (!geo.contains(c.birth) || c.school < 0 || static_cast<std::size_t>(c.school) > S || c.first_choice < 0 ||
          static_cast<std::size_t>(c.first_choice) > S || c.count < 0)
        throw DomainError("build_panel: year " + std::to_string(yf.year) + " does not match the market");
      grads[static_cast<std::size_t>(c.birth)] += c.count;
      entrants[static_cast<std::size_t>(c.birth)][static_cast<std::size_t>(c.school)] += c.count;
      seats_used[static_cast<std::size_t>(c.school)] += c.count;
    }
    for (std::size_t s = 1; s <= S; ++s)
      if (seats_used[s] > schools[s - 1].capacity)
        throw DomainError("build_panel: year " + std::to_string(yf.year) + " overfills school " + std::to_string(s));

    const bool central = is_centralized(yf.regime);
    for (std::size_t p = 0; p < P; ++p) {
      const auto pid = static_cast<PrefectureId>(p);
      PanelRow base;
      base.prefecture = pid;
      base.year = yf.year;
      base.centralized = central;
      base.tokyo = pid == geo.tokyo();
      base.near_tokyo = !base.tokyo && geo.in_tokyo_area(pid);
      base.tokyo_area = base.tokyo || base.near_tokyo;
      base.graduates = grads[p];

      PanelRow all = base;
      for (std::size_t s = 1; s <= S; ++s) {
        all.y += entrants[p][s];
        all.located_in = all.located_in || d[p][s - 1] == 0.0;
      }
      for (std::size_t s = 1; s <= S && !all.located_in; ++s) all.within_100km = all.within_100km || d[p][s - 1] <= Geography::kUrbanRadiusKm;
      out.all.push_back(all);

      for (std::size_t s = 1; s <= S; ++s) {
        PanelRow row = base;
        row.school = static_cast<SchoolId>(s);
        row.y = entrants[p][s];
        row.located_in = d[p][s - 1] == 0.0;
        row.within_100km = !row.located_in && d[p][s - 1] <= Geography::kUrbanRadiusKm;
        out.by_school[s - 1].push_back(row);
      }
    }
  }
  return out;
}

// CSV emission. Each artifact carries a leading seed column.

inline std::vector<std::string> flows_header() { return {"seed", "year", "regime", "birth_prefecture", "first_choice", "school", "count"}; }

inline void write_flows(std::ostream& os, std::uint64_t seed, const YearFlows& yf) {
  for (const auto& c : yf.cells)
    csv::write_row(os, {csv::format(seed), csv::format(yf.year), std::string{to_string(yf.regime)}, csv::format(c.birth),
                        csv::format(c.first_choice), csv::format(c.school), csv::format(c.count)});
}

/// Flow tables keyed by seed, in file order.
inline std::map<std::uint64_t, std::vector<YearFlows>> read_flows(const csv::Document& doc) {
  std::map<std::uint64_t, std::vector<YearFlows>> out;
  for (std::size_t r = 0; r < doc.size(); ++r) {
    const auto seed = static_cast<std::uint64_t>(csv::to_int(doc.at(r, "seed")));
    const int year = static_cast<int>(csv::to_int(doc.at(r, "year")));
    const auto regime = regime_kind_from_string(doc.at(r, "regime"));
    auto& years = out[seed];
    if (years.empty() || years.back().year != year) years.push_back({year, regime, {}});
    if (years.back().regime != regime) throw DomainError("flows: regime changes within year " + std::to_string(year));
    years.back().cells.push_back({static_cast<PrefectureId>(csv::to_int(doc.at(r, "birth_prefecture"))),
                                  static_cast<SchoolId>(csv::to_int(doc.at(r, "first_choice"))),
                                  static_cast<SchoolId>(csv::to_int(doc.at(r, "school"))),
                                  static_cast<int>(csv::to_int(doc.at(r, "count")))});
  }
  return out;
}

inline std::vector<std::string> year_outcome_header() {
  return {"seed", "year", "regime", "centralized", "applicants_total", "share_first_choice_school1", "mean_enrollment_distance_km",
          "tokyo_area_entrant_share", "entrants_total", "unassigned_total"};
}

inline void write_year_outcome(std::ostream& os, std::uint64_t seed, const YearOutcome& o) {
  csv::write_row(os, {csv::format(seed), csv::format(o.year), std::string{to_string(o.regime)}, is_centralized(o.regime) ? "1" : "0",
                      csv::format(o.applicants_total), csv::format(o.share_first_choice_school1),
                      csv::format(o.mean_enrollment_distance_km), csv::format(o.tokyo_area_entrant_share),
                      csv::format(o.entrants_total), csv::format(o.unassigned_total)});
}

inline std::optional<double> optional_number(const std::string& s) {
  const double v = csv::to_double(s);
  return std::isnan(v) ? std::nullopt : std::optional<double>{v};
}

inline std::map<std::uint64_t, std::vector<YearOutcome>> read_year_outcomes(const csv::Document& doc) {
  std::map<std::uint64_t, std::vector<YearOutcome>> out;
  for (std::size_t r = 0; r < doc.size(); ++r) {
    YearOutcome o;
    o.year = static_cast<int>(csv::to_int(doc.at(r, "year")));
    o.regime = regime_kind_from_string(doc.at(r, "regime"));
    o.applicants_total = static_cast<int>(csv::to_int(doc.at(r, "applicants_total")));
    o.share_first_choice_school1 = optional_number(doc.at(r, "share_first_choice_school1"));
    o.mean_enrollment_distance_km = optional_number(doc.at(r, "mean_enrollment_distance_km"));
    o.tokyo_area_entrant_share = optional_number(doc.at(r, "tokyo_area_entrant_share"));
    o.entrants_total = static_cast<int>(csv::to_int(doc.at(r, "entrants_total")));
    o.unassigned_total = static_cast<int>(csv::to_int(doc.at(r, "unassigned_total")));
    out[static_cast<std::uint64_t>(csv::to_int(doc.at(r, "seed")))].push_back(o);
  }
  return out;
}

inline std::vector<std::string> panel_header() {
  return {"seed", "prefecture", "year", "school", "y", "centralized", "located_in", "within_100km",
          "tokyo", "near_tokyo", "tokyo_area", "graduates"};
}

inline void write_panel_row(std::ostream& os, std::uint64_t seed, const PanelRow& r) {
  auto b = [](bool v) { return std::string{v ? "1" : "0"}; };
  csv::write_row(os, {csv::format(seed), csv::format(r.prefecture), csv::format(r.year), csv::format(r.school), csv::format(r.y),
                      b(r.centralized), b(r.located_in), b(r.within_100km), b(r.tokyo), b(r.near_tokyo), b(r.tokyo_area),
                      csv::format(r.graduates)});
}

}  // namespace meritmatch
