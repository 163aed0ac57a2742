#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace meritmatch {

using PrefectureId = int;
using SchoolId = int;  // 1..S; 0 is reserved for "no school" in aggregated tables
using ApplicantId = int;

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct Point {
  double x_km = 0.0;
  double y_km = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct Prefecture {
  PrefectureId id = 0;
  std::string name;
  Point coord;
  bool urban = false;
  double pop_weight = 0.0;
  double edu_index = 0.0;

  friend bool operator==(const Prefecture&, const Prefecture&) = default;
};

/// Planar Euclidean distance in km.
inline double distance(const Prefecture& a, const Prefecture& b) {
  return std::hypot(a.coord.x_km - b.coord.x_km, a.coord.y_km - b.coord.y_km);
}

struct School {
  SchoolId id = 1;
  std::string name;
  PrefectureId prefecture_id = 0;
  int capacity = 1;
  double prestige = 0.0;

  friend bool operator==(const School&, const School&) = default;
};

struct Applicant {
  ApplicantId id = 0;
  PrefectureId birth_prefecture = 0;
  double score = 0.0;
  std::vector<double> utility;  // utility[s - 1] is the value of school s
  double outside_option = 0.0;

  [[nodiscard]] double utility_of(SchoolId s) const { return utility.at(static_cast<std::size_t>(s - 1)); }
};

enum class RegimeKind { decentralized, decentralized_unified_exam, centralized, grouped_centralized };

inline std::string_view to_string(RegimeKind k) {
  switch (k) {
    case RegimeKind::decentralized: return "Decentralized";
    case RegimeKind::decentralized_unified_exam: return "DecentralizedUnifiedExam";
    case RegimeKind::centralized: return "Centralized";
    case RegimeKind::grouped_centralized: return "GroupedCentralized";
  }
  return "?";
}

inline RegimeKind regime_kind_from_string(std::string_view s) {
  for (const auto k : {RegimeKind::decentralized, RegimeKind::decentralized_unified_exam, RegimeKind::centralized,
                       RegimeKind::grouped_centralized})
    if (to_string(k) == s) return k;
  throw DomainError("unknown regime '" + std::string{s} + "'");
}

/// Centralized and grouped-centralized years both count as centralization.
inline bool is_centralized(RegimeKind k) {
  return k == RegimeKind::centralized || k == RegimeKind::grouped_centralized;
}

using SchoolGroups = std::array<std::vector<SchoolId>, 2>;

struct Regime {
  RegimeKind kind = RegimeKind::decentralized;
  int year = 0;
  std::optional<SchoolGroups> groups;  // GroupedCentralized only
};

struct Placement {
  SchoolId school = 0;
  int admission_round = 1;
  int preference_rank_obtained = 1;

  friend bool operator==(const Placement&, const Placement&) = default;
};

struct Assignment {
  std::map<ApplicantId, Placement> placed;
  std::set<ApplicantId> unassigned;

  [[nodiscard]] int count_at(SchoolId s) const {
    return static_cast<int>(std::count_if(placed.begin(), placed.end(), [s](const auto& kv) { return kv.second.school == s; }));
  }

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

/// The domain of `placed`.
inline std::set<ApplicantId> admitted_set(const Assignment& a) {
  std::set<ApplicantId> out;
  for (const auto& [id, p] : a.placed) out.insert(id);
  return out;
}

/// Prefecture table plus the designated capital used for the urban band.
class Geography {
 public:
  static constexpr double kUrbanRadiusKm = 100.0;

  Geography() = default;
  Geography(std::vector<Prefecture> prefectures, PrefectureId tokyo) : prefectures_{std::move(prefectures)}, tokyo_{tokyo} {}

  [[nodiscard]] std::span<const Prefecture> prefectures() const { return prefectures_; }
  [[nodiscard]] std::size_t size() const { return prefectures_.size(); }
  [[nodiscard]] PrefectureId tokyo() const { return tokyo_; }
  [[nodiscard]] bool contains(PrefectureId id) const { return id >= 0 && static_cast<std::size_t>(id) < prefectures_.size(); }

  [[nodiscard]] const Prefecture& at(PrefectureId id) const {
    if (!contains(id)) throw DomainError("unknown prefecture id " + std::to_string(id));
    return prefectures_[static_cast<std::size_t>(id)];
  }

  [[nodiscard]] double distance(PrefectureId a, PrefectureId b) const { return meritmatch::distance(at(a), at(b)); }

  [[nodiscard]] bool in_tokyo_area(PrefectureId p) const { return distance(p, tokyo_) <= kUrbanRadiusKm; }

  friend bool operator==(const Geography&, const Geography&) = default;

 private:
  std::vector<Prefecture> prefectures_;
  PrefectureId tokyo_ = 0;
};

struct Market {
  Geography geography;
  std::vector<School> schools;
  std::vector<Applicant> applicants;

  [[nodiscard]] const School& school(SchoolId s) const {
    if (s < 1 || static_cast<std::size_t>(s) > schools.size()) throw DomainError("unknown school id " + std::to_string(s));
    return schools[static_cast<std::size_t>(s - 1)];
  }
  [[nodiscard]] int total_capacity() const {
    int q = 0;
    for (const auto& s : schools) q += s.capacity;
    return q;
  }
};

struct Violation {
  std::string code;
  std::string message;
};

// Every invariant is checked; all violations are returned.
inline std::vector<Violation> validate_market(const Geography& geo, std::span<const School> schools,
                                              std::span<const Applicant> applicants) {
  std::vector<Violation> out;
  auto fail = [&out](std::string code, std::string msg) { out.push_back({std::move(code), std::move(msg)}); };

  const auto prefs = geo.prefectures();
  if (prefs.empty()) fail("empty geography", "no prefectures");
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < prefs.size(); ++i) {
    const auto& p = prefs[i];
    if (p.id != static_cast<PrefectureId>(i)) fail("bad prefecture id", p.name + ": id " + std::to_string(p.id) + " at row " + std::to_string(i));
    if (!std::isfinite(p.coord.x_km) || !std::isfinite(p.coord.y_km)) fail("nonfinite coordinate", p.name);
    if (!(p.pop_weight >= 0.0)) fail("negative weight", p.name);
    if (!(p.edu_index >= 0.0)) fail("negative edu_index", p.name);
    weight_sum += p.pop_weight;
  }
  if (!prefs.empty() && std::abs(weight_sum - 1.0) > 1e-9)
    fail("weights not normalized", "pop_weight sums to " + std::to_string(weight_sum));
  if (!prefs.empty() && !geo.contains(geo.tokyo())) {
    fail("unknown prefecture", "capital id " + std::to_string(geo.tokyo()));
  } else {
    for (const auto& p : prefs) {
      const bool expect = meritmatch::distance(p, geo.at(geo.tokyo())) <= Geography::kUrbanRadiusKm;
      if (p.urban != expect) fail("urban flag mismatch", p.name);
    }
  }

  if (schools.empty()) fail("no schools", "school table is empty");
  std::set<double> prestige;
  for (std::size_t i = 0; i < schools.size(); ++i) {
    const auto& s = schools[i];
    const std::string tag = "school " + std::to_string(s.id);
    if (s.id != static_cast<SchoolId>(i + 1)) fail("bad school id", tag + " at row " + std::to_string(i));
    if (s.capacity <= 0) fail("nonpositive capacity", tag);
    if (!geo.contains(s.prefecture_id)) fail("unknown prefecture", tag + " located in " + std::to_string(s.prefecture_id));
    if (!std::isfinite(s.prestige)) fail("nonfinite prestige", tag);
    else if (!prestige.insert(s.prestige).second) fail("prestige not strict", tag + " shares its prestige value");
  }

  std::set<ApplicantId> ids;
  for (const auto& a : applicants) {
    const std::string tag = "applicant " + std::to_string(a.id);
    if (!ids.insert(a.id).second) fail("duplicate applicant", tag);
    if (!geo.contains(a.birth_prefecture)) fail("unknown prefecture", tag + " born in " + std::to_string(a.birth_prefecture));
    if (!std::isfinite(a.score)) fail("nonfinite score", tag);
    if (a.utility.size() != schools.size()) fail("utility length", tag);
    if (!std::all_of(a.utility.begin(), a.utility.end(), [](double u) { return std::isfinite(u); }))
      fail("nonfinite utility", tag);
    if (!std::isfinite(a.outside_option)) fail("nonfinite outside option", tag);
  }
  return out;
}

inline std::vector<Violation> validate_market(const Market& m) {
  return validate_market(m.geography, m.schools, m.applicants);
}

/// Checks that prestige strictly decreases along `order` (most selective first).
inline std::vector<Violation> validate_selectivity(std::span<const School> schools, std::span<const SchoolId> order) {
  std::vector<Violation> out;
  std::set<SchoolId> seen(order.begin(), order.end());
  if (seen.size() != order.size() || order.size() != schools.size() ||
      std::any_of(order.begin(), order.end(), [&](SchoolId s) { return s < 1 || static_cast<std::size_t>(s) > schools.size(); })) {
    out.push_back({"bad selectivity order", "order must be a permutation of the school ids"});
    return out;
  }
  for (std::size_t i = 1; i < order.size(); ++i) {
    const auto& hi = schools[static_cast<std::size_t>(order[i - 1] - 1)];
    const auto& lo = schools[static_cast<std::size_t>(order[i] - 1)];
    if (!(hi.prestige > lo.prestige))
      out.push_back({"prestige not decreasing", "school " + std::to_string(hi.id) + " vs school " + std::to_string(lo.id)});
  }
  return out;
}

inline std::vector<Violation> validate_groups(std::size_t num_schools, const SchoolGroups& groups) {
  std::vector<Violation> out;
  std::vector<int> hits(num_schools + 1, 0);
  for (const auto& g : groups)
    for (const SchoolId s : g) {
      if (s < 1 || static_cast<std::size_t>(s) > num_schools) out.push_back({"bad group", "unknown school " + std::to_string(s)});
      else ++hits[static_cast<std::size_t>(s)];
    }
  for (std::size_t s = 1; s <= num_schools; ++s)
    if (hits[s] != 1) out.push_back({"bad group", "school " + std::to_string(s) + " appears " + std::to_string(hits[s]) + " times"});
  return out;
}

}  // namespace meritmatch
