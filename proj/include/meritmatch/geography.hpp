#pragma once

// Shipped default geography and the text-table loaders for prefectures and schools.
//
// Prefecture table columns: id,name,x_km,y_km,weight,edu_index
// School table columns:     id,name,prefecture_id,capacity
//
// Coordinates are planar km relative to Tokyo, projected equirectangularly
// from approximate prefectural-capital positions at a 36N reference
// latitude. Weights are 1920-census population shares. edu_index scales
// the applicant score mean and stands in for middle-school density.

#include <array>
#include <string>
#include <vector>

#include "csv.hpp"
#include "market.hpp"

namespace meritmatch {

namespace detail {

struct PrefectureRow {
  const char* name;
  double x_km;
  double y_km;
  double population_k;
  double edu_index;
};

inline constexpr std::array<PrefectureRow, 47> kPrefectureTable{{
    {"Hokkaido", 149.5, 814.9, 2359, 0.9},   {"Aomori", 94.6, 567.2, 756, 0.8},
    {"Iwate", 131.5, 443.4, 846, 0.8},       {"Miyagi", 106.3, 285.3, 962, 1.1},
    {"Akita", 36.9, 445.6, 899, 0.8},        {"Yamagata", 60.3, 282.0, 969, 0.9},
    {"Fukushima", 70.2, 227.8, 1363, 0.9},   {"Ibaraki", 68.4, 71.9, 1350, 1.1},
    {"Tochigi", 17.1, 97.3, 1046, 1.1},      {"Gunma", -56.7, 77.4, 1053, 1.1},
    {"Saitama", -3.6, 18.8, 1320, 1.2},      {"Chiba", 38.7, -8.8, 1336, 1.2},
    {"Tokyo", 0.0, 0.0, 3699, 2.0},          {"Kanagawa", -4.5, -26.5, 1323, 1.3},
    {"Niigata", -60.3, 244.4, 1776, 0.9},    {"Toyama", -223.3, 111.7, 724, 1.0},
    {"Ishikawa", -275.6, 99.5, 747, 1.1},    {"Fukui", -312.5, 42.0, 599, 1.0},
    {"Yamanashi", -100.9, -3.3, 583, 1.0},   {"Nagano", -136.0, 106.1, 1563, 1.1},
    {"Gifu", -267.5, -33.2, 1070, 1.0},      {"Shizuoka", -118.0, -78.5, 1550, 1.0},
    {"Aichi", -250.4, -56.4, 2090, 1.2},     {"Mie", -286.4, -106.1, 1069, 1.0},
    {"Shiga", -344.0, -76.3, 651, 1.0},      {"Kyoto", -353.9, -74.1, 1287, 1.3},
    {"Osaka", -375.5, -110.6, 2588, 1.3},    {"Hyogo", -406.2, -110.6, 2302, 1.2},
    {"Nara", -347.6, -110.6, 565, 1.0},      {"Wakayama", -407.1, -161.4, 750, 0.9},
    {"Tottori", -490.8, -21.0, 455, 0.9},    {"Shimane", -598.0, -24.3, 715, 0.9},
    {"Okayama", -518.7, -113.9, 1218, 1.1},  {"Hiroshima", -651.1, -142.6, 1542, 1.1},
    {"Yamaguchi", -740.3, -165.9, 1041, 1.0}, {"Tokushima", -462.0, -179.1, 670, 0.9},
    {"Kagawa", -508.8, -149.3, 678, 1.0},    {"Ehime", -623.2, -204.6, 1046, 1.0},
    {"Kochi", -554.8, -235.5, 671, 0.9},     {"Fukuoka", -834.9, -230.0, 2188, 1.1},
    {"Saga", -845.7, -269.8, 674, 0.9},      {"Nagasaki", -884.4, -326.2, 1136, 0.9},
    {"Kumamoto", -806.0, -320.7, 1233, 1.0}, {"Oita", -727.7, -270.9, 860, 0.9},
    {"Miyazaki", -744.8, -418.0, 651, 0.8},  {"Kagoshima", -822.2, -456.7, 1416, 0.9},
    {"Okinawa", -1081.6, -1048.2, 572, 0.6},
}};

inline constexpr PrefectureId kTokyo = 12;

struct SchoolRow {
  const char* name;
  PrefectureId prefecture;
};

// Schools 1-8 in id order: Tokyo, Sendai, Kyoto, Kanazawa, Kumamoto, Okayama, Kagoshima, Nagoya.
inline constexpr std::array<SchoolRow, 8> kSchoolTable{{
    {"School 1", 12}, {"School 2", 3},  {"School 3", 25}, {"School 4", 16},
    {"School 5", 42}, {"School 6", 32}, {"School 7", 45}, {"School 8", 22},
}};

}  // namespace detail

/// Sets each prefecture's urban flag from its distance to the capital.
inline void assign_urban_flags(std::vector<Prefecture>& prefs, PrefectureId tokyo) {
  const Prefecture capital = prefs.at(static_cast<std::size_t>(tokyo));
  for (auto& p : prefs) p.urban = distance(p, capital) <= Geography::kUrbanRadiusKm;
}

inline Geography default_geography() {
  double total = 0.0;
  for (const auto& row : detail::kPrefectureTable) total += row.population_k;
  std::vector<Prefecture> prefs;
  prefs.reserve(detail::kPrefectureTable.size());
  for (std::size_t i = 0; i < detail::kPrefectureTable.size(); ++i) {
    const auto& row = detail::kPrefectureTable[i];
    prefs.push_back({static_cast<PrefectureId>(i), row.name, {row.x_km, row.y_km}, false, row.population_k / total, row.edu_index});
  }
  assign_urban_flags(prefs, detail::kTokyo);
  return Geography{std::move(prefs), detail::kTokyo};
}

/// Splits `total_capacity` as evenly as possible; lower ids take the remainder.
inline std::vector<int> uniform_capacities(int num_schools, int total_capacity) {
  if (num_schools <= 0 || total_capacity < num_schools) throw DomainError("uniform_capacities: need at least one seat per school");
  std::vector<int> caps(static_cast<std::size_t>(num_schools), total_capacity / num_schools);
  for (int i = 0; i < total_capacity % num_schools; ++i) ++caps[static_cast<std::size_t>(i)];
  return caps;
}

/// Default Schools 1-8; prestige is filled in from the population config.
inline std::vector<School> default_schools(int total_capacity = 2007) {
  const auto caps = uniform_capacities(static_cast<int>(detail::kSchoolTable.size()), total_capacity);
  std::vector<School> out;
  for (std::size_t i = 0; i < detail::kSchoolTable.size(); ++i)
    out.push_back({static_cast<SchoolId>(i + 1), detail::kSchoolTable[i].name, detail::kSchoolTable[i].prefecture, caps[i], 0.0});
  return out;
}

/// Loads a prefecture table. Weights are taken as written (not renormalized); the
/// capital is the row named `capital_name`.
inline Geography load_geography_csv(const std::string& path, std::string_view capital_name = "Tokyo") {
  const auto doc = csv::Document::from_file(path);
  std::vector<Prefecture> prefs;
  std::optional<PrefectureId> capital;
  for (std::size_t r = 0; r < doc.size(); ++r) {
    Prefecture p;
    p.id = static_cast<PrefectureId>(csv::to_int(doc.at(r, "id")));
    p.name = doc.at(r, "name");
    p.coord = {csv::to_double(doc.at(r, "x_km")), csv::to_double(doc.at(r, "y_km"))};
    p.pop_weight = csv::to_double(doc.at(r, "weight"));
    p.edu_index = csv::to_double(doc.at(r, "edu_index"));
    if (p.name == capital_name) capital = p.id;
    prefs.push_back(std::move(p));
  }
  if (!capital) throw csv::CsvError(path + ": no prefecture named '" + std::string{capital_name} + "'");
  if (static_cast<std::size_t>(*capital) >= prefs.size() || prefs[static_cast<std::size_t>(*capital)].id != *capital)
    throw csv::CsvError(path + ": prefecture ids must equal their row index");
  assign_urban_flags(prefs, *capital);
  return Geography{std::move(prefs), *capital};
}

inline std::vector<School> load_schools_csv(const std::string& path) {
  const auto doc = csv::Document::from_file(path);
  std::vector<School> out;
  for (std::size_t r = 0; r < doc.size(); ++r) {
    School s;
    s.id = static_cast<SchoolId>(csv::to_int(doc.at(r, "id")));
    s.name = doc.at(r, "name");
    s.prefecture_id = static_cast<PrefectureId>(csv::to_int(doc.at(r, "prefecture_id")));
    s.capacity = static_cast<int>(csv::to_int(doc.at(r, "capacity")));
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_geography_csv(std::ostream& os, const Geography& geo) {
  csv::write_row(os, {"id", "name", "x_km", "y_km", "weight", "edu_index"});
  for (const auto& p : geo.prefectures())
    csv::write_row(os, {csv::format(p.id), p.name, csv::format(p.coord.x_km), csv::format(p.coord.y_km),
                        csv::format(p.pop_weight), csv::format(p.edu_index)});
}

}  // namespace meritmatch
