#pragma once

#include <string>
#include <vector>

#include "meritmatch/meritmatch.hpp"

namespace support {

using namespace meritmatch;

inline std::vector<School> schools(const std::vector<int>& caps) {
  std::vector<School> out;
  for (std::size_t i = 0; i < caps.size(); ++i) {
    School s;
    s.id = static_cast<SchoolId>(i + 1);
    s.name = "S" + std::to_string(i + 1);
    s.capacity = caps[i];
    s.prestige = 100.0 - static_cast<double>(i);
    out.push_back(s);
  }
  return out;
}

/// Applicants 0..n-1 with the given scores.
inline std::vector<Applicant> applicants(const std::vector<double>& scores, std::size_t num_schools = 1) {
  std::vector<Applicant> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    Applicant a;
    a.id = static_cast<ApplicantId>(i);
    a.score = scores[i];
    a.utility.assign(num_schools, 1.0);
    out.push_back(a);
  }
  return out;
}

/// Priority whose lottery numbers follow applicant position (earlier wins ties).
inline Priority by_position(const std::vector<Applicant>& apps) {
  std::vector<double> d(apps.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = 1.0 - static_cast<double>(i) / static_cast<double>(d.size() + 1);
  return Priority{apps, d};
}

inline PreferenceList list(ApplicantId a, std::vector<SchoolId> s) { return {a, std::move(s)}; }

}  // namespace support
