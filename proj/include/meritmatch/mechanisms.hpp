#pragma once

/**
 * @file mechanisms.hpp
 * @brief Admission mechanisms as pure functions of (schools, submissions, priority).
 *
 * Every applicant carries one exam score shared by all schools, so all
 * schools rank applicants identically: by score, with score ties broken by a
 * uniform lottery number (higher number wins). `Priority` owns that order.
 *
 * Meritocratic Boston (the 1902 rule):
 *   1. Keep the top K = sum of capacities applicants in priority order (the merit pool).
 *   2..4. In round r, every pool member not yet placed, in priority order,
 *         proposes to the r-th school on their list and is accepted if a
 *         seat remains; otherwise they are held for round r + 1.
 *   5. An applicant whose list is exhausted stays unassigned.
 * Seats left empty by truncated lists are not backfilled from outside the pool.
 *
 * Deferred acceptance with a single common priority: a school holding an
 * applicant can only be displaced by someone ranked higher by every school,
 * so applicant-proposing DA ends where the serial dictatorship in priority
 * order ends. `run_serial_dictatorship_da` therefore runs the dictatorship
 * directly; admission_round records the number of proposals the applicant
 * made, which equals the rank obtained.
 *
 * Lottery steps: step 1 is pool selection (and the single ranking used by
 * decentralized admissions and the dictatorship); Boston round r uses step
 * r + 1. In single-draw mode all steps share one lottery number per applicant.
 */

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "market.hpp"
#include "rng.hpp"

namespace meritmatch {

struct PreferenceList {
  ApplicantId applicant = 0;
  std::vector<SchoolId> schools;  // most preferred first
};

struct SingleApplication {
  ApplicantId applicant = 0;
  SchoolId school = 1;

  friend bool operator==(const SingleApplication&, const SingleApplication&) = default;
};

struct MeritPool {
  std::vector<ApplicantId> selected;  // in priority order
  double cutoff_score = -std::numeric_limits<double>::infinity();
  bool lottery_used = false;
};

enum class LotteryMode { single_draw, per_step };

/// Strict applicant order: score descending, then lottery number descending.
class Priority {
 public:
  Priority(std::span<const Applicant> applicants, const SeededRng& rng, LotteryMode mode = LotteryMode::single_draw)
      : mode_{mode}, rng_{rng} {
    init(applicants);
    SeededRng r = rng.substream(0);
    draws_.resize(ids_.size());
    for (auto& d : draws_) d = r.uniform();
  }

  /// Single-draw priority with explicit lottery numbers, one per applicant.
  Priority(std::span<const Applicant> applicants, std::vector<double> draws)
      : mode_{LotteryMode::single_draw}, rng_{0, 0}, draws_{std::move(draws)} {
    init(applicants);
    if (draws_.size() != ids_.size()) throw DomainError("Priority: one lottery number per applicant required");
  }

  [[nodiscard]] std::size_t size() const { return ids_.size(); }
  [[nodiscard]] LotteryMode mode() const { return mode_; }
  [[nodiscard]] bool contains(ApplicantId id) const { return index_.contains(id); }

  [[nodiscard]] std::size_t index_of(ApplicantId id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw DomainError("unknown applicant id " + std::to_string(id));
    return it->second;
  }
  [[nodiscard]] ApplicantId id(std::size_t idx) const { return ids_[idx]; }
  [[nodiscard]] double score(std::size_t idx) const { return scores_[idx]; }

  /// Lottery numbers in effect at `step` (1-based).
  [[nodiscard]] std::vector<double> draws(int step) const {
    if (mode_ == LotteryMode::single_draw || step <= 1) return draws_;
    SeededRng r = rng_.substream(static_cast<std::uint64_t>(step));
    std::vector<double> out(ids_.size());
    for (auto& d : out) d = r.uniform();
    return out;
  }

  /// Sorts applicant indices into priority order at `step`.
  void sort(std::vector<std::size_t>& idx, int step) const {
    const auto d = draws(step);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (scores_[a] != scores_[b]) return scores_[a] > scores_[b];
      if (d[a] != d[b]) return d[a] > d[b];
      return a < b;
    });
  }

 private:
  void init(std::span<const Applicant> applicants) {
    ids_.reserve(applicants.size());
    scores_.reserve(applicants.size());
    for (std::size_t i = 0; i < applicants.size(); ++i) {
      if (!index_.emplace(applicants[i].id, i).second)
        throw DomainError("duplicate applicant id " + std::to_string(applicants[i].id));
      ids_.push_back(applicants[i].id);
      scores_.push_back(applicants[i].score);
    }
  }

  LotteryMode mode_;
  SeededRng rng_;
  std::vector<ApplicantId> ids_;
  std::vector<double> scores_;
  std::vector<double> draws_;
  std::unordered_map<ApplicantId, std::size_t> index_;
};

namespace detail {

struct IndexedList {
  std::size_t applicant;  // index into Priority
  std::vector<SchoolId> schools;
};

inline std::vector<IndexedList> index_lists(std::span<const School> schools, std::span<const PreferenceList> prefs,
                                            const Priority& priority) {
  std::vector<IndexedList> out;
  out.reserve(prefs.size());
  std::vector<char> seen(priority.size(), 0);
  for (const auto& p : prefs) {
    const std::size_t idx = priority.index_of(p.applicant);
    const std::string tag = "applicant " + std::to_string(p.applicant);
    if (seen[idx]) throw DomainError(tag + " submitted more than one list");
    seen[idx] = 1;
    if (p.schools.empty()) throw DomainError(tag + " submitted an empty list");
    if (p.schools.size() > schools.size()) throw DomainError(tag + " lists more schools than exist");
    std::vector<char> listed(schools.size() + 1, 0);
    for (const SchoolId s : p.schools) {
      if (s < 1 || static_cast<std::size_t>(s) > schools.size()) throw DomainError(tag + " lists unknown school " + std::to_string(s));
      if (listed[static_cast<std::size_t>(s)]) throw DomainError(tag + " lists school " + std::to_string(s) + " twice");
      listed[static_cast<std::size_t>(s)] = 1;
    }
    out.push_back({idx, p.schools});
  }
  return out;
}

inline std::vector<int> seats_of(std::span<const School> schools) {
  if (schools.empty()) throw DomainError("no schools");
  std::vector<int> seats(schools.size() + 1, 0);
  for (const auto& s : schools) {
    if (s.capacity <= 0) throw DomainError("nonpositive capacity at school " + std::to_string(s.id));
    seats[static_cast<std::size_t>(s.id)] = s.capacity;
  }
  return seats;
}

inline int total_capacity(std::span<const School> schools) {
  int k = 0;
  for (const auto& s : schools) k += s.capacity;
  return k;
}

/// Pool selection over `candidates` (indices into `priority`).
inline MeritPool select_pool(const Priority& priority, std::vector<std::size_t> candidates, int total_capacity,
                             std::vector<std::size_t>* selected_idx = nullptr) {
  if (total_capacity <= 0) throw DomainError("total capacity must be positive");
  priority.sort(candidates, 1);
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(total_capacity), candidates.size());
  MeritPool pool;
  for (std::size_t i = 0; i < k; ++i) pool.selected.push_back(priority.id(candidates[i]));
  if (k > 0) {
    pool.cutoff_score = priority.score(candidates[k - 1]);
    pool.lottery_used = k < candidates.size() && priority.score(candidates[k]) == pool.cutoff_score;
  }
  if (selected_idx) selected_idx->assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
  return pool;
}

/// Immediate-acceptance rounds over `participants`. Lists are looked up by priority index.
inline void boston_rounds(std::span<const School> schools, const std::vector<const IndexedList*>& list_of,
                          std::vector<std::size_t> held, const Priority& priority, Assignment& out) {
  auto seats = seats_of(schools);
  for (int round = 1; !held.empty(); ++round) {
    priority.sort(held, round + 1);
    std::vector<std::size_t> next;
    for (const std::size_t a : held) {
      const auto& list = list_of[a]->schools;
      if (static_cast<std::size_t>(round) > list.size()) {
        out.unassigned.insert(priority.id(a));
        continue;
      }
      const SchoolId s = list[static_cast<std::size_t>(round - 1)];
      if (seats[static_cast<std::size_t>(s)] > 0) {
        --seats[static_cast<std::size_t>(s)];
        out.placed.emplace(priority.id(a), Placement{s, round, round});
      } else {
        next.push_back(a);
      }
    }
    held = std::move(next);
  }
}

inline std::vector<const IndexedList*> lookup_table(const std::vector<IndexedList>& lists, std::size_t n) {
  std::vector<const IndexedList*> table(n, nullptr);
  for (const auto& l : lists) table[l.applicant] = &l;
  return table;
}

}  // namespace detail

/// Step (1): top `total_capacity` applicants by score, lottery among ties at the cutoff.
inline MeritPool select_merit_pool(std::span<const Applicant> applicants, int total_capacity, const Priority& priority) {
  std::vector<std::size_t> candidates;
  candidates.reserve(applicants.size());
  for (const auto& a : applicants) candidates.push_back(priority.index_of(a.id));
  return detail::select_pool(priority, std::move(candidates), total_capacity);
}

inline MeritPool select_merit_pool(std::span<const Applicant> applicants, int total_capacity, const SeededRng& rng) {
  return select_merit_pool(applicants, total_capacity, Priority{applicants, rng});
}

/// Meritocratic Boston: merit pool over everyone who submitted a list, then Boston rounds.
inline Assignment run_meritocratic_boston(std::span<const School> schools, std::span<const PreferenceList> prefs,
                                          const Priority& priority) {
  const auto lists = detail::index_lists(schools, prefs, priority);
  Assignment out;
  if (lists.empty()) return out;
  std::vector<std::size_t> candidates;
  for (const auto& l : lists) candidates.push_back(l.applicant);
  std::vector<std::size_t> pool;
  detail::select_pool(priority, candidates, detail::total_capacity(schools), &pool);
  std::vector<char> in_pool(priority.size(), 0);
  for (const auto a : pool) in_pool[a] = 1;
  for (const auto a : candidates)
    if (!in_pool[a]) out.unassigned.insert(priority.id(a));
  detail::boston_rounds(schools, detail::lookup_table(lists, priority.size()), std::move(pool), priority, out);
  return out;
}

/// Plain Boston: the same rounds without the merit-pool restriction.
inline Assignment run_immediate_acceptance(std::span<const School> schools, std::span<const PreferenceList> prefs,
                                           const Priority& priority) {
  const auto lists = detail::index_lists(schools, prefs, priority);
  Assignment out;
  std::vector<std::size_t> everyone;
  for (const auto& l : lists) everyone.push_back(l.applicant);
  detail::boston_rounds(schools, detail::lookup_table(lists, priority.size()), std::move(everyone), priority, out);
  return out;
}

/// Serial dictatorship in priority order (= applicant-proposing DA under a common priority).
inline Assignment run_serial_dictatorship_da(std::span<const School> schools, std::span<const PreferenceList> prefs,
                                             const Priority& priority) {
  const auto lists = detail::index_lists(schools, prefs, priority);
  auto seats = detail::seats_of(schools);
  const auto table = detail::lookup_table(lists, priority.size());
  std::vector<std::size_t> order;
  for (const auto& l : lists) order.push_back(l.applicant);
  priority.sort(order, 1);
  Assignment out;
  for (const std::size_t a : order) {
    const auto& list = table[a]->schools;
    bool placed = false;
    for (std::size_t k = 0; k < list.size() && !placed; ++k) {
      const auto s = static_cast<std::size_t>(list[k]);
      if (seats[s] > 0) {
        --seats[s];
        const int rank = static_cast<int>(k + 1);
        out.placed.emplace(priority.id(a), Placement{list[k], rank, rank});
        placed = true;
      }
    }
    if (!placed) out.unassigned.insert(priority.id(a));
  }
  return out;
}

/// Single-application admissions: each school keeps its top q_s applicants.
inline Assignment run_decentralized(std::span<const School> schools, std::span<const SingleApplication> apps,
                                    const Priority& priority) {
  const auto seats = detail::seats_of(schools);
  std::vector<std::vector<std::size_t>> by_school(schools.size() + 1);
  std::vector<char> seen(priority.size(), 0);
  for (const auto& app : apps) {
    const std::size_t idx = priority.index_of(app.applicant);
    if (seen[idx]) throw DomainError("applicant " + std::to_string(app.applicant) + " applied more than once");
    seen[idx] = 1;
    if (app.school < 1 || static_cast<std::size_t>(app.school) > schools.size())
      throw DomainError("application to unknown school " + std::to_string(app.school));
    by_school[static_cast<std::size_t>(app.school)].push_back(idx);
  }
  Assignment out;
  for (std::size_t s = 1; s <= schools.size(); ++s) {
    auto& queue = by_school[s];
    priority.sort(queue, 1);
    for (std::size_t k = 0; k < queue.size(); ++k) {
      if (static_cast<int>(k) < seats[s]) out.placed.emplace(priority.id(queue[k]), Placement{static_cast<SchoolId>(s), 1, 1});
      else out.unassigned.insert(priority.id(queue[k]));
    }
  }
  return out;
}

/// Throws unless every list names at most one school from each group.
inline void check_one_per_group(std::span<const PreferenceList> prefs, const SchoolGroups& groups, std::size_t num_schools) {
  if (const auto v = validate_groups(num_schools, groups); !v.empty()) throw DomainError("groups: " + v.front().message);
  std::vector<int> group_of(num_schools + 1, -1);
  for (int g = 0; g < 2; ++g)
    for (const SchoolId s : groups[static_cast<std::size_t>(g)]) group_of[static_cast<std::size_t>(s)] = g;
  for (const auto& p : prefs) {
    std::array<int, 2> used{0, 0};
    for (const SchoolId s : p.schools) {
      if (s < 1 || static_cast<std::size_t>(s) > num_schools) continue;  // reported by list validation
      if (++used[static_cast<std::size_t>(group_of[static_cast<std::size_t>(s)])] > 1)
        throw DomainError("applicant " + std::to_string(p.applicant) + " lists two schools from one group");
    }
  }
}

/// 1926-27 rule: at most one school per group, then the meritocratic Boston rule.
inline Assignment run_grouped_centralized(std::span<const School> schools, std::span<const PreferenceList> prefs,
                                          const SchoolGroups& groups, const Priority& priority) {
  check_one_per_group(prefs, groups, schools.size());
  return run_meritocratic_boston(schools, prefs, priority);
}

/// Checks the Assignment invariants against the submitted lists; returns violations.
inline std::vector<Violation> check_assignment(std::span<const School> schools, std::span<const PreferenceList> prefs,
                                               const Assignment& a) {
  std::vector<Violation> out;
  std::map<ApplicantId, const PreferenceList*> by_id;
  for (const auto& p : prefs) by_id[p.applicant] = &p;
  for (const auto& [id, pl] : a.placed) {
    if (a.unassigned.contains(id)) out.push_back({"not a partition", "applicant " + std::to_string(id) + " placed and unassigned"});
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      out.push_back({"unknown applicant", std::to_string(id)});
      continue;
    }
    const auto& list = it->second->schools;
    const auto r = static_cast<std::size_t>(pl.preference_rank_obtained);
    if (r < 1 || r > list.size() || list[r - 1] != pl.school)
      out.push_back({"rank inconsistent", "applicant " + std::to_string(id)});
    if (pl.admission_round < 1) out.push_back({"bad round", "applicant " + std::to_string(id)});
  }
  for (const auto& [id, p] : by_id)
    if (!a.placed.contains(id) && !a.unassigned.contains(id))
      out.push_back({"not a partition", "applicant " + std::to_string(id) + " missing"});
  for (const auto& s : schools)
    if (a.count_at(s.id) > s.capacity) out.push_back({"over capacity", "school " + std::to_string(s.id)});
  return out;
}

}  // namespace meritmatch
