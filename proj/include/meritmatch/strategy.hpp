#pragma once

/**
 * @file strategy.hpp
 * @brief Applicant behaviour under each regime.
 *
 * Centralized regimes: applicants list every school they prefer to their
 * outside option, in utility order (ties to the lower school id).
 *
 * Decentralized regimes: each applicant files one application. Applicants
 * hold common beliefs about every school's admission cutoff and perceive
 * their own standing with normal noise of sd `score_noise_sd`, so the
 * chance of clearing cutoff c with score x is Phi((x - c) / sd). Each picks
 * the school with the highest probability-weighted surplus over the outside
 * option. Beliefs are rational expectations: the cutoffs realized when
 * everyone best-responds to them. They are found by damped fixed-point
 * iteration starting from "every school undersubscribed".
 *
 * This behavioural model is a modelling choice, calibrated only to the
 * qualitative predictions (risk-taking first choices under centralization,
 * self-selection into safer schools under a single application).
 */

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <type_traits>
#include <optional>
#include <variant>
#include <vector>

#include "market.hpp"
#include "mechanisms.hpp"

namespace meritmatch {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct BehaviorParams {
  double score_noise_sd = 250.0;
  int max_iter = 100;
  double tol = 0.5;  // score points; exam scores are whole points
  double damping = 0.2;
};

inline std::vector<Violation> validate(const BehaviorParams& p) {
  std::vector<Violation> out;
  if (!(p.score_noise_sd >= 0.0)) out.push_back({"bad behavior", "score_noise_sd must be >= 0"});
  if (p.max_iter < 1) out.push_back({"bad behavior", "max_iter must be >= 1"});
  if (!(p.tol >= 0.0)) out.push_back({"bad behavior", "tol must be >= 0"});
  if (!(p.damping > 0.0 && p.damping <= 1.0)) out.push_back({"bad behavior", "damping must lie in (0, 1]"});
  return out;
}

/// Anticipated admission cutoff per school (index s - 1); -inf means undersubscribed.
struct CutoffBeliefs {
  std::vector<double> cutoff;

  [[nodiscard]] double at(SchoolId s) const { return cutoff.at(static_cast<std::size_t>(s - 1)); }
};

/// Schools preferred to the outside option, best first; equal utilities go to the lower id.
inline PreferenceList truthful_ranking(const Applicant& a) {
  PreferenceList out{a.id, {}};
  for (std::size_t s = 1; s <= a.utility.size(); ++s)
    if (a.utility[s - 1] > a.outside_option) out.schools.push_back(static_cast<SchoolId>(s));
  std::stable_sort(out.schools.begin(), out.schools.end(),
                   [&a](SchoolId x, SchoolId y) { return a.utility_of(x) > a.utility_of(y); });
  return out;
}

inline double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double admit_probability(double score, double cutoff, double sd) {
  if (cutoff == kNegInf) return 1.0;
  if (sd == 0.0) return score > cutoff ? 1.0 : (score == cutoff ? 0.5 : 0.0);
  return standard_normal_cdf((score - cutoff) / sd);
}

/// Best single application, or nullopt when no school beats the outside option.
inline std::optional<SingleApplication> choose_single_application(const Applicant& a, const CutoffBeliefs& beliefs,
                                                                  const BehaviorParams& params) {
  std::optional<SingleApplication> best;
  double best_value = 0.0;
  for (std::size_t s = 1; s <= a.utility.size(); ++s) {
    const double surplus = a.utility[s - 1] - a.outside_option;
    if (!(surplus > 0.0)) continue;
    const double value = admit_probability(a.score, beliefs.cutoff.at(s - 1), params.score_noise_sd) * surplus;
    if (!best || value > best_value) {
      best = SingleApplication{a.id, static_cast<SchoolId>(s)};
      best_value = value;
    }
  }
  return best;
}

/// Lowest admitted score at each full school; -inf where seats remain.
inline CutoffBeliefs realized_cutoffs(const Market& market, const Assignment& assignment, const Priority& priority) {
  CutoffBeliefs out{std::vector<double>(market.schools.size(), kNegInf)};
  std::vector<int> filled(market.schools.size(), 0);
  std::vector<double> lowest(market.schools.size(), std::numeric_limits<double>::infinity());
  for (const auto& [id, pl] : assignment.placed) {
    const auto s = static_cast<std::size_t>(pl.school - 1);
    ++filled[s];
    lowest[s] = std::min(lowest[s], priority.score(priority.index_of(id)));
  }
  for (std::size_t s = 0; s < market.schools.size(); ++s)
    if (filled[s] >= market.schools[s].capacity) out.cutoff[s] = lowest[s];
  return out;
}

inline std::vector<SingleApplication> best_responses(const Market& market, const CutoffBeliefs& beliefs,
                                                     const BehaviorParams& params) {
  std::vector<SingleApplication> apps;
  apps.reserve(market.applicants.size());
  for (const auto& a : market.applicants)
    if (auto app = choose_single_application(a, beliefs, params)) apps.push_back(*app);
  return apps;
}

struct EquilibriumResult {
  CutoffBeliefs beliefs;
  int iterations = 0;
  double residual = 0.0;  // max per-school belief change in the last iteration
  bool converged = false;
};

/**
 * Damped rational-expectations iteration. "Undersubscribed" is carried as a
 * finite floor one point below the weakest applicant so damping can
 * interpolate between an open school and a binding cutoff; it is reported
 * as -inf. Because scores are discrete, realized cutoffs jump between
 * neighbouring score levels near the fixed point, so the residual settles
 * around damping x (one score step) rather than at zero.
 * Non-convergence is not an error: the last iterate is returned with
 * `converged == false`.
 */
inline EquilibriumResult equilibrium_cutoffs(const Market& market, const BehaviorParams& params, const Priority& priority) {
  const std::size_t num_schools = market.schools.size();
  double min_score = 0.0;
  for (std::size_t i = 0; i < market.applicants.size(); ++i)
    min_score = i == 0 ? market.applicants[i].score : std::min(min_score, market.applicants[i].score);
  const double floor = min_score - 1.0;

  std::vector<double> state(num_schools, floor);
  std::vector<char> open(num_schools, 1);
  EquilibriumResult res;
  auto as_beliefs = [&] {
    CutoffBeliefs b{state};
    for (std::size_t s = 0; s < num_schools; ++s)
      if (open[s]) b.cutoff[s] = kNegInf;
    return b;
  };
  for (int it = 1; it <= params.max_iter; ++it) {
    // Beliefs at the floor are passed as -inf; interior values as-is.
    CutoffBeliefs beliefs{state};
    for (std::size_t s = 0; s < num_schools; ++s)
      if (state[s] <= floor) beliefs.cutoff[s] = kNegInf;
    const auto apps = best_responses(market, beliefs, params);
    const auto realized = realized_cutoffs(market, run_decentralized(market.schools, apps, priority), priority);
    double change = 0.0;
    for (std::size_t s = 0; s < num_schools; ++s) {
      open[s] = realized.cutoff[s] == kNegInf;
      const double target = open[s] ? floor : realized.cutoff[s];
      const double next = state[s] + params.damping * (target - state[s]);
      change = std::max(change, std::abs(next - state[s]));
      state[s] = next;
    }
    res.iterations = it;
    res.residual = change;
    if (change < params.tol || change == 0.0) {
      res.converged = true;
      break;
    }
  }
  res.beliefs = as_beliefs();
  return res;
}

inline EquilibriumResult equilibrium_cutoffs(const Market& market, const BehaviorParams& params, const SeededRng& rng) {
  return equilibrium_cutoffs(market, params, Priority{market.applicants, rng});
}

struct GroupedSubmission {
  std::vector<PreferenceList> lists;
  SchoolGroups groups;
};

using Submission = std::variant<std::vector<PreferenceList>, std::vector<SingleApplication>, GroupedSubmission>;

/// Best school of each group (if any beats the outside option), the better group first.
inline PreferenceList grouped_ranking(const Applicant& a, const SchoolGroups& groups) {
  std::vector<SchoolId> picks;
  for (const auto& g : groups) {
    std::optional<SchoolId> best;
    for (const SchoolId s : g) {
      if (!(a.utility_of(s) > a.outside_option)) continue;
      if (!best || a.utility_of(s) > a.utility_of(*best) || (a.utility_of(s) == a.utility_of(*best) && s < *best)) best = s;
    }
    if (best) picks.push_back(*best);
  }
  if (picks.size() == 2 && (a.utility_of(picks[1]) > a.utility_of(picks[0]) ||
                            (a.utility_of(picks[1]) == a.utility_of(picks[0]) && picks[1] < picks[0])))
    std::swap(picks[0], picks[1]);
  return {a.id, std::move(picks)};
}

/// Applications each regime elicits. `belief_lottery` is the tie-break lottery applicants
/// use when forming cutoff beliefs; `diagnostics` receives the fixed-point result.
inline Submission submit_applications(const Market& market, const Regime& regime, const BehaviorParams& params,
                                      const Priority& belief_lottery, EquilibriumResult* diagnostics = nullptr) {
  switch (regime.kind) {
    case RegimeKind::centralized: {
      std::vector<PreferenceList> lists;
      for (const auto& a : market.applicants)
        if (auto l = truthful_ranking(a); !l.schools.empty()) lists.push_back(std::move(l));
      return lists;
    }
    case RegimeKind::decentralized:
    case RegimeKind::decentralized_unified_exam: {
      auto eq = equilibrium_cutoffs(market, params, belief_lottery);
      auto apps = best_responses(market, eq.beliefs, params);
      if (diagnostics) *diagnostics = std::move(eq);
      return apps;
    }
    case RegimeKind::grouped_centralized: {
      if (!regime.groups) throw DomainError("grouped regime in " + std::to_string(regime.year) + " has no school groups");
      if (const auto v = validate_groups(market.schools.size(), *regime.groups); !v.empty())
        throw DomainError("groups: " + v.front().message);
      GroupedSubmission sub{{}, *regime.groups};
      for (const auto& a : market.applicants)
        if (auto l = grouped_ranking(a, sub.groups); !l.schools.empty()) sub.lists.push_back(std::move(l));
      return sub;
    }
  }
  throw DomainError("unknown regime kind");
}

/// First listed (or the single applied-to) school per submitting applicant.
inline std::map<ApplicantId, SchoolId> first_choices(const Submission& sub) {
  std::map<ApplicantId, SchoolId> out;
  std::visit(
      [&out](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, std::vector<SingleApplication>>) {
          for (const auto& a : s) out[a.applicant] = a.school;
        } else if constexpr (std::is_same_v<T, GroupedSubmission>) {
          for (const auto& l : s.lists) out[l.applicant] = l.schools.front();
        } else {
          for (const auto& l : s) out[l.applicant] = l.schools.front();
        }
      },
      sub);
  return out;
}

/// Runs the regime's mechanism on a submission.
inline Assignment assign(const Market& market, const Regime& regime, const Submission& sub, const Priority& lottery) {
  switch (regime.kind) {
    case RegimeKind::centralized:
      return run_meritocratic_boston(market.schools, std::get<std::vector<PreferenceList>>(sub), lottery);
    case RegimeKind::decentralized:
    case RegimeKind::decentralized_unified_exam:
      return run_decentralized(market.schools, std::get<std::vector<SingleApplication>>(sub), lottery);
    case RegimeKind::grouped_centralized: {
      const auto& g = std::get<GroupedSubmission>(sub);
      return run_grouped_centralized(market.schools, g.lists, g.groups, lottery);
    }
  }
  throw DomainError("unknown regime kind");
}

}  // namespace meritmatch
