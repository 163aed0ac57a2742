#pragma once

// One seed of the regime schedule: cohort -> applications -> assignment -> flow table.
// Randomness per year comes from three named streams of the root seed:
// "popgen/<year>", "strategy/<year>" (the lottery applicants assume when
// forming beliefs) and "lottery/<year>" (the tie-break the mechanism uses).

#include <cstdint>
#include <string>
#include <vector>

#include "metrics.hpp"
#include "popgen.hpp"
#include "strategy.hpp"

namespace meritmatch {

inline SeededRng stream_rng(std::uint64_t seed, std::string_view name, int year) {
  return SeededRng{seed, std::string{name} + "/" + std::to_string(year)};
}

struct YearRun {
  YearFlows flows;
  std::optional<EquilibriumResult> equilibrium;  // decentralized years only
};

inline YearRun simulate_year(const Scenario& sc, std::uint64_t seed, int year) {
  const Regime& regime = sc.schedule.at(year);
  Market market{sc.geography, sc.schools,
                generate_applicants(sc.population, sc.geography, sc.schools, year, stream_rng(seed, "popgen", year))};
  const Priority beliefs_lottery{market.applicants, stream_rng(seed, "strategy", year), sc.lottery_mode};
  const Priority lottery{market.applicants, stream_rng(seed, "lottery", year), sc.lottery_mode};
  EquilibriumResult eq;
  const auto sub = submit_applications(market, regime, sc.behavior, beliefs_lottery, &eq);
  const auto assignment = assign(market, regime, sub, lottery);
  YearRun run{tabulate(market, sub, assignment, year, regime.kind), std::nullopt};
  if (!is_centralized(regime.kind)) run.equilibrium = std::move(eq);
  return run;
}

inline std::vector<YearRun> simulate_seed(const Scenario& sc, std::uint64_t seed) {
  std::vector<YearRun> out;
  for (int y = sc.population.first_year; y <= sc.population.last_year; ++y) out.push_back(simulate_year(sc, seed, y));
  return out;
}

}  // namespace meritmatch
