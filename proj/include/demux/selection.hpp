#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "demux/types.hpp"
#include "demux/uncertainty.hpp"

namespace demux {

enum class Strategy { Random, Egalitarian, Gold, AverageDist, Uncertainty, KnnUncertainty, SameRatio };

/// Flag spelling: random, egalitarian, gold, average-dist, uncertainty,
/// knn-uncertainty, same-ratio.
std::string_view strategy_name(Strategy strategy);
std::optional<Strategy> parse_strategy(std::string_view name);
const std::vector<Strategy>& all_strategies();

/// Secondary ordering when two candidates have the same score.
enum class TieBreak { ById, ByPosition };

/// Ids picked in earlier rounds; never eligible again.
struct Exclusions {
  std::set<std::string> ids;

  bool contains(const std::string& id) const { return ids.count(id) != 0; }
};

struct SelectionPlan {
  int round = 1;
  Strategy strategy = Strategy::Random;
  std::uint64_t seed = 0;
  std::size_t requested = 0;
  std::optional<long long> final_k;
  std::optional<Scorer> scorer;
  std::vector<std::string> chosen;
  std::map<std::string, double> scores;
  std::map<std::string, std::size_t> lang_counts;
  bool shortfall = false;
  std::string prng{"splitmix64"};

  friend bool operator==(const SelectionPlan&, const SelectionPlan&) = default;
};

/// Scores are stored rounded to 9 significant digits.
double canonical_score(double value);

/// Positions of examples whose id is not excluded, in dataset order.
std::vector<std::size_t> eligible_positions(const Dataset& source, const Exclusions& excl);

SelectionPlan select_average_dist(const Dataset& source, const Dataset& targets, std::size_t b,
                                  const Exclusions& excl, TieBreak tie = TieBreak::ById);

SelectionPlan select_uncertainty(const Dataset& source, std::size_t b, Scorer scorer,
                                 const Exclusions& excl, TieBreak tie = TieBreak::ById);

/// Neighbor union over the eligible pool, then the b most uncertain members.
/// While the union holds fewer than b points, k doubles; the k that produced
/// the final union is recorded in the plan.
SelectionPlan select_knn_uncertainty(const Dataset& source, const Dataset& targets, std::size_t b,
                                     long long k, Scorer scorer, const Exclusions& excl,
                                     TieBreak tie = TieBreak::ById);

SelectionPlan select_random(const Dataset& source, std::size_t b, std::uint64_t seed,
                            const Exclusions& excl);

SelectionPlan select_egalitarian(const Dataset& source, std::size_t b, std::uint64_t seed,
                                 const Exclusions& excl);

/// Random sampling from a caller-supplied pool of target-language examples.
SelectionPlan select_gold(const Dataset& target_labeled_pool, std::size_t b, std::uint64_t seed,
                          const Exclusions& excl);

/// Random sampling that reproduces reference.lang_counts exactly.
SelectionPlan same_ratio_random(const SelectionPlan& reference, const Dataset& source,
                                std::uint64_t seed, const Exclusions& excl);

/// Per-language quotas for the egalitarian baseline. `available` maps each
/// language to its eligible count; the result sums to min(b, total available).
std::map<std::string, std::size_t> egalitarian_quotas(
    const std::map<std::string, std::size_t>& available, std::size_t b);

}  // namespace demux
