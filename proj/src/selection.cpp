#include "demux/selection.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>

#include "demux/core.hpp"
#include "demux/error.hpp"
#include "demux/knn.hpp"
#include "demux/parallel.hpp"
#include "demux/random.hpp"

namespace demux {

namespace {

struct Candidate {
  std::size_t position;
  double key;  // smaller is better
};

void require_pool(const std::vector<std::size_t>& eligible) {
  if (eligible.empty()) throw Error(ErrorCode::EmptyPool, "no eligible source examples");
}

void require_budget(std::size_t b) {
  if (b == 0) throw Error(ErrorCode::InvalidArgument, "per-round budget must be at least 1");
}

/// The b best candidates by (key, tie rule), best first.
std::vector<Candidate> top_b(std::vector<Candidate> cands, std::size_t b, const Dataset& ds,
                             TieBreak tie) {
  auto better = [&](const Candidate& a, const Candidate& c) {
    if (a.key != c.key) return a.key < c.key;
    if (tie == TieBreak::ById) {
      const auto& ia = ds.examples[a.position].id;
      const auto& ic = ds.examples[c.position].id;
      if (ia != ic) return ia < ic;
    }
    return a.position < c.position;
  };
  const std::size_t keep = std::min(b, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                    better);
  cands.resize(keep);
  return cands;
}

SelectionPlan make_plan(Strategy strategy, std::size_t requested, const Dataset& ds,
                        const std::vector<std::size_t>& picked) {
  SelectionPlan plan;
  plan.strategy = strategy;
  plan.requested = requested;
  plan.shortfall = picked.size() < requested;
  plan.chosen.reserve(picked.size());
  for (std::size_t pos : picked) {
    const auto& ex = ds.examples[pos];
    plan.chosen.push_back(ex.id);
    ++plan.lang_counts[ex.language];
  }
  return plan;
}

SelectionPlan plan_from_candidates(Strategy strategy, std::size_t requested, const Dataset& ds,
                                   const std::vector<Candidate>& best, bool negate_key) {
  std::vector<std::size_t> picked;
  picked.reserve(best.size());
  for (const auto& c : best) picked.push_back(c.position);
  SelectionPlan plan = make_plan(strategy, requested, ds, picked);
  for (const auto& c : best) {
    plan.scores[ds.examples[c.position].id] = canonical_score(negate_key ? -c.key : c.key);
  }
  return plan;
}

SelectionPlan sample_uniform(Strategy strategy, const Dataset& pool, std::size_t b,
                             std::uint64_t seed, const Exclusions& excl) {
  require_budget(b);
  auto eligible = eligible_positions(pool, excl);
  require_pool(eligible);
  SplitMix64 rng(seed);
  auto picked = sample_without_replacement(std::move(eligible), b, rng);
  SelectionPlan plan = make_plan(strategy, b, pool, picked);
  for (const auto& id : plan.chosen) plan.scores[id] = 0.0;
  plan.seed = seed;
  return plan;
}

std::vector<UncertaintyScore> score_positions(const Dataset& ds,
                                              const std::vector<std::size_t>& positions,
                                              Scorer scorer) {
  if (!scorer_accepts(scorer, ds.task)) {
    throw Error(ErrorCode::ScorerTaskMismatch,
                "scorer '" + std::string(scorer_name(scorer)) + "' is not defined for task '" +
                    std::string(task_name(ds.task)) + "'");
  }
  std::vector<UncertaintyScore> out(positions.size());
  parallel_for(positions.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = score_payload(ds.examples[positions[i]].payload, scorer);
    }
  });
  return out;
}

SelectionPlan most_uncertain(Strategy strategy, const Dataset& source,
                             const std::vector<std::size_t>& positions, std::size_t b,
                             Scorer scorer, TieBreak tie) {
  const auto scores = score_positions(source, positions, scorer);
  std::vector<Candidate> cands(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) cands[i] = {positions[i], -scores[i].value};
  SelectionPlan plan = plan_from_candidates(strategy, b, source, top_b(std::move(cands), b, source, tie),
                                            /*negate_key=*/true);
  plan.scorer = scorer;
  return plan;
}

bool is_unknown_language(const std::string& lang) { return lang.empty() || lang == "unknown"; }

}  // namespace

std::string_view strategy_name(Strategy strategy) {
  switch (strategy) {
    case Strategy::Random: return "random";
    case Strategy::Egalitarian: return "egalitarian";
    case Strategy::Gold: return "gold";
    case Strategy::AverageDist: return "average-dist";
    case Strategy::Uncertainty: return "uncertainty";
    case Strategy::KnnUncertainty: return "knn-uncertainty";
    case Strategy::SameRatio: return "same-ratio";
  }
  return "random";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  for (Strategy s : all_strategies()) {
    if (strategy_name(s) == name) return s;
  }
  return std::nullopt;
}

const std::vector<Strategy>& all_strategies() {
  static const std::vector<Strategy> kAll = {
      Strategy::Random,      Strategy::Egalitarian,    Strategy::Gold,     Strategy::AverageDist,
      Strategy::Uncertainty, Strategy::KnnUncertainty, Strategy::SameRatio};
  return kAll;
}

double canonical_score(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", value);
  return std::strtod(buf, nullptr);
}

std::vector<std::size_t> eligible_positions(const Dataset& source, const Exclusions& excl) {
  std::vector<std::size_t> out;
  out.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (!excl.contains(source.examples[i].id)) out.push_back(i);
  }
  return out;
}

SelectionPlan select_average_dist(const Dataset& source, const Dataset& targets, std::size_t b,
                                  const Exclusions& excl, TieBreak tie) {
  require_budget(b);
  if (targets.empty()) throw Error(ErrorCode::EmptyTargetPool, "target pool has no examples");
  const auto eligible = eligible_positions(source, excl);
  require_pool(eligible);
  // The subset objective is a sum of per-point distances, so its argmin over
  // all b-subsets is the b points with the smallest distance.
  std::vector<Candidate> cands(eligible.size());
  parallel_for(eligible.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      cands[i] = {eligible[i], target_distance(source.examples[eligible[i]].representation, targets)};
    }
  });
  return plan_from_candidates(Strategy::AverageDist, b, source, top_b(std::move(cands), b, source, tie),
                              /*negate_key=*/false);
}

SelectionPlan select_uncertainty(const Dataset& source, std::size_t b, Scorer scorer,
                                 const Exclusions& excl, TieBreak tie) {
  require_budget(b);
  const auto eligible = eligible_positions(source, excl);
  require_pool(eligible);
  return most_uncertain(Strategy::Uncertainty, source, eligible, b, scorer, tie);
}

SelectionPlan select_knn_uncertainty(const Dataset& source, const Dataset& targets, std::size_t b,
                                     long long k, Scorer scorer, const Exclusions& excl,
                                     TieBreak tie) {
  require_budget(b);
  if (k < 1) throw Error(ErrorCode::NonPositiveK, "k must be at least 1, got " + std::to_string(k));
  if (targets.empty()) throw Error(ErrorCode::EmptyTargetPool, "target pool has no examples");
  const auto eligible = eligible_positions(source, excl);
  require_pool(eligible);
  if (!scorer_accepts(scorer, source.task)) {
    throw Error(ErrorCode::ScorerTaskMismatch,
                "scorer '" + std::string(scorer_name(scorer)) + "' is not defined for task '" +
                    std::string(task_name(source.task)) + "'");
  }

  const Index index(source, eligible);
  const auto pool_size = static_cast<long long>(eligible.size());
  NeighborUnion neighbors = neighbor_union(index, targets, k);
  while (neighbors.members.size() < b && k < pool_size) {
    k *= 2;
    neighbors = neighbor_union(index, targets, k);
  }

  const std::vector<std::size_t> members(neighbors.members.begin(), neighbors.members.end());
  SelectionPlan plan = most_uncertain(Strategy::KnnUncertainty, source, members, b, scorer, tie);
  plan.final_k = k;
  return plan;
}

SelectionPlan select_random(const Dataset& source, std::size_t b, std::uint64_t seed,
                            const Exclusions& excl) {
  return sample_uniform(Strategy::Random, source, b, seed, excl);
}

SelectionPlan select_gold(const Dataset& target_labeled_pool, std::size_t b, std::uint64_t seed,
                          const Exclusions& excl) {
  return sample_uniform(Strategy::Gold, target_labeled_pool, b, seed, excl);
}

std::map<std::string, std::size_t> egalitarian_quotas(
    const std::map<std::string, std::size_t>& available, std::size_t b) {
  std::map<std::string, std::size_t> alloc;
  std::size_t total = 0;
  for (const auto& [lang, n] : available) {
    alloc[lang] = 0;
    total += n;
  }
  std::size_t remaining = std::min(b, total);
  while (remaining > 0) {
    std::vector<std::string> open;
    for (const auto& [lang, n] : available) {
      if (alloc[lang] < n) open.push_back(lang);
    }
    const std::size_t share = remaining / open.size();
    if (share > 0) {
      // equal split, capped by what each language still has; any deficit is
      // handed out again on the next pass
      for (const auto& lang : open) {
        const std::size_t give = std::min(share, available.at(lang) - alloc[lang]);
        alloc[lang] += give;
        remaining -= give;
      }
      continue;
    }
    // fewer units than open languages: one each to the languages with the most
    // eligible examples left, ties by name
    std::stable_sort(open.begin(), open.end(), [&](const std::string& a, const std::string& c) {
      return available.at(a) - alloc[a] > available.at(c) - alloc[c];
    });
    for (std::size_t i = 0; i < remaining; ++i) ++alloc[open[i]];
    remaining = 0;
  }
  return alloc;
}

SelectionPlan select_egalitarian(const Dataset& source, std::size_t b, std::uint64_t seed,
                                 const Exclusions& excl) {
  require_budget(b);
  const auto eligible = eligible_positions(source, excl);
  require_pool(eligible);
  std::map<std::string, std::vector<std::size_t>> by_lang;
  for (std::size_t pos : eligible) {
    const auto& ex = source.examples[pos];
    if (is_unknown_language(ex.language)) {
      throw Error(ErrorCode::UnknownLanguageTags,
                  "example '" + ex.id + "' has no language tag; egalitarian needs one per example");
    }
    by_lang[ex.language].push_back(pos);
  }
  std::map<std::string, std::size_t> available;
  for (const auto& [lang, positions] : by_lang) available[lang] = positions.size();
  const auto quotas = egalitarian_quotas(available, b);

  SplitMix64 rng(seed);
  std::vector<std::size_t> picked;
  picked.reserve(std::min(b, eligible.size()));
  for (auto& [lang, positions] : by_lang) {
    auto drawn = sample_without_replacement(std::move(positions), quotas.at(lang), rng);
    picked.insert(picked.end(), drawn.begin(), drawn.end());
  }
  SelectionPlan plan = make_plan(Strategy::Egalitarian, b, source, picked);
  for (const auto& id : plan.chosen) plan.scores[id] = 0.0;
  plan.seed = seed;
  return plan;
}

SelectionPlan same_ratio_random(const SelectionPlan& reference, const Dataset& source,
                                std::uint64_t seed, const Exclusions& excl) {
  std::map<std::string, std::vector<std::size_t>> by_lang;
  for (std::size_t pos : eligible_positions(source, excl)) {
    by_lang[source.examples[pos].language].push_back(pos);
  }
  std::size_t requested = 0;
  for (const auto& [lang, count] : reference.lang_counts) {
    requested += count;
    const std::size_t have = by_lang.count(lang) ? by_lang[lang].size() : 0;
    if (have < count) {
      throw Error(ErrorCode::InsufficientPerLanguagePool,
                  "language '" + lang + "' has " + std::to_string(have) +
                      " eligible examples, reference needs " + std::to_string(count));
    }
  }
  SplitMix64 rng(seed);
  std::vector<std::size_t> picked;
  picked.reserve(requested);
  for (const auto& [lang, count] : reference.lang_counts) {
    if (count == 0) continue;
    auto drawn = sample_without_replacement(by_lang[lang], count, rng);
    picked.insert(picked.end(), drawn.begin(), drawn.end());
  }
  SelectionPlan plan = make_plan(Strategy::SameRatio, requested, source, picked);
  for (const auto& id : plan.chosen) plan.scores[id] = 0.0;
  plan.seed = seed;
  return plan;
}

}  // namespace demux
