#include "demux/orchestrator.hpp"

#include <string>
#include <thread>
#include <unordered_set>

#include "demux/core.hpp"
#include "demux/error.hpp"

namespace demux {

namespace {

const Dataset& require_targets(const RoundInputs& in) {
  if (!in.targets) throw Error(ErrorCode::EmptyTargetPool, "strategy needs a target pool");
  return *in.targets;
}

std::size_t eligible_count(const Dataset& pool, const Exclusions& excl) {
  std::size_t n = 0;
  for (const auto& ex : pool.examples) n += excl.contains(ex.id) ? 0 : 1;
  return n;
}

SelectionPlan empty_plan(const ALConfig& cfg, std::size_t b) {
  SelectionPlan plan;
  plan.strategy = cfg.strategy;
  plan.requested = b;
  plan.shortfall = b > 0;
  return plan;
}

SelectionPlan dispatch(const ALConfig& cfg, const RoundInputs& in, std::size_t b, std::uint64_t seed,
                       const Exclusions& excl, const Dataset& source) {
  switch (cfg.strategy) {
    case Strategy::Random: return select_random(source, b, seed, excl);
    case Strategy::Egalitarian: return select_egalitarian(source, b, seed, excl);
    case Strategy::Gold: return select_gold(source, b, seed, excl);
    case Strategy::AverageDist:
      return select_average_dist(source, require_targets(in), b, excl, cfg.tie);
    case Strategy::Uncertainty:
      return select_uncertainty(source, b, cfg.effective_scorer(), excl, cfg.tie);
    case Strategy::KnnUncertainty:
      return select_knn_uncertainty(source, require_targets(in), b, *cfg.k, cfg.effective_scorer(),
                                    excl, cfg.tie);
    case Strategy::SameRatio:
      if (!in.reference) {
        throw Error(ErrorCode::InvalidArgument, "same-ratio needs a reference plan for this round");
      }
      return same_ratio_random(*in.reference, source, seed, excl);
  }
  throw Error(ErrorCode::InvalidArgument, "unhandled strategy");
}

}  // namespace

std::size_t round_budget(const ALConfig& cfg, std::size_t round_index) {
  const std::size_t base = cfg.budget / cfg.rounds;
  return base + (round_index < cfg.budget % cfg.rounds ? 1 : 0);
}

std::uint64_t round_seed(const ALConfig& cfg, std::size_t round_index) { return cfg.seed + round_index; }

void check_config(const ALConfig& cfg) {
  if (cfg.budget == 0) throw Error(ErrorCode::InvalidArgument, "budget must be at least 1");
  if (cfg.rounds == 0) throw Error(ErrorCode::InvalidArgument, "rounds must be at least 1");
  if (cfg.rounds > cfg.budget) {
    throw Error(ErrorCode::InvalidArgument, "rounds cannot exceed the budget");
  }
  if (cfg.strategy == Strategy::KnnUncertainty && (!cfg.k || *cfg.k < 1)) {
    throw Error(ErrorCode::NonPositiveK, "knn-uncertainty needs k >= 1");
  }
  if (cfg.scorer && !scorer_accepts(*cfg.scorer, cfg.task)) {
    throw Error(ErrorCode::ScorerTaskMismatch, "scorer '" + std::string(scorer_name(*cfg.scorer)) +
                                                   "' is not defined for task '" +
                                                   std::string(task_name(cfg.task)) + "'");
  }
}

std::pair<SelectionPlan, RoundState> run_round(const ALConfig& cfg, const RoundInputs& inputs,
                                               const RoundState& state) {
  check_config(cfg);
  if (state.round_index >= cfg.rounds) {
    throw Error(ErrorCode::BudgetExhausted,
                "all " + std::to_string(cfg.rounds) + " rounds have already run");
  }
  const std::size_t b = round_budget(cfg, state.round_index);
  const std::uint64_t seed = round_seed(cfg, state.round_index);
  const bool gold_pool = cfg.strategy == Strategy::Gold && inputs.gold_pool.has_value();
  const Dataset pool = dedup(gold_pool ? *inputs.gold_pool : inputs.source);

  SelectionPlan plan = eligible_count(pool, state.exclusions) == 0
                           ? empty_plan(cfg, b)
                           : dispatch(cfg, inputs, b, seed, state.exclusions, pool);
  plan.round = static_cast<int>(state.round_index + 1);
  plan.seed = seed;

  RoundState next = state;
  ++next.round_index;
  next.exclusions.ids.insert(plan.chosen.begin(), plan.chosen.end());
  next.plan_history.push_back(plan);
  return {std::move(plan), std::move(next)};
}

std::vector<SelectionPlan> run_loop(const ALConfig& cfg, ModelProvider& provider) {
  check_config(cfg);
  RoundState state;
  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    RoundInputs inputs = provider.provide(r, state);
    const Dataset& pool =
        cfg.strategy == Strategy::Gold && inputs.gold_pool ? *inputs.gold_pool : inputs.source;
    if (pool.task != cfg.task) {
      throw Error(ErrorCode::ProviderFailure, "round " + std::to_string(r) + " dataset has task '" +
                                                  std::string(task_name(pool.task)) +
                                                  "', config says '" +
                                                  std::string(task_name(cfg.task)) + "'");
    }
    // Exclusions are id-based, so every id chosen so far must still be present.
    std::unordered_set<std::string> present;
    present.reserve(pool.size());
    for (const auto& ex : pool.examples) present.insert(ex.id);
    for (const auto& id : state.exclusions.ids) {
      if (!present.count(id)) {
        throw Error(ErrorCode::ProviderFailure, "round " + std::to_string(r) +
                                                    " pool is missing previously selected id '" +
                                                    id + "'; ids must be stable across rounds");
      }
    }
    auto [plan, next] = run_round(cfg, inputs, state);
    provider.on_plan(r, plan);
    state = std::move(next);
  }
  return state.plan_history;
}

fs::path DirectoryProvider::round_dir(std::size_t round) const {
  return root_ / ("round_" + std::to_string(round));
}

RoundInputs DirectoryProvider::provide(std::size_t round, const RoundState&) {
  const fs::path dir = round_dir(round);
  const auto deadline = std::chrono::steady_clock::now() + wait_;
  while (!fs::exists(dir / "READY")) {
    if (std::chrono::steady_clock::now() >= deadline) {
      throw Error(ErrorCode::ProviderFailure, "no READY sentinel in " + dir.string());
    }
    std::this_thread::sleep_for(poll_);
  }
  try {
    RoundInputs in;
    in.source = read_dataset(dir / "source", DatasetRole::Source);
    if (fs::exists(dir / "target")) in.targets = read_dataset(dir / "target", DatasetRole::Target);
    if (fs::exists(dir / "gold")) in.gold_pool = read_dataset(dir / "gold", DatasetRole::Source);
    if (fs::exists(dir / "reference.json")) in.reference = read_plan(dir / "reference.json");
    return in;
  } catch (const Error& e) {
    throw Error(ErrorCode::ProviderFailure, "round " + std::to_string(round) + ": " + e.what());
  }
}

void DirectoryProvider::on_plan(std::size_t round, const SelectionPlan& plan) {
  const fs::path dir = round_dir(round);
  write_plan(plan, dir / "plan.json");
  write_text_file_atomic(dir / "DONE", "");
}

}  // namespace demux
