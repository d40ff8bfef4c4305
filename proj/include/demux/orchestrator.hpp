#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "demux/dataset_io.hpp"
#include "demux/selection.hpp"
#include "demux/types.hpp"
#include "demux/uncertainty.hpp"

namespace demux {

struct ALConfig {
  std::size_t budget = 0;  // B
  std::size_t rounds = 1;  // K
  Strategy strategy = Strategy::Random;
  std::optional<long long> k;  // knn-uncertainty only
  std::optional<Scorer> scorer;
  std::uint64_t seed = 0;
  TaskKind task = TaskKind::SequenceLevel;
  TieBreak tie = TieBreak::ById;

  Scorer effective_scorer() const { return scorer.value_or(default_scorer(task)); }
};

/// floor(B/K) per round, plus one for each of the first B mod K rounds.
std::size_t round_budget(const ALConfig& cfg, std::size_t round_index);

/// Seed handed to the strategy in a given (0-based) round.
std::uint64_t round_seed(const ALConfig& cfg, std::size_t round_index);

/// Throws InvalidArgument when the configuration cannot run.
void check_config(const ALConfig& cfg);

struct RoundState {
  std::size_t round_index = 0;  // rounds completed so far
  Exclusions exclusions;
  std::vector<SelectionPlan> plan_history;
};

/// What a provider hands the engine for one round: both pools re-scored by the
/// current model, plus optional pools some strategies need.
struct RoundInputs {
  Dataset source;
  std::optional<Dataset> targets;
  std::optional<Dataset> gold_pool;          // gold draws here when present, else from source
  std::optional<SelectionPlan> reference;   // same-ratio only
};

/// Runs one acquisition round and returns the updated state alongside the plan.
std::pair<SelectionPlan, RoundState> run_round(const ALConfig& cfg, const RoundInputs& inputs,
                                               const RoundState& state);

class ModelProvider {
 public:
  virtual ~ModelProvider() = default;
  /// Datasets for 1-based `round`, reflecting a model tuned on every plan in `state`.
  virtual RoundInputs provide(std::size_t round, const RoundState& state) = 0;
  /// Called once a round's plan exists.
  virtual void on_plan(std::size_t /*round*/, const SelectionPlan& /*plan*/) {}
};

/// K rounds; exclusions accumulate and example ids must stay stable across rounds.
std::vector<SelectionPlan> run_loop(const ALConfig& cfg, ModelProvider& provider);

/// Serves the same inputs every round; used when the model is not retrained
/// between rounds (and for single-round runs).
class StaticProvider : public ModelProvider {
 public:
  explicit StaticProvider(RoundInputs inputs) : inputs_(std::move(inputs)) {}
  RoundInputs provide(std::size_t, const RoundState&) override { return inputs_; }

 private:
  RoundInputs inputs_;
};

/// Directory handshake with an external fine-tuning process. For round r the
/// provider waits for `round_r/READY`, reads `round_r/source/` and
/// `round_r/target/` (and optional `round_r/gold/`, `round_r/reference.json`),
/// and after selection writes `round_r/plan.json` followed by `round_r/DONE`.
class DirectoryProvider : public ModelProvider {
 public:
  DirectoryProvider(fs::path root, std::chrono::milliseconds wait,
                    std::chrono::milliseconds poll = std::chrono::milliseconds(200))
      : root_(std::move(root)), wait_(wait), poll_(poll) {}

  RoundInputs provide(std::size_t round, const RoundState& state) override;
  void on_plan(std::size_t round, const SelectionPlan& plan) override;

  fs::path round_dir(std::size_t round) const;

 private:
  fs::path root_;
  std::chrono::milliseconds wait_;
  std::chrono::milliseconds poll_;
};

}  // namespace demux
