#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "demux/types.hpp"

namespace demux {

/// Higher means more uncertain. Scorers whose natural quantity shrinks with
/// uncertainty (margin, MNLP, SUM-PROB) report its negation.
struct UncertaintyScore {
  double value = 0.0;

  /// The un-negated quantity (margin, mean log-prob, summed log-prob).
  double raw() const { return -value; }

  friend auto operator<=>(const UncertaintyScore&, const UncertaintyScore&) = default;
};

enum class Scorer { Margin, MarginMin, Mnlp, SumProb };

/// Flag spelling: "margin", "margin-min", "mnlp", "sum-prob".
std::string_view scorer_name(Scorer scorer);
std::optional<Scorer> parse_scorer(std::string_view name);

/// margin for sequence tasks, margin-min for token tasks, sum-prob for QA.
Scorer default_scorer(TaskKind task);
bool scorer_accepts(Scorer scorer, TaskKind task);

/// Top-two class probabilities; ties resolve to the lower class index.
struct TopTwo {
  std::size_t first_class = 0;
  double first = 0.0;
  double second = 0.0;
};
TopTwo top_two(std::span<const double> probs);

UncertaintyScore margin_sequence(const SeqProbs& p);
UncertaintyScore margin_min_token(const TokenProbs& p);
UncertaintyScore sum_prob_qa(const SpanLogProbs& p);
UncertaintyScore mnlp_token(std::span<const double> top_class_probs);

/// Applies one scorer to a payload, checking the pairing.
UncertaintyScore score_payload(const UncertaintyPayload& payload, Scorer scorer);

/// Positional: element i scores ds.examples[i]. Parallel over examples.
std::vector<UncertaintyScore> score_dataset(const Dataset& ds, Scorer scorer);

}  // namespace demux
