#include "demux/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "demux/error.hpp"
#include "demux/parallel.hpp"

namespace demux {

namespace {

void require_finite(std::span<const double> v, std::string_view what) {
  for (double x : v) {
    if (std::isnan(x) || std::isinf(x)) {
      throw Error(ErrorCode::NonFiniteValue, std::string(what) + " contains NaN or Inf");
    }
  }
}

double max_finite(std::span<const double> v, std::string_view what) {
  require_finite(v, what);
  return *std::max_element(v.begin(), v.end());
}

}  // namespace

std::string_view scorer_name(Scorer scorer) {
  switch (scorer) {
    case Scorer::Margin: return "margin";
    case Scorer::MarginMin: return "margin-min";
    case Scorer::Mnlp: return "mnlp";
    case Scorer::SumProb: return "sum-prob";
  }
  return "margin";
}

std::optional<Scorer> parse_scorer(std::string_view name) {
  if (name == "margin") return Scorer::Margin;
  if (name == "margin-min") return Scorer::MarginMin;
  if (name == "mnlp") return Scorer::Mnlp;
  if (name == "sum-prob") return Scorer::SumProb;
  return std::nullopt;
}

Scorer default_scorer(TaskKind task) {
  switch (task) {
    case TaskKind::SequenceLevel: return Scorer::Margin;
    case TaskKind::TokenLevel: return Scorer::MarginMin;
    case TaskKind::SpanQA: return Scorer::SumProb;
  }
  return Scorer::Margin;
}

bool scorer_accepts(Scorer scorer, TaskKind task) {
  switch (scorer) {
    case Scorer::Margin: return task == TaskKind::SequenceLevel;
    case Scorer::MarginMin:
    case Scorer::Mnlp: return task == TaskKind::TokenLevel;
    case Scorer::SumProb: return task == TaskKind::SpanQA;
  }
  return false;
}

TopTwo top_two(std::span<const double> probs) {
  if (probs.size() < 2) {
    throw Error(ErrorCode::FewerThanTwoClasses,
                "need at least two classes, got " + std::to_string(probs.size()));
  }
  require_finite(probs, "class probabilities");
  TopTwo out;
  out.first = -std::numeric_limits<double>::infinity();
  out.second = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < probs.size(); ++c) {
    // strict comparisons keep the lower index on ties
    if (probs[c] > out.first) {
      out.second = out.first;
      out.first = probs[c];
      out.first_class = c;
    } else if (probs[c] > out.second) {
      out.second = probs[c];
    }
  }
  return out;
}

UncertaintyScore margin_sequence(const SeqProbs& p) {
  const TopTwo t = top_two(p.probs);
  return {-(t.first - t.second)};
}

UncertaintyScore margin_min_token(const TokenProbs& p) {
  if (p.num_tokens == 0) throw Error(ErrorCode::EmptySequence, "token payload has no rows");
  if (p.num_classes < 2) {
    throw Error(ErrorCode::FewerThanTwoClasses,
                "need at least two classes, got " + std::to_string(p.num_classes));
  }
  double lowest = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < p.num_tokens; ++t) {
    const TopTwo tt = top_two({p.row(t), p.num_classes});
    lowest = std::min(lowest, tt.first - tt.second);
  }
  return {-lowest};
}

UncertaintyScore sum_prob_qa(const SpanLogProbs& p) {
  if (p.start_logp.empty() || p.end_logp.empty()) {
    throw Error(ErrorCode::EmptySequence, "span payload has no positions");
  }
  const double raw = max_finite(p.start_logp, "start log-probabilities") +
                     max_finite(p.end_logp, "end log-probabilities");
  return {-raw};
}

UncertaintyScore mnlp_token(std::span<const double> top_class_probs) {
  if (top_class_probs.empty()) throw Error(ErrorCode::EmptySequence, "no token probabilities");
  require_finite(top_class_probs, "top-class probabilities");
  // running mean: exact when every token has the same probability
  double m = 0.0;
  std::size_t n = 0;
  for (double p : top_class_probs) {
    if (!(p > 0.0)) {
      throw Error(ErrorCode::NonPositiveProbability,
                  "top-class probability " + std::to_string(p) + " is not positive");
    }
    m += (std::log(p) - m) / static_cast<double>(++n);
  }
  return {-m};
}

UncertaintyScore score_payload(const UncertaintyPayload& payload, Scorer scorer) {
  if (!scorer_accepts(scorer, payload_task(payload))) {
    throw Error(ErrorCode::ScorerTaskMismatch,
                "scorer '" + std::string(scorer_name(scorer)) + "' cannot score a '" +
                    std::string(task_name(payload_task(payload))) + "' payload");
  }
  switch (scorer) {
    case Scorer::Margin: return margin_sequence(std::get<SeqProbs>(payload));
    case Scorer::MarginMin: return margin_min_token(std::get<TokenProbs>(payload));
    case Scorer::SumProb: return sum_prob_qa(std::get<SpanLogProbs>(payload));
    case Scorer::Mnlp: {
      const auto& tok = std::get<TokenProbs>(payload);
      std::vector<double> top(tok.num_tokens);
      for (std::size_t t = 0; t < tok.num_tokens; ++t) {
        top[t] = top_two({tok.row(t), tok.num_classes}).first;
      }
      return mnlp_token(top);
    }
  }
  return {};
}

std::vector<UncertaintyScore> score_dataset(const Dataset& ds, Scorer scorer) {
  if (!scorer_accepts(scorer, ds.task)) {
    throw Error(ErrorCode::ScorerTaskMismatch,
                "scorer '" + std::string(scorer_name(scorer)) + "' is not defined for task '" +
                    std::string(task_name(ds.task)) + "'");
  }
  std::vector<UncertaintyScore> out(ds.size());
  parallel_for(ds.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = score_payload(ds.examples[i].payload, scorer);
  });
  return out;
}

}  // namespace demux
