#include "demux/core.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

#include "demux/error.hpp"

namespace demux {

namespace {

constexpr double kProbSumTolerance = 1e-4;

[[noreturn]] void violation(const Example& ex, std::string_view rule, const std::string& detail) {
  throw Error(ErrorCode::InvariantViolation,
              "example '" + ex.id + "' violates " + std::string(rule) + ": " + detail);
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void check_prob_row(const Example& ex, std::span<const double> row, std::string_view what) {
  double sum = 0.0;
  for (double p : row) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      violation(ex, "probability-range", std::string(what) + " has an entry outside [0,1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kProbSumTolerance) {
    violation(ex, "probability-sum",
              std::string(what) + " sums to " + std::to_string(sum) + ", expected 1 within 1e-4");
  }
}

}  // namespace

std::string_view task_name(TaskKind task) {
  switch (task) {
    case TaskKind::SequenceLevel: return "sequence";
    case TaskKind::TokenLevel: return "token";
    case TaskKind::SpanQA: return "qa";
  }
  return "sequence";
}

std::optional<TaskKind> parse_task(std::string_view name) {
  if (name == "sequence") return TaskKind::SequenceLevel;
  if (name == "token") return TaskKind::TokenLevel;
  if (name == "qa") return TaskKind::SpanQA;
  return std::nullopt;
}

TaskKind payload_task(const UncertaintyPayload& payload) {
  switch (payload.index()) {
    case 0: return TaskKind::SequenceLevel;
    case 1: return TaskKind::TokenLevel;
    default: return TaskKind::SpanQA;
  }
}

std::vector<double> pool_representation(const TokenMatrix& raw, TaskKind task,
                                        const std::optional<WordAlignment>& align) {
  if (raw.rows == 0 || raw.cols == 0) {
    throw Error(ErrorCode::EmptyInput, "raw token embeddings are empty");
  }
  if (raw.values.size() != raw.rows * raw.cols) {
    throw Error(ErrorCode::DimensionMismatch, "raw token matrix size does not match rows x cols");
  }
  if (task != TaskKind::TokenLevel) {
    auto first = raw.row(0);
    return {first.begin(), first.end()};
  }
  if (!align || align->first_subword_index.empty()) {
    throw Error(ErrorCode::MissingAlignment, "token-level pooling needs a word alignment");
  }
  std::vector<double> out(raw.cols, 0.0);
  for (std::uint32_t idx : align->first_subword_index) {
    if (idx >= raw.rows) {
      throw Error(ErrorCode::IndexOutOfRange, "alignment index " + std::to_string(idx) +
                                                  " is past the last token row " +
                                                  std::to_string(raw.rows - 1));
    }
    auto r = raw.row(idx);
    for (std::size_t c = 0; c < raw.cols; ++c) out[c] += r[c];
  }
  const double n = static_cast<double>(align->first_subword_index.size());
  for (double& v : out) v /= n;
  return out;
}

double euclidean(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

double target_distance(std::span<const double> x, const Dataset& targets) {
  if (targets.empty()) {
    throw Error(ErrorCode::EmptyTargetPool, "target pool has no examples");
  }
  double total = 0.0;
  for (const auto& t : targets.examples) {
    if (t.representation.size() != x.size()) {
      throw Error(ErrorCode::DimensionMismatch,
                  "query has dimension " + std::to_string(x.size()) + ", target '" + t.id +
                      "' has " + std::to_string(t.representation.size()));
    }
    total += euclidean(x, t.representation);
  }
  return total / static_cast<double>(targets.size());
}

Dataset dedup(const Dataset& ds) {
  Dataset out;
  out.task = ds.task;
  out.dim = ds.dim;
  out.role = ds.role;
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(ds.size());
  for (const auto& ex : ds.examples) {
    if (seen.insert(ex.text_hash).second) out.examples.push_back(ex);
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void validate_example(const Example& ex, TaskKind task, std::size_t dim) {
  if (ex.id.empty()) violation(ex, "nonempty-id", "id is empty");
  if (ex.representation.size() != dim) {
    violation(ex, "representation-dimension",
              "length " + std::to_string(ex.representation.size()) + " != dim " +
                  std::to_string(dim));
  }
  if (!all_finite(ex.representation)) {
    violation(ex, "representation-finite", "representation contains NaN or Inf");
  }
  if (payload_task(ex.payload) != task) {
    violation(ex, "payload-task",
              "payload kind does not match task '" + std::string(task_name(task)) + "'");
  }
  if (const auto* seq = std::get_if<SeqProbs>(&ex.payload)) {
    if (seq->probs.size() < 2) violation(ex, "min-classes", "fewer than two classes");
    check_prob_row(ex, seq->probs, "class distribution");
  } else if (const auto* tok = std::get_if<TokenProbs>(&ex.payload)) {
    if (tok->num_tokens == 0) violation(ex, "nonempty-sequence", "no token rows");
    if (tok->num_classes < 2) violation(ex, "min-classes", "fewer than two classes");
    if (tok->values.size() != tok->num_tokens * tok->num_classes) {
      violation(ex, "token-matrix-shape", "value count does not match T x C");
    }
    for (std::size_t t = 0; t < tok->num_tokens; ++t) {
      check_prob_row(ex, {tok->row(t), tok->num_classes}, "token row " + std::to_string(t));
    }
  } else {
    const auto& span = std::get<SpanLogProbs>(ex.payload);
    if (span.start_logp.empty()) violation(ex, "nonempty-sequence", "no span positions");
    if (span.start_logp.size() != span.end_logp.size()) {
      violation(ex, "span-length-match", "start and end vectors differ in length");
    }
    for (const auto* v : {&span.start_logp, &span.end_logp}) {
      for (double lp : *v) {
        if (!std::isfinite(lp) || lp > 0.0) {
          violation(ex, "logprob-nonpositive", "log-probability is positive or non-finite");
        }
      }
    }
  }
}

void validate_dataset(const Dataset& ds) {
  if (ds.dim == 0 && !ds.empty()) {
    throw Error(ErrorCode::InvariantViolation, "dataset dimension must be at least 1");
  }
  std::unordered_set<std::string_view> ids;
  ids.reserve(ds.size());
  for (const auto& ex : ds.examples) {
    validate_example(ex, ds.task, ds.dim);
    if (!ids.insert(ex.id).second) violation(ex, "unique-id", "duplicate id");
  }
}

}  // namespace demux
