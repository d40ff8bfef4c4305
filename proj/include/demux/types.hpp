#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace demux {

enum class TaskKind { SequenceLevel, TokenLevel, SpanQA };

/// Flag/manifest spelling: "sequence", "token", "qa".
std::string_view task_name(TaskKind task);
std::optional<TaskKind> parse_task(std::string_view name);

enum class DatasetRole { Source, Target };

/// Class probabilities for a whole sequence.
struct SeqProbs {
  std::vector<double> probs;
};

/// Per-token class probabilities, row-major T x C.
struct TokenProbs {
  std::size_t num_tokens = 0;
  std::size_t num_classes = 0;
  std::vector<double> values;

  const double* row(std::size_t t) const { return values.data() + t * num_classes; }
};

/// Start/end log-probabilities over T context positions.
struct SpanLogProbs {
  std::vector<double> start_logp;
  std::vector<double> end_logp;
};

using UncertaintyPayload = std::variant<SeqProbs, TokenProbs, SpanLogProbs>;

/// The payload variant a task kind requires.
TaskKind payload_task(const UncertaintyPayload& payload);

/// First sub-word index of every word in a tokenized example.
struct WordAlignment {
  std::vector<std::uint32_t> first_subword_index;
};

struct Example {
  std::string id;
  std::string language = "unknown";
  std::uint64_t text_hash = 0;
  std::vector<double> representation;
  UncertaintyPayload payload;
};

struct Dataset {
  TaskKind task = TaskKind::SequenceLevel;
  std::size_t dim = 0;
  DatasetRole role = DatasetRole::Source;
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
};

}  // namespace demux
