#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "demux/types.hpp"

namespace demux {

/// Row-major view over a T x d block of token embeddings.
struct TokenMatrix {
  std::span<const double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::span<const double> row(std::size_t r) const { return values.subspan(r * cols, cols); }
};

/// Collapses raw token embeddings into the single vector fed to the classifier:
/// row 0 for sequence and QA tasks, the mean of each word's first sub-word row
/// for token-level tasks.
std::vector<double> pool_representation(const TokenMatrix& raw, TaskKind task,
                                        const std::optional<WordAlignment>& align);

/// Euclidean distance, accumulated in dimension order.
double euclidean(std::span<const double> a, std::span<const double> b);

/// Mean Euclidean distance from x to every target representation.
double target_distance(std::span<const double> x, const Dataset& targets);

/// Keeps the first occurrence of every text_hash, preserving order.
Dataset dedup(const Dataset& ds);

/// 64-bit FNV-1a over raw bytes; the hash adapters write into text_hash.
std::uint64_t fnv1a64(std::string_view bytes);

/// Throws InvariantViolation naming the offending example and rule.
void validate_example(const Example& ex, TaskKind task, std::size_t dim);
void validate_dataset(const Dataset& ds);

}  // namespace demux
