#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "demux/types.hpp"

namespace demux {

struct Neighbor {
  std::size_t source_index = 0;  // position in the indexed Dataset
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Ascending by distance, then by source_index.
struct NeighborList {
  std::size_t target_index = 0;
  std::vector<Neighbor> neighbors;
};

struct NeighborUnion {
  std::set<std::size_t> members;
  std::map<std::size_t, std::vector<std::size_t>> provenance;  // source -> targets that chose it
};

/// Exact L2 search by brute-force scan. Immutable once built; queries are
/// const and safe to run concurrently.
class Index {
 public:
  /// Indexes every example of `source`.
  explicit Index(const Dataset& source);
  /// Indexes only the listed positions; results still report positions in `source`.
  Index(const Dataset& source, std::span<const std::size_t> positions);

  std::size_t size() const { return positions_.size(); }
  std::size_t dim() const { return dim_; }

  NeighborList query_topk(std::span<const double> q, std::size_t k) const;

 private:
  void load(const Dataset& source, std::span<const std::size_t> positions);

  std::size_t dim_ = 0;
  std::vector<std::size_t> positions_;  // ascending
  std::vector<double> points_;          // row-major, one row per position
};

Index build_index(const Dataset& source);

/// Signed k so that non-positive requests are reported as NonPositiveK.
NeighborList query_topk(const Index& index, std::span<const double> q, long long k);

/// Union of the k nearest indexed points of every target.
NeighborUnion neighbor_union(const Index& index, const Dataset& targets, long long k);

}  // namespace demux
