#include "demux/knn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "demux/core.hpp"
#include "demux/error.hpp"
#include "demux/parallel.hpp"

namespace demux {

Index::Index(const Dataset& source) {
  std::vector<std::size_t> all(source.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  load(source, all);
}

Index::Index(const Dataset& source, std::span<const std::size_t> positions) {
  load(source, positions);
}

void Index::load(const Dataset& source, std::span<const std::size_t> positions) {
  if (positions.empty()) throw Error(ErrorCode::EmptySource, "cannot index an empty source pool");
  dim_ = source.dim;
  positions_.assign(positions.begin(), positions.end());
  std::sort(positions_.begin(), positions_.end());
  points_.reserve(positions_.size() * dim_);
  for (std::size_t pos : positions_) {
    if (pos >= source.size()) {
      throw Error(ErrorCode::IndexOutOfRange, "position " + std::to_string(pos) + " not in source");
    }
    const auto& ex = source.examples[pos];
    if (ex.representation.size() != dim_) {
      throw Error(ErrorCode::DimensionMismatch, "example '" + ex.id + "' has wrong dimension");
    }
    for (double v : ex.representation) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::NonFiniteValue, "example '" + ex.id + "' has a non-finite value");
      }
      points_.push_back(v);
    }
  }
}

NeighborList Index::query_topk(std::span<const double> q, std::size_t k) const {
  if (k == 0) throw Error(ErrorCode::NonPositiveK, "k must be at least 1");
  if (q.size() != dim_) {
    throw Error(ErrorCode::DimensionMismatch, "query has dimension " + std::to_string(q.size()) +
                                                  ", index has " + std::to_string(dim_));
  }
  std::vector<Neighbor> all(positions_.size());
  for (std::size_t i = 0; i < positions_.size(); ++i) {
    all[i] = {positions_[i], euclidean(q, {points_.data() + i * dim_, dim_})};
  }
  const std::size_t keep = std::min(k, all.size());
  auto closer = [](const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.source_index < b.source_index;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), closer);
  all.resize(keep);
  return {0, std::move(all)};
}

Index build_index(const Dataset& source) { return Index(source); }

NeighborList query_topk(const Index& index, std::span<const double> q, long long k) {
  if (k < 1) throw Error(ErrorCode::NonPositiveK, "k must be at least 1, got " + std::to_string(k));
  return index.query_topk(q, static_cast<std::size_t>(k));
}

NeighborUnion neighbor_union(const Index& index, const Dataset& targets, long long k) {
  if (targets.empty()) throw Error(ErrorCode::EmptyTargetPool, "target pool has no examples");
  if (k < 1) throw Error(ErrorCode::NonPositiveK, "k must be at least 1, got " + std::to_string(k));
  std::vector<NeighborList> lists(targets.size());
  parallel_for(targets.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      lists[j] = index.query_topk(targets.examples[j].representation, static_cast<std::size_t>(k));
      lists[j].target_index = j;
    }
  });
  NeighborUnion out;
  for (const auto& list : lists) {
    for (const auto& n : list.neighbors) {
      out.members.insert(n.source_index);
      out.provenance[n.source_index].push_back(list.target_index);
    }
  }
  return out;
}

}  // namespace demux
