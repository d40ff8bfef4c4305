#include "demux/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "demux/error.hpp"
#include "demux/knn.hpp"
#include "demux/random.hpp"

namespace demux {

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::DimensionMismatch, "pearson inputs differ in length");
  }
  if (x.size() < 2) throw Error(ErrorCode::InvalidArgument, "pearson needs at least two points");
  double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    mx += dx / n;
    my += dy / n;
    sxx += dx * (x[i] - mx);
    syy += dy * (y[i] - my);
    sxy += dx * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    throw Error(ErrorCode::ConstantVector, "correlation is undefined for a constant vector");
  }
  const double r = sxy / std::sqrt(sxx * syy);
  return std::max(-1.0, std::min(1.0, r));
}

CorrelationReport neighborhood_uncertainty_correlation(const Dataset& source, const Dataset& targets,
                                                       long long k, Scorer scorer) {
  if (targets.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "need at least two target points");
  }
  const auto source_u = score_dataset(source, scorer);
  const auto target_u = score_dataset(targets, scorer);
  const Index index(source);
  std::vector<double> own(targets.size());
  std::vector<double> around(targets.size());
  for (std::size_t j = 0; j < targets.size(); ++j) {
    const auto list = query_topk(index, targets.examples[j].representation, k);
    double acc = 0.0;
    for (const auto& n : list.neighbors) acc += source_u[n.source_index].value;
    own[j] = target_u[j].value;
    around[j] = acc / static_cast<double>(list.neighbors.size());
  }
  return {pearson(own, around), targets.size()};
}

std::map<std::string, double> language_distribution(const SelectionPlan& plan) {
  if (plan.chosen.empty()) throw Error(ErrorCode::EmptyPlan, "plan has no chosen examples");
  std::map<std::string, double> out;
  const double total = static_cast<double>(plan.chosen.size());
  for (const auto& [lang, n] : plan.lang_counts) out[lang] = static_cast<double>(n) / total;
  return out;
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

PermutationResult paired_permutation_test(std::span<const double> a, std::span<const double> b,
                                          std::size_t permutations, std::uint64_t seed) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "paired samples differ in length");
  if (a.empty()) throw Error(ErrorCode::InvalidArgument, "paired test needs at least one pair");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const double observed = mean(diff);
  // relative slack so that permutations equal to the observed statistic up to
  // rounding count as "at least as extreme"
  const double slack = 1e-12 * (1.0 + std::abs(observed));

  SplitMix64 rng(seed);
  std::size_t ge = 0;
  std::size_t abs_ge = 0;
  for (std::size_t p = 0; p < permutations; ++p) {
    double acc = 0.0;
    for (double d : diff) acc += (rng.next() >> 63) ? -d : d;
    const double stat = acc / static_cast<double>(diff.size());
    if (stat >= observed - slack) ++ge;
    if (std::abs(stat) >= std::abs(observed) - slack) ++abs_ge;
  }
  PermutationResult out;
  out.mean_diff = observed;
  out.permutations = permutations;
  out.p_greater = static_cast<double>(ge + 1) / static_cast<double>(permutations + 1);
  out.p_two_sided = static_cast<double>(abs_ge + 1) / static_cast<double>(permutations + 1);
  return out;
}

}  // namespace demux
