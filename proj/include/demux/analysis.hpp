#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "demux/selection.hpp"
#include "demux/types.hpp"
#include "demux/uncertainty.hpp"

namespace demux {

/// Pearson's r from a single pass of co-moment updates. Throws ConstantVector
/// when either input has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

struct CorrelationReport {
  double rho = 0.0;
  std::size_t n = 0;
};

/// Correlation between each target's uncertainty and the mean uncertainty of
/// its k nearest source examples.
CorrelationReport neighborhood_uncertainty_correlation(const Dataset& source, const Dataset& targets,
                                                       long long k, Scorer scorer);

/// Fraction of the plan drawn from each language.
std::map<std::string, double> language_distribution(const SelectionPlan& plan);

struct PermutationResult {
  double mean_diff = 0.0;
  double p_greater = 1.0;    // H1: mean(a - b) > 0
  double p_two_sided = 1.0;
  std::size_t permutations = 0;
};

/// Sign-flip permutation test on paired differences a[i] - b[i]. p-values use
/// the (count + 1) / (permutations + 1) estimator.
PermutationResult paired_permutation_test(std::span<const double> a, std::span<const double> b,
                                          std::size_t permutations, std::uint64_t seed);

double mean(std::span<const double> v);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(std::span<const double> v);

}  // namespace demux
