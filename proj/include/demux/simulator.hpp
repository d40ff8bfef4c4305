#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "demux/analysis.hpp"
#include "demux/selection.hpp"
#include "demux/types.hpp"

namespace demux {

/// A synthetic multilingual classification world.
///
/// Every class c has a shared mean; languages are grouped into families, and a
/// family bends the class geometry (a per-family, per-class perturbation) and
/// moves the whole family to its own centroid. Languages add an offset and a
/// bend of their own on top. Target languages belong to one family that also
/// contains some source languages, and are pushed away from every source
/// cluster along a dimension no source cluster uses, by
/// (1 - overlap) * separation.
struct SimTask {
  std::size_t n_source_languages = 8;
  std::size_t n_target_languages = 2;
  std::size_t n_families = 4;
  std::size_t target_family = 1;
  std::size_t dim = 16;
  std::size_t n_classes = 4;

  double class_separation = 2.0;
  double family_offset = 6.0;
  double family_spread = 4.0;
  double language_spread = 0.5;
  double language_bend = 1.0;
  double noise = 2.0;
  double overlap = 0.5;
  double separation = 3.0;

  std::size_t source_per_language = 50;
  std::size_t target_pool_per_language = 50;
  std::size_t test_per_language = 200;
  std::size_t gold_per_language = 250;
  std::size_t initial_train = 200;  // "en" examples for the starting model

  std::uint64_t seed = 0;
};

/// A dataset with the true class of every example, aligned by position.
struct LabeledPool {
  Dataset data;
  std::vector<std::size_t> labels;
};

struct SimWorld {
  SimTask task;
  std::vector<std::string> source_languages;
  std::vector<std::string> target_languages;
  std::map<std::string, std::vector<std::vector<double>>> cluster_means;  // language -> class -> mean

  LabeledPool source;   // annotation pool
  LabeledPool target;   // small unlabeled target sample; labels stay hidden from selection
  LabeledPool gold;     // target-language pool for the upper-bound arm
  LabeledPool test;     // target-language evaluation set
  LabeledPool initial;  // data for the starting ("en") model
};

/// Deterministic in task.seed. Payloads start uniform, which is what an
/// all-zero probe predicts.
SimWorld make_synthetic_task(const SimTask& task);

/// Multinomial logistic regression: weights C x d (row-major) and C biases.
struct ProbeModel {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  static ProbeModel zeros(std::size_t num_classes, std::size_t dim);

  std::vector<double> logits(std::span<const double> x) const;
  std::vector<double> predict_proba(std::span<const double> x) const;
  std::size_t predict(std::span<const double> x) const;
};

/// Row-major features with one label each.
struct LabeledData {
  std::size_t dim = 0;
  std::vector<double> features;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
};

LabeledData to_labeled(const LabeledPool& pool);
LabeledData to_labeled(const LabeledPool& pool, std::span<const std::size_t> positions);

struct LossGradient {
  double loss = 0.0;
  std::vector<double> grad_weights;
  std::vector<double> grad_bias;
};

/// Mean cross-entropy over the set and its analytic gradient.
LossGradient loss_and_gradient(const ProbeModel& model, const LabeledData& data);

struct TrainOptions {
  std::size_t epochs = 200;
  double learning_rate = 0.5;
};

/// Full-batch gradient descent. When `loss_history` is given it receives the
/// loss before each epoch and the final loss (epochs + 1 values).
ProbeModel train_probe(const ProbeModel& model, const LabeledData& annotated, const TrainOptions& opts,
                       std::vector<double>* loss_history = nullptr);

double accuracy(const ProbeModel& model, const LabeledData& data);

/// Replaces every payload with the probe's softmax output.
void refresh_payloads(Dataset& ds, const ProbeModel& model);

struct ExperimentConfig {
  SimTask world;
  std::vector<std::size_t> budgets = {100};
  std::size_t rounds = 1;
  long long k = 5;
  std::size_t n_seeds = 25;
  std::uint64_t base_seed = 0;
  TrainOptions initial_training{50, 0.05};
  TrainOptions round_training{200, 0.5};
  std::size_t permutations = 10000;
};

struct ResultRow {
  std::string arm;
  std::uint64_t seed = 0;
  std::size_t budget = 0;
  std::size_t round = 0;
  double accuracy = 0.0;
};

struct ArmSummary {
  std::string arm;
  std::size_t budget = 0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
  std::vector<double> per_seed;                 // final-round accuracy, in seed order
  std::optional<PermutationResult> vs_random;  // paired against the random arm
};

struct ResultTable {
  std::vector<ResultRow> rows;
  std::vector<ArmSummary> summaries;

  const ArmSummary* find(const std::string& arm, std::size_t budget) const;
};

/// Every arm on every seed's world, for every budget. Seeds are independent and
/// run in parallel; output order is fixed (budget, arm, seed, round).
ResultTable run_experiment(const ExperimentConfig& cfg, const std::vector<Strategy>& arms);

/// results.csv and summary.json contents.
std::string results_csv(const ResultTable& table);
std::string summary_json(const ExperimentConfig& cfg, const std::vector<Strategy>& arms,
                         const ResultTable& table);

/// Reads an experiment config; unknown keys are rejected.
ExperimentConfig parse_experiment_config(const std::string& json_text);

}  // namespace demux
