#include "demux/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "demux/core.hpp"
#include "demux/error.hpp"
#include "demux/orchestrator.hpp"
#include "demux/parallel.hpp"
#include "demux/random.hpp"

namespace demux {

namespace {

using json = nlohmann::json;

const char* const kLanguageNames[] = {"de", "es", "fr", "hi", "ru", "tr", "vi", "zh", "ar", "sw",
                                      "ur", "th", "el", "bg", "fi", "id", "ko", "te", "bn", "ja"};

std::string language_name(std::size_t i) {
  constexpr std::size_t n = sizeof(kLanguageNames) / sizeof(kLanguageNames[0]);
  return i < n ? kLanguageNames[i] : "l" + std::to_string(i);
}

std::vector<double> gaussian(SplitMix64& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

void check_task(const SimTask& t) {
  if (!std::isfinite(t.noise) || t.noise <= 0.0) {
    throw Error(ErrorCode::DegenerateCovariance, "noise standard deviation must be positive");
  }
  if (t.dim < 2) throw Error(ErrorCode::InvalidArgument, "dim must be at least 2");
  if (t.n_classes < 2) throw Error(ErrorCode::InvalidArgument, "need at least two classes");
  if (t.n_source_languages == 0 || t.n_target_languages == 0) {
    throw Error(ErrorCode::InvalidArgument, "need at least one source and one target language");
  }
  if (t.n_families == 0 || t.target_family >= t.n_families) {
    throw Error(ErrorCode::InvalidArgument, "target_family must name one of n_families");
  }
  if (!(t.overlap >= 0.0 && t.overlap <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "overlap must lie in [0, 1]");
  }
  for (double v : {t.class_separation, t.family_offset, t.family_spread, t.language_spread,
                   t.language_bend, t.separation}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorCode::InvalidArgument, "scale parameters must be finite and non-negative");
    }
  }
}

/// Draws `per_language` labeled examples from each language's clusters.
LabeledPool sample_pool(SplitMix64& rng, const SimWorld& world, const std::vector<std::string>& langs,
                        std::size_t per_language, const std::string& prefix, DatasetRole role) {
  const SimTask& t = world.task;
  LabeledPool pool;
  pool.data.task = TaskKind::SequenceLevel;
  pool.data.dim = t.dim;
  pool.data.role = role;
  const SeqProbs uniform{std::vector<double>(t.n_classes, 1.0 / static_cast<double>(t.n_classes))};
  for (const auto& lang : langs) {
    const auto& means = world.cluster_means.at(lang);
    for (std::size_t i = 0; i < per_language; ++i) {
      const auto label = static_cast<std::size_t>(rng.below(t.n_classes));
      Example ex;
      ex.id = prefix + "-" + lang + "-" + std::to_string(i);
      ex.language = lang;
      ex.text_hash = fnv1a64(ex.id);
      ex.representation = gaussian(rng, t.dim, t.noise);
      for (std::size_t d = 0; d < t.dim; ++d) ex.representation[d] += means[label][d];
      ex.payload = uniform;
      pool.data.examples.push_back(std::move(ex));
      pool.labels.push_back(label);
    }
  }
  return pool;
}

std::string fmt_accuracy(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

SimWorld make_synthetic_task(const SimTask& task) {
  check_task(task);
  SimWorld world;
  world.task = task;
  SplitMix64 rng(task.seed);
  const std::size_t d = task.dim;
  const std::size_t shared = d - 1;  // the last dimension only carries the target shift

  auto in_shared = [&](double scale) {
    auto v = gaussian(rng, shared, scale);
    v.push_back(0.0);
    return v;
  };
  std::vector<std::vector<double>> class_means;
  for (std::size_t c = 0; c < task.n_classes; ++c) class_means.push_back(in_shared(task.class_separation));
  std::vector<std::vector<double>> family_centroid;
  std::vector<std::vector<std::vector<double>>> family_bend(task.n_families);
  for (std::size_t f = 0; f < task.n_families; ++f) {
    family_centroid.push_back(in_shared(task.family_offset));
    for (std::size_t c = 0; c < task.n_classes; ++c) family_bend[f].push_back(in_shared(task.family_spread));
  }

  auto add_language = [&](const std::string& lang, std::size_t family, double shift) {
    auto offset = in_shared(task.language_spread);
    offset[d - 1] = shift;
    auto& means = world.cluster_means[lang];
    for (std::size_t c = 0; c < task.n_classes; ++c) {
      const auto bend = in_shared(task.language_bend);
      std::vector<double> m(d);
      for (std::size_t i = 0; i < d; ++i) {
        m[i] = class_means[c][i] + family_bend[family][c][i] + family_centroid[family][i] + offset[i] +
               bend[i];
      }
      means.push_back(std::move(m));
    }
  };

  add_language("en", 0, 0.0);
  for (std::size_t i = 0; i < task.n_source_languages; ++i) {
    world.source_languages.push_back(language_name(i));
    add_language(world.source_languages.back(), i % task.n_families, 0.0);
  }
  const double shift = (1.0 - task.overlap) * task.separation;
  for (std::size_t i = 0; i < task.n_target_languages; ++i) {
    world.target_languages.push_back(language_name(task.n_source_languages + i));
    add_language(world.target_languages.back(), task.target_family, shift);
  }

  world.source = sample_pool(rng, world, world.source_languages, task.source_per_language, "src",
                             DatasetRole::Source);
  world.target = sample_pool(rng, world, world.target_languages, task.target_pool_per_language, "tgt",
                             DatasetRole::Target);
  world.gold = sample_pool(rng, world, world.target_languages, task.gold_per_language, "gold",
                           DatasetRole::Source);
  world.test = sample_pool(rng, world, world.target_languages, task.test_per_language, "test",
                           DatasetRole::Target);
  world.initial = sample_pool(rng, world, {"en"}, task.initial_train, "en", DatasetRole::Source);
  return world;
}

ProbeModel ProbeModel::zeros(std::size_t num_classes, std::size_t dim) {
  return {num_classes, dim, std::vector<double>(num_classes * dim, 0.0), std::vector<double>(num_classes, 0.0)};
}

std::vector<double> ProbeModel::logits(std::span<const double> x) const {
  std::vector<double> z(bias);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double* w = weights.data() + c * dim;
    for (std::size_t i = 0; i < dim; ++i) z[c] += w[i] * x[i];
  }
  return z;
}

std::vector<double> ProbeModel::predict_proba(std::span<const double> x) const {
  std::vector<double> z = logits(x);
  const double top = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : z) v /= total;
  return z;
}

std::size_t ProbeModel::predict(std::span<const double> x) const {
  const auto z = logits(x);
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

LabeledData to_labeled(const LabeledPool& pool) {
  std::vector<std::size_t> all(pool.data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return to_labeled(pool, all);
}

LabeledData to_labeled(const LabeledPool& pool, std::span<const std::size_t> positions) {
  LabeledData out;
  out.dim = pool.data.dim;
  out.features.reserve(positions.size() * out.dim);
  for (std::size_t pos : positions) {
    const auto& rep = pool.data.examples[pos].representation;
    out.features.insert(out.features.end(), rep.begin(), rep.end());
    out.labels.push_back(pool.labels[pos]);
  }
  return out;
}

LossGradient loss_and_gradient(const ProbeModel& model, const LabeledData& data) {
  if (data.size() == 0) throw Error(ErrorCode::EmptyTrainingSet, "no annotated examples");
  LossGradient out;
  out.grad_weights.assign(model.weights.size(), 0.0);
  out.grad_bias.assign(model.bias.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.row(i);
    const auto p = model.predict_proba(x);
    const std::size_t y = data.labels[i];
    out.loss -= std::log(std::max(p[y], 1e-300)) * inv_n;
    for (std::size_t c = 0; c < model.num_classes; ++c) {
      const double g = (p[c] - (c == y ? 1.0 : 0.0)) * inv_n;
      out.grad_bias[c] += g;
      double* gw = out.grad_weights.data() + c * model.dim;
      for (std::size_t j = 0; j < model.dim; ++j) gw[j] += g * x[j];
    }
  }
  return out;
}

ProbeModel train_probe(const ProbeModel& model, const LabeledData& annotated, const TrainOptions& opts,
                       std::vector<double>* loss_history) {
  if (annotated.size() == 0) throw Error(ErrorCode::EmptyTrainingSet, "no annotated examples");
  if (annotated.dim != model.dim) {
    throw Error(ErrorCode::DimensionMismatch, "training features do not match the probe dimension");
  }
  ProbeModel m = model;
  for (std::size_t e = 0; e < opts.epochs; ++e) {
    const LossGradient lg = loss_and_gradient(m, annotated);
    if (loss_history) loss_history->push_back(lg.loss);
    for (std::size_t i = 0; i < m.weights.size(); ++i) m.weights[i] -= opts.learning_rate * lg.grad_weights[i];
    for (std::size_t c = 0; c < m.bias.size(); ++c) m.bias[c] -= opts.learning_rate * lg.grad_bias[c];
  }
  if (loss_history) loss_history->push_back(loss_and_gradient(m, annotated).loss);
  return m;
}

double accuracy(const ProbeModel& model, const LabeledData& data) {
  if (data.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) hits += model.predict(data.row(i)) == data.labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

void refresh_payloads(Dataset& ds, const ProbeModel& model) {
  for (auto& ex : ds.examples) ex.payload = SeqProbs{model.predict_proba(ex.representation)};
}

const ArmSummary* ResultTable::find(const std::string& arm, std::size_t budget) const {
  for (const auto& s : summaries) {
    if (s.arm == arm && s.budget == budget) return &s;
  }
  return nullptr;
}

ResultTable run_experiment(const ExperimentConfig& cfg, const std::vector<Strategy>& arms) {
  if (arms.empty()) throw Error(ErrorCode::InvalidArgument, "no arms to run");
  if (cfg.n_seeds == 0) throw Error(ErrorCode::InvalidArgument, "need at least one seed");

  // rows[seed][budget][arm] -> one row per round
  using SeedRows = std::vector<std::vector<std::vector<ResultRow>>>;
  std::vector<SeedRows> per_seed(cfg.n_seeds);

  parallel_for(cfg.n_seeds, [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      const std::uint64_t seed = cfg.base_seed + s;
      SimTask task = cfg.world;
      task.seed = seed;
      const SimWorld world = make_synthetic_task(task);
      const ProbeModel start = train_probe(ProbeModel::zeros(task.n_classes, task.dim),
                                           to_labeled(world.initial), cfg.initial_training);
      const LabeledData test = to_labeled(world.test);

      SeedRows& out = per_seed[s];
      out.resize(cfg.budgets.size(), std::vector<std::vector<ResultRow>>(arms.size()));
      for (std::size_t bi = 0; bi < cfg.budgets.size(); ++bi) {
        for (std::size_t ai = 0; ai < arms.size(); ++ai) {
          const Strategy arm = arms[ai];
          ALConfig al;
          al.budget = cfg.budgets[bi];
          al.rounds = cfg.rounds;
          al.strategy = arm;
          al.k = cfg.k;
          al.scorer = Scorer::Margin;
          al.seed = seed;
          al.task = TaskKind::SequenceLevel;

          const LabeledPool& pool = arm == Strategy::Gold ? world.gold : world.source;
          std::unordered_map<std::string, std::size_t> position;
          for (std::size_t i = 0; i < pool.data.size(); ++i) position[pool.data.examples[i].id] = i;

          ProbeModel model = start;
          RoundState state;
          std::vector<std::size_t> annotated;
          for (std::size_t r = 0; r < cfg.rounds; ++r) {
            RoundInputs in;
            in.source = world.source.data;
            refresh_payloads(in.source, model);
            Dataset targets = world.target.data;
            refresh_payloads(targets, model);
            in.targets = std::move(targets);
            if (arm == Strategy::Gold) in.gold_pool = world.gold.data;
            if (arm == Strategy::SameRatio) {
              // match the language mix the hybrid strategy would pick this round
              in.reference = select_knn_uncertainty(in.source, *in.targets, round_budget(al, r), cfg.k,
                                                    Scorer::Margin, state.exclusions);
            }
            auto [plan, next] = run_round(al, in, state);
            state = std::move(next);
            for (const auto& id : plan.chosen) annotated.push_back(position.at(id));
            std::sort(annotated.begin(), annotated.end());
            if (!annotated.empty()) {
              model = train_probe(model, to_labeled(pool, annotated), cfg.round_training);
            }
            out[bi][ai].push_back({std::string(strategy_name(arm)), seed, al.budget, r + 1,
                                   accuracy(model, test)});
          }
        }
      }
    }
  });

  ResultTable table;
  for (std::size_t bi = 0; bi < cfg.budgets.size(); ++bi) {
    std::vector<std::vector<double>> finals(arms.size());
    for (std::size_t ai = 0; ai < arms.size(); ++ai) {
      for (std::size_t s = 0; s < cfg.n_seeds; ++s) {
        const auto& rows = per_seed[s][bi][ai];
        table.rows.insert(table.rows.end(), rows.begin(), rows.end());
        finals[ai].push_back(rows.back().accuracy);
      }
    }
    const auto random_it = std::find(arms.begin(), arms.end(), Strategy::Random);
    for (std::size_t ai = 0; ai < arms.size(); ++ai) {
      ArmSummary sum;
      sum.arm = std::string(strategy_name(arms[ai]));
      sum.budget = cfg.budgets[bi];
      sum.per_seed = finals[ai];
      sum.mean = mean(finals[ai]);
      sum.std = stddev(finals[ai]);
      sum.n = finals[ai].size();
      if (random_it != arms.end() && arms[ai] != Strategy::Random) {
        const auto ri = static_cast<std::size_t>(random_it - arms.begin());
        sum.vs_random = paired_permutation_test(finals[ai], finals[ri], cfg.permutations,
                                                cfg.base_seed + 1000003ULL * (bi + 1) + ai);
      }
      table.summaries.push_back(std::move(sum));
    }
  }
  return table;
}

std::string results_csv(const ResultTable& table) {
  std::string out = "arm,seed,budget,round,accuracy\n";
  for (const auto& r : table.rows) {
    out += r.arm + "," + std::to_string(r.seed) + "," + std::to_string(r.budget) + "," +
           std::to_string(r.round) + "," + fmt_accuracy(r.accuracy) + "\n";
  }
  return out;
}

std::string summary_json(const ExperimentConfig& cfg, const std::vector<Strategy>& arms,
                         const ResultTable& table) {
  json j;
  json arm_names = json::array();
  for (Strategy a : arms) arm_names.push_back(std::string(strategy_name(a)));
  j["arms"] = std::move(arm_names);
  j["budgets"] = cfg.budgets;
  j["rounds"] = cfg.rounds;
  j["n_seeds"] = cfg.n_seeds;
  j["base_seed"] = cfg.base_seed;
  j["k"] = cfg.k;
  j["permutations"] = cfg.permutations;
  json rows = json::array();
  for (const auto& s : table.summaries) {
    json r;
    r["arm"] = s.arm;
    r["budget"] = s.budget;
    r["mean"] = s.mean;
    r["std"] = s.std;
    r["n"] = s.n;
    if (s.vs_random) {
      r["mean_diff_vs_random"] = s.vs_random->mean_diff;
      r["p_greater_vs_random"] = s.vs_random->p_greater;
      r["p_two_sided_vs_random"] = s.vs_random->p_two_sided;
    } else {
      r["mean_diff_vs_random"] = nullptr;
      r["p_greater_vs_random"] = nullptr;
      r["p_two_sided_vs_random"] = nullptr;
    }
    rows.push_back(std::move(r));
  }
  j["summaries"] = std::move(rows);
  return j.dump(2) + "\n";
}

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorCode::ParseError, where + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw Error(ErrorCode::ParseError, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void maybe(const json& obj, const char* key, T& target) {
  if (obj.contains(key)) target = obj.at(key).get<T>();
}

TrainOptions parse_training(const json& obj, TrainOptions base, const std::string& where) {
  reject_unknown(obj, {"epochs", "learning_rate"}, where);
  maybe(obj, "epochs", base.epochs);
  maybe(obj, "learning_rate", base.learning_rate);
  return base;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  ExperimentConfig cfg;
  try {
    const json j = json::parse(json_text);
    reject_unknown(j, {"world", "budgets", "rounds", "k", "n_seeds", "base_seed", "initial_training",
                       "round_training", "permutations"},
                   "config");
    if (j.contains("world")) {
      const json& w = j.at("world");
      reject_unknown(w, {"n_source_languages", "n_target_languages", "n_families", "target_family", "dim",
                         "n_classes", "class_separation", "family_offset", "family_spread",
                         "language_spread", "language_bend", "noise", "overlap", "separation",
                         "source_per_language", "target_pool_per_language", "test_per_language",
                         "gold_per_language", "initial_train", "seed"},
                     "world");
      SimTask& t = cfg.world;
      maybe(w, "n_source_languages", t.n_source_languages);
      maybe(w, "n_target_languages", t.n_target_languages);
      maybe(w, "n_families", t.n_families);
      maybe(w, "target_family", t.target_family);
      maybe(w, "dim", t.dim);
      maybe(w, "n_classes", t.n_classes);
      maybe(w, "class_separation", t.class_separation);
      maybe(w, "family_offset", t.family_offset);
      maybe(w, "family_spread", t.family_spread);
      maybe(w, "language_spread", t.language_spread);
      maybe(w, "language_bend", t.language_bend);
      maybe(w, "noise", t.noise);
      maybe(w, "overlap", t.overlap);
      maybe(w, "separation", t.separation);
      maybe(w, "source_per_language", t.source_per_language);
      maybe(w, "target_pool_per_language", t.target_pool_per_language);
      maybe(w, "test_per_language", t.test_per_language);
      maybe(w, "gold_per_language", t.gold_per_language);
      maybe(w, "initial_train", t.initial_train);
      maybe(w, "seed", t.seed);
    }
    maybe(j, "budgets", cfg.budgets);
    maybe(j, "rounds", cfg.rounds);
    maybe(j, "k", cfg.k);
    maybe(j, "n_seeds", cfg.n_seeds);
    maybe(j, "base_seed", cfg.base_seed);
    maybe(j, "permutations", cfg.permutations);
    if (j.contains("initial_training")) {
      cfg.initial_training = parse_training(j.at("initial_training"), cfg.initial_training, "initial_training");
    }
    if (j.contains("round_training")) {
      cfg.round_training = parse_training(j.at("round_training"), cfg.round_training, "round_training");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("experiment config: ") + e.what());
  }
  if (cfg.budgets.empty()) throw Error(ErrorCode::InvalidArgument, "budgets must not be empty");
  if (cfg.rounds == 0) throw Error(ErrorCode::InvalidArgument, "rounds must be at least 1");
  if (cfg.k < 1) throw Error(ErrorCode::NonPositiveK, "k must be at least 1");
  return cfg;
}

}  // namespace demux
