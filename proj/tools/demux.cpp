// demux: validate datasets, select examples to annotate, run simulations.

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "demux/analysis.hpp"
#include "demux/dataset_io.hpp"
#include "demux/error.hpp"
#include "demux/orchestrator.hpp"
#include "demux/simulator.hpp"

namespace {

using namespace demux;

enum Exit { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

// Flag combinations that cannot run; reported with exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string strategy_list() {
  std::string out;
  for (Strategy s : all_strategies()) out += (out.empty() ? "" : ", ") + std::string(strategy_name(s));
  return out;
}

TaskKind task_flag(const std::string& name) {
  const auto t = parse_task(name);
  if (!t) throw UsageError("unknown task '" + name + "' (expected sequence, token or qa)");
  return *t;
}

Strategy strategy_flag(const std::string& name) {
  const auto s = parse_strategy(name);
  if (!s) throw UsageError("unknown strategy '" + name + "'; valid: " + strategy_list());
  return *s;
}

std::optional<Scorer> scorer_flag(const std::string& name) {
  if (name.empty()) return std::nullopt;
  const auto s = parse_scorer(name);
  if (!s) throw UsageError("unknown scorer '" + name + "' (expected margin, margin-min, mnlp or sum-prob)");
  return s;
}

void check_threads_env() {
  const char* env = std::getenv("DEMUX_THREADS");
  if (!env) return;
  unsigned long long value = 0;
  const char* end = env + std::strlen(env);
  auto [ptr, ec] = std::from_chars(env, end, value);
  if (ec != std::errc{} || ptr != end || value == 0) {
    throw UsageError(std::string("DEMUX_THREADS must be a positive integer, got '") + env + "'");
  }
}

// --- validate --------------------------------------------------------------

struct ValidateArgs {
  std::string dataset;
  std::string role = "source";
};

int cmd_validate(const ValidateArgs& a) {
  if (a.role != "source" && a.role != "target") throw UsageError("--role must be source or target");
  const DatasetRole role = a.role == "source" ? DatasetRole::Source : DatasetRole::Target;
  static const char* kStages[] = {"manifest", "tensors", "examples"};
  try {
    const Dataset ds = read_dataset(a.dataset, role);
    for (const char* s : kStages) std::printf("pass  %s\n", s);
    std::printf("OK: %zu examples\n", ds.size());
    return kOk;
  } catch (const Error& e) {
    int failed = 2;
    switch (e.code()) {
      case ErrorCode::IOFailure:
      case ErrorCode::ParseError:
      case ErrorCode::VersionMismatch: failed = 0; break;
      case ErrorCode::BadMagic:
      case ErrorCode::TruncatedTensor: failed = 1; break;
      default: break;
    }
    for (int i = 0; i < failed; ++i) std::printf("pass  %s\n", kStages[i]);
    std::printf("FAIL  %s: %s\n", kStages[failed], e.what());
    return kData;
  }
}

// --- select ----------------------------------------------------------------

struct SelectArgs {
  std::string strategy;
  std::string task = "sequence";
  std::string source;
  std::string target;
  std::string gold;
  std::string reference;
  std::size_t budget = 0;
  std::size_t rounds = 1;
  long long k = 0;
  bool k_given = false;
  std::string scorer;
  std::uint64_t seed = 0;
  std::string tie = "id";
  std::string out;
  bool handshake = false;
  double wait_seconds = 3600.0;
};

class InlineProvider : public StaticProvider {
 public:
  InlineProvider(RoundInputs inputs, fs::path out, std::size_t rounds)
      : StaticProvider(std::move(inputs)), out_(std::move(out)), rounds_(rounds) {}

  void on_plan(std::size_t round, const SelectionPlan& plan) override {
    const fs::path path = rounds_ == 1 ? out_ / "plan.json"
                                       : out_ / ("round_" + std::to_string(round)) / "plan.json";
    fs::create_directories(path.parent_path());
    write_plan(plan, path);
  }

 private:
  fs::path out_;
  std::size_t rounds_;
};

int cmd_select(const SelectArgs& a) {
  ALConfig cfg;
  cfg.strategy = strategy_flag(a.strategy);
  cfg.task = task_flag(a.task);
  cfg.scorer = scorer_flag(a.scorer);
  cfg.budget = a.budget;
  cfg.rounds = a.rounds;
  cfg.seed = a.seed;
  if (a.tie != "id" && a.tie != "position") throw UsageError("--tie-break must be id or position");
  cfg.tie = a.tie == "id" ? TieBreak::ById : TieBreak::ByPosition;

  const bool knn = cfg.strategy == Strategy::KnnUncertainty;
  if (a.k_given && !knn) throw UsageError("--k only applies to knn-uncertainty");
  if (knn && !a.k_given) throw UsageError("knn-uncertainty needs --k");
  if (knn && a.k < 1) throw UsageError("--k must be at least 1");
  if (knn) cfg.k = a.k;
  if (cfg.scorer && cfg.strategy != Strategy::Uncertainty && !knn) {
    throw UsageError("--scorer only applies to uncertainty and knn-uncertainty");
  }
  if (!a.gold.empty() && cfg.strategy != Strategy::Gold) throw UsageError("--gold only applies to gold");
  if (!a.reference.empty() && cfg.strategy != Strategy::SameRatio) {
    throw UsageError("--reference only applies to same-ratio");
  }
  try {
    check_config(cfg);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  if (a.handshake) {
    if (!a.source.empty() || !a.target.empty() || !a.gold.empty() || !a.reference.empty()) {
      throw UsageError("--handshake reads every input from round directories under --out");
    }
    DirectoryProvider provider(a.out, std::chrono::milliseconds(static_cast<long long>(a.wait_seconds * 1000)));
    const auto plans = run_loop(cfg, provider);
    for (std::size_t r = 0; r < plans.size(); ++r) {
      std::printf("round %zu: %zu of %zu chosen -> %s\n", r + 1, plans[r].chosen.size(), plans[r].requested,
                  (provider.round_dir(r + 1) / "plan.json").string().c_str());
    }
    return kOk;
  }

  if (a.source.empty()) throw UsageError("--source is required unless --handshake is given");
  const bool distance_based = cfg.strategy == Strategy::AverageDist || knn;
  if (distance_based && a.target.empty()) {
    throw UsageError(std::string(strategy_name(cfg.strategy)) + " needs --target");
  }
  if (cfg.strategy == Strategy::SameRatio && a.reference.empty()) throw UsageError("same-ratio needs --reference");

  RoundInputs in;
  in.source = read_dataset(a.source, DatasetRole::Source);
  if (!a.target.empty()) in.targets = read_dataset(a.target, DatasetRole::Target);
  if (!a.gold.empty()) in.gold_pool = read_dataset(a.gold, DatasetRole::Source);
  if (!a.reference.empty()) in.reference = read_plan(a.reference);

  fs::create_directories(a.out);
  InlineProvider provider(std::move(in), a.out, cfg.rounds);
  const auto plans = run_loop(cfg, provider);
  for (std::size_t r = 0; r < plans.size(); ++r) {
    std::printf("round %zu: %zu of %zu chosen%s\n", r + 1, plans[r].chosen.size(), plans[r].requested,
                plans[r].shortfall ? " (shortfall)" : "");
  }
  return kOk;
}

// --- simulate --------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::string arms = "random,average-dist,knn-uncertainty,gold";
  std::size_t seeds = 0;
  std::string out;
};

std::vector<Strategy> parse_arms(const std::string& list) {
  std::vector<Strategy> arms;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    const auto s = parse_strategy(name);
    if (!s) throw UsageError("unknown arm '" + name + "'; valid arms: " + strategy_list());
    if (std::find(arms.begin(), arms.end(), *s) != arms.end()) throw UsageError("arm '" + name + "' listed twice");
    arms.push_back(*s);
  }
  if (arms.empty()) throw UsageError("--arms is empty; valid arms: " + strategy_list());
  return arms;
}

ExperimentConfig load_config(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : parse_experiment_config(read_text_file(path));
}

int cmd_simulate(const SimulateArgs& a) {
  const std::vector<Strategy> arms = parse_arms(a.arms);
  ExperimentConfig cfg = load_config(a.config);
  if (a.seeds > 0) cfg.n_seeds = a.seeds;
  for (std::size_t b : cfg.budgets) {
    if (b < cfg.rounds) throw UsageError("every budget must be at least the number of rounds");
  }

  const ResultTable table = run_experiment(cfg, arms);
  const fs::path out(a.out);
  fs::create_directories(out);
  write_text_file_atomic(out / "results.csv", results_csv(table));
  write_text_file_atomic(out / "summary.json", summary_json(cfg, arms, table));

  std::printf("%-16s %7s %9s %9s %10s\n", "arm", "budget", "mean", "std", "p>random");
  for (const auto& s : table.summaries) {
    char p[32] = "-";
    if (s.vs_random) std::snprintf(p, sizeof p, "%.4f", s.vs_random->p_greater);
    std::printf("%-16s %7zu %9.4f %9.4f %10s\n", s.arm.c_str(), s.budget, s.mean, s.std, p);
  }
  return kOk;
}

// --- correlate -------------------------------------------------------------

struct CorrelateArgs {
  std::string source;
  std::string target;
  long long k = 0;
  std::string scorer;
};

int cmd_correlate(const CorrelateArgs& a) {
  if (a.k < 1) throw UsageError("--k must be at least 1");
  std::optional<Scorer> scorer = scorer_flag(a.scorer);
  const Dataset source = read_dataset(a.source, DatasetRole::Source);
  const Dataset target = read_dataset(a.target, DatasetRole::Target);
  const Scorer sc = scorer.value_or(default_scorer(source.task));
  const CorrelationReport rep = neighborhood_uncertainty_correlation(source, target, a.k, sc);
  std::printf("rho %.6f\nn %zu\n", rep.rho, rep.n);
  return kOk;
}

// --- generate --------------------------------------------------------------

struct GenerateArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
};

// Writes one simulator world as dataset directories, with payloads from the
// starting model, so the other subcommands have something to run on.
int cmd_generate(const GenerateArgs& a) {
  const ExperimentConfig cfg = load_config(a.config);
  SimTask task = cfg.world;
  task.seed = a.seed;
  SimWorld world = make_synthetic_task(task);
  const ProbeModel start = train_probe(ProbeModel::zeros(task.n_classes, task.dim), to_labeled(world.initial),
                                       cfg.initial_training);
  const fs::path out(a.out);
  for (auto [name, pool] : {std::pair{"source", &world.source}, {"target", &world.target}, {"gold", &world.gold}}) {
    refresh_payloads(pool->data, start);
    write_dataset(pool->data, out / name);
    std::printf("%s: %zu examples -> %s\n", name, pool->data.size(), (out / name).string().c_str());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Budget-constrained selection of source-language examples to annotate."};
  app.name("demux");
  app.require_subcommand(1);
  app.get_formatter()->column_width(34);

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate", "Check a dataset directory");
  validate->add_option("--dataset", va.dataset, "Dataset directory")->type_name("DIR")->required();
  validate->add_option("--role", va.role, "source or target")->type_name("TEXT")->capture_default_str();

  SelectArgs sa;
  auto* select = app.add_subcommand("select", "Choose examples to annotate");
  select->add_option("--strategy", sa.strategy, strategy_list())->type_name("TEXT")->required();
  select->add_option("--task", sa.task, "sequence, token or qa")->type_name("TEXT")->capture_default_str();
  select->add_option("--source", sa.source, "Source (annotation pool) dataset")->type_name("DIR")->default_str("none");
  select->add_option("--target", sa.target, "Unlabeled target dataset")->type_name("DIR")->default_str("none");
  select->add_option("--gold", sa.gold, "Labeled target pool for gold")->type_name("DIR")->default_str("none");
  select->add_option("--reference", sa.reference, "Reference plan for same-ratio")->type_name("FILE")->default_str("none");
  select->add_option("--budget", sa.budget, "Total budget B")->type_name("UINT")->required();
  select->add_option("--rounds", sa.rounds, "Number of rounds K")->type_name("UINT")->capture_default_str();
  auto* k_opt = select->add_option("--k", sa.k, "Neighbors per target (knn-uncertainty)")->type_name("INT")->default_str("none");
  select->add_option("--scorer", sa.scorer, "margin, margin-min, mnlp or sum-prob")->type_name("TEXT")->default_str("task default");
  select->add_option("--seed", sa.seed, "Base seed")->type_name("UINT")->capture_default_str();
  select->add_option("--tie-break", sa.tie, "id or position")->type_name("TEXT")->capture_default_str();
  select->add_option("--out", sa.out, "Output directory")->type_name("DIR")->required();
  select->add_flag("--handshake", sa.handshake, "Read round_r/ inputs from --out written by a model process")
      ->type_name("FLAG")
      ->default_str("false");
  select->add_option("--wait", sa.wait_seconds, "Seconds to wait for each READY sentinel")->type_name("FLOAT")->capture_default_str();

  SimulateArgs ma;
  auto* simulate = app.add_subcommand("simulate", "Run strategies on synthetic worlds");
  simulate->add_option("--config", ma.config, "Experiment config (JSON)")->type_name("FILE")->default_str("built-in");
  simulate->add_option("--arms", ma.arms, "Comma-separated subset of: " + strategy_list())->type_name("LIST")->capture_default_str();
  simulate->add_option("--seeds", ma.seeds, "Number of seeds (0 keeps the config value)")->type_name("UINT")->capture_default_str();
  simulate->add_option("--out", ma.out, "Output directory")->type_name("DIR")->required();

  CorrelateArgs ca;
  auto* correlate = app.add_subcommand("correlate", "Target vs. neighborhood uncertainty correlation");
  correlate->add_option("--source", ca.source, "Source dataset")->type_name("DIR")->required();
  correlate->add_option("--target", ca.target, "Target dataset")->type_name("DIR")->required();
  correlate->add_option("--k", ca.k, "Neighbors per target")->type_name("INT")->required();
  correlate->add_option("--scorer", ca.scorer, "margin, margin-min, mnlp or sum-prob")->type_name("TEXT")->default_str("task default");

  GenerateArgs ga;
  auto* generate = app.add_subcommand("generate", "Write a synthetic world as datasets");
  generate->add_option("--config", ga.config, "Experiment config (JSON)")->type_name("FILE")->default_str("built-in");
  generate->add_option("--seed", ga.seed, "World seed")->type_name("UINT")->capture_default_str();
  generate->add_option("--out", ga.out, "Output directory")->type_name("DIR")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  sa.k_given = k_opt->count() > 0;

  try {
    check_threads_env();
    if (*validate) return cmd_validate(va);
    if (*select) return cmd_select(sa);
    if (*simulate) return cmd_simulate(ma);
    if (*correlate) return cmd_correlate(ca);
    if (*generate) return cmd_generate(ga);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kInternal;
  }
  return kInternal;
}
