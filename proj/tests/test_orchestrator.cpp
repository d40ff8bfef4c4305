#include <doctest.h>

#include <set>
#include <thread>

#include "demux/dataset_io.hpp"
#include "demux/error.hpp"
#include "demux/orchestrator.hpp"
#include "support.hpp"

using namespace demux;
using testing::TempDir;

namespace {

ALConfig config(Strategy s, std::size_t budget, std::size_t rounds) {
  ALConfig cfg;
  cfg.strategy = s;
  cfg.budget = budget;
  cfg.rounds = rounds;
  cfg.seed = 100;
  if (s == Strategy::KnnUncertainty) cfg.k = 3;
  return cfg;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

// Serves a fixed pool but drops one previously chosen id from round 2 on.
class ForgetfulProvider : public ModelProvider {
 public:
  explicit ForgetfulProvider(Dataset pool) : pool_(std::move(pool)) {}
  RoundInputs provide(std::size_t round, const RoundState& state) override {
    RoundInputs in;
    in.source = pool_;
    if (round > 1 && !state.exclusions.ids.empty()) {
      const std::string drop = *state.exclusions.ids.begin();
      std::erase_if(in.source.examples, [&](const Example& e) { return e.id == drop; });
    }
    return in;
  }

 private:
  Dataset pool_;
};

}  // namespace

TEST_CASE("round budgets follow the remainder rule") {
  ALConfig cfg = config(Strategy::Random, 10000, 5);
  for (std::size_t r = 0; r < 5; ++r) CHECK(round_budget(cfg, r) == 2000);
  cfg = config(Strategy::Random, 7, 3);
  CHECK(round_budget(cfg, 0) == 3);
  CHECK(round_budget(cfg, 1) == 2);
  CHECK(round_budget(cfg, 2) == 2);
  CHECK(round_seed(cfg, 2) == 102);
}

TEST_CASE("B=10000 over K=5 rounds selects 2000 per round") {
  SplitMix64 rng(41);
  const Dataset pool = testing::random_seq_pool(rng, 12000, 2, "s", 4);
  StaticProvider provider({pool, std::nullopt, std::nullopt, std::nullopt});
  const auto plans = run_loop(config(Strategy::Random, 10000, 5), provider);
  REQUIRE(plans.size() == 5);
  std::set<std::string> seen;
  for (std::size_t r = 0; r < 5; ++r) {
    CHECK(plans[r].requested == 2000);
    CHECK(plans[r].chosen.size() == 2000);
    CHECK(plans[r].round == static_cast<int>(r + 1));
    CHECK(plans[r].seed == 100 + r);
    for (const auto& id : plans[r].chosen) CHECK(seen.insert(id).second);
  }
}

TEST_CASE("rounds never re-select earlier ids") {
  SplitMix64 rng(42);
  RoundInputs in{testing::random_seq_pool(rng, 60, 3, "s", 3), testing::random_seq_pool(rng, 5, 3, "t"),
                 std::nullopt, std::nullopt};
  for (Strategy s : {Strategy::Random, Strategy::Egalitarian, Strategy::AverageDist, Strategy::Uncertainty,
                     Strategy::KnnUncertainty, Strategy::Gold}) {
    const ALConfig cfg = config(s, 7, 3);
    RoundState state;
    auto [p1, s1] = run_round(cfg, in, state);
    auto [p2, s2] = run_round(cfg, in, s1);
    auto [p3, s3] = run_round(cfg, in, s2);
    CHECK(p1.chosen.size() == 3);
    CHECK(p2.chosen.size() == 2);
    CHECK(p3.chosen.size() == 2);
    std::set<std::string> all(p1.chosen.begin(), p1.chosen.end());
    for (const auto& id : p2.chosen) CHECK(all.insert(id).second);
    for (const auto& id : p3.chosen) CHECK(all.insert(id).second);
    CHECK(s3.exclusions.ids == all);
    CHECK(s3.plan_history.size() == 3);
    CHECK(code_of([&] { run_round(cfg, in, s3); }) == ErrorCode::BudgetExhausted);
  }
}

TEST_CASE("K=1 budget sweep yields plans of exactly those sizes") {
  SplitMix64 rng(43);
  const Dataset pool = testing::random_seq_pool(rng, 1500, 2);
  for (std::size_t b : {5, 10, 50, 100, 250, 500, 1000}) {
    StaticProvider provider({pool, std::nullopt, std::nullopt, std::nullopt});
    const auto plans = run_loop(config(Strategy::Uncertainty, b, 1), provider);
    REQUIRE(plans.size() == 1);
    CHECK(plans[0].chosen.size() == b);
  }
}

TEST_CASE("pool is de-duplicated before selection") {
  std::vector<Example> ex;
  for (int i = 0; i < 6; ++i) {
    ex.push_back(testing::seq_example("e" + std::to_string(i), {0.0}, {0.5, 0.5}));
    ex.back().text_hash = static_cast<std::uint64_t>(i % 2);
  }
  RoundInputs in{testing::seq_dataset(1, ex), std::nullopt, std::nullopt, std::nullopt};
  const auto [plan, state] = run_round(config(Strategy::Random, 4, 1), in, {});
  CHECK(std::set<std::string>(plan.chosen.begin(), plan.chosen.end()) == std::set<std::string>{"e0", "e1"});
  CHECK(plan.shortfall);
}

TEST_CASE("exhausted pool yields an empty shortfall plan") {
  SplitMix64 rng(44);
  RoundInputs in{testing::random_seq_pool(rng, 3, 2), std::nullopt, std::nullopt, std::nullopt};
  const ALConfig cfg = config(Strategy::Random, 6, 2);
  auto [p1, s1] = run_round(cfg, in, {});
  auto [p2, s2] = run_round(cfg, in, s1);
  CHECK(p1.chosen.size() == 3);
  CHECK(p2.chosen.empty());
  CHECK(p2.shortfall);
}

TEST_CASE("gold draws from the gold pool when one is given") {
  SplitMix64 rng(45);
  RoundInputs in{testing::random_seq_pool(rng, 20, 2), std::nullopt, testing::random_seq_pool(rng, 20, 2, "g"),
                 std::nullopt};
  const auto [plan, _] = run_round(config(Strategy::Gold, 5, 1), in, {});
  for (const auto& id : plan.chosen) CHECK(id[0] == 'g');
}

TEST_CASE("configuration errors") {
  CHECK(code_of([] { check_config(config(Strategy::Random, 0, 1)); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { check_config(config(Strategy::Random, 3, 0)); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { check_config(config(Strategy::Random, 3, 4)); }) == ErrorCode::InvalidArgument);
  ALConfig knn = config(Strategy::KnnUncertainty, 3, 1);
  knn.k.reset();
  CHECK(code_of([&] { check_config(knn); }) == ErrorCode::NonPositiveK);
  ALConfig qa = config(Strategy::Uncertainty, 3, 1);
  qa.scorer = Scorer::SumProb;
  CHECK(code_of([&] { check_config(qa); }) == ErrorCode::ScorerTaskMismatch);
  CHECK(config(Strategy::Uncertainty, 3, 1).effective_scorer() == Scorer::Margin);

  SplitMix64 rng(46);
  RoundInputs no_targets{testing::random_seq_pool(rng, 5, 2), std::nullopt, std::nullopt, std::nullopt};
  CHECK(code_of([&] { run_round(config(Strategy::AverageDist, 2, 1), no_targets, {}); }) ==
        ErrorCode::EmptyTargetPool);
}

TEST_CASE("ids must stay stable across rounds") {
  SplitMix64 rng(47);
  ForgetfulProvider provider(testing::random_seq_pool(rng, 30, 2));
  CHECK(code_of([&] { run_loop(config(Strategy::Random, 6, 3), provider); }) == ErrorCode::ProviderFailure);
}

TEST_CASE("provider task must match the configuration") {
  SplitMix64 rng(48);
  Dataset pool = testing::random_seq_pool(rng, 5, 2);
  pool.task = TaskKind::TokenLevel;
  StaticProvider provider({pool, std::nullopt, std::nullopt, std::nullopt});
  CHECK(code_of([&] { run_loop(config(Strategy::Random, 2, 1), provider); }) == ErrorCode::ProviderFailure);
}

TEST_CASE("directory handshake") {
  TempDir tmp;
  SplitMix64 rng(49);
  const Dataset source = testing::random_seq_pool(rng, 40, 3, "s", 2);
  Dataset target = testing::random_seq_pool(rng, 4, 3, "t");
  target.role = DatasetRole::Target;

  const ALConfig cfg = config(Strategy::KnnUncertainty, 10, 2);
  DirectoryProvider provider(tmp.path(), std::chrono::milliseconds(20000), std::chrono::milliseconds(5));

  // the model side: publish a round, wait for its plan, publish the next one
  std::thread model([&] {
    for (int r = 1; r <= 2; ++r) {
      const fs::path dir = tmp / ("round_" + std::to_string(r));
      write_dataset(source, dir / "source");
      write_dataset(target, dir / "target");
      write_text_file_atomic(dir / "READY", "");
      while (!fs::exists(dir / "DONE")) std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  });
  const auto plans = run_loop(cfg, provider);
  model.join();

  REQUIRE(plans.size() == 2);
  CHECK(read_plan(tmp / "round_1" / "plan.json") == plans[0]);
  CHECK(read_plan(tmp / "round_2" / "plan.json") == plans[1]);
  CHECK(plans[0].chosen.size() == 5);
  CHECK(plans[1].chosen.size() == 5);
}

TEST_CASE("handshake times out without READY") {
  TempDir tmp;
  DirectoryProvider provider(tmp.path(), std::chrono::milliseconds(30), std::chrono::milliseconds(5));
  CHECK(code_of([&] { run_loop(config(Strategy::Random, 2, 1), provider); }) == ErrorCode::ProviderFailure);
}
