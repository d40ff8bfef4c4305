// Regenerates tests/fixtures. Run once and commit the output:
//   build/tests/make_fixtures tests/fixtures
// Values are dyadic rationals so binary32 storage is exact.

#include <cstdio>
#include <string>

#include "demux/core.hpp"
#include "demux/dataset_io.hpp"

using namespace demux;

namespace {

Example ex(const std::string& id, const std::string& lang, std::vector<double> rep, UncertaintyPayload payload) {
  Example e;
  e.id = id;
  e.language = lang;
  e.text_hash = fnv1a64(id);
  e.representation = std::move(rep);
  e.payload = std::move(payload);
  return e;
}

Dataset seq(std::size_t dim, DatasetRole role = DatasetRole::Source) {
  Dataset d;
  d.task = TaskKind::SequenceLevel;
  d.dim = dim;
  d.role = role;
  return d;
}

void sequence_fixture(const fs::path& root) {
  Dataset d = seq(4);
  d.examples = {
      ex("de-0", "de", {0.5, -1.25, 2.0, 0.0}, SeqProbs{{0.5, 0.25, 0.25}}),
      ex("de-1", "de", {1.0, 0.75, -0.5, 3.5}, SeqProbs{{0.125, 0.75, 0.125}}),
      ex("hi-0", "hi", {-2.0, 0.25, 0.125, 1.0}, SeqProbs{{0.375, 0.375, 0.25}}),
      ex("hi-1", "hi", {0.0, 0.0, 0.0, 0.0}, SeqProbs{{1.0, 0.0, 0.0}}),
      ex("sw-0", "sw", {4.0, -4.0, 1.5, -0.25}, SeqProbs{{0.0625, 0.4375, 0.5}}),
  };
  write_dataset(d, root / "seq_pooled");
}

void qa_fixture(const fs::path& root) {
  Dataset d;
  d.task = TaskKind::SpanQA;
  d.dim = 2;
  d.examples = {
      ex("q-0", "fi", {1.0, 2.0}, SpanLogProbs{{-0.125, -2.25, -4.0}, {-0.5, -1.0, -8.0}}),
      ex("q-1", "fi", {-1.0, 0.5}, SpanLogProbs{{0.0, -16.0}, {-0.25, -0.75}}),
  };
  write_dataset(d, root / "qa_pooled");
}

void token_fixture(const fs::path& root) {
  std::vector<RawExample> rows;
  RawExample a;
  a.id = "tok-0";
  a.language = "tr";
  a.text_hash = fnv1a64(a.id);
  a.num_tokens = 4;  // words start at sub-words 0, 1 and 3
  a.token_embeddings = {2, 0, 0, 0, 2, 0, 9, 9, 9, 1, 1, 4};
  a.alignment = WordAlignment{{0, 1, 3}};
  a.payload = TokenProbs{4, 2, {0.75, 0.25, 0.5, 0.5, 0.875, 0.125, 0.625, 0.375}};
  rows.push_back(a);
  RawExample b;
  b.id = "tok-1";
  b.language = "ja";
  b.text_hash = fnv1a64(b.id);
  b.num_tokens = 2;
  b.token_embeddings = {3, 4, 5, 7, 7, 7};
  b.alignment = WordAlignment{{0}};
  b.payload = TokenProbs{2, 2, {0.5, 0.5, 0.25, 0.75}};
  rows.push_back(b);
  write_raw_dataset(TaskKind::TokenLevel, 3, rows, root / "token_raw");
}

void plan_fixture(const fs::path& root) {
  SelectionPlan p;
  p.round = 2;
  p.strategy = Strategy::KnnUncertainty;
  p.seed = 17;
  p.requested = 3;
  p.final_k = 10;
  p.scorer = Scorer::Margin;
  p.chosen = {"hi-0", "de-0", "sw-0"};
  p.scores = {{"hi-0", -0.0}, {"de-0", -0.25}, {"sw-0", canonical_score(-1.0 / 3.0)}};
  p.lang_counts = {{"de", 1}, {"hi", 1}, {"sw", 1}};
  write_plan(p, root / "plan.json");
}

// One target per well separated source point; with k = 1 each target's
// neighborhood mean is exactly its source point's uncertainty. Two-class
// probabilities 0.5 + j/64 give margins j/32.
void correlation_fixture(const fs::path& root, const std::string& name, int (*target_j)(int)) {
  Dataset source = seq(2);
  Dataset target = seq(2, DatasetRole::Target);
  for (int j = 1; j <= 15; ++j) {
    const double x = 10.0 * j;
    const double p = 0.5 + j / 64.0;
    source.examples.push_back(ex("s" + std::to_string(j), "xx", {x, 0.0}, SeqProbs{{p, 1.0 - p}}));
    const double pt = 0.5 + target_j(j) / 64.0;
    target.examples.push_back(ex("t" + std::to_string(j), "yy", {x, 0.5}, SeqProbs{{pt, 1.0 - pt}}));
  }
  write_dataset(source, root / name / "source");
  write_dataset(target, root / name / "target");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s OUT_DIR\n", argv[0]);
    return 1;
  }
  const fs::path root = argv[1];
  sequence_fixture(root);
  qa_fixture(root);
  token_fixture(root);
  plan_fixture(root);
  correlation_fixture(root, "corr_linear", [](int j) { return j; });
  correlation_fixture(root, "corr_anti", [](int j) { return 16 - j; });
  correlation_fixture(root, "corr_constant", [](int) { return 8; });
  return 0;
}
