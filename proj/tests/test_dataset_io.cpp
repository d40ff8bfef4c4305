#include <doctest.h>

#include <json.hpp>

#include "demux/core.hpp"
#include "demux/dataset_io.hpp"
#include "demux/error.hpp"
#include "support.hpp"

using namespace demux;
using testing::kFixtures;
using testing::slurp;
using testing::TempDir;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

void copy_dir(const fs::path& from, const fs::path& to) {
  fs::create_directories(to);
  fs::copy(from, to, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
}

}  // namespace

TEST_CASE("tensor header layout") {
  TempDir tmp;
  Tensor t;
  t.dims = {2, 3};
  t.f32 = {1, 2, 3, 4, 5, 6};
  write_tensor(tmp / "t.dmx", t);
  const std::string bytes = slurp(tmp / "t.dmx");
  REQUIRE(bytes.size() == 4 + 4 + 4 + 2 * 8 + 6 * 4);
  CHECK(bytes.substr(0, 4) == "DMX1");
  CHECK(bytes[4] == 1);  // f32
  CHECK(bytes[8] == 2);  // ndim
  CHECK(bytes[12] == 2);
  CHECK(bytes[20] == 3);
  // 1.0f little-endian is 00 00 80 3f
  CHECK(static_cast<unsigned char>(bytes[28 + 2]) == 0x80);
  CHECK(static_cast<unsigned char>(bytes[28 + 3]) == 0x3f);

  const Tensor back = read_tensor(tmp / "t.dmx");
  CHECK(back.dims == t.dims);
  CHECK(back.f32 == t.f32);
}

TEST_CASE("tensor errors") {
  TempDir tmp;
  Tensor t;
  t.type = Tensor::ElementType::U32;
  t.dims = {3};
  t.u32 = {7, 8, 9};
  write_tensor(tmp / "u.dmx", t);
  const std::string bytes = slurp(tmp / "u.dmx");
  CHECK(read_tensor(tmp / "u.dmx").u32 == t.u32);

  write_bytes(tmp / "short.dmx", bytes.substr(0, bytes.size() - 1));
  CHECK(code_of([&] { read_tensor(tmp / "short.dmx"); }) == ErrorCode::TruncatedTensor);
  write_bytes(tmp / "long.dmx", bytes + "x");
  CHECK(code_of([&] { read_tensor(tmp / "long.dmx"); }) == ErrorCode::TruncatedTensor);
  write_bytes(tmp / "magic.dmx", "DMX2" + bytes.substr(4));
  CHECK(code_of([&] { read_tensor(tmp / "magic.dmx"); }) == ErrorCode::BadMagic);
  std::string bad_type = bytes;
  bad_type[4] = 9;
  write_bytes(tmp / "type.dmx", bad_type);
  CHECK(code_of([&] { read_tensor(tmp / "type.dmx"); }) == ErrorCode::ParseError);
}

TEST_CASE("minimal pooled dataset loads with its dimension") {
  TempDir tmp;
  const Dataset d = testing::seq_dataset(5, {testing::seq_example("only", {1, 2, 3, 4, 5}, {0.25, 0.75})});
  write_dataset(d, tmp / "d");
  const Dataset back = read_dataset(tmp / "d");
  CHECK(back.dim == 5);
  REQUIRE(back.size() == 1);
  CHECK(back.examples[0].representation == std::vector<double>{1, 2, 3, 4, 5});
  CHECK(back.examples[0].text_hash == d.examples[0].text_hash);
  CHECK(std::get<SeqProbs>(back.examples[0].payload).probs == std::vector<double>{0.25, 0.75});
}

TEST_CASE("empty dataset still validates") {
  TempDir tmp;
  write_dataset(testing::seq_dataset(3, {}), tmp / "e");
  CHECK(read_dataset(tmp / "e").empty());
}

TEST_CASE("fixtures load") {
  const Dataset seq = read_dataset(kFixtures / "seq_pooled");
  CHECK(seq.size() == 5);
  CHECK(seq.task == TaskKind::SequenceLevel);
  CHECK(seq.examples[2].language == "hi");
  CHECK(seq.examples[0].text_hash == fnv1a64("de-0"));

  const Dataset qa = read_dataset(kFixtures / "qa_pooled");
  CHECK(qa.task == TaskKind::SpanQA);
  CHECK(std::get<SpanLogProbs>(qa.examples[0].payload).end_logp == std::vector<double>{-0.5, -1.0, -8.0});

  // raw token rows are pooled on load: mean of sub-words 0, 1 and 3
  const Dataset tok = read_dataset(kFixtures / "token_raw");
  CHECK(tok.task == TaskKind::TokenLevel);
  REQUIRE(tok.size() == 2);
  CHECK(tok.examples[0].representation[0] == doctest::Approx(1.0));
  CHECK(tok.examples[0].representation[1] == doctest::Approx(1.0));
  CHECK(tok.examples[0].representation[2] == doctest::Approx(4.0 / 3.0));
  CHECK(tok.examples[1].representation == std::vector<double>{3, 4, 5});
  CHECK(std::get<TokenProbs>(tok.examples[0].payload).num_tokens == 4);
}

TEST_CASE("write, read, write is byte-stable against the fixtures") {
  TempDir tmp;
  for (const char* name : {"seq_pooled", "qa_pooled"}) {
    write_dataset(read_dataset(kFixtures / name), tmp / name);
    for (const char* file : {"manifest.json", "embeddings.dmx", "payload.dmx"}) {
      CHECK_MESSAGE(slurp(tmp / name / file) == slurp(kFixtures / name / file), name, "/", file);
    }
  }
  // raw input is pooled on the first read, so stability starts at the second write
  write_dataset(read_dataset(kFixtures / "token_raw"), tmp / "tok1");
  write_dataset(read_dataset(tmp / "tok1"), tmp / "tok2");
  for (const char* file : {"manifest.json", "embeddings.dmx", "payload.dmx"}) {
    CHECK(slurp(tmp / "tok1" / file) == slurp(tmp / "tok2" / file));
  }
  write_plan(read_plan(kFixtures / "plan.json"), tmp / "plan.json");
  CHECK(slurp(tmp / "plan.json") == slurp(kFixtures / "plan.json"));
}

TEST_CASE("read_dataset errors") {
  TempDir tmp;
  CHECK(code_of([&] { read_dataset(tmp / "nothing"); }) == ErrorCode::IOFailure);

  copy_dir(kFixtures / "seq_pooled", tmp / "trunc");
  const std::string emb = slurp(tmp / "trunc" / "embeddings.dmx");
  write_bytes(tmp / "trunc" / "embeddings.dmx", emb.substr(0, emb.size() - 1));
  try {
    read_dataset(tmp / "trunc");
    FAIL("expected TruncatedTensor");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TruncatedTensor);
    CHECK(std::string(e.what()).find("embeddings.dmx") != std::string::npos);
  }

  auto edit_manifest = [&](const std::string& dir, auto&& fn) {
    copy_dir(kFixtures / "seq_pooled", tmp / dir);
    auto j = nlohmann::json::parse(slurp(tmp / dir / "manifest.json"));
    fn(j);
    write_bytes(tmp / dir / "manifest.json", j.dump(2));
    return tmp / dir;
  };
  CHECK(code_of([&] { read_dataset(edit_manifest("v2", [](auto& j) { j["format_version"] = 2; })); }) ==
        ErrorCode::VersionMismatch);
  CHECK(code_of([&] { read_dataset(edit_manifest("task", [](auto& j) { j["task"] = "ner"; })); }) ==
        ErrorCode::ParseError);
  CHECK(code_of([&] {
          read_dataset(edit_manifest("slice", [](auto& j) { j["examples"][0]["embedding"] = {40, 1}; }));
        }) == ErrorCode::InvariantViolation);
  CHECK(code_of([&] {
          read_dataset(edit_manifest("hash", [](auto& j) { j["examples"][0]["text_hash"] = "xyz"; }));
        }) == ErrorCode::ParseError);

  write_bytes(tmp / "junk.json", "{not json");
  fs::create_directories(tmp / "junk");
  fs::rename(tmp / "junk.json", tmp / "junk" / "manifest.json");
  CHECK(code_of([&] { read_dataset(tmp / "junk"); }) == ErrorCode::ParseError);
}

TEST_CASE("payload rows must sum to one") {
  TempDir tmp;
  Dataset d = testing::seq_dataset(1, {testing::seq_example("a", {0}, {0.5, 0.5})});
  write_dataset(d, tmp / "d");
  Tensor p = read_tensor(tmp / "d" / "payload.dmx");
  p.f32 = {0.5f, 0.4f};
  write_tensor(tmp / "d" / "payload.dmx", p);
  try {
    read_dataset(tmp / "d");
    FAIL("expected InvariantViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvariantViolation);
    CHECK(std::string(e.what()).find("probability-sum") != std::string::npos);
  }
}

TEST_CASE("raw token alignment must strictly increase") {
  TempDir tmp;
  RawExample r;
  r.id = "x";
  r.num_tokens = 2;
  r.token_embeddings = {1, 2, 3, 4};
  r.alignment = WordAlignment{{1, 1}};
  r.payload = TokenProbs{2, 2, {0.5, 0.5, 0.5, 0.5}};
  write_raw_dataset(TaskKind::TokenLevel, 2, {r}, tmp / "raw");
  CHECK(code_of([&] { read_dataset(tmp / "raw"); }) == ErrorCode::InvariantViolation);
}

TEST_CASE("plans round-trip in canonical form") {
  TempDir tmp;
  const SelectionPlan p = read_plan(kFixtures / "plan.json");
  CHECK(p.round == 2);
  CHECK(p.strategy == Strategy::KnnUncertainty);
  CHECK(p.final_k == 10);
  CHECK(p.scorer == Scorer::Margin);
  CHECK(p.chosen == std::vector<std::string>{"hi-0", "de-0", "sw-0"});

  write_plan(p, tmp / "a.json");
  write_plan(p, tmp / "b.json");
  CHECK(slurp(tmp / "a.json") == slurp(tmp / "b.json"));
  CHECK(slurp(tmp / "a.json") == slurp(kFixtures / "plan.json"));
  CHECK(read_plan(tmp / "a.json") == p);
  CHECK_FALSE(fs::exists(tmp / "a.json.tmp"));
}

TEST_CASE("hand-edited long scores are canonicalized") {
  auto j = nlohmann::json::parse(slurp(kFixtures / "plan.json"));
  std::string text = j.dump(2);
  // 20 significant digits, as a person might paste them
  const std::string key = "\"de-0\": -0.25";
  const auto at = text.find(key);
  REQUIRE(at != std::string::npos);
  text.replace(at, key.size(), "\"de-0\": -0.24999999999999999991");
  const SelectionPlan p = parse_plan(text);
  CHECK(p.scores.at("de-0") == -0.25);
  CHECK(serialize_plan(p) == slurp(kFixtures / "plan.json"));

  text.replace(text.find("-0.24999999999999999991"), 23, "0.12345678912345678912");
  CHECK(parse_plan(text).scores.at("de-0") == 0.123456789);
}

TEST_CASE("plan parse errors") {
  CHECK(code_of([] { parse_plan("{"); }) == ErrorCode::ParseError);
  auto j = nlohmann::json::parse(slurp(kFixtures / "plan.json"));
  j["format_version"] = 3;
  CHECK(code_of([&] { parse_plan(j.dump()); }) == ErrorCode::VersionMismatch);
  j["format_version"] = 1;
  j["strategy"] = "litmus";
  CHECK(code_of([&] { parse_plan(j.dump()); }) == ErrorCode::ParseError);
}
