#include "demux/dataset_io.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "demux/core.hpp"
#include "demux/error.hpp"

namespace demux {

namespace {

using json = nlohmann::json;

constexpr std::array<char, 4> kMagic = {'D', 'M', 'X', '1'};
constexpr const char* kEmbeddingsFile = "embeddings.dmx";
constexpr const char* kPayloadFile = "payload.dmx";
constexpr const char* kAlignmentsFile = "alignments.dmx";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint64_t get_u64(const unsigned char* p) {
  return static_cast<std::uint64_t>(get_u32(p)) | static_cast<std::uint64_t>(get_u32(p + 4)) << 32;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s, const std::string& id) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (s.empty() || s.size() > 16 || ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::ParseError, "example '" + id + "' has malformed text_hash '" + s + "'");
  }
  return v;
}

[[noreturn]] void bad_slice(const std::string& id, const std::string& what) {
  throw Error(ErrorCode::InvariantViolation,
              "example '" + id + "' violates slice-in-bounds: " + what + " slice lies outside its tensor");
}

struct Slice {
  std::uint64_t offset = 0;
  std::uint64_t count = 0;
};

Slice read_slice(const json& ex, const char* key, const std::string& id, std::uint64_t rows) {
  const auto& arr = ex.at(key);
  if (!arr.is_array() || arr.size() != 2) {
    throw Error(ErrorCode::ParseError, "example '" + id + "': '" + key + "' must be [offset, count]");
  }
  Slice s{arr[0].get<std::uint64_t>(), arr[1].get<std::uint64_t>()};
  if (s.offset > rows || s.count > rows - s.offset) bad_slice(id, key);
  return s;
}

std::vector<double> rows_of(const Tensor& t, Slice s) {
  const std::uint64_t cols = t.dims.size() > 1 ? t.dims[1] : 1;
  const auto begin = t.f32.begin() + static_cast<std::ptrdiff_t>(s.offset * cols);
  return {begin, begin + static_cast<std::ptrdiff_t>(s.count * cols)};
}

void require_matrix(const Tensor& t, const std::string& name, Tensor::ElementType type) {
  if (t.type != type) {
    throw Error(ErrorCode::InvariantViolation, name + " has the wrong element type");
  }
  const std::size_t want_ndim = type == Tensor::ElementType::U32 ? 1 : 2;
  if (t.dims.size() != want_ndim) {
    throw Error(ErrorCode::InvariantViolation,
                name + " must have " + std::to_string(want_ndim) + " dimension(s)");
  }
}

UncertaintyPayload decode_payload(TaskKind task, const Tensor& payload, Slice s, const std::string& id) {
  const std::uint64_t cols = payload.dims[1];
  std::vector<double> values = rows_of(payload, s);
  switch (task) {
    case TaskKind::SequenceLevel:
      if (s.count != 1) {
        throw Error(ErrorCode::InvariantViolation,
                    "example '" + id + "' violates payload-rows: sequence payload must be one row");
      }
      return SeqProbs{std::move(values)};
    case TaskKind::TokenLevel:
      return TokenProbs{static_cast<std::size_t>(s.count), static_cast<std::size_t>(cols),
                        std::move(values)};
    case TaskKind::SpanQA: {
      if (cols != 2) {
        throw Error(ErrorCode::InvariantViolation,
                    "payload.dmx for a qa dataset must have two columns (start, end)");
      }
      SpanLogProbs span;
      for (std::uint64_t r = 0; r < s.count; ++r) {
        span.start_logp.push_back(values[2 * r]);
        span.end_logp.push_back(values[2 * r + 1]);
      }
      return span;
    }
  }
  return SeqProbs{};
}

/// Payload rows and column count for one example.
std::pair<std::vector<double>, std::size_t> encode_payload(const UncertaintyPayload& payload) {
  if (const auto* seq = std::get_if<SeqProbs>(&payload)) return {seq->probs, seq->probs.size()};
  if (const auto* tok = std::get_if<TokenProbs>(&payload)) return {tok->values, tok->num_classes};
  const auto& span = std::get<SpanLogProbs>(payload);
  std::vector<double> out;
  out.reserve(2 * span.start_logp.size());
  for (std::size_t i = 0; i < span.start_logp.size(); ++i) {
    out.push_back(span.start_logp[i]);
    out.push_back(i < span.end_logp.size() ? span.end_logp[i] : 0.0);
  }
  return {std::move(out), 2};
}

/// Accumulates payload rows and checks that the column count stays fixed.
struct PayloadWriter {
  std::vector<float> values;
  std::uint64_t rows = 0;
  std::optional<std::size_t> cols;

  Slice append(const UncertaintyPayload& payload, const std::string& id) {
    auto [flat, c] = encode_payload(payload);
    if (cols && *cols != c) {
      throw Error(ErrorCode::InvalidArgument,
                  "example '" + id + "' has " + std::to_string(c) + " payload columns, expected " +
                      std::to_string(*cols));
    }
    cols = c;
    Slice s{rows, c == 0 ? 0 : flat.size() / c};
    for (double v : flat) values.push_back(static_cast<float>(v));
    rows += s.count;
    return s;
  }

  Tensor tensor() const {
    Tensor t;
    t.dims = {rows, cols.value_or(0)};
    t.f32 = values;
    return t;
  }
};

json slice_json(Slice s) { return json::array({s.offset, s.count}); }

json plan_to_json(const SelectionPlan& plan) {
  json j;
  j["format_version"] = kFormatVersion;
  j["round"] = plan.round;
  j["strategy"] = std::string(strategy_name(plan.strategy));
  j["seed"] = plan.seed;
  j["requested"] = plan.requested;
  j["final_k"] = plan.final_k ? json(*plan.final_k) : json(nullptr);
  j["scorer"] = plan.scorer ? json(std::string(scorer_name(*plan.scorer))) : json(nullptr);
  j["chosen"] = plan.chosen;
  json scores = json::object();
  for (const auto& [id, v] : plan.scores) scores[id] = canonical_score(v);
  j["scores"] = std::move(scores);
  json counts = json::object();
  for (const auto& [lang, n] : plan.lang_counts) counts[lang] = n;
  j["lang_counts"] = std::move(counts);
  j["shortfall"] = plan.shortfall;
  j["prng"] = plan.prng;
  return j;
}

}  // namespace

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IOFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IOFailure, "cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error(ErrorCode::IOFailure, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IOFailure, "cannot rename onto " + path.string() + ": " + ec.message());
}

Tensor read_tensor(const fs::path& path) {
  const std::string bytes = read_text_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::string name = path.filename().string();
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic.data(), 4) != 0) {
    throw Error(ErrorCode::BadMagic, name + " does not start with DMX1");
  }
  if (bytes.size() < 12) throw Error(ErrorCode::TruncatedTensor, name + " header is truncated");
  Tensor t;
  const std::uint32_t type = get_u32(p + 4);
  if (type != 1 && type != 2) {
    throw Error(ErrorCode::ParseError, name + " has unknown element type " + std::to_string(type));
  }
  t.type = static_cast<Tensor::ElementType>(type);
  const std::uint32_t ndim = get_u32(p + 8);
  const std::uint64_t header = 12 + 8ULL * ndim;
  if (bytes.size() < header) throw Error(ErrorCode::TruncatedTensor, name + " header is truncated");
  for (std::uint32_t i = 0; i < ndim; ++i) t.dims.push_back(get_u64(p + 12 + 8 * i));
  const std::uint64_t count = t.element_count();
  const std::uint64_t expected = header + count * 4;
  if (bytes.size() != expected) {
    throw Error(ErrorCode::TruncatedTensor,
                name + " holds " + std::to_string(bytes.size()) + " bytes, header implies " +
                    std::to_string(expected));
  }
  const unsigned char* data = p + header;
  if (t.type == Tensor::ElementType::F32) {
    t.f32.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint32_t bits = get_u32(data + 4 * i);
      std::memcpy(&t.f32[i], &bits, 4);
    }
  } else {
    t.u32.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) t.u32[i] = get_u32(data + 4 * i);
  }
  return t;
}

void write_tensor(const fs::path& path, const Tensor& tensor) {
  const std::uint64_t count = tensor.element_count();
  const bool is_f32 = tensor.type == Tensor::ElementType::F32;
  if ((is_f32 ? tensor.f32.size() : tensor.u32.size()) != count) {
    throw Error(ErrorCode::InvalidArgument, "tensor data does not match its dims");
  }
  std::string out(kMagic.begin(), kMagic.end());
  out.reserve(12 + 8 * tensor.dims.size() + 4 * count);
  put_u32(out, static_cast<std::uint32_t>(tensor.type));
  put_u32(out, static_cast<std::uint32_t>(tensor.dims.size()));
  for (auto d : tensor.dims) put_u64(out, d);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    if (is_f32) {
      std::memcpy(&bits, &tensor.f32[i], 4);
    } else {
      bits = tensor.u32[i];
    }
    put_u32(out, bits);
  }
  write_text_file_atomic(path, out);
}

Dataset read_dataset(const fs::path& dir, DatasetRole role) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw Error(ErrorCode::IOFailure, "missing " + manifest_path.string());
  }
  json manifest;
  try {
    manifest = json::parse(read_text_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, manifest_path.string() + ": " + e.what());
  }

  Dataset ds;
  ds.role = role;
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kFormatVersion) {
      throw Error(ErrorCode::VersionMismatch,
                  "format_version " + std::to_string(version) + " is not supported (expected 1)");
    }
    const auto task = parse_task(manifest.at("task").get<std::string>());
    if (!task) throw Error(ErrorCode::ParseError, "unknown task kind in manifest");
    ds.task = *task;
    ds.dim = manifest.at("dim").get<std::size_t>();
    if (ds.dim == 0) throw Error(ErrorCode::InvariantViolation, "dim must be at least 1");
    const bool pooled = manifest.at("pooled").get<bool>();
    const auto& tensors = manifest.at("tensors");

    const Tensor emb = read_tensor(dir / tensors.at("embeddings").get<std::string>());
    require_matrix(emb, "embeddings tensor", Tensor::ElementType::F32);
    if (emb.dims[1] != ds.dim) {
      throw Error(ErrorCode::InvariantViolation, "embeddings tensor width " +
                                                     std::to_string(emb.dims[1]) + " != dim " +
                                                     std::to_string(ds.dim));
    }
    const Tensor payload = read_tensor(dir / tensors.at("payload").get<std::string>());
    require_matrix(payload, "payload tensor", Tensor::ElementType::F32);
    std::optional<Tensor> align;
    if (!pooled && ds.task == TaskKind::TokenLevel) {
      align = read_tensor(dir / tensors.at("alignments").get<std::string>());
      require_matrix(*align, "alignments tensor", Tensor::ElementType::U32);
    }

    const auto& examples = manifest.at("examples");
    ds.examples.reserve(examples.size());
    for (const auto& row : examples) {
      Example ex;
      ex.id = row.at("id").get<std::string>();
      ex.language = row.value("language", std::string("unknown"));
      ex.text_hash = parse_hex64(row.at("text_hash").get<std::string>(), ex.id);
      const Slice es = read_slice(row, "embedding", ex.id, emb.dims[0]);
      const Slice ps = read_slice(row, "payload", ex.id, payload.dims[0]);
      ex.payload = decode_payload(ds.task, payload, ps, ex.id);
      if (pooled) {
        if (es.count != 1) {
          throw Error(ErrorCode::InvariantViolation,
                      "example '" + ex.id + "' violates pooled-single-row: pooled embedding must be one row");
        }
        ex.representation = rows_of(emb, es);
      } else {
        const std::vector<double> raw = rows_of(emb, es);
        std::optional<WordAlignment> words;
        if (align) {
          const Slice as = read_slice(row, "alignment", ex.id, align->dims[0]);
          words = WordAlignment{{align->u32.begin() + static_cast<std::ptrdiff_t>(as.offset),
                                 align->u32.begin() + static_cast<std::ptrdiff_t>(as.offset + as.count)}};
          const auto& idx = words->first_subword_index;
          for (std::size_t i = 1; i < idx.size(); ++i) {
            if (idx[i] <= idx[i - 1]) {
              throw Error(ErrorCode::InvariantViolation,
                          "example '" + ex.id + "' violates alignment-increasing: indices must strictly increase");
            }
          }
        }
        try {
          ex.representation = pool_representation(
              {raw, static_cast<std::size_t>(es.count), ds.dim}, ds.task, words);
        } catch (const Error& e) {
          throw Error(ErrorCode::InvariantViolation,
                      "example '" + ex.id + "' violates pooling: " + e.what());
        }
      }
      ds.examples.push_back(std::move(ex));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, manifest_path.string() + ": " + e.what());
  }
  validate_dataset(ds);
  return ds;
}

void write_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  Tensor emb;
  emb.dims = {ds.size(), ds.dim};
  emb.f32.reserve(ds.size() * ds.dim);
  PayloadWriter payloads;
  json examples = json::array();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& ex = ds.examples[i];
    if (ex.representation.size() != ds.dim) {
      throw Error(ErrorCode::DimensionMismatch, "example '" + ex.id + "' has the wrong dimension");
    }
    for (double v : ex.representation) emb.f32.push_back(static_cast<float>(v));
    const Slice ps = payloads.append(ex.payload, ex.id);
    json row;
    row["id"] = ex.id;
    row["language"] = ex.language;
    row["text_hash"] = hex64(ex.text_hash);
    row["embedding"] = slice_json({i, 1});
    row["payload"] = slice_json(ps);
    examples.push_back(std::move(row));
  }
  json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["task"] = std::string(task_name(ds.task));
  manifest["dim"] = ds.dim;
  manifest["pooled"] = true;
  manifest["tensors"] = {{"embeddings", kEmbeddingsFile}, {"payload", kPayloadFile}};
  manifest["examples"] = std::move(examples);

  write_tensor(dir / kEmbeddingsFile, emb);
  write_tensor(dir / kPayloadFile, payloads.tensor());
  // the manifest goes last: a directory is complete once it exists
  write_text_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

void write_raw_dataset(TaskKind task, std::size_t dim, const std::vector<RawExample>& examples,
                       const fs::path& dir) {
  fs::create_directories(dir);
  Tensor emb;
  Tensor align;
  align.type = Tensor::ElementType::U32;
  PayloadWriter payloads;
  std::uint64_t emb_rows = 0;
  json rows = json::array();
  for (const auto& ex : examples) {
    if (ex.token_embeddings.size() != ex.num_tokens * dim) {
      throw Error(ErrorCode::DimensionMismatch, "example '" + ex.id + "' token matrix is not T x dim");
    }
    json row;
    row["id"] = ex.id;
    row["language"] = ex.language;
    row["text_hash"] = hex64(ex.text_hash);
    row["embedding"] = slice_json({emb_rows, ex.num_tokens});
    for (double v : ex.token_embeddings) emb.f32.push_back(static_cast<float>(v));
    emb_rows += ex.num_tokens;
    row["payload"] = slice_json(payloads.append(ex.payload, ex.id));
    if (task == TaskKind::TokenLevel) {
      const auto& idx = ex.alignment ? ex.alignment->first_subword_index : std::vector<std::uint32_t>{};
      row["alignment"] = slice_json({align.u32.size(), idx.size()});
      align.u32.insert(align.u32.end(), idx.begin(), idx.end());
    }
    rows.push_back(std::move(row));
  }
  emb.dims = {emb_rows, dim};
  align.dims = {align.u32.size()};

  json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["task"] = std::string(task_name(task));
  manifest["dim"] = dim;
  manifest["pooled"] = false;
  manifest["tensors"] = {{"embeddings", kEmbeddingsFile}, {"payload", kPayloadFile}};
  if (task == TaskKind::TokenLevel) manifest["tensors"]["alignments"] = kAlignmentsFile;
  manifest["examples"] = std::move(rows);

  write_tensor(dir / kEmbeddingsFile, emb);
  write_tensor(dir / kPayloadFile, payloads.tensor());
  if (task == TaskKind::TokenLevel) write_tensor(dir / kAlignmentsFile, align);
  write_text_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::string serialize_plan(const SelectionPlan& plan) { return plan_to_json(plan).dump(2) + "\n"; }

SelectionPlan parse_plan(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format_version").get<int>() != kFormatVersion) {
      throw Error(ErrorCode::VersionMismatch, "plan format_version is not 1");
    }
    SelectionPlan plan;
    plan.round = j.at("round").get<int>();
    const auto strategy = parse_strategy(j.at("strategy").get<std::string>());
    if (!strategy) throw Error(ErrorCode::ParseError, "unknown strategy in plan");
    plan.strategy = *strategy;
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.requested = j.at("requested").get<std::size_t>();
    if (!j.at("final_k").is_null()) plan.final_k = j.at("final_k").get<long long>();
    if (!j.at("scorer").is_null()) {
      plan.scorer = parse_scorer(j.at("scorer").get<std::string>());
      if (!plan.scorer) throw Error(ErrorCode::ParseError, "unknown scorer in plan");
    }
    plan.chosen = j.at("chosen").get<std::vector<std::string>>();
    for (const auto& [id, v] : j.at("scores").items()) plan.scores[id] = canonical_score(v.get<double>());
    for (const auto& [lang, n] : j.at("lang_counts").items()) plan.lang_counts[lang] = n.get<std::size_t>();
    plan.shortfall = j.at("shortfall").get<bool>();
    plan.prng = j.at("prng").get<std::string>();
    return plan;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("plan: ") + e.what());
  }
}

void write_plan(const SelectionPlan& plan, const fs::path& path) {
  write_text_file_atomic(path, serialize_plan(plan));
}

SelectionPlan read_plan(const fs::path& path) { return parse_plan(read_text_file(path)); }

}  // namespace demux
