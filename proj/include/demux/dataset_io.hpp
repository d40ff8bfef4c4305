#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "demux/selection.hpp"
#include "demux/types.hpp"

namespace demux {

namespace fs = std::filesystem;

inline constexpr int kFormatVersion = 1;

/// A DMX tensor: "DMX1", u32 element type, u32 ndim, ndim x u64 dims, then the
/// row-major payload. Everything is little-endian.
struct Tensor {
  enum class ElementType : std::uint32_t { F32 = 1, U32 = 2 };

  ElementType type = ElementType::F32;
  std::vector<std::uint64_t> dims;
  std::vector<float> f32;
  std::vector<std::uint32_t> u32;

  std::uint64_t element_count() const;
};

Tensor read_tensor(const fs::path& path);
void write_tensor(const fs::path& path, const Tensor& tensor);

/// Loads and validates a dataset directory (manifest.json + .dmx tensors).
/// Raw-mode directories are pooled on load.
Dataset read_dataset(const fs::path& dir, DatasetRole role = DatasetRole::Source);

/// Writes a pooled-mode directory. Values are stored as binary32.
void write_dataset(const Dataset& ds, const fs::path& dir);

/// One example in raw mode: the token embeddings the engine pools itself.
struct RawExample {
  std::string id;
  std::string language = "unknown";
  std::uint64_t text_hash = 0;
  std::size_t num_tokens = 0;
  std::vector<double> token_embeddings;  // num_tokens x dim
  std::optional<WordAlignment> alignment;
  UncertaintyPayload payload;
};

void write_raw_dataset(TaskKind task, std::size_t dim, const std::vector<RawExample>& examples,
                       const fs::path& dir);

/// Canonical text form: sorted keys, shortest round-trip floats, LF, trailing newline.
std::string serialize_plan(const SelectionPlan& plan);
SelectionPlan parse_plan(const std::string& text);

/// Written to a temporary sibling and renamed into place.
void write_plan(const SelectionPlan& plan, const fs::path& path);
SelectionPlan read_plan(const fs::path& path);

/// Whole-file helpers shared by the CLI and the orchestrator.
std::string read_text_file(const fs::path& path);
void write_text_file_atomic(const fs::path& path, const std::string& text);

}  // namespace demux
