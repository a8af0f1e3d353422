#pragma once
// Versioned binary checkpoint. Everything needed to rebuild a model is in
// one file: spec, vocabulary, embedding matrix, source-domain names and every
// registry entry. Values are stored as raw IEEE bytes, so a round trip is
// exact. A trailing FNV-1a checksum catches truncation and corruption.
//
// Layout (little-endian):
//   "STGCKPT\0" u32 version u8 precision
//   str spec  u64 vocab_hash  str vocab  u32 n {str domain}
//   u64 rows u64 dim u8 frozen f64[rows*dim]
//   u32 n {str name u8 group u8 rank u64 d0 u64 d1 Real[size]}
//   u64 checksum
// where str = u64 length + bytes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "stancegen/data.hpp"
#include "stancegen/model.hpp"
#include "stancegen/tensor.hpp"

namespace stancegen {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string format_spec(const ModelSpec& spec);
ModelSpec parse_spec(std::string_view text);  // throws CheckpointError

template <typename Real>
std::string encode_checkpoint(const Model<Real>& model, const Vocabulary& vocab,
                              const std::vector<std::string>& domain_names);

template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const Model<Real>& model,
                     const Vocabulary& vocab, const std::vector<std::string>& domain_names);

struct Checkpoint {
  Precision precision = Precision::Float32;
  ModelSpec spec;
  Vocabulary vocab;
  std::vector<std::string> domain_names;
  std::variant<Model<float>, Model<double>> model;
};

// Throws CheckpointError on any malformed, truncated or corrupted input.
Checkpoint decode_checkpoint(std::string_view bytes);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stancegen
