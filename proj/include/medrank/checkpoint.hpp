#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>

#include "medrank/encoder.hpp"

namespace medrank {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary layout, all integers u64 and all reals f64, little-endian:
///
///   "MIM1"
///   query tower:     dim, filters, window
///   candidate tower: dim, filters, window
///   query weights (F*w*d), query biases (F)
///   candidate weights, candidate biases
///   query table content hash, candidate table content hash
void save_checkpoint(const ModelParams& model, const std::filesystem::path& path);

/// Loads towers and binds the given tables. Throws CheckpointError when the
/// tables' content hashes differ from the ones recorded at save time.
ModelParams load_checkpoint(const std::filesystem::path& path,
                            std::shared_ptr<const EmbeddingTable> query_table,
                            std::shared_ptr<const EmbeddingTable> candidate_table);

}  // namespace medrank
