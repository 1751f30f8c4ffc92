#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "medrank/matrix.hpp"
#include "medrank/tokenizer.hpp"

namespace medrank {

class EmbeddingFormatError : public std::runtime_error {
 public:
  EmbeddingFormatError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class OovPolicy { kZero, kMean };

/// Frozen token -> vector table. Lookup is total: unknown tokens resolve to
/// the OOV vector. Immutable after construction as far as callers holding a
/// const reference are concerned, so concurrent reads are safe.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim);

  /// Returns false (and leaves the table unchanged) if the token exists.
  /// Throws std::invalid_argument on wrong arity or non-finite values.
  bool insert(std::string token, std::span<const double> vec);

  std::span<const double> lookup(std::string_view token) const;
  bool contains(std::string_view token) const;

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::span<const double> oov_vector() const { return oov_; }

  void set_oov_policy(OovPolicy policy);

  /// Fingerprint over dimension, tokens in insertion order, all vector bytes
  /// and the OOV vector.
  std::uint64_t content_hash() const;

 private:
  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const {
      return std::hash<std::string_view>{}(s);
    }
  };

  std::size_t dim_;
  std::vector<std::string> tokens_;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t, StringHash, std::equal_to<>> index_;
  std::vector<double> oov_;
};

/// Reads the word2vec text format: a "count dim" header, then one line per
/// token with `dim` space-separated reals. Duplicate tokens keep the first
/// vector and log a warning.
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               OovPolicy oov = OovPolicy::kZero);
EmbeddingTable parse_embeddings(std::string_view content,
                                OovPolicy oov = OovPolicy::kZero);

/// Writes a table in the same text format (full round-trip precision).
void save_embeddings(const EmbeddingTable& table,
                     const std::filesystem::path& path);

/// One row per token; sequences shorter than min_len are padded with the OOV
/// vector so a convolution of window min_len is always defined.
Matrix embed(const TokenSequence& seq, const EmbeddingTable& table,
             std::size_t min_len);

}  // namespace medrank
