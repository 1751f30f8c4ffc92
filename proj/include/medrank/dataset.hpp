#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "medrank/tokenizer.hpp"

namespace medrank {

/// One (Q, P_1..P_n, Y) example. Exactly one label is 1; positive_smns holds
/// every candidate name that is a valid answer (normalized as
/// join_tokens(tokenize(name))). `source` is the generic name of the labelled
/// positive and is the grouping key for train/heldout splits.
struct DatasetInstance {
  TokenSequence q;
  std::vector<TokenSequence> candidates;
  std::vector<int> labels;
  std::vector<std::string> positive_smns;
  std::string source;

  std::size_t n() const { return candidates.size(); }
  /// Index of the single positive label. Throws if the invariant is broken.
  std::size_t positive_index() const;
  /// Throws std::invalid_argument unless n >= 2, sizes agree and exactly one
  /// label is 1.
  void validate() const;

  bool operator==(const DatasetInstance&) const = default;
};

using Dataset = std::vector<DatasetInstance>;

/// JSONL, one object per line with keys q, candidates, labels,
/// positive_smns, source (in that order).
void write_dataset(const Dataset& data, std::ostream& out);
void write_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset(std::istream& in);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace medrank
