#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "medrank/dataset.hpp"
#include "medrank/entities.hpp"

namespace medrank {

/// A patient-education record: the generic name (SMN) and its lay "uses" text.
struct PemRecord {
  std::string generic_name;
  std::string uses;
  /// Allowed-type entity phrases of `uses`, normalized, in source order,
  /// deduplicated. Filled by populate_entity_caches().
  std::vector<std::string> entity_phrases;
  std::set<std::string> entity_set;
  bool entities_ready = false;

  /// join_tokens(tokenize(generic_name)): the key used in datasets.
  std::string smn() const;
};

using Corpus = std::vector<PemRecord>;

/// JSONL of {"generic_name": ..., "uses": ...}. Names must be non-empty and
/// unique after normalization.
Corpus read_corpus(std::istream& in);
Corpus load_corpus(const std::filesystem::path& path);

void populate_entity_caches(Corpus& corpus, const EntityExtractor& extractor,
                            const std::set<EntityType>& allowed, std::size_t threads = 1);

/// SMNs of all records whose entity set contains `dmp_phrase`.
std::set<std::string> positive_set(const std::string& dmp_phrase, const Corpus& corpus);

/// SMNs outside `positives` whose entity sets are disjoint from `dmp_entities`.
std::set<std::string> negative_set(const std::set<std::string>& dmp_entities,
                                   const Corpus& corpus, const std::set<std::string>& positives);

enum class DmpMode { kEntity, kNgram };

std::string_view to_string(DmpMode mode);
DmpMode parse_dmp_mode(std::string_view name);

struct GenerationResult {
  Dataset instances;
  std::size_t dmps_considered = 0;
  std::size_t skipped_dmps = 0;  // not enough eligible negatives
};

/// Builds n-candidate instances. Entity mode emits one DMP per entity phrase
/// of each record; n-gram mode one random n-gram per record. Each instance has
/// one positive drawn from the DMP's positive set and n-1 distinct negatives
/// whose entities are disjoint from every positive's entities; candidate order
/// is shuffled. Each record uses its own RNG stream derived from `seed`, so the
/// output does not depend on `threads`.
GenerationResult make_instances(const Corpus& corpus, std::size_t n, DmpMode mode,
                                std::uint64_t seed, std::size_t threads = 1);

/// Seeded partition of record names: returns the names assigned to the
/// training side (round(train_fraction * count) of them).
std::set<std::string> split_records(std::vector<std::string> names, double train_fraction,
                                    std::uint64_t seed);

struct SplitResult {
  Dataset train;
  Dataset heldout;
};

/// Partitions by instance source so every record lands on one side.
SplitResult split(const Dataset& instances, double train_fraction, std::uint64_t seed);

/// Keeps instances whose source is (or is not) in `names`.
SplitResult partition_by_source(const Dataset& instances, const std::set<std::string>& train_names);

/// Pads every uses text with `count` tokens drawn from `distractors`, split
/// randomly between the front and the back. Entity caches are cleared.
Corpus inject_noise(const Corpus& corpus, const std::vector<std::string>& distractors,
                    std::size_t count, std::uint64_t seed);

}  // namespace medrank
