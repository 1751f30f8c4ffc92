#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "medrank/tokenizer.hpp"

namespace medrank {

enum class EntityType {
  kDxName,
  kTreatmentName,
  kSystemOrganSite,
  kSwap,
  kGenericName,
  kProcedureName,
  kBrandName,
  kTestName,
};

inline constexpr EntityType kAllEntityTypes[] = {
    EntityType::kDxName,        EntityType::kTreatmentName, EntityType::kSystemOrganSite,
    EntityType::kSwap,          EntityType::kGenericName,   EntityType::kProcedureName,
    EntityType::kBrandName,     EntityType::kTestName,
};

/// Lowercase snake_case wire names: "dx_name", "treatment_name", ...
std::string_view to_string(EntityType type);
/// Accepts the wire names case-insensitively, also with spaces instead of
/// underscores ("DX_NAME", "dx name"). Returns nullopt for anything else.
std::optional<EntityType> parse_entity_type(std::string_view name);

std::set<EntityType> all_entity_types();

struct EntitySpan {
  std::string text;  // equals source.substr(start, end - start)
  EntityType etype = EntityType::kDxName;
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const EntitySpan&) const = default;
};

/// Phrase dictionary keyed by the tokenized, single-spaced phrase.
class Gazetteer {
 public:
  /// Throws std::invalid_argument if the phrase tokenizes to nothing.
  /// Re-adding a phrase overwrites its type.
  void add(std::string_view phrase, EntityType type);

  std::optional<EntityType> find(std::string_view normalized_phrase) const;
  std::size_t size() const { return phrases_.size(); }
  bool empty() const { return phrases_.empty(); }
  std::size_t max_phrase_tokens() const { return max_tokens_; }

 private:
  std::unordered_map<std::string, EntityType> phrases_;
  std::size_t max_tokens_ = 0;
};

/// JSONL: one {"phrase": ..., "type": ...} object per line.
Gazetteer load_gazetteer(const std::filesystem::path& path);

/// Greedy longest-match-first, left-to-right over the token stream; matched
/// tokens are consumed so spans never overlap and come out in source order.
std::vector<EntitySpan> extract_entities(std::string_view text, const Gazetteer& gaz);

/// Pluggable entity extraction backend.
class EntityExtractor {
 public:
  virtual ~EntityExtractor() = default;
  virtual std::vector<EntitySpan> extract(std::string_view text) const = 0;
};

class GazetteerExtractor final : public EntityExtractor {
 public:
  explicit GazetteerExtractor(std::shared_ptr<const Gazetteer> gaz) : gaz_(std::move(gaz)) {}
  std::vector<EntitySpan> extract(std::string_view text) const override {
    return extract_entities(text, *gaz_);
  }

 private:
  std::shared_ptr<const Gazetteer> gaz_;
};

/// Phrases (tokenized) of the spans whose type is allowed, in source order,
/// exact duplicates dropped after the first occurrence.
std::vector<TokenSequence> dmp_phrases(const std::vector<EntitySpan>& spans,
                                       const std::set<EntityType>& allowed);

/// Concatenation of dmp_phrases(). Throws std::invalid_argument when
/// `allowed` is empty.
TokenSequence build_dmp(std::string_view text, const Gazetteer& gaz,
                        const std::set<EntityType>& allowed);
TokenSequence build_dmp(std::string_view text, const EntityExtractor& extractor,
                        const std::set<EntityType>& allowed);

/// Contiguous n-gram with n uniform in {1..5} clamped to the token count and a
/// uniform start. Throws std::invalid_argument when the text has no tokens.
TokenSequence random_ngram_dmp(std::string_view text, std::mt19937_64& rng);

class RemoteExtractError : public std::runtime_error {
 public:
  enum class Kind { kNetwork, kTimeout, kHttpStatus, kMalformedResponse };

  RemoteExtractError(Kind kind, const std::string& what, int status = 0)
      : std::runtime_error(what), kind_(kind), status_(status) {}
  Kind kind() const { return kind_; }
  int status() const { return status_; }

 private:
  Kind kind_;
  int status_;
};

/// Client for an HTTP extraction service. Request: POST {"text": ...}.
/// Response: {"entities": [{"text", "type", "begin_offset", "end_offset"}]}.
/// Unknown type strings are dropped with a warning; spans that violate the
/// offset/text invariants make the response malformed.
class RemoteExtractor final : public EntityExtractor {
 public:
  /// endpoint like "http://host:port/path".
  RemoteExtractor(std::string endpoint, std::chrono::milliseconds timeout);
  std::vector<EntitySpan> extract(std::string_view text) const override;

 private:
  std::string scheme_host_port_;
  std::string path_;
  std::chrono::milliseconds timeout_;
};

std::vector<EntitySpan> remote_extract(std::string_view text, const std::string& endpoint,
                                       std::chrono::milliseconds timeout);

/// Tries `primary`; on RemoteExtractError logs and uses `fallback`.
class FallbackExtractor final : public EntityExtractor {
 public:
  FallbackExtractor(std::shared_ptr<const EntityExtractor> primary,
                    std::shared_ptr<const EntityExtractor> fallback)
      : primary_(std::move(primary)), fallback_(std::move(fallback)) {}
  std::vector<EntitySpan> extract(std::string_view text) const override;

 private:
  std::shared_ptr<const EntityExtractor> primary_;
  std::shared_ptr<const EntityExtractor> fallback_;
};

}  // namespace medrank
