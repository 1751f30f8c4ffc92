#include "medrank/entities.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <spdlog/spdlog.h>

#include "httplib.h"
#include "json.hpp"

namespace medrank {

namespace {

constexpr std::string_view kTypeNames[] = {
    "dx_name",        "treatment_name", "system_organ_site", "swap",
    "generic_name",   "procedure_name", "brand_name",        "test_name",
};

}  // namespace

std::string_view to_string(EntityType type) {
  return kTypeNames[static_cast<std::size_t>(type)];
}

std::optional<EntityType> parse_entity_type(std::string_view name) {
  std::string norm;
  for (char c : name) {
    norm.push_back(c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  for (EntityType t : kAllEntityTypes) {
    if (to_string(t) == norm) return t;
  }
  return std::nullopt;
}

std::set<EntityType> all_entity_types() {
  return {std::begin(kAllEntityTypes), std::end(kAllEntityTypes)};
}

void Gazetteer::add(std::string_view phrase, EntityType type) {
  const auto tokens = tokenize(phrase);
  if (tokens.empty()) {
    throw std::invalid_argument("gazetteer phrase '" + std::string(phrase) + "' has no tokens");
  }
  phrases_[join_tokens(tokens)] = type;
  max_tokens_ = std::max(max_tokens_, tokens.size());
}

std::optional<EntityType> Gazetteer::find(std::string_view normalized_phrase) const {
  auto it = phrases_.find(std::string(normalized_phrase));
  if (it == phrases_.end()) return std::nullopt;
  return it->second;
}

Gazetteer load_gazetteer(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open gazetteer " + path.string());
  Gazetteer gaz;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      const auto phrase = j.at("phrase").get<std::string>();
      const auto type_name = j.at("type").get<std::string>();
      auto type = parse_entity_type(type_name);
      if (!type) throw std::invalid_argument("unknown entity type '" + type_name + "'");
      gaz.add(phrase, *type);
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return gaz;
}

std::vector<EntitySpan> extract_entities(std::string_view text, const Gazetteer& gaz) {
  std::vector<EntitySpan> spans;
  if (gaz.empty()) return spans;
  const auto toks = tokenize_with_offsets(text);
  std::size_t i = 0;
  while (i < toks.size()) {
    const std::size_t longest = std::min(gaz.max_phrase_tokens(), toks.size() - i);
    bool matched = false;
    for (std::size_t len = longest; len >= 1; --len) {
      std::string key = toks[i].token;
      for (std::size_t k = 1; k < len; ++k) {
        key.push_back(' ');
        key += toks[i + k].token;
      }
      if (auto type = gaz.find(key)) {
        EntitySpan span;
        span.start = toks[i].begin;
        span.end = toks[i + len - 1].end;
        span.text = std::string(text.substr(span.start, span.end - span.start));
        span.etype = *type;
        spans.push_back(std::move(span));
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }
  return spans;
}

std::vector<TokenSequence> dmp_phrases(const std::vector<EntitySpan>& spans,
                                       const std::set<EntityType>& allowed) {
  std::vector<TokenSequence> phrases;
  std::set<std::string> seen;
  for (const auto& span : spans) {
    if (!allowed.contains(span.etype)) continue;
    auto tokens = tokenize(span.text);
    if (tokens.empty()) continue;
    if (!seen.insert(join_tokens(tokens)).second) continue;
    phrases.push_back(std::move(tokens));
  }
  return phrases;
}

TokenSequence build_dmp(std::string_view text, const EntityExtractor& extractor,
                        const std::set<EntityType>& allowed) {
  if (allowed.empty()) throw std::invalid_argument("build_dmp: no allowed entity types");
  TokenSequence out;
  for (auto& phrase : dmp_phrases(extractor.extract(text), allowed)) {
    out.insert(out.end(), std::make_move_iterator(phrase.begin()),
               std::make_move_iterator(phrase.end()));
  }
  return out;
}

TokenSequence build_dmp(std::string_view text, const Gazetteer& gaz,
                        const std::set<EntityType>& allowed) {
  struct Local final : EntityExtractor {
    const Gazetteer& g;
    explicit Local(const Gazetteer& gz) : g(gz) {}
    std::vector<EntitySpan> extract(std::string_view t) const override {
      return extract_entities(t, g);
    }
  };
  return build_dmp(text, Local(gaz), allowed);
}

TokenSequence random_ngram_dmp(std::string_view text, std::mt19937_64& rng) {
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw std::invalid_argument("random_ngram_dmp: text has no tokens");
  const std::size_t n =
      std::min<std::size_t>(std::uniform_int_distribution<std::size_t>(1, 5)(rng), tokens.size());
  const std::size_t start =
      std::uniform_int_distribution<std::size_t>(0, tokens.size() - n)(rng);
  return {tokens.begin() + static_cast<std::ptrdiff_t>(start),
          tokens.begin() + static_cast<std::ptrdiff_t>(start + n)};
}

RemoteExtractor::RemoteExtractor(std::string endpoint, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("endpoint '" + endpoint + "' must look like http://host:port/path");
  }
  const auto path_start = endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    scheme_host_port_ = endpoint;
    path_ = "/";
  } else {
    scheme_host_port_ = endpoint.substr(0, path_start);
    path_ = endpoint.substr(path_start);
  }
}

std::vector<EntitySpan> RemoteExtractor::extract(std::string_view text) const {
  using Kind = RemoteExtractError::Kind;
  httplib::Client client(scheme_host_port_);
  if (!client.is_valid()) {
    throw RemoteExtractError(Kind::kNetwork, "invalid endpoint " + scheme_host_port_);
  }
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  const std::string body = nlohmann::json{{"text", std::string(text)}}.dump();
  const auto started = std::chrono::steady_clock::now();
  auto res = client.Post(path_, body, "application/json");
  if (!res) {
    const auto err = res.error();
    const auto elapsed = std::chrono::steady_clock::now() - started;
    if (err == httplib::Error::ConnectionTimeout ||
        ((err == httplib::Error::Read || err == httplib::Error::Write) && elapsed >= timeout_)) {
      throw RemoteExtractError(Kind::kTimeout, "entity service timed out: " + to_string(err));
    }
    throw RemoteExtractError(Kind::kNetwork, "entity service unreachable: " + to_string(err));
  }
  if (res->status < 200 || res->status >= 300) {
    throw RemoteExtractError(Kind::kHttpStatus,
                             "entity service returned HTTP " + std::to_string(res->status),
                             res->status);
  }

  std::vector<EntitySpan> spans;
  try {
    const auto j = nlohmann::json::parse(res->body);
    for (const auto& e : j.at("entities")) {
      const auto type_name = e.at("type").get<std::string>();
      auto type = parse_entity_type(type_name);
      if (!type) {
        spdlog::warn("entity service returned unknown type '{}', dropped", type_name);
        continue;
      }
      EntitySpan span;
      span.text = e.at("text").get<std::string>();
      span.etype = *type;
      span.start = e.at("begin_offset").get<std::size_t>();
      span.end = e.at("end_offset").get<std::size_t>();
      if (span.start >= span.end || span.end > text.size() ||
          text.substr(span.start, span.end - span.start) != span.text) {
        throw std::invalid_argument("span [" + std::to_string(span.start) + ", " +
                                    std::to_string(span.end) + ") does not match the source text");
      }
      spans.push_back(std::move(span));
    }
  } catch (const std::exception& e) {
    throw RemoteExtractError(Kind::kMalformedResponse,
                             std::string("malformed entity service response: ") + e.what(),
                             res->status);
  }
  std::sort(spans.begin(), spans.end(),
            [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
  return spans;
}

std::vector<EntitySpan> remote_extract(std::string_view text, const std::string& endpoint,
                                       std::chrono::milliseconds timeout) {
  return RemoteExtractor(endpoint, timeout).extract(text);
}

std::vector<EntitySpan> FallbackExtractor::extract(std::string_view text) const {
  try {
    return primary_->extract(text);
  } catch (const RemoteExtractError& e) {
    spdlog::warn("{}; falling back to local extractor", e.what());
    return fallback_->extract(text);
  }
}

}  // namespace medrank
