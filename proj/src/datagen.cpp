#include "medrank/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"
#include "medrank/parallel.hpp"

namespace medrank {

std::string PemRecord::smn() const { return join_tokens(tokenize(generic_name)); }

Corpus read_corpus(std::istream& in) {
  Corpus corpus;
  std::unordered_set<std::string> names;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      PemRecord rec;
      rec.generic_name = j.at("generic_name").get<std::string>();
      rec.uses = j.at("uses").get<std::string>();
      const auto key = rec.smn();
      if (key.empty()) throw std::invalid_argument("empty generic_name");
      if (!names.insert(key).second) {
        throw std::invalid_argument("duplicate generic_name '" + rec.generic_name + "'");
      }
      corpus.push_back(std::move(rec));
    } catch (const std::exception& e) {
      throw std::runtime_error("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus " + path.string());
  return read_corpus(in);
}

void populate_entity_caches(Corpus& corpus, const EntityExtractor& extractor,
                            const std::set<EntityType>& allowed, std::size_t threads) {
  parallel_for(corpus.size(), threads, [&](std::size_t i) {
    auto& rec = corpus[i];
    rec.entity_phrases.clear();
    rec.entity_set.clear();
    for (const auto& phrase : dmp_phrases(extractor.extract(rec.uses), allowed)) {
      auto key = join_tokens(phrase);
      rec.entity_set.insert(key);
      rec.entity_phrases.push_back(std::move(key));
    }
    rec.entities_ready = true;
  });
}

namespace {

void require_caches(const Corpus& corpus) {
  for (const auto& rec : corpus) {
    if (!rec.entities_ready) {
      throw std::logic_error("entity cache of '" + rec.generic_name + "' is not populated");
    }
  }
}

bool disjoint(const std::set<std::string>& a, const std::set<std::string>& b) {
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      return false;
    }
  }
  return true;
}

bool contains_ngram(const TokenSequence& haystack, const TokenSequence& needle) {
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
         haystack.end();
}

std::mt19937_64 record_rng(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

}  // namespace

std::set<std::string> positive_set(const std::string& dmp_phrase, const Corpus& corpus) {
  require_caches(corpus);
  std::set<std::string> out;
  for (const auto& rec : corpus) {
    if (rec.entity_set.contains(dmp_phrase)) out.insert(rec.smn());
  }
  return out;
}

std::set<std::string> negative_set(const std::set<std::string>& dmp_entities,
                                   const Corpus& corpus, const std::set<std::string>& positives) {
  require_caches(corpus);
  std::set<std::string> out;
  for (const auto& rec : corpus) {
    auto name = rec.smn();
    if (positives.contains(name)) continue;
    if (disjoint(rec.entity_set, dmp_entities)) out.insert(std::move(name));
  }
  return out;
}

std::string_view to_string(DmpMode mode) { return mode == DmpMode::kEntity ? "entity" : "ngram"; }

DmpMode parse_dmp_mode(std::string_view name) {
  if (name == "entity") return DmpMode::kEntity;
  if (name == "ngram") return DmpMode::kNgram;
  throw std::invalid_argument("dmp mode must be 'entity' or 'ngram', got '" + std::string(name) +
                              "'");
}

GenerationResult make_instances(const Corpus& corpus, std::size_t n, DmpMode mode,
                                std::uint64_t seed, std::size_t threads) {
  if (n < 2) throw std::invalid_argument("make_instances: n must be >= 2");
  if (corpus.size() < n) {
    throw std::invalid_argument("corpus has " + std::to_string(corpus.size()) +
                                " records, fewer than n = " + std::to_string(n));
  }
  require_caches(corpus);

  std::unordered_map<std::string, const PemRecord*> by_name;
  std::vector<TokenSequence> uses_tokens(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    by_name.emplace(corpus[i].smn(), &corpus[i]);
    uses_tokens[i] = tokenize(corpus[i].uses);
  }

  struct PerRecord {
    Dataset instances;
    std::size_t considered = 0;
    std::size_t skipped = 0;
  };
  std::vector<PerRecord> parts(corpus.size());

  parallel_for(corpus.size(), threads, [&](std::size_t r) {
    auto rng = record_rng(seed, r);
    const auto& rec = corpus[r];
    auto& out = parts[r];

    std::vector<std::pair<TokenSequence, std::set<std::string>>> dmps;
    if (mode == DmpMode::kEntity) {
      for (const auto& phrase : rec.entity_phrases) {
        dmps.emplace_back(tokenize(phrase), positive_set(phrase, corpus));
      }
    } else if (!uses_tokens[r].empty()) {
      TokenSequence q = random_ngram_dmp(rec.uses, rng);
      std::set<std::string> positives = positive_set(join_tokens(q), corpus);
      positives.insert(rec.smn());
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (contains_ngram(uses_tokens[i], q)) positives.insert(corpus[i].smn());
      }
      dmps.emplace_back(std::move(q), std::move(positives));
    }

    for (auto& [q, positives] : dmps) {
      ++out.considered;
      std::set<std::string> blocked;
      for (const auto& name : positives) {
        const auto& ents = by_name.at(name)->entity_set;
        blocked.insert(ents.begin(), ents.end());
      }
      const auto negatives = negative_set(blocked, corpus, positives);
      if (negatives.size() < n - 1) {
        ++out.skipped;
        continue;
      }
      const std::vector<std::string> pos_list(positives.begin(), positives.end());
      std::vector<std::string> neg_list(negatives.begin(), negatives.end());
      const std::string positive = pick(pos_list, rng);
      std::shuffle(neg_list.begin(), neg_list.end(), rng);

      std::vector<std::string> names{positive};
      names.insert(names.end(), neg_list.begin(), neg_list.begin() + static_cast<long>(n - 1));
      std::shuffle(names.begin(), names.end(), rng);

      DatasetInstance inst;
      inst.q = q;
      for (const auto& name : names) {
        inst.candidates.push_back(tokenize(name));
        inst.labels.push_back(name == positive ? 1 : 0);
      }
      inst.positive_smns = pos_list;
      inst.source = positive;
      out.instances.push_back(std::move(inst));
    }
  });

  GenerationResult result;
  for (auto& part : parts) {
    result.dmps_considered += part.considered;
    result.skipped_dmps += part.skipped;
    for (auto& inst : part.instances) result.instances.push_back(std::move(inst));
  }
  return result;
}

std::set<std::string> split_records(std::vector<std::string> names, double train_fraction,
                                    std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must be in (0, 1)");
  }
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  std::mt19937_64 rng(seed);
  std::shuffle(names.begin(), names.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(names.size())));
  return {names.begin(), names.begin() + static_cast<long>(n_train)};
}

SplitResult partition_by_source(const Dataset& instances,
                                const std::set<std::string>& train_names) {
  SplitResult out;
  for (const auto& inst : instances) {
    (train_names.contains(inst.source) ? out.train : out.heldout).push_back(inst);
  }
  return out;
}

SplitResult split(const Dataset& instances, double train_fraction, std::uint64_t seed) {
  std::vector<std::string> sources;
  for (const auto& inst : instances) sources.push_back(inst.source);
  return partition_by_source(instances, split_records(std::move(sources), train_fraction, seed));
}

Corpus inject_noise(const Corpus& corpus, const std::vector<std::string>& distractors,
                    std::size_t count, std::uint64_t seed) {
  if (distractors.empty() && count > 0) {
    throw std::invalid_argument("inject_noise: empty distractor list");
  }
  Corpus out;
  out.reserve(corpus.size());
  for (std::size_t r = 0; r < corpus.size(); ++r) {
    auto rng = record_rng(seed, r);
    PemRecord rec;
    rec.generic_name = corpus[r].generic_name;
    const std::size_t before = std::uniform_int_distribution<std::size_t>(0, count)(rng);
    std::string text;
    for (std::size_t i = 0; i < count; ++i) {
      if (i == before) text += corpus[r].uses + ' ';
      text += pick(distractors, rng);
      text += ' ';
    }
    if (before == count) text += corpus[r].uses;
    while (!text.empty() && text.back() == ' ') text.pop_back();
    rec.uses = std::move(text);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace medrank
