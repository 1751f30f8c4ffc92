#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "medrank/datagen.hpp"
#include "medrank/embeddings.hpp"
#include "medrank/entities.hpp"
#include "medrank/parallel.hpp"
#include "medrank/training.hpp"

namespace medrank::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class KeyKind { kString, kPath, kInt, kReal, kBool, kList };

struct KeySpec {
  const char* name;
  KeyKind kind;
  const char* help;
};

/// Every accepted configuration key. Each is also a command-line flag.
const std::vector<KeySpec>& config_keys();

/// Flat run configuration shared by all subcommands.
struct RunConfig {
  // inputs
  std::filesystem::path embeddings;
  std::filesystem::path query_embeddings;
  std::filesystem::path candidate_embeddings;
  OovPolicy oov_policy = OovPolicy::kZero;
  std::filesystem::path corpus;
  std::filesystem::path gazetteer;
  std::filesystem::path distractors;
  std::size_t noise_tokens = 0;
  std::string extractor_endpoint;
  std::size_t extractor_timeout_ms = 2000;
  std::set<EntityType> allowed_types = all_entity_types();
  std::filesystem::path train_data;
  std::filesystem::path val_data;
  std::filesystem::path dataset;
  std::filesystem::path checkpoint;
  std::filesystem::path smn_list;
  std::filesystem::path output = ".";

  // data generation
  DmpMode dmp_mode = DmpMode::kEntity;
  std::size_t n_candidates = 2;
  double train_fraction = 0.7;

  // model and training
  std::size_t filters = 200;
  std::size_t window = 2;
  std::size_t dim = 200;  // only for bench without a checkpoint
  TrainingConfig training;

  // evaluation / ranking / benchmark
  std::string eval_mode = "both";
  std::string query;
  std::vector<std::string> candidates;
  std::size_t token_len = 16;
  std::size_t trials = 200;
  std::size_t warmup = 20;

  // clustering
  std::size_t k_min = 2;
  std::size_t k_max = 0;  // 0: min(40, n - 1)
  std::size_t restarts = 10;
  std::size_t max_iters = 300;
  bool normalize = false;
  std::string anchor;
  std::size_t topk = 10;

  std::uint64_t seed = 0;
  std::size_t threads = default_threads();

  /// Applies a flat JSON object on top of the current values. Unknown keys and
  /// ill-typed values raise ConfigError.
  void apply(const nlohmann::json& values);

  std::filesystem::path resolved_query_embeddings() const;
  std::filesystem::path resolved_candidate_embeddings() const;
  std::filesystem::path checkpoint_path() const;
};

/// Converts a command-line string to the JSON value of the key's kind.
nlohmann::json parse_flag_value(const KeySpec& key, const std::vector<std::string>& raw);

nlohmann::json read_config_file(const std::filesystem::path& path);

}  // namespace medrank::cli
