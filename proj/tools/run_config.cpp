#include "run_config.hpp"

#include <algorithm>
#include <fstream>

namespace medrank::cli {

using nlohmann::json;

const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> keys = {
      {"embeddings", KeyKind::kPath, "word2vec text file used by both towers"},
      {"query_embeddings", KeyKind::kPath, "override table for the query (DMP) tower"},
      {"candidate_embeddings", KeyKind::kPath, "override table for the candidate (SMN) tower"},
      {"oov_policy", KeyKind::kString, "zero | mean"},
      {"corpus", KeyKind::kPath, "JSONL corpus of {generic_name, uses}"},
      {"gazetteer", KeyKind::kPath, "JSONL gazetteer of {phrase, type}"},
      {"distractors", KeyKind::kPath, "distractor words, one per line (noise injection)"},
      {"noise_tokens", KeyKind::kInt, "distractor tokens added to every uses text"},
      {"extractor_endpoint", KeyKind::kString, "remote entity service URL (gazetteer fallback)"},
      {"extractor_timeout_ms", KeyKind::kInt, "remote entity service timeout"},
      {"allowed_types", KeyKind::kList, "entity types kept in DMPs"},
      {"train_data", KeyKind::kPath, "training JSONL dataset"},
      {"val_data", KeyKind::kPath, "validation JSONL dataset"},
      {"dataset", KeyKind::kPath, "evaluation JSONL dataset"},
      {"checkpoint", KeyKind::kPath, "model checkpoint path"},
      {"smn_list", KeyKind::kPath, "medication names, one per line"},
      {"output", KeyKind::kPath, "output directory"},
      {"dmp_mode", KeyKind::kString, "entity | ngram"},
      {"n_candidates", KeyKind::kInt, "candidates per instance"},
      {"train_fraction", KeyKind::kReal, "fraction of records on the training side"},
      {"filters", KeyKind::kInt, "convolution filters per tower"},
      {"window", KeyKind::kInt, "convolution window"},
      {"dim", KeyKind::kInt, "embedding dimension for a checkpoint-free benchmark"},
      {"margin", KeyKind::kReal, "hinge margin in (0, 2]"},
      {"learning_rate", KeyKind::kReal, "step size"},
      {"batch_size", KeyKind::kInt, "instances per update"},
      {"max_epochs", KeyKind::kInt, "training epochs"},
      {"optimizer", KeyKind::kString, "sgd | adam"},
      {"adam_beta1", KeyKind::kReal, "adam first-moment decay"},
      {"adam_beta2", KeyKind::kReal, "adam second-moment decay"},
      {"adam_epsilon", KeyKind::kReal, "adam denominator guard"},
      {"eval_mode", KeyKind::kString, "strict | relaxed | both"},
      {"query", KeyKind::kString, "query text for rank"},
      {"candidates", KeyKind::kList, "candidate medication names for rank"},
      {"token_len", KeyKind::kInt, "tokens per benchmark sequence"},
      {"trials", KeyKind::kInt, "timed benchmark iterations"},
      {"warmup", KeyKind::kInt, "untimed benchmark iterations"},
      {"k_min", KeyKind::kInt, "smallest cluster count in the sweep"},
      {"k_max", KeyKind::kInt, "largest cluster count in the sweep (0: auto)"},
      {"restarts", KeyKind::kInt, "k-means restarts per k"},
      {"max_iters", KeyKind::kInt, "Lloyd iterations per k-means run"},
      {"normalize", KeyKind::kBool, "length-normalize vectors before clustering"},
      {"anchor", KeyKind::kString, "medication whose nearest cluster mates are reported"},
      {"topk", KeyKind::kInt, "nearest cluster mates to report"},
      {"seed", KeyKind::kInt, "global seed"},
      {"threads", KeyKind::kInt, "worker threads"},
  };
  return keys;
}

namespace {

const KeySpec* find_key(std::string_view name) {
  for (const auto& k : config_keys()) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

std::size_t as_count(const json& v, const char* key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(std::string("'") + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

double as_real(const json& v, const char* key) {
  if (!v.is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
  return v.get<double>();
}

std::string as_string(const json& v, const char* key) {
  if (!v.is_string()) throw ConfigError(std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<std::string> as_list(const json& v, const char* key) {
  if (v.is_string()) return {v.get<std::string>()};
  if (!v.is_array()) throw ConfigError(std::string("'") + key + "' must be a list of strings");
  std::vector<std::string> out;
  for (const auto& e : v) out.push_back(as_string(e, key));
  return out;
}

std::vector<std::string> split_commas(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& item : raw) {
    std::size_t start = 0;
    while (start <= item.size()) {
      auto comma = item.find(',', start);
      if (comma == std::string::npos) comma = item.size();
      if (comma > start) out.push_back(item.substr(start, comma - start));
      start = comma + 1;
    }
  }
  return out;
}

}  // namespace

void RunConfig::apply(const json& values) {
  if (!values.is_object()) throw ConfigError("configuration must be a JSON object");
  for (const auto& [key, v] : values.items()) {
    if (!find_key(key)) throw ConfigError("unknown configuration key '" + key + "'");
  }
  const auto has = [&](const char* k) { return values.contains(k); };
  const auto path = [&](const char* k, std::filesystem::path& dst) {
    if (has(k)) dst = as_string(values.at(k), k);
  };
  const auto count = [&](const char* k, std::size_t& dst) {
    if (has(k)) dst = as_count(values.at(k), k);
  };
  const auto real = [&](const char* k, double& dst) {
    if (has(k)) dst = as_real(values.at(k), k);
  };

  path("embeddings", embeddings);
  path("query_embeddings", query_embeddings);
  path("candidate_embeddings", candidate_embeddings);
  if (has("oov_policy")) {
    const auto p = as_string(values.at("oov_policy"), "oov_policy");
    if (p == "zero") {
      oov_policy = OovPolicy::kZero;
    } else if (p == "mean") {
      oov_policy = OovPolicy::kMean;
    } else {
      throw ConfigError("oov_policy must be 'zero' or 'mean'");
    }
  }
  path("corpus", corpus);
  path("gazetteer", gazetteer);
  path("distractors", distractors);
  count("noise_tokens", noise_tokens);
  if (has("extractor_endpoint")) {
    extractor_endpoint = as_string(values.at("extractor_endpoint"), "extractor_endpoint");
  }
  count("extractor_timeout_ms", extractor_timeout_ms);
  if (has("allowed_types")) {
    allowed_types.clear();
    for (const auto& name : as_list(values.at("allowed_types"), "allowed_types")) {
      auto t = parse_entity_type(name);
      if (!t) throw ConfigError("unknown entity type '" + name + "'");
      allowed_types.insert(*t);
    }
    if (allowed_types.empty()) throw ConfigError("allowed_types must not be empty");
  }
  path("train_data", train_data);
  path("val_data", val_data);
  path("dataset", dataset);
  path("checkpoint", checkpoint);
  path("smn_list", smn_list);
  path("output", output);

  if (has("dmp_mode")) {
    try {
      dmp_mode = parse_dmp_mode(as_string(values.at("dmp_mode"), "dmp_mode"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  count("n_candidates", n_candidates);
  real("train_fraction", train_fraction);
  count("filters", filters);
  count("window", window);
  count("dim", dim);
  real("margin", training.margin);
  real("learning_rate", training.learning_rate);
  count("batch_size", training.batch_size);
  count("max_epochs", training.max_epochs);
  if (has("optimizer")) {
    const auto o = as_string(values.at("optimizer"), "optimizer");
    if (o == "sgd") {
      training.optimizer = OptimizerKind::kSgd;
    } else if (o == "adam") {
      training.optimizer = OptimizerKind::kAdam;
    } else {
      throw ConfigError("optimizer must be 'sgd' or 'adam'");
    }
  }
  real("adam_beta1", training.adam.beta1);
  real("adam_beta2", training.adam.beta2);
  real("adam_epsilon", training.adam.epsilon);

  if (has("eval_mode")) {
    eval_mode = as_string(values.at("eval_mode"), "eval_mode");
    if (eval_mode != "strict" && eval_mode != "relaxed" && eval_mode != "both") {
      throw ConfigError("eval_mode must be strict, relaxed or both");
    }
  }
  if (has("query")) query = as_string(values.at("query"), "query");
  if (has("candidates")) candidates = as_list(values.at("candidates"), "candidates");
  count("token_len", token_len);
  count("trials", trials);
  count("warmup", warmup);

  count("k_min", k_min);
  count("k_max", k_max);
  count("restarts", restarts);
  count("max_iters", max_iters);
  if (has("normalize")) {
    if (!values.at("normalize").is_boolean()) throw ConfigError("'normalize' must be a boolean");
    normalize = values.at("normalize").get<bool>();
  }
  if (has("anchor")) anchor = as_string(values.at("anchor"), "anchor");
  count("topk", topk);

  if (has("seed")) {
    const auto& v = values.at("seed");
    if (!v.is_number_integer()) throw ConfigError("'seed' must be an integer");
    seed = v.is_number_unsigned() ? v.get<std::uint64_t>()
                                  : static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  count("threads", threads);
  if (threads == 0) throw ConfigError("threads must be >= 1");
  training.seed = seed;
  training.threads = threads;
}

std::filesystem::path RunConfig::resolved_query_embeddings() const {
  return query_embeddings.empty() ? embeddings : query_embeddings;
}

std::filesystem::path RunConfig::resolved_candidate_embeddings() const {
  return candidate_embeddings.empty() ? embeddings : candidate_embeddings;
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? output / "model.mim" : checkpoint;
}

json parse_flag_value(const KeySpec& key, const std::vector<std::string>& raw) {
  const auto one = [&]() -> const std::string& {
    if (raw.size() != 1) throw ConfigError(std::string("--") + key.name + " takes one value");
    return raw.front();
  };
  switch (key.kind) {
    case KeyKind::kString:
    case KeyKind::kPath:
      return one();
    case KeyKind::kList:
      return key.name == std::string("candidates") ? json(raw) : json(split_commas(raw));
    case KeyKind::kBool: {
      const auto& s = one();
      if (s == "true" || s == "1") return true;
      if (s == "false" || s == "0") return false;
      throw ConfigError(std::string("--") + key.name + " expects true or false");
    }
    case KeyKind::kInt:
    case KeyKind::kReal: {
      const auto& s = one();
      try {
        std::size_t used = 0;
        if (key.kind == KeyKind::kInt) {
          if (!s.empty() && s.front() == '-') {
            const long long v = std::stoll(s, &used);
            if (used == s.size()) return v;
          } else {
            const unsigned long long v = std::stoull(s, &used);
            if (used == s.size()) return v;
          }
        } else {
          const double v = std::stod(s, &used);
          if (used == s.size()) return v;
        }
      } catch (const std::exception&) {
      }
      throw ConfigError(std::string("--") + key.name + ": '" + s + "' is not a number");
    }
  }
  throw ConfigError("unhandled key kind");
}

json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
}

}  // namespace medrank::cli
