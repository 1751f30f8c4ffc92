#include "cli.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"
#include "medrank/checkpoint.hpp"
#include "medrank/clustering.hpp"
#include "medrank/datagen.hpp"
#include "medrank/embeddings.hpp"
#include "medrank/entities.hpp"
#include "medrank/ranking.hpp"
#include "medrank/tokenizer.hpp"
#include "medrank/training.hpp"
#include "run_config.hpp"

namespace medrank::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Bad or missing inputs detected before any work starts.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_file(const fs::path& path, const char* key) {
  if (path.empty()) throw UsageError(std::string("--") + key + " is required");
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw UsageError(std::string("--") + key + ": no such file: " + path.string());
  }
}

void optional_file(const fs::path& path, const char* key) {
  if (!path.empty()) require_file(path, key);
}

void require_embeddings(const RunConfig& cfg) {
  if (cfg.embeddings.empty() &&
      (cfg.query_embeddings.empty() || cfg.candidate_embeddings.empty())) {
    throw UsageError("--embeddings is required (or both --query_embeddings and "
                     "--candidate_embeddings)");
  }
  require_file(cfg.resolved_query_embeddings(), cfg.query_embeddings.empty()
                                                    ? "embeddings"
                                                    : "query_embeddings");
  require_file(cfg.resolved_candidate_embeddings(), cfg.candidate_embeddings.empty()
                                                        ? "embeddings"
                                                        : "candidate_embeddings");
}

void prepare_output(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output, ec);
  if (ec || !fs::is_directory(cfg.output)) {
    throw UsageError("--output: cannot create directory " + cfg.output.string());
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string fmt_real(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

struct Tables {
  std::shared_ptr<const EmbeddingTable> query;
  std::shared_ptr<const EmbeddingTable> candidate;
};

Tables load_tables(const RunConfig& cfg) {
  const auto qpath = cfg.resolved_query_embeddings();
  const auto cpath = cfg.resolved_candidate_embeddings();
  Tables t;
  t.query = std::make_shared<const EmbeddingTable>(load_embeddings(qpath, cfg.oov_policy));
  t.candidate = fs::equivalent(qpath, cpath)
                    ? t.query
                    : std::make_shared<const EmbeddingTable>(load_embeddings(cpath, cfg.oov_policy));
  spdlog::info("embeddings: {} query tokens, {} candidate tokens, d={}", t.query->size(),
               t.candidate->size(), t.query->dim());
  return t;
}

ModelParams load_model(const RunConfig& cfg) {
  auto tables = load_tables(cfg);
  return load_checkpoint(cfg.checkpoint, tables.query, tables.candidate);
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    lines.push_back(line.substr(b, e - b + 1));
  }
  return lines;
}

// Medication names for cluster / export-embeddings: --smn_list wins over --corpus.
void require_names_source(const RunConfig& cfg) {
  if (!cfg.smn_list.empty()) {
    require_file(cfg.smn_list, "smn_list");
  } else if (!cfg.corpus.empty()) {
    require_file(cfg.corpus, "corpus");
  } else {
    throw UsageError("--smn_list or --corpus is required");
  }
}

std::vector<std::string> medication_names(const RunConfig& cfg) {
  std::vector<std::string> names;
  if (!cfg.smn_list.empty()) {
    names = read_lines(cfg.smn_list);
  } else {
    for (const auto& r : load_corpus(cfg.corpus)) names.push_back(r.smn());
  }
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (!seen.insert(join_tokens(tokenize(n))).second) {
      throw std::invalid_argument("duplicate medication name '" + n + "'");
    }
  }
  return names;
}

Vectors encode_names(const RunConfig& cfg, const ModelParams& model,
                     const std::vector<std::string>& names) {
  std::vector<TokenSequence> toks;
  toks.reserve(names.size());
  for (const auto& n : names) toks.push_back(tokenize(n));
  auto vectors = encode_all(model, toks, cfg.threads);
  if (cfg.normalize) normalize_rows(vectors);
  return vectors;
}

std::shared_ptr<const EntityExtractor> make_extractor(const RunConfig& cfg) {
  auto gaz = std::make_shared<const Gazetteer>(load_gazetteer(cfg.gazetteer));
  std::shared_ptr<const EntityExtractor> local = std::make_shared<GazetteerExtractor>(gaz);
  if (cfg.extractor_endpoint.empty()) return local;
  auto remote = std::make_shared<RemoteExtractor>(
      cfg.extractor_endpoint, std::chrono::milliseconds(cfg.extractor_timeout_ms));
  return std::make_shared<FallbackExtractor>(remote, local);
}

int cmd_gen_data(const RunConfig& cfg) {
  require_file(cfg.corpus, "corpus");
  require_file(cfg.gazetteer, "gazetteer");
  if (cfg.noise_tokens > 0) require_file(cfg.distractors, "distractors");
  if (cfg.n_candidates < 2) throw UsageError("--n_candidates must be >= 2");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
    throw UsageError("--train_fraction must lie in (0, 1)");
  }
  prepare_output(cfg);

  Corpus corpus = load_corpus(cfg.corpus);
  if (cfg.n_candidates > corpus.size()) {
    throw UsageError("--n_candidates " + std::to_string(cfg.n_candidates) +
                     " exceeds the corpus size " + std::to_string(corpus.size()));
  }
  if (cfg.noise_tokens > 0) {
    corpus = inject_noise(corpus, read_lines(cfg.distractors), cfg.noise_tokens, cfg.seed);
  }
  populate_entity_caches(corpus, *make_extractor(cfg), cfg.allowed_types, cfg.threads);

  auto gen = make_instances(corpus, cfg.n_candidates, cfg.dmp_mode, cfg.seed, cfg.threads);
  std::vector<std::string> names;
  for (const auto& r : corpus) names.push_back(r.smn());
  const auto train_names = split_records(names, cfg.train_fraction, cfg.seed);
  const auto parts = partition_by_source(gen.instances, train_names);

  write_dataset(parts.train, cfg.output / "train.jsonl");
  write_dataset(parts.heldout, cfg.output / "heldout.jsonl");

  ojson report;
  report["dmp_mode"] = std::string(to_string(cfg.dmp_mode));
  report["n_candidates"] = cfg.n_candidates;
  report["seed"] = cfg.seed;
  report["train_fraction"] = cfg.train_fraction;
  report["noise_tokens"] = cfg.noise_tokens;
  report["extractor"] = cfg.extractor_endpoint.empty() ? "gazetteer" : "remote+gazetteer";
  report["records"] = corpus.size();
  report["train_records"] = train_names.size();
  report["heldout_records"] = corpus.size() - train_names.size();
  report["dmps_considered"] = gen.dmps_considered;
  report["skipped_dmps"] = gen.skipped_dmps;
  report["instances"] = gen.instances.size();
  report["train_instances"] = parts.train.size();
  report["heldout_instances"] = parts.heldout.size();
  open_out(cfg.output / "gen_report.json") << report.dump(2) << '\n';

  spdlog::info("gen-data: {} instances ({} train, {} heldout), {} DMPs skipped",
               gen.instances.size(), parts.train.size(), parts.heldout.size(), gen.skipped_dmps);
  return kExitOk;
}

int cmd_train(const RunConfig& cfg) {
  require_embeddings(cfg);
  require_file(cfg.train_data, "train_data");
  optional_file(cfg.val_data, "val_data");
  try {
    cfg.training.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (cfg.filters == 0 || cfg.window == 0) throw UsageError("--filters and --window must be >= 1");
  prepare_output(cfg);

  const auto train_set = read_dataset(cfg.train_data);
  const auto val_set = cfg.val_data.empty() ? Dataset{} : read_dataset(cfg.val_data);
  const auto tables = load_tables(cfg);
  if (tables.query->dim() != tables.candidate->dim()) {
    throw UsageError("query and candidate embeddings must share a dimension");
  }
  ModelParams init = init_params(tables.query->dim(), cfg.filters, cfg.window, cfg.seed);
  init.query_table = tables.query;
  init.candidate_table = tables.candidate;

  const auto result = train(train_set, val_set, init, cfg.training);
  save_checkpoint(result.model, cfg.checkpoint_path());
  auto hist = open_out(cfg.output / "history.csv");
  write_history_csv(result.history, hist);
  if (!result.history.empty()) {
    const auto& best = result.history[result.best_epoch - 1];
    spdlog::info("train: best epoch {} (val accuracy {:.4f}, loss {:.6f})", best.epoch,
                 best.val_accuracy, best.mean_loss);
  }
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg) {
  require_embeddings(cfg);
  require_file(cfg.checkpoint, "checkpoint");
  require_file(cfg.dataset, "dataset");
  prepare_output(cfg);

  const auto data = read_dataset(cfg.dataset);
  if (data.empty()) throw UsageError("--dataset is empty: " + cfg.dataset.string());
  const auto model = load_model(cfg);

  std::string n_field = std::to_string(data.front().n());
  for (const auto& inst : data) {
    if (inst.n() != data.front().n()) n_field = "mixed";
  }
  std::vector<std::pair<std::string, bool>> modes;
  if (cfg.eval_mode != "relaxed") modes.emplace_back("strict", false);
  if (cfg.eval_mode != "strict") modes.emplace_back("relaxed", true);

  auto csv = open_out(cfg.output / "eval.csv");
  csv << "dataset,n_candidates,mode,accuracy,instances\n";
  for (const auto& [name, relaxed] : modes) {
    const auto counts = evaluate_top1(model, data, relaxed, cfg.threads);
    csv << cfg.dataset.filename().string() << ',' << n_field << ',' << name << ','
        << fmt_real("%.6f", counts.accuracy()) << ',' << counts.total << '\n';
    spdlog::info("eval: {} top-1 {:.4f} over {} instances", name, counts.accuracy(), counts.total);
  }
  return kExitOk;
}

int cmd_rank(const RunConfig& cfg, std::ostream& out) {
  require_embeddings(cfg);
  require_file(cfg.checkpoint, "checkpoint");
  optional_file(cfg.gazetteer, "gazetteer");
  if (cfg.query.empty()) throw UsageError("--query is required");
  if (cfg.candidates.empty()) throw UsageError("--candidates is required");

  const auto model = load_model(cfg);
  TokenSequence q;
  if (!cfg.gazetteer.empty()) {
    q = build_dmp(cfg.query, load_gazetteer(cfg.gazetteer), cfg.allowed_types);
    if (q.empty()) spdlog::warn("rank: no entities found in the query; using all tokens");
  }
  if (q.empty()) q = tokenize(cfg.query);

  std::vector<TokenSequence> cands;
  for (const auto& c : cfg.candidates) cands.push_back(tokenize(c));
  const auto ranking = rank_candidates(model, q, cands);

  ojson doc;
  doc["query"] = cfg.query;
  doc["dmp"] = join_tokens(q);
  doc["ranking"] = ojson::array();
  std::size_t rank = 1;
  for (const auto& e : ranking.entries) {
    ojson row;
    row["rank"] = rank++;
    row["candidate"] = cfg.candidates[e.index];
    row["index"] = e.index;
    row["score"] = e.score;
    doc["ranking"].push_back(row);
  }
  out << doc.dump(2) << '\n';
  return kExitOk;
}

// Stand-in vocabulary for benchmarking without trained embeddings.
std::shared_ptr<const EmbeddingTable> random_table(std::size_t dim, std::uint64_t seed) {
  auto table = std::make_shared<EmbeddingTable>(dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(dim);
  for (std::size_t i = 0; i < 2000; ++i) {
    for (auto& x : v) x = gauss(rng);
    table->insert("tok" + std::to_string(i), v);
  }
  return table;
}

int cmd_bench(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.checkpoint.empty()) {
    require_embeddings(cfg);
    require_file(cfg.checkpoint, "checkpoint");
  } else if (!cfg.embeddings.empty() || !cfg.query_embeddings.empty()) {
    require_embeddings(cfg);
  }
  if (cfg.n_candidates < 1 || cfg.token_len < 1 || cfg.trials < 1) {
    throw UsageError("--n_candidates, --token_len and --trials must be >= 1");
  }
  prepare_output(cfg);

  ModelParams model;
  if (!cfg.checkpoint.empty()) {
    model = load_model(cfg);
  } else {
    Tables t;
    if (cfg.embeddings.empty() && cfg.query_embeddings.empty()) {
      t.query = t.candidate = random_table(cfg.dim, cfg.seed);
    } else {
      t = load_tables(cfg);
    }
    model = init_params(t.query->dim(), cfg.filters, cfg.window, cfg.seed);
    model.query_table = t.query;
    model.candidate_table = t.candidate;
  }

  const auto stats =
      latency_benchmark(model, cfg.n_candidates, cfg.token_len, cfg.trials, cfg.warmup, cfg.seed);
  std::ostringstream csv;
  csv << "n_candidates,token_len,dim,filters,trials,mean_us,p50_us,p95_us,p99_us\n"
      << cfg.n_candidates << ',' << cfg.token_len << ',' << model.query_tower.dim << ','
      << model.query_tower.filters << ',' << stats.trials << ',' << fmt_real("%.3f", stats.mean_us)
      << ',' << fmt_real("%.3f", stats.p50_us) << ',' << fmt_real("%.3f", stats.p95_us) << ','
      << fmt_real("%.3f", stats.p99_us) << '\n'
      << "# env: " << environment_fingerprint() << '\n';
  open_out(cfg.output / "bench.csv") << csv.str();
  out << csv.str();
  return kExitOk;
}

int cmd_cluster(const RunConfig& cfg) {
  require_embeddings(cfg);
  require_file(cfg.checkpoint, "checkpoint");
  require_names_source(cfg);
  prepare_output(cfg);

  const auto names = medication_names(cfg);
  if (names.size() < 3) throw UsageError("clustering needs at least 3 medication names");
  const std::size_t k_max =
      cfg.k_max ? cfg.k_max : std::min<std::size_t>(40, names.size() - 1);
  if (cfg.k_min < 2 || cfg.k_min > k_max || k_max >= names.size()) {
    throw UsageError("need 2 <= k_min <= k_max < number of names (" +
                     std::to_string(names.size()) + ")");
  }
  if (cfg.restarts < 1) throw UsageError("--restarts must be >= 1");
  std::size_t anchor_index = names.size();
  if (!cfg.anchor.empty()) {
    const auto key = join_tokens(tokenize(cfg.anchor));
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (join_tokens(tokenize(names[i])) == key) anchor_index = i;
    }
    if (anchor_index == names.size()) throw UsageError("--anchor not in the name list");
  }

  const auto model = load_model(cfg);
  const auto vectors = encode_names(cfg, model, names);
  const auto report =
      silhouette_sweep(vectors, cfg.k_min, k_max, cfg.seed, cfg.restarts, cfg.threads, cfg.max_iters);

  ojson doc;
  doc["k"] = report.best_k;
  for (const auto& e : report.entries) {
    if (e.k == report.best_k) doc["silhouette"] = e.silhouette;
  }
  doc["inertia"] = report.best.inertia;
  doc["clusters"] = ojson::array();
  for (std::size_t c = 0; c < report.best_k; ++c) {
    ojson members = ojson::array();
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (report.best.labels[i] == c) members.push_back(names[i]);
    }
    doc["clusters"].push_back({{"id", c}, {"members", members}});
  }
  doc["sweep"] = ojson::array();
  for (const auto& e : report.entries) {
    doc["sweep"].push_back({{"k", e.k}, {"silhouette", e.silhouette}, {"inertia", e.inertia}});
  }
  if (anchor_index < names.size()) {
    doc["nearest"] = {
        {"anchor", names[anchor_index]},
        {"neighbors", nearest_in_cluster(names[anchor_index], names, vectors, report.best,
                                         cfg.topk)}};
  }
  open_out(cfg.output / "clusters.json") << doc.dump(2) << '\n';
  export_tsv(vectors, names, cfg.output / "vectors.tsv", cfg.output / "names.tsv");
  spdlog::info("cluster: best k = {} over {} names", report.best_k, names.size());
  return kExitOk;
}

int cmd_export(const RunConfig& cfg) {
  require_embeddings(cfg);
  require_file(cfg.checkpoint, "checkpoint");
  require_names_source(cfg);
  prepare_output(cfg);

  const auto names = medication_names(cfg);
  const auto model = load_model(cfg);
  export_tsv(encode_names(cfg, model, names), names, cfg.output / "vectors.tsv",
             cfg.output / "names.tsv");
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Medication ranking with a two-tower CNN", "medrank"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "flat JSON configuration file");
  std::map<std::string, std::vector<std::string>> raw;
  std::map<std::string, CLI::Option*> flags;
  for (const auto& key : config_keys()) {
    auto* opt = app.add_option(std::string("--") + key.name, raw[key.name], key.help);
    if (key.kind == KeyKind::kList) {
      opt->expected(1, CLI::detail::expected_max_vector_size);
    } else {
      opt->expected(1);
    }
    flags[key.name] = opt;
  }

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-data", "generate train/heldout ranking instances from a corpus"},
      {"train", "train the two towers and write a checkpoint"},
      {"eval", "top-1 accuracy of a checkpoint on a dataset"},
      {"rank", "rank candidate medications for one query"},
      {"bench", "measure ranking latency"},
      {"cluster", "cluster medication vectors and pick k by silhouette"},
      {"export-embeddings", "write medication vectors as TSV"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  RunConfig cfg;
  try {
    if (!config_path.empty()) cfg.apply(read_config_file(config_path));
    nlohmann::json overrides = nlohmann::json::object();
    for (const auto& key : config_keys()) {
      if (flags[key.name]->count() > 0) overrides[key.name] = parse_flag_value(key, raw[key.name]);
    }
    cfg.apply(overrides);

    if (command == "gen-data") return cmd_gen_data(cfg);
    if (command == "train") return cmd_train(cfg);
    if (command == "eval") return cmd_eval(cfg);
    if (command == "rank") return cmd_rank(cfg, out);
    if (command == "bench") return cmd_bench(cfg, out);
    if (command == "cluster") return cmd_cluster(cfg);
    return cmd_export(cfg);
  } catch (const ConfigError& e) {
    err << "medrank: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "medrank " << command << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "medrank " << command << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "medrank " << command << ": " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace medrank::cli
