#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "medrank/dataset.hpp"
#include "medrank/encoder.hpp"

namespace medrank {

struct RankedCandidate {
  std::size_t index = 0;
  double score = 0.0;
};

/// Candidates by non-increasing score, ties by ascending index.
struct Ranking {
  std::vector<RankedCandidate> entries;

  std::size_t top1() const { return entries.at(0).index; }
  std::vector<std::size_t> order() const;
};

/// Sorts precomputed scores into a Ranking.
Ranking rank_by_scores(std::span<const double> scores);

/// Scores every candidate once against q and sorts. Throws on an empty list.
Ranking rank_candidates(const ModelParams& model, const TokenSequence& q,
                        std::span<const TokenSequence> candidates);

/// Result of the all-pairs protocol. Ranking scores are win counts.
struct TournamentResult {
  Ranking ranking;
  std::size_t pair_evaluations = 0;
};

/// `first_wins(i, j)` (i < j) decides one pair. Every unordered pair is played
/// exactly once; candidates are ordered by wins, then by index.
TournamentResult run_tournament(std::size_t n,
                                const std::function<bool(std::size_t, std::size_t)>& first_wins);

/// Runs the model on every pair of candidates: the higher-scoring member wins
/// the pair, the lower index on equal scores. Throws for fewer than 2
/// candidates.
TournamentResult pairwise_tournament(const ModelParams& model, const TokenSequence& q,
                                     std::span<const TokenSequence> candidates);

struct EvalCounts {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? double(correct) / double(total) : 0.0; }
};

/// Top-1 hit counts. Strict: the top candidate carries label 1. Relaxed: the
/// top candidate's normalized name is in positive_smns (falls back to the label
/// when positive_smns is empty). Instances are sharded over `threads`.
EvalCounts evaluate_top1(const ModelParams& model, const Dataset& dataset, bool relaxed,
                         std::size_t threads = 1);

/// Fraction form of evaluate_top1. Throws on an empty dataset.
double top1_accuracy(const ModelParams& model, const Dataset& dataset, bool relaxed,
                     std::size_t threads = 1);

struct LatencyStats {
  double mean_us = 0.0;
  double p50_us = 0.0;
  double p95_us = 0.0;
  double p99_us = 0.0;
  std::size_t trials = 0;
};

/// Nearest-rank percentile summary of samples given in microseconds.
LatencyStats summarize_latencies(std::vector<double> samples_us);

/// Times rank_candidates end to end on the calling thread with pre-tokenized
/// random inputs of `token_len` tokens drawn from the model's vocabularies.
LatencyStats latency_benchmark(const ModelParams& model, std::size_t n_candidates,
                               std::size_t token_len, std::size_t trials, std::size_t warmup,
                               std::uint64_t seed = 0);

/// One-line description of compiler, build and host CPU.
std::string environment_fingerprint();

}  // namespace medrank
