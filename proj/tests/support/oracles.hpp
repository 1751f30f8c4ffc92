#pragma once

// Independent reference implementations used as test oracles. None of these
// call into the production forward/backward or clustering code.

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "medrank/embeddings.hpp"
#include "medrank/encoder.hpp"
#include "medrank/tokenizer.hpp"

namespace oracle {

using medrank::ConvTower;
using medrank::EmbeddingTable;
using medrank::ModelParams;
using medrank::TokenSequence;

/// Random table over tokens "w0".."w{vocab-1}" with N(0,1) components.
std::shared_ptr<EmbeddingTable> random_table(std::size_t vocab, std::size_t dim,
                                             std::mt19937_64& rng);

/// Tower with uniform(-scale, scale) weights and biases.
ConvTower random_tower(std::size_t d, std::size_t f, std::size_t w, double scale,
                       std::mt19937_64& rng);

/// Random model bound to one shared table.
ModelParams random_model(std::shared_ptr<const EmbeddingTable> table, std::size_t f,
                         std::size_t w, double scale, std::mt19937_64& rng);

/// Tokens drawn from the table vocabulary (plus an occasional unknown token).
TokenSequence random_sequence(const EmbeddingTable& table, std::size_t len, std::mt19937_64& rng,
                              double oov_rate = 0.0);

/// Straight-line embed -> conv -> relu -> max-pool.
std::vector<double> naive_encode(const TokenSequence& seq, const ConvTower& tower,
                                 const EmbeddingTable& table);
double naive_cosine(const std::vector<double>& u, const std::vector<double>& v);
double naive_score(const ModelParams& m, const TokenSequence& q, const TokenSequence& p);
double naive_pair_loss(const ModelParams& m, const TokenSequence& q, const TokenSequence& pos,
                       const TokenSequence& neg, double margin);

/// Central finite differences of naive_pair_loss. Order: query weights,
/// query biases, candidate weights, candidate biases.
std::vector<double> finite_difference_grad(const ModelParams& m, const TokenSequence& q,
                                           const TokenSequence& pos, const TokenSequence& neg,
                                           double margin, double eps);

using Points = std::vector<std::vector<double>>;

double sq_dist(const std::vector<double>& a, const std::vector<double>& b);

/// Inertia of a labelling with centroids at the cluster means.
double labelling_inertia(const Points& pts, const std::vector<std::size_t>& labels, std::size_t k);

/// Plain Lloyd from the given centroids until assignments stop changing
/// (nearest centroid, lowest index on ties).
std::vector<std::size_t> lloyd(const Points& pts, Points centroids, std::size_t max_iters = 1000);

/// Minimum inertia over every partition into exactly k non-empty clusters.
double exhaustive_optimal_inertia(const Points& pts, std::size_t k);

/// Textbook silhouette, O(n^2), singleton clusters score 0.
double naive_silhouette(const Points& pts, const std::vector<std::size_t>& labels, std::size_t k);

/// `k` isotropic Gaussian blobs in `dim` dimensions, centres `separation`
/// apart along distinct axes (plus a shared offset), `per_blob` points each.
Points gaussian_blobs(std::size_t k, std::size_t per_blob, std::size_t dim, double separation,
                      double sigma, std::mt19937_64& rng);

}  // namespace oracle
