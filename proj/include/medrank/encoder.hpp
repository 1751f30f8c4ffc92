#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "medrank/embeddings.hpp"
#include "medrank/matrix.hpp"
#include "medrank/tokenizer.hpp"

namespace medrank {

/// One convolution tower: F filters of width `window` over d-dimensional rows,
/// stride 1, ReLU activation. weights is F x (window*dim), row-major, where
/// column k*dim + j multiplies component j of the k-th row in the window.
struct ConvTower {
  std::size_t dim = 0;
  std::size_t filters = 0;
  std::size_t window = 0;
  std::vector<double> weights;
  std::vector<double> biases;

  ConvTower() = default;
  ConvTower(std::size_t d, std::size_t f, std::size_t w)
      : dim(d), filters(f), window(w), weights(f * w * d, 0.0), biases(f, 0.0) {}

  std::size_t fan_in() const { return window * dim; }
  double weight(std::size_t f, std::size_t k) const { return weights[f * fan_in() + k]; }

  /// Throws std::invalid_argument on shape mismatch or non-finite values.
  void validate() const;

  bool operator==(const ConvTower&) const = default;
};

/// The two-tower model. Towers never alias; the tables are frozen and may be
/// the same object.
struct ModelParams {
  ConvTower query_tower;
  ConvTower candidate_tower;
  std::shared_ptr<const EmbeddingTable> query_table;
  std::shared_ptr<const EmbeddingTable> candidate_table;

  std::size_t output_dim() const { return query_tower.filters; }
  void validate() const;
};

/// Pre-activation convolution output, (L - w + 1) x F. Throws if L < w.
Matrix conv_preactivations(const Matrix& input, const ConvTower& tower);

/// ReLU(conv_preactivations).
Matrix conv_forward(const Matrix& input, const ConvTower& tower);

struct PoolResult {
  std::vector<double> values;
  std::vector<std::size_t> argmax;  // first maximal row per column
};

/// Column-wise max. Throws std::invalid_argument on an empty input.
PoolResult max_pool(const Matrix& features);

std::vector<double> encode(const TokenSequence& seq, const ConvTower& tower,
                           const EmbeddingTable& table);

std::vector<double> encode_query(const ModelParams& model, const TokenSequence& q);
std::vector<double> encode_candidate(const ModelParams& model, const TokenSequence& p);

/// Norms below this make the cosine score 0.
inline constexpr double kMinNorm = 1e-12;

double cosine_score(std::span<const double> u, std::span<const double> v);

double score(const ModelParams& model, const TokenSequence& q, const TokenSequence& p);

}  // namespace medrank
