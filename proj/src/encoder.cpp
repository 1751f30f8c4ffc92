#include "medrank/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace medrank {

void ConvTower::validate() const {
  if (dim == 0 || filters == 0 || window == 0) {
    throw std::invalid_argument("conv tower dimensions must be positive");
  }
  if (weights.size() != filters * window * dim || biases.size() != filters) {
    throw std::invalid_argument("conv tower parameter shape mismatch");
  }
  for (double w : weights) {
    if (!std::isfinite(w)) throw std::invalid_argument("non-finite conv weight");
  }
  for (double b : biases) {
    if (!std::isfinite(b)) throw std::invalid_argument("non-finite conv bias");
  }
}

void ModelParams::validate() const {
  query_tower.validate();
  candidate_tower.validate();
  if (query_tower.filters != candidate_tower.filters) {
    throw std::invalid_argument("towers must share the output dimension");
  }
  if (query_table && query_table->dim() != query_tower.dim) {
    throw std::invalid_argument("query table dimension does not match query tower");
  }
  if (candidate_table && candidate_table->dim() != candidate_tower.dim) {
    throw std::invalid_argument("candidate table dimension does not match candidate tower");
  }
}

Matrix conv_preactivations(const Matrix& input, const ConvTower& tower) {
  if (input.cols != tower.dim) {
    throw std::invalid_argument("input has " + std::to_string(input.cols) +
                                " columns, tower expects " + std::to_string(tower.dim));
  }
  if (input.rows < tower.window) {
    throw std::invalid_argument("sequence of length " + std::to_string(input.rows) +
                                " is shorter than the conv window");
  }
  const std::size_t steps = input.rows - tower.window + 1;
  const std::size_t fan_in = tower.fan_in();
  Matrix out(steps, tower.filters);
  for (std::size_t t = 0; t < steps; ++t) {
    // Rows t..t+w-1 are contiguous in row-major storage.
    const double* x = input.data.data() + t * input.cols;
    for (std::size_t f = 0; f < tower.filters; ++f) {
      const double* w = tower.weights.data() + f * fan_in;
      double acc = tower.biases[f];
      for (std::size_t k = 0; k < fan_in; ++k) acc += w[k] * x[k];
      out(t, f) = acc;
    }
  }
  return out;
}

Matrix conv_forward(const Matrix& input, const ConvTower& tower) {
  Matrix out = conv_preactivations(input, tower);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

PoolResult max_pool(const Matrix& features) {
  if (features.rows == 0 || features.cols == 0) {
    throw std::invalid_argument("max_pool on empty input");
  }
  PoolResult result;
  result.values.assign(features.row(0).begin(), features.row(0).end());
  result.argmax.assign(features.cols, 0);
  for (std::size_t t = 1; t < features.rows; ++t) {
    auto row = features.row(t);
    for (std::size_t f = 0; f < features.cols; ++f) {
      if (row[f] > result.values[f]) {
        result.values[f] = row[f];
        result.argmax[f] = t;
      }
    }
  }
  return result;
}

std::vector<double> encode(const TokenSequence& seq, const ConvTower& tower,
                           const EmbeddingTable& table) {
  return max_pool(conv_forward(embed(seq, table, tower.window), tower)).values;
}

std::vector<double> encode_query(const ModelParams& model, const TokenSequence& q) {
  return encode(q, model.query_tower, *model.query_table);
}

std::vector<double> encode_candidate(const ModelParams& model, const TokenSequence& p) {
  return encode(p, model.candidate_tower, *model.candidate_table);
}

double cosine_score(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine_score: length mismatch");
  double dot = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  const double nu = std::sqrt(uu);
  const double nv = std::sqrt(vv);
  if (nu < kMinNorm || nv < kMinNorm) return 0.0;
  return std::clamp(dot / (nu * nv), -1.0, 1.0);
}

double score(const ModelParams& model, const TokenSequence& q, const TokenSequence& p) {
  return cosine_score(encode_query(model, q), encode_candidate(model, p));
}

}  // namespace medrank
