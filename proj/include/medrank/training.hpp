#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "medrank/dataset.hpp"
#include "medrank/encoder.hpp"

namespace medrank {

enum class OptimizerKind { kSgd, kAdam };

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainingConfig {
  double margin = 0.5;
  double learning_rate = 0.05;
  std::size_t batch_size = 150;
  std::size_t max_epochs = 6;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  AdamSettings adam;
  std::size_t threads = 1;

  /// Throws std::invalid_argument. margin must lie in (0, 2]; a zero learning
  /// rate is accepted (null update).
  void validate() const;
};

struct TowerGradient {
  std::vector<double> weights;
  std::vector<double> biases;

  explicit TowerGradient(const ConvTower& shape = {})
      : weights(shape.weights.size(), 0.0), biases(shape.biases.size(), 0.0) {}
  bool operator==(const TowerGradient&) const = default;
};

struct GradientSet {
  TowerGradient query;
  TowerGradient candidate;

  GradientSet() = default;
  explicit GradientSet(const ModelParams& model)
      : query(model.query_tower), candidate(model.candidate_tower) {}

  GradientSet& operator+=(const GradientSet& other);
  GradientSet& operator*=(double s);
  bool all_zero() const;
  bool operator==(const GradientSet&) const = default;
};

/// max(0, margin - s_pos + s_neg).
double hinge_loss(double s_pos, double s_neg, double margin);

struct LossAndGrad {
  double loss = 0.0;
  GradientSet grads;
};

/// Analytic gradient of hinge_loss(score(q, pos), score(q, neg), margin) with
/// respect to both towers. Max pooling routes gradient to the first argmax
/// row; ReLU passes gradient only where the pre-activation is > 0. Embeddings
/// are not trainable. A zero loss yields exactly zero gradients.
LossAndGrad backward(const ModelParams& model, const TokenSequence& q,
                     const TokenSequence& pos, const TokenSequence& neg, double margin);

/// Loss only, same forward path as backward().
double pair_loss(const ModelParams& model, const TokenSequence& q, const TokenSequence& pos,
                 const TokenSequence& neg, double margin);

/// Glorot-uniform weights in +-sqrt(6 / (w*d + F)), zero biases. The query
/// tower is drawn first, then the candidate tower, from one seeded stream.
/// Tables are left unbound.
ModelParams init_params(std::size_t dim, std::size_t filters, std::size_t window,
                        std::uint64_t seed);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  ModelParams model;  // parameters from the best validation epoch
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
};

/// Mini-batch training on n = 2 instances. Batch gradients are means over the
/// batch, reduced in a fixed order so results do not depend on cfg.threads.
/// The epoch order is reshuffled each epoch from one stream seeded by cfg.seed.
/// Returns the epoch with the best validation accuracy (ties: lower validation
/// loss, then earlier epoch). An empty `validation` means "use `train`".
TrainResult train(const Dataset& train_set, const Dataset& validation, const ModelParams& init,
                  const TrainingConfig& cfg);

/// CSV with header epoch,mean_loss,val_accuracy.
void write_history_csv(const std::vector<EpochStats>& history, std::ostream& out);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;  // coordinates next to a ReLU, pooling or hinge kink
};

/// Compares backward() against central finite differences over every trainable
/// scalar. Relative error is |a - b| / max(1e-8, |a| + |b|). A coordinate is
/// excluded when a pre-activation feeding its filter lies within 10*epsilon of
/// zero, the top two pooled values of its filter are within 10*epsilon, the
/// hinge is within 10*epsilon of its corner, or the perturbation flips any
/// ReLU/argmax/hinge state.
GradCheckReport grad_check(const ModelParams& model, const TokenSequence& q,
                           const TokenSequence& pos, const TokenSequence& neg, double margin,
                           double epsilon);

}  // namespace medrank
