#include "medrank/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "medrank/parallel.hpp"
#include "medrank/ranking.hpp"

namespace medrank {

void TrainingConfig::validate() const {
  if (!(margin > 0.0) || margin > 2.0) {
    throw std::invalid_argument("margin must be in (0, 2]");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be finite and >= 0");
  }
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be positive");
  if (optimizer == OptimizerKind::kAdam) {
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
        !(adam.epsilon > 0.0)) {
      throw std::invalid_argument("invalid adam settings");
    }
  }
}

namespace {

void add_into(std::vector<double>& dst, const std::vector<double>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void scale(std::vector<double>& v, double s) {
  for (double& x : v) x *= s;
}

bool is_zero(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

}  // namespace

GradientSet& GradientSet::operator+=(const GradientSet& other) {
  add_into(query.weights, other.query.weights);
  add_into(query.biases, other.query.biases);
  add_into(candidate.weights, other.candidate.weights);
  add_into(candidate.biases, other.candidate.biases);
  return *this;
}

GradientSet& GradientSet::operator*=(double s) {
  scale(query.weights, s);
  scale(query.biases, s);
  scale(candidate.weights, s);
  scale(candidate.biases, s);
  return *this;
}

bool GradientSet::all_zero() const {
  return is_zero(query.weights) && is_zero(query.biases) && is_zero(candidate.weights) &&
         is_zero(candidate.biases);
}

double hinge_loss(double s_pos, double s_neg, double margin) {
  return std::max(0.0, margin - s_pos + s_neg);
}

namespace {

struct TowerTrace {
  Matrix input;
  Matrix pre;
  PoolResult pool;
};

TowerTrace run_tower(const TokenSequence& seq, const ConvTower& tower,
                     const EmbeddingTable& table) {
  TowerTrace tr;
  tr.input = embed(seq, table, tower.window);
  tr.pre = conv_preactivations(tr.input, tower);
  Matrix act = tr.pre;
  for (double& v : act.data) v = v > 0.0 ? v : 0.0;
  tr.pool = max_pool(act);
  return tr;
}

struct PairTrace {
  TowerTrace q;
  TowerTrace pos;
  TowerTrace neg;
  double s_pos = 0.0;
  double s_neg = 0.0;
  double loss = 0.0;
};

PairTrace run_pair(const ModelParams& model, const TokenSequence& q, const TokenSequence& pos,
                   const TokenSequence& neg, double margin) {
  PairTrace p;
  p.q = run_tower(q, model.query_tower, *model.query_table);
  p.pos = run_tower(pos, model.candidate_tower, *model.candidate_table);
  p.neg = run_tower(neg, model.candidate_tower, *model.candidate_table);
  p.s_pos = cosine_score(p.q.pool.values, p.pos.pool.values);
  p.s_neg = cosine_score(p.q.pool.values, p.neg.pool.values);
  p.loss = hinge_loss(p.s_pos, p.s_neg, margin);
  return p;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Adds coef * d cos(u, v) / du into grad_u and coef * d cos(u, v) / dv into
// grad_v. Inside the zero-norm region the score is constant 0.
void cosine_backward(const std::vector<double>& u, const std::vector<double>& v, double coef,
                     std::vector<double>& grad_u, std::vector<double>& grad_v) {
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu < kMinNorm || nv < kMinNorm) return;
  double dot = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) dot += u[i] * v[i];
  const double inv = 1.0 / (nu * nv);
  const double cos = dot * inv;
  for (std::size_t i = 0; i < u.size(); ++i) {
    grad_u[i] += coef * (v[i] * inv - cos * u[i] / (nu * nu));
    grad_v[i] += coef * (u[i] * inv - cos * v[i] / (nv * nv));
  }
}

void tower_backward(const TowerTrace& tr, const std::vector<double>& grad_out,
                    const ConvTower& tower, TowerGradient& grad) {
  const std::size_t fan_in = tower.fan_in();
  for (std::size_t f = 0; f < tower.filters; ++f) {
    const double g = grad_out[f];
    if (g == 0.0) continue;
    const std::size_t t = tr.pool.argmax[f];
    if (!(tr.pre(t, f) > 0.0)) continue;
    grad.biases[f] += g;
    const double* x = tr.input.data.data() + t * tr.input.cols;
    double* gw = grad.weights.data() + f * fan_in;
    for (std::size_t k = 0; k < fan_in; ++k) gw[k] += g * x[k];
  }
}

}  // namespace

double pair_loss(const ModelParams& model, const TokenSequence& q, const TokenSequence& pos,
                 const TokenSequence& neg, double margin) {
  return run_pair(model, q, pos, neg, margin).loss;
}

LossAndGrad backward(const ModelParams& model, const TokenSequence& q, const TokenSequence& pos,
                     const TokenSequence& neg, double margin) {
  LossAndGrad out{0.0, GradientSet(model)};
  const PairTrace p = run_pair(model, q, pos, neg, margin);
  out.loss = p.loss;
  if (!(p.loss > 0.0)) return out;

  const std::size_t F = model.output_dim();
  std::vector<double> grad_q(F, 0.0);
  std::vector<double> grad_pos(F, 0.0);
  std::vector<double> grad_neg(F, 0.0);
  // dL/ds_pos = -1, dL/ds_neg = +1 on the active side of the hinge.
  cosine_backward(p.q.pool.values, p.pos.pool.values, -1.0, grad_q, grad_pos);
  cosine_backward(p.q.pool.values, p.neg.pool.values, +1.0, grad_q, grad_neg);

  tower_backward(p.q, grad_q, model.query_tower, out.grads.query);
  tower_backward(p.pos, grad_pos, model.candidate_tower, out.grads.candidate);
  tower_backward(p.neg, grad_neg, model.candidate_tower, out.grads.candidate);
  return out;
}

ModelParams init_params(std::size_t dim, std::size_t filters, std::size_t window,
                        std::uint64_t seed) {
  ModelParams model;
  model.query_tower = ConvTower(dim, filters, window);
  model.candidate_tower = ConvTower(dim, filters, window);
  model.query_tower.validate();
  const double limit = std::sqrt(6.0 / static_cast<double>(window * dim + filters));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& w : model.query_tower.weights) w = dist(rng);
  for (double& w : model.candidate_tower.weights) w = dist(rng);
  return model;
}

namespace {

struct TrainingPair {
  const TokenSequence* q;
  const TokenSequence* pos;
  const TokenSequence* neg;
};

std::vector<TrainingPair> to_pairs(const Dataset& data, const char* what) {
  std::vector<TrainingPair> pairs;
  pairs.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& inst = data[i];
    if (inst.candidates.size() != 2 || inst.labels.size() != 2) {
      throw std::invalid_argument(std::string(what) + " instance " + std::to_string(i) +
                                  " does not have exactly 2 candidates");
    }
    if (inst.labels[0] + inst.labels[1] != 1 || (inst.labels[0] != 0 && inst.labels[0] != 1)) {
      throw std::invalid_argument(std::string(what) + " instance " + std::to_string(i) +
                                  " does not have exactly one positive");
    }
    const std::size_t p = inst.labels[0] == 1 ? 0 : 1;
    pairs.push_back({&inst.q, &inst.candidates[p], &inst.candidates[1 - p]});
  }
  return pairs;
}

// Fixed-size reduction blocks keep the summation order independent of the
// worker count.
constexpr std::size_t kReduceBlock = 8;

GradientSet tree_sum(std::vector<GradientSet>& parts, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return std::move(parts[lo]);
  const std::size_t mid = lo + (hi - lo) / 2;
  GradientSet left = tree_sum(parts, lo, mid);
  left += tree_sum(parts, mid, hi);
  return left;
}

class Optimizer {
 public:
  Optimizer(const TrainingConfig& cfg, const ModelParams& model)
      : cfg_(cfg), m_(model), v_(model) {}

  void step(ModelParams& model, const GradientSet& g) {
    ++t_;
    apply(model.query_tower.weights, g.query.weights, m_.query.weights, v_.query.weights);
    apply(model.query_tower.biases, g.query.biases, m_.query.biases, v_.query.biases);
    apply(model.candidate_tower.weights, g.candidate.weights, m_.candidate.weights,
          v_.candidate.weights);
    apply(model.candidate_tower.biases, g.candidate.biases, m_.candidate.biases,
          v_.candidate.biases);
  }

 private:
  void apply(std::vector<double>& w, const std::vector<double>& g, std::vector<double>& m,
             std::vector<double>& v) const {
    const double lr = cfg_.learning_rate;
    if (cfg_.optimizer == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
      return;
    }
    const auto& a = cfg_.adam;
    const double c1 = 1.0 - std::pow(a.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(a.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = a.beta1 * m[i] + (1.0 - a.beta1) * g[i];
      v[i] = a.beta2 * v[i] + (1.0 - a.beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + a.epsilon);
    }
  }

  const TrainingConfig& cfg_;
  GradientSet m_;
  GradientSet v_;
  std::uint64_t t_ = 0;
};

double mean_pair_loss(const ModelParams& model, const std::vector<TrainingPair>& pairs,
                      double margin, std::size_t threads) {
  std::vector<double> losses(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    losses[i] = pair_loss(model, *pairs[i].q, *pairs[i].pos, *pairs[i].neg, margin);
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(pairs.size());
}

}  // namespace

TrainResult train(const Dataset& train_set, const Dataset& validation, const ModelParams& init,
                  const TrainingConfig& cfg) {
  cfg.validate();
  init.validate();
  if (!init.query_table || !init.candidate_table) {
    throw std::invalid_argument("train: model has no embedding tables bound");
  }
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  const auto pairs = to_pairs(train_set, "training");
  const Dataset& val = validation.empty() ? train_set : validation;
  const auto val_pairs = to_pairs(val, "validation");

  TrainResult result;
  ModelParams model = init;
  Optimizer optimizer(cfg, model);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);

  double best_acc = -1.0;
  double best_val_loss = 0.0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> losses(pairs.size(), 0.0);

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      const std::size_t blocks = (count + kReduceBlock - 1) / kReduceBlock;
      std::vector<GradientSet> partial(blocks);
      parallel_for(blocks, cfg.threads, [&](std::size_t b) {
        GradientSet acc(model);
        const std::size_t end = std::min(count, (b + 1) * kReduceBlock);
        for (std::size_t k = b * kReduceBlock; k < end; ++k) {
          const std::size_t idx = order[start + k];
          const auto& pr = pairs[idx];
          auto lg = backward(model, *pr.q, *pr.pos, *pr.neg, cfg.margin);
          losses[idx] = lg.loss;
          acc += lg.grads;
        }
        partial[b] = std::move(acc);
      });
      GradientSet batch_grad = tree_sum(partial, 0, blocks);
      batch_grad *= 1.0 / static_cast<double>(count);
      optimizer.step(model, batch_grad);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss =
        std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
    stats.val_accuracy = evaluate_top1(model, val, /*relaxed=*/false, cfg.threads).accuracy();
    result.history.push_back(stats);

    const double val_loss = mean_pair_loss(model, val_pairs, cfg.margin, cfg.threads);
    if (stats.val_accuracy > best_acc ||
        (stats.val_accuracy == best_acc && val_loss < best_val_loss)) {
      best_acc = stats.val_accuracy;
      best_val_loss = val_loss;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  return result;
}

void write_history_csv(const std::vector<EpochStats>& history, std::ostream& out) {
  out << "epoch,mean_loss,val_accuracy\n";
  char buf[128];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.10f,%.6f\n", h.epoch, h.mean_loss, h.val_accuracy);
    out << buf;
  }
}

namespace {

struct KinkState {
  std::vector<bool> relu;
  std::vector<std::size_t> argmax;
  bool hinge_active = false;

  bool operator==(const KinkState&) const = default;
};

KinkState kink_state(const PairTrace& p) {
  KinkState s;
  for (const TowerTrace* tr : {&p.q, &p.pos, &p.neg}) {
    for (double v : tr->pre.data) s.relu.push_back(v > 0.0);
    s.argmax.insert(s.argmax.end(), tr->pool.argmax.begin(), tr->pool.argmax.end());
  }
  s.hinge_active = p.loss > 0.0;
  return s;
}

// Hinge loss from the pooled vectors with the cosine evaluated in extended
// precision. Where a score is locally scale invariant (for example a pooled
// vector with a single non-zero component) the true partial derivative is zero
// and double rounding in the cosine alone would dominate the difference quotient.
long double precise_cosine(const std::vector<double>& u, const std::vector<double>& v) {
  long double uu = 0, vv = 0, uv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += static_cast<long double>(u[i]) * u[i];
    vv += static_cast<long double>(v[i]) * v[i];
    uv += static_cast<long double>(u[i]) * v[i];
  }
  if (std::sqrt(uu) < kMinNorm || std::sqrt(vv) < kMinNorm) return 0.0L;
  return std::clamp(uv / (std::sqrt(uu) * std::sqrt(vv)), -1.0L, 1.0L);
}

long double precise_loss(const PairTrace& p, double margin) {
  const long double s_pos = precise_cosine(p.q.pool.values, p.pos.pool.values);
  const long double s_neg = precise_cosine(p.q.pool.values, p.neg.pool.values);
  return std::max(0.0L, margin - s_pos + s_neg);
}

bool filter_near_kink(const std::vector<const TowerTrace*>& traces, std::size_t f, double tol) {
  for (const TowerTrace* tr : traces) {
    double top = -1.0;
    double second = -1.0;
    for (std::size_t t = 0; t < tr->pre.rows; ++t) {
      const double x = tr->pre(t, f);
      if (std::abs(x) < tol) return true;
      const double a = x > 0.0 ? x : 0.0;
      if (a > top) {
        second = top;
        top = a;
      } else if (a > second) {
        second = a;
      }
    }
    if (top > 0.0 && second >= 0.0 && top - second < tol) return true;
  }
  return false;
}

}  // namespace

GradCheckReport grad_check(const ModelParams& model, const TokenSequence& q,
                           const TokenSequence& pos, const TokenSequence& neg, double margin,
                           double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("grad_check: epsilon must be > 0");
  const auto analytic = backward(model, q, pos, neg, margin);
  const PairTrace base = run_pair(model, q, pos, neg, margin);
  const KinkState base_state = kink_state(base);
  const double tol = 10.0 * epsilon;
  const bool hinge_near = std::abs(margin - base.s_pos + base.s_neg) < tol;

  GradCheckReport report;
  ModelParams probe = model;

  const auto check_tower = [&](ConvTower ModelParams::*member, const TowerGradient& grad,
                               const std::vector<const TowerTrace*>& traces) {
    ConvTower& tower = probe.*member;
    const std::size_t fan_in = tower.fan_in();
    const auto check_one = [&](double& param, double analytic_value, std::size_t filter) {
      const double saved = param;
      param = saved + epsilon;
      const PairTrace plus = run_pair(probe, q, pos, neg, margin);
      param = saved - epsilon;
      const PairTrace minus = run_pair(probe, q, pos, neg, margin);
      param = saved;
      if (hinge_near || filter_near_kink(traces, filter, tol) ||
          !(kink_state(plus) == base_state) || !(kink_state(minus) == base_state)) {
        ++report.excluded;
        return;
      }
      const double numeric = static_cast<double>(
          (precise_loss(plus, margin) - precise_loss(minus, margin)) / (2.0L * epsilon));
      const double denom = std::max(1e-8, std::abs(numeric) + std::abs(analytic_value));
      report.max_relative_error =
          std::max(report.max_relative_error, std::abs(numeric - analytic_value) / denom);
      ++report.checked;
    };
    for (std::size_t f = 0; f < tower.filters; ++f) {
      for (std::size_t k = 0; k < fan_in; ++k) {
        check_one(tower.weights[f * fan_in + k], grad.weights[f * fan_in + k], f);
      }
      check_one(tower.biases[f], grad.biases[f], f);
    }
  };

  check_tower(&ModelParams::query_tower, analytic.grads.query, {&base.q});
  check_tower(&ModelParams::candidate_tower, analytic.grads.candidate, {&base.pos, &base.neg});
  return report;
}

}  // namespace medrank
