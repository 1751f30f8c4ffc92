#include "medrank/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "medrank/parallel.hpp"

namespace medrank {

Vectors encode_all(const ModelParams& model, const std::vector<TokenSequence>& smns,
                   std::size_t threads) {
  Vectors out(smns.size());
  parallel_for(smns.size(), threads,
               [&](std::size_t i) { out[i] = encode_candidate(model, smns[i]); });
  return out;
}

void normalize_rows(Vectors& vectors) {
  for (auto& v : vectors) {
    double s = 0.0;
    for (double x : v) s += x * x;
    if (s <= 0.0) continue;
    const double inv = 1.0 / std::sqrt(s);
    for (double& x : v) x *= inv;
  }
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void check_vectors(const Vectors& vectors) {
  if (vectors.empty()) return;
  const std::size_t dim = vectors.front().size();
  for (const auto& v : vectors) {
    if (v.size() != dim) throw std::invalid_argument("vectors have inconsistent dimensions");
  }
}

Matrix means(const Vectors& vectors, const std::vector<std::size_t>& labels, std::size_t k) {
  const std::size_t dim = vectors.front().size();
  Matrix c(k, dim);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    auto row = c.row(labels[i]);
    for (std::size_t j = 0; j < dim; ++j) row[j] += vectors[i][j];
    ++counts[labels[i]];
  }
  for (std::size_t c_id = 0; c_id < k; ++c_id) {
    if (counts[c_id] == 0) continue;
    for (double& x : c.row(c_id)) x /= static_cast<double>(counts[c_id]);
  }
  return c;
}

double inertia_of(const Vectors& vectors, const std::vector<std::size_t>& labels,
                  const Matrix& centroids) {
  double s = 0.0;
  for (std::size_t i = 0; i < vectors.size(); ++i) s += sq_dist(vectors[i], centroids.row(labels[i]));
  return s;
}

std::vector<std::size_t> assign(const Vectors& vectors, const Matrix& centroids) {
  std::vector<std::size_t> labels(vectors.size(), 0);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.rows; ++c) {
      const double d = sq_dist(vectors[i], centroids.row(c));
      if (d < best) {
        best = d;
        labels[i] = c;
      }
    }
  }
  return labels;
}

// Gives every empty cluster the point farthest from its current centroid,
// taken from a cluster that keeps at least one member. Updates centroids of
// repaired clusters to the stolen point.
void repair_empty(const Vectors& vectors, std::vector<std::size_t>& labels, Matrix& centroids) {
  const std::size_t k = centroids.rows;
  std::vector<std::size_t> counts(k, 0);
  for (auto l : labels) ++counts[l];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    std::size_t victim = vectors.size();
    double far = -1.0;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      if (counts[labels[i]] < 2) continue;
      const double d = sq_dist(vectors[i], centroids.row(labels[i]));
      if (d > far) {
        far = d;
        victim = i;
      }
    }
    if (victim == vectors.size()) throw std::logic_error("k-means repair found no donor point");
    --counts[labels[victim]];
    labels[victim] = c;
    counts[c] = 1;
    std::copy(vectors[victim].begin(), vectors[victim].end(), centroids.row(c).begin());
  }
}

Matrix plus_plus_init(const Vectors& vectors, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = vectors.size();
  const std::size_t dim = vectors.front().size();
  Matrix c(k, dim);
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  std::copy(vectors[first].begin(), vectors[first].end(), c.row(0).begin());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(vectors[i], c.row(0));
  for (std::size_t m = 1; m < k; ++m) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      double run = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        run += d2[i];
        if (run > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    std::copy(vectors[pick].begin(), vectors[pick].end(), c.row(m).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(vectors[i], c.row(m)));
  }
  return c;
}

// Hartigan single-point transfers on top of a Lloyd fixed point. Moving x from
// cluster a to b changes the inertia by n_b/(n_b+1)*|x-c_b|^2 - n_a/(n_a-1)*|x-c_a|^2,
// so every accepted move strictly lowers it. Escapes many Lloyd local optima;
// a transfer-stable partition is also Lloyd-stable. Returns true if anything moved.
bool hartigan_pass(const Vectors& vectors, std::vector<std::size_t>& labels, std::size_t k) {
  Matrix centroids = means(vectors, labels, k);
  std::vector<std::size_t> counts(k, 0);
  for (auto l : labels) ++counts[l];
  const std::size_t dim = centroids.cols;
  bool moved = false;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const std::size_t a = labels[i];
    if (counts[a] < 2) continue;
    const double na = static_cast<double>(counts[a]);
    const double remove_gain = na / (na - 1.0) * sq_dist(vectors[i], centroids.row(a));
    std::size_t target = a;
    double best_cost = remove_gain;
    for (std::size_t b = 0; b < k; ++b) {
      if (b == a) continue;
      const double nb = static_cast<double>(counts[b]);
      const double cost = nb / (nb + 1.0) * sq_dist(vectors[i], centroids.row(b));
      if (cost < best_cost) {
        best_cost = cost;
        target = b;
      }
    }
    if (target == a || remove_gain - best_cost <= 1e-12 * remove_gain) continue;
    auto ca = centroids.row(a);
    auto cb = centroids.row(target);
    const double nb = static_cast<double>(counts[target]);
    for (std::size_t j = 0; j < dim; ++j) {
      ca[j] = (ca[j] * na - vectors[i][j]) / (na - 1.0);
      cb[j] = (cb[j] * nb + vectors[i][j]) / (nb + 1.0);
    }
    --counts[a];
    ++counts[target];
    labels[i] = target;
    moved = true;
  }
  return moved;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::uint32_t words[2];
  seq.generate(std::begin(words), std::end(words));
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

ClusterAssignment kmeans(const Vectors& vectors, std::size_t k, std::uint64_t seed,
                         std::size_t max_iters, std::vector<double>* inertia_trace) {
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (k > vectors.size()) {
    throw std::invalid_argument("kmeans: k = " + std::to_string(k) + " exceeds " +
                                std::to_string(vectors.size()) + " points");
  }
  if (max_iters < 1) throw std::invalid_argument("kmeans: max_iters must be >= 1");
  check_vectors(vectors);

  std::mt19937_64 rng(seed);
  Matrix centroids = plus_plus_init(vectors, k, rng);
  auto labels = assign(vectors, centroids);
  repair_empty(vectors, labels, centroids);
  if (inertia_trace) inertia_trace->push_back(inertia_of(vectors, labels, centroids));

  for (std::size_t it = 0; it < max_iters; ++it) {
    centroids = means(vectors, labels, k);
    auto next = assign(vectors, centroids);
    repair_empty(vectors, next, centroids);
    if (inertia_trace) inertia_trace->push_back(inertia_of(vectors, next, centroids));
    if (next == labels) break;
    labels = std::move(next);
  }
  for (std::size_t pass = 0; pass < max_iters && hartigan_pass(vectors, labels, k); ++pass) {
    if (inertia_trace) {
      inertia_trace->push_back(inertia_of(vectors, labels, means(vectors, labels, k)));
    }
  }

  ClusterAssignment out;
  out.k = k;
  out.centroids = means(vectors, labels, k);
  out.inertia = inertia_of(vectors, labels, out.centroids);
  out.labels = std::move(labels);
  return out;
}

ClusterAssignment kmeans_best(const Vectors& vectors, std::size_t k, std::uint64_t seed,
                              std::size_t restarts, std::size_t max_iters) {
  if (restarts < 1) throw std::invalid_argument("kmeans_best: restarts must be >= 1");
  ClusterAssignment best;
  for (std::size_t r = 0; r < restarts; ++r) {
    auto run = kmeans(vectors, k, derive_seed(seed, k, r), max_iters);
    if (r == 0 || run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

std::vector<double> silhouette_samples(const Vectors& vectors,
                                       const ClusterAssignment& assignment) {
  const std::size_t k = assignment.k;
  if (k < 2) throw std::invalid_argument("silhouette needs k >= 2");
  if (assignment.labels.size() != vectors.size()) {
    throw std::invalid_argument("silhouette: label count does not match vectors");
  }
  std::vector<std::size_t> counts(k, 0);
  for (auto l : assignment.labels) {
    if (l >= k) throw std::invalid_argument("silhouette: cluster id out of range");
    ++counts[l];
  }
  for (auto c : counts) {
    if (c == 0) throw std::invalid_argument("silhouette: empty cluster");
  }

  const std::size_t n = vectors.size();
  std::vector<double> s(n, 0.0);
  std::vector<double> sums(k);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t own = assignment.labels[i];
    if (counts[own] == 1) continue;
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      sums[assignment.labels[j]] += std::sqrt(sq_dist(vectors[i], vectors[j]));
    }
    const double a = sums[own] / static_cast<double>(counts[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (c != own) b = std::min(b, sums[c] / static_cast<double>(counts[c]));
    }
    const double denom = std::max(a, b);
    s[i] = denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return s;
}

double silhouette(const Vectors& vectors, const ClusterAssignment& assignment) {
  const auto s = silhouette_samples(vectors, assignment);
  if (s.empty()) return 0.0;
  return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

SilhouetteReport silhouette_sweep(const Vectors& vectors, std::size_t k_min, std::size_t k_max,
                                  std::uint64_t seed, std::size_t restarts, std::size_t threads,
                                  std::size_t max_iters) {
  if (k_min < 2 || k_min > k_max || k_max + 1 > vectors.size()) {
    throw std::invalid_argument("silhouette_sweep: need 2 <= k_min <= k_max <= n - 1 (n = " +
                                std::to_string(vectors.size()) + ")");
  }
  const std::size_t count = k_max - k_min + 1;
  std::vector<ClusterAssignment> fits(count);
  std::vector<double> scores(count);
  parallel_for(count, threads, [&](std::size_t i) {
    fits[i] = kmeans_best(vectors, k_min + i, seed, restarts, max_iters);
    scores[i] = silhouette(vectors, fits[i]);
  });

  SilhouetteReport report;
  std::size_t best = 0;
  for (std::size_t i = 0; i < count; ++i) {
    report.entries.push_back({k_min + i, scores[i], fits[i].inertia});
    if (scores[i] > scores[best]) best = i;
  }
  report.best_k = k_min + best;
  report.best = std::move(fits[best]);
  return report;
}

std::vector<std::string> nearest_in_cluster(const std::string& anchor,
                                            const std::vector<std::string>& names,
                                            const Vectors& vectors,
                                            const ClusterAssignment& assignment,
                                            std::size_t topk) {
  if (names.size() != vectors.size() || assignment.labels.size() != vectors.size()) {
    throw std::invalid_argument("nearest_in_cluster: size mismatch");
  }
  const auto it = std::find(names.begin(), names.end(), anchor);
  if (it == names.end()) throw std::invalid_argument("unknown anchor '" + anchor + "'");
  const auto a = static_cast<std::size_t>(it - names.begin());

  std::vector<std::pair<double, std::size_t>> members;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (i == a || assignment.labels[i] != assignment.labels[a]) continue;
    members.emplace_back(sq_dist(vectors[a], vectors[i]), i);
  }
  std::sort(members.begin(), members.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < members.size() && i < topk; ++i) out.push_back(names[members[i].second]);
  return out;
}

void export_tsv(const Vectors& vectors, const std::vector<std::string>& names,
                const std::filesystem::path& vectors_path,
                const std::filesystem::path& names_path) {
  if (vectors.size() != names.size()) {
    throw std::invalid_argument("export_tsv: " + std::to_string(vectors.size()) + " vectors but " +
                                std::to_string(names.size()) + " names");
  }
  std::ofstream vec_out(vectors_path, std::ios::binary | std::ios::trunc);
  std::ofstream name_out(names_path, std::ios::binary | std::ios::trunc);
  if (!vec_out || !name_out) throw std::runtime_error("export_tsv: cannot open output files");
  char buf[40];
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (std::size_t j = 0; j < vectors[i].size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", vectors[i][j]);
      if (j) vec_out << '\t';
      vec_out << buf;
    }
    vec_out << '\n';
    name_out << names[i] << '\n';
  }
  if (!vec_out || !name_out) throw std::runtime_error("export_tsv: write failed");
}

Vectors read_vectors_tsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Vectors out;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::istringstream fields(line);
    std::string field;
    while (std::getline(fields, field, '\t')) row.push_back(std::stod(field));
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace medrank
