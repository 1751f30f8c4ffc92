#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "medrank/encoder.hpp"
#include "medrank/matrix.hpp"

namespace medrank {

using Vectors = std::vector<std::vector<double>>;

/// Candidate-tower encodings of each SMN, order preserving.
Vectors encode_all(const ModelParams& model, const std::vector<TokenSequence>& smns,
                   std::size_t threads = 1);

/// Scales every non-zero row to unit length, so Euclidean order matches
/// cosine order.
void normalize_rows(Vectors& vectors);

struct ClusterAssignment {
  std::size_t k = 0;
  std::vector<std::size_t> labels;
  Matrix centroids;  // k x dim
  double inertia = 0.0;
};

/// k-means++ seeding and Lloyd iterations (Euclidean) until the assignment is
/// stable or max_iters updates have run, then Hartigan single-point transfers
/// until none lowers the inertia. An emptied cluster takes the point farthest
/// from its own centroid. When `inertia_trace` is given it receives the inertia
/// after every assignment step and transfer pass.
ClusterAssignment kmeans(const Vectors& vectors, std::size_t k, std::uint64_t seed,
                         std::size_t max_iters = 300,
                         std::vector<double>* inertia_trace = nullptr);

/// Lowest-inertia run out of `restarts` seeds derived from `seed`.
ClusterAssignment kmeans_best(const Vectors& vectors, std::size_t k, std::uint64_t seed,
                              std::size_t restarts, std::size_t max_iters = 300);

/// Per-point silhouette (b - a) / max(a, b); points in singleton clusters score
/// 0. Throws std::invalid_argument for k < 2.
std::vector<double> silhouette_samples(const Vectors& vectors, const ClusterAssignment& assignment);
double silhouette(const Vectors& vectors, const ClusterAssignment& assignment);

struct SilhouetteReport {
  struct Entry {
    std::size_t k = 0;
    double silhouette = 0.0;
    double inertia = 0.0;
  };
  std::vector<Entry> entries;
  std::size_t best_k = 0;
  ClusterAssignment best;
};

/// For every k in [k_min, k_max]: best-of-`restarts` k-means, then its mean
/// silhouette. best_k maximizes silhouette, smallest k on ties. Requires
/// 2 <= k_min <= k_max <= n - 1.
SilhouetteReport silhouette_sweep(const Vectors& vectors, std::size_t k_min, std::size_t k_max,
                                  std::uint64_t seed, std::size_t restarts,
                                  std::size_t threads = 1, std::size_t max_iters = 300);

/// Other members of the anchor's cluster by ascending distance to the anchor,
/// at most `topk`. Throws std::invalid_argument for an unknown anchor.
std::vector<std::string> nearest_in_cluster(const std::string& anchor,
                                            const std::vector<std::string>& names,
                                            const Vectors& vectors,
                                            const ClusterAssignment& assignment, std::size_t topk);

/// Writes tab-separated vectors and one name per line, row aligned.
void export_tsv(const Vectors& vectors, const std::vector<std::string>& names,
                const std::filesystem::path& vectors_path,
                const std::filesystem::path& names_path);

/// Reads a vectors TSV written by export_tsv.
Vectors read_vectors_tsv(const std::filesystem::path& path);

}  // namespace medrank
