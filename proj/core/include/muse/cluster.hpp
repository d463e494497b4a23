#pragma once

#include "muse/annotate.hpp"
#include "muse/providers.hpp"
#include "muse/vectors.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace muse {

/// Lloyd's algorithm with k-means++ seeding on unit vectors (Euclidean).
/// Empty clusters are repaired by moving the farthest member of the largest
/// cluster into them. Labels are renumbered by first occurrence, so label 0
/// always belongs to vectors[0]. Throws KTooLarge when k > vectors.size().
std::vector<std::size_t> kmeans(std::span<const Vector> vectors, std::size_t k, std::uint64_t seed,
                                std::size_t max_iter = 100);

using IndexClusters = std::vector<std::vector<std::size_t>>;

/// Complete-linkage agglomerative clustering on cosine distance. Merges the
/// closest pair while its linkage distance is strictly below the threshold;
/// equal distances go to the pair with the smallest (min member, min member)
/// key. Clusters come back sorted by smallest member, members ascending.
IndexClusters agglomerative(std::span<const Vector> vectors, double distance_threshold);

struct LooseCluster {
  std::size_t id = 0;
  std::vector<std::string> members;  // purpose tag ids, sorted

  bool operator==(const LooseCluster&) const = default;
};

struct ProblemCluster {
  std::string id;
  std::vector<std::string> members;  // purpose tag ids, sorted
  std::size_t loose_cluster_id = 0;

  bool operator==(const ProblemCluster&) const = default;
};

struct SolutionCluster {
  std::string id;
  std::vector<std::string> members;  // mechanism tag ids, sorted

  bool operator==(const SolutionCluster&) const = default;
};

inline constexpr double kDefaultDistanceThreshold = 0.2;

struct ClusterConfig {
  double threshold = kDefaultDistanceThreshold;
  std::optional<std::size_t> k_loose;  // max(1, N / 50) when unset
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  unsigned threads = 0;
};

std::size_t auto_k_loose(std::size_t n_tags);

struct ProblemClustering {
  std::vector<LooseCluster> loose;
  std::vector<ProblemCluster> problems;
};

ProblemClustering build_problem_clusters(const std::vector<PurposeTag>& tags, const EmbeddingProvider& emb,
                                         const ClusterConfig& cfg);

/// Connected components of "share a problem cluster through their documents".
std::vector<SolutionCluster> induce_solution_clusters(const std::vector<ProblemCluster>& problems,
                                                      const std::vector<PurposeTag>& purposes,
                                                      const std::vector<MechanismTag>& mechanisms);

/// Stable content id over sorted member texts and ids.
std::string cluster_content_id(std::string_view kind, std::vector<std::string> member_texts,
                               std::vector<std::string> member_ids);

using Partition = std::vector<std::vector<std::string>>;

/// Throws UniverseMismatch if the two partitions cover different elements.
double purity(const Partition& pred, const Partition& gold);
/// Arithmetic-mean normalization, natural log; two single-cluster
/// partitions score 1.
double nmi(const Partition& pred, const Partition& gold);

/// Accepts a JSON array of arrays or TSV "item<TAB>label" rows.
Partition load_partition(const std::filesystem::path& path);

struct ClusterDump {
  std::vector<LooseCluster> loose;
  std::vector<ProblemCluster> problems;
  std::vector<SolutionCluster> solutions;
  /// Clustering settings, carried into the graph params.
  std::map<std::string, std::string> params;

  bool operator==(const ClusterDump&) const = default;
};

/// The settings worth recording next to a clustering run.
std::map<std::string, std::string> cluster_params(const ClusterConfig& cfg);

void save_clusters(const std::filesystem::path& path, const ClusterDump& dump);
ClusterDump load_clusters(const std::filesystem::path& path);

}  // namespace muse
