#pragma once

#include "muse/annotate.hpp"
#include "muse/cluster.hpp"
#include "muse/connect.hpp"
#include "muse/corpus.hpp"
#include "muse/graph.hpp"
#include "muse/providers.hpp"
#include "muse/vectors.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace muse {

struct GraphBuildConfig {
  NliConfig nli;
  RepresentativePolicy policy = RepresentativePolicy::Medoid;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

/// "air-humidification" -> "Air-humidification".
std::string capitalize_first(std::string s);

/// Problem and Solution nodes from the clusters, finalized entailment edges
/// inside each loose cluster and the problem-solution edges.
Fcg build_base_graph(const Annotations& tags, const ClusterDump& clusters, const EmbeddingProvider& emb,
                     const EntailmentProvider& ent, const GraphBuildConfig& cfg);

/// Problem nodes of one loose cluster with the abstraction edges among them.
Fcg interim_graph(const Fcg& graph, std::size_t loose_cluster_id);
std::vector<std::size_t> loose_cluster_ids(const Fcg& graph);

struct EnhanceConfig {
  NliConfig nli;
  AbstractionConfig abstraction;
};

struct EnhanceReport {
  std::size_t candidates = 0;
  std::size_t llm_nodes = 0;
  std::size_t verb_nodes = 0;
  std::size_t cross_edges = 0;
  std::size_t discarded = 0;
  std::size_t skipped = 0;
  std::size_t components_before = 0;
  std::size_t components_after = 0;
};

/// Candidate selection and LLM abstractions per interim graph, cross-graph
/// linking, re-finalization, then verb nodes. Verb nodes go in last so the
/// final reduction cannot thin their fan-in.
Fcg enhance_graph(Fcg graph, const EmbeddingProvider& emb, const EntailmentProvider& ent,
                  const CompletionProvider& llm, const VerbLexicon& lexicon, const EnhanceConfig& cfg,
                  EnhanceReport* report = nullptr);

/// Label embeddings of the Problem nodes.
NnIndex build_problem_index(const Fcg& graph, const EmbeddingProvider& emb);

struct Snapshot {
  Fcg graph;
  NnIndex index;
  std::map<std::string, std::string> metadata;
};

inline constexpr const char* kGraphFile = "graph.json";
inline constexpr const char* kIndexFile = "index.json";
inline constexpr const char* kMetadataFile = "metadata.json";

void save_snapshot(const std::filesystem::path& dir, const Snapshot& snapshot);
/// Throws SnapshotCorrupt when a file is unreadable or the graph and index
/// disagree on the Problem node ids.
Snapshot load_snapshot(const std::filesystem::path& dir);

struct PipelineConfig {
  std::filesystem::path corpus;
  std::filesystem::path taxonomy;
  std::filesystem::path lexicon;
  CorpusConfig corpus_cfg;
  AnnotateConfig annotate_cfg;
  ClusterConfig cluster_cfg;
  GraphBuildConfig graph_cfg;
  EnhanceConfig enhance_cfg;
};

/// Runs every stage and writes corpus.jsonl, tags.jsonl, clusters.json and
/// the snapshot files into `out_dir`.
Snapshot run_pipeline(const PipelineConfig& cfg, const ProviderSet& providers, const std::filesystem::path& out_dir);

std::string file_digest(const std::filesystem::path& path);

}  // namespace muse
