#pragma once

#include "muse/graph.hpp"
#include "muse/providers.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace muse {

/// Nodes and edges to add to a graph, plus proposal bookkeeping.
struct GraphDelta {
  std::vector<FcgNode> nodes;
  std::vector<FcgEdge> edges;
  std::size_t discarded = 0;  // proposals rejected by decoy validation or size
  std::size_t skipped = 0;    // groups whose completion could not be parsed

  void append(GraphDelta other);
};

/// Adds nodes then edges; returns the number of new edges.
std::size_t apply(Fcg& graph, const GraphDelta& delta);

struct CandidateSet {
  std::optional<std::size_t> loose_cluster_id;
  std::vector<std::string> node_ids;  // sorted

  bool operator==(const CandidateSet&) const = default;
};

/// Longest path from any source to each node, over abstraction edges among
/// Problem and VirtualLlm nodes. Throws CyclicInput.
std::map<std::string, std::size_t> node_heights(const Fcg& graph);

/// Nodes whose height is at least h_max - 3 and that sit exactly 2 edges
/// below the highest node reachable from them (ties by smallest id).
CandidateSet select_candidates(const Fcg& graph, std::optional<std::size_t> loose_cluster_id = std::nullopt);

struct AbstractionConfig {
  std::size_t k_groups = 5;
  std::size_t decoys = 2;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

/// Parsed reply to an abstraction prompt: "ABSTRACT: <label>" and an optional
/// "MEMBERS: 1, 3" line naming the chosen items (all items when absent).
struct AbstractionReply {
  std::string label;
  std::vector<std::size_t> members;  // 0-based item positions, sorted
};

std::string build_abstraction_prompt(const std::vector<std::string>& item_labels);
/// Throws UnparseableCompletion.
AbstractionReply parse_abstraction_reply(std::string_view completion, std::size_t item_count);

/// Groups the candidates with k-means, pads every group with decoys from the
/// group farthest from it and asks the completion provider for an
/// abstraction. A proposal that picks any decoy, or fewer than two group
/// members, is discarded. When `set_of` is given, only groups mixing
/// candidates from at least two sets are proposed.
GraphDelta propose_llm_abstractions(const Fcg& graph, const std::vector<std::string>& candidates,
                                    const EmbeddingProvider& emb, const CompletionProvider& llm,
                                    const AbstractionConfig& cfg,
                                    std::optional<std::size_t> loose_cluster_id = std::nullopt,
                                    const std::map<std::string, std::size_t>* set_of = nullptr);

class VerbLexicon {
 public:
  struct Synset {
    std::string id;
    std::vector<std::string> verbs;

    bool operator==(const Synset&) const = default;
  };

  VerbLexicon() = default;
  explicit VerbLexicon(std::vector<Synset> synsets);

  /// TSV rows "synset-id<TAB>verb,verb,...". Throws MalformedRecord.
  static VerbLexicon parse(std::string_view text);
  static VerbLexicon load(const std::filesystem::path& path);

  const std::vector<Synset>& synsets() const noexcept { return synsets_; }
  bool contains(const std::string& verb) const { return by_verb_.count(verb) > 0; }
  /// Synset positions containing `verb`, ascending.
  const std::vector<std::size_t>& synsets_of(const std::string& verb) const;

  /// Base form of `token` if some inflection rule lands on a lexicon verb.
  std::optional<std::string> lemma(const std::string& token) const;

 private:
  std::vector<Synset> synsets_;
  std::map<std::string, std::vector<std::size_t>> by_verb_;
};

/// Lexicon verbs in a label: the first token when it is a verb, otherwise
/// every token that is.
std::vector<std::string> extract_verbs(const std::string& label, const VerbLexicon& lexicon);

/// One VirtualVerb node per synset reached from at least two Problem nodes.
GraphDelta build_verb_nodes(const Fcg& graph, const VerbLexicon& lexicon);

/// Cross-set entailment edges (both directions for every pair drawn from two
/// different sets) and LLM abstractions over groups mixing sets. New nodes
/// carry no loose cluster id. Fewer than two sets is a no-op.
GraphDelta link_interim_graphs(const Fcg& graph, const std::vector<CandidateSet>& sets,
                               const EntailmentProvider& ent, const EmbeddingProvider& emb,
                               const CompletionProvider& llm, const NliConfig& nli, const AbstractionConfig& cfg);

}  // namespace muse
