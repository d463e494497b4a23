#pragma once

#include "muse/providers.hpp"
#include "muse/vectors.hpp"

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace muse {

enum class NodeKind { Problem, Solution, VirtualLlm, VirtualVerb };
enum class EdgeKind { AbstractionNli, AbstractionLlm, AbstractionVerb, ProblemSolution };

std::string_view to_string(NodeKind kind) noexcept;
std::string_view to_string(EdgeKind kind) noexcept;
NodeKind parse_node_kind(std::string_view s);
EdgeKind parse_edge_kind(std::string_view s);

constexpr bool is_abstraction(EdgeKind k) noexcept { return k != EdgeKind::ProblemSolution; }
constexpr bool is_virtual(NodeKind k) noexcept { return k == NodeKind::VirtualLlm || k == NodeKind::VirtualVerb; }

struct FcgNode {
  std::string id;
  NodeKind kind = NodeKind::Problem;
  std::string label;
  std::vector<std::string> members;  // tag ids; empty for virtual nodes
  std::optional<std::size_t> loose_cluster_id;

  bool operator==(const FcgNode&) const = default;
};

struct EdgeKey {
  std::string src;
  std::string dst;
  EdgeKind kind = EdgeKind::AbstractionNli;

  auto operator<=>(const EdgeKey&) const = default;
  bool operator==(const EdgeKey&) const = default;
};

/// Abstraction edges point from the specific node to the abstract one.
struct FcgEdge {
  std::string src;
  std::string dst;
  EdgeKind kind = EdgeKind::AbstractionNli;
  std::optional<double> score;
  std::vector<std::string> witnesses;  // document ids behind a ProblemSolution edge

  EdgeKey key() const { return {src, dst, kind}; }
  bool operator==(const FcgEdge&) const = default;
};

/// Nodes keyed by id and edges keyed by (src, dst, kind), so iteration order
/// is the serialization order.
class Fcg {
 public:
  using NodeMap = std::map<std::string, FcgNode>;
  using EdgeMap = std::map<EdgeKey, FcgEdge>;

  std::map<std::string, std::string> params;

  /// Re-adding an identical node is a no-op; a different node under an
  /// existing id throws DuplicateId. Throws InvalidArgument on an empty label
  /// or a member list that does not match the kind.
  void add_node(FcgNode node);
  /// Returns false when an edge with the same key already exists. Throws
  /// UnknownNode for missing endpoints and InvalidArgument for self-loops or
  /// kind/endpoint mismatches.
  bool add_edge(FcgEdge edge);
  bool remove_edge(const EdgeKey& key);

  bool contains(const std::string& id) const { return nodes_.count(id) > 0; }
  /// Throws UnknownNode.
  const FcgNode& node(const std::string& id) const;
  const FcgEdge* edge(const EdgeKey& key) const;

  const NodeMap& nodes() const noexcept { return nodes_; }
  const EdgeMap& edges() const noexcept { return edges_; }

  /// Keys sorted by (src, dst, kind).
  const std::set<EdgeKey>& out_edges(const std::string& id) const;
  const std::set<EdgeKey>& in_edges(const std::string& id) const;

  std::size_t abstraction_edge_count() const;

  bool operator==(const Fcg& other) const {
    return params == other.params && nodes_ == other.nodes_ && edges_ == other.edges_;
  }

 private:
  NodeMap nodes_;
  EdgeMap edges_;
  std::map<std::string, std::set<EdgeKey>> out_;
  std::map<std::string, std::set<EdgeKey>> in_;
};

/// Content-derived node id: a kind prefix plus a hash of the sorted member
/// texts, the label and the sorted member ids.
std::string make_node_id(NodeKind kind, std::vector<std::string> member_texts, std::string_view label,
                         std::vector<std::string> member_ids);

enum class RepresentativePolicy { Medoid, SeededRandom };

RepresentativePolicy parse_representative_policy(std::string_view s);

/// Index of the cluster's representative. `ids` and `vectors` are parallel.
/// Medoid: highest mean cosine to the other members, ties by smallest id.
std::size_t representative(std::span<const std::string> ids, std::span<const Vector> vectors,
                           RepresentativePolicy policy = RepresentativePolicy::Medoid, std::uint64_t seed = 0);

struct NliConfig {
  double threshold = 0.5;
  std::string prefix = "I want";
};

struct LabeledNode {
  std::string id;
  std::string label;
};

/// Every ordered pair (u, v), u != v: edge u -> v when prefix+rep(u) entails
/// prefix+rep(v) with score >= threshold.
std::vector<FcgEdge> nli_abstraction_edges(std::span<const LabeledNode> nodes, const EntailmentProvider& ent,
                                           const NliConfig& cfg);

/// Same rule over pairs with one end in `a` and the other in `b`, both
/// directions: 2 * |a| * |b| scores.
std::vector<FcgEdge> nli_cross_edges(std::span<const LabeledNode> a, std::span<const LabeledNode> b,
                                     const EntailmentProvider& ent, const NliConfig& cfg);

/// Repeatedly finds a directed cycle among abstraction edges (DFS from the
/// smallest node id, neighbors in id order) and deletes its lowest-scoring
/// edge, ties by smallest (src, dst, kind). Unscored edges count as 1.
Fcg break_cycles(Fcg graph);

/// Drops every abstraction edge (u, w) that has an alternative abstraction
/// path u ~> w of length >= 2. ProblemSolution edges are untouched. Throws
/// CyclicInput when the abstraction subgraph has a cycle.
Fcg transitive_reduce(Fcg graph);

/// Abstraction subgraph node order with every edge going forward, ties by id.
/// Empty when cyclic.
std::optional<std::vector<std::string>> topological_order(const Fcg& graph);
bool is_abstraction_acyclic(const Fcg& graph);

/// Problem -> Solution edges for every pair sharing a document, witnessed by
/// the sorted ids of those documents.
std::vector<FcgEdge> problem_solution_edges(const Fcg& graph,
                                            const std::unordered_map<std::string, std::string>& tag_to_doc);

/// Weakly connected components among Problem nodes, counting paths through
/// virtual nodes.
std::size_t problem_component_count(const Fcg& graph);

inline constexpr int kGraphFormatVersion = 1;

std::string serialize_graph(const Fcg& graph);
Fcg deserialize_graph(std::string_view text);
void save_graph(const std::filesystem::path& path, const Fcg& graph);
/// Throws CorruptFile or VersionMismatch.
Fcg load_graph(const std::filesystem::path& path);

}  // namespace muse
