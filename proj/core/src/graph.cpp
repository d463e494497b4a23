#include "muse/graph.hpp"

#include "io_util.hpp"
#include "muse/error.hpp"
#include "muse/rng.hpp"
#include "muse/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <queue>

namespace muse {

using nlohmann::json;

std::string_view to_string(NodeKind kind) noexcept {
  switch (kind) {
    case NodeKind::Problem: return "Problem";
    case NodeKind::Solution: return "Solution";
    case NodeKind::VirtualLlm: return "VirtualLlm";
    case NodeKind::VirtualVerb: return "VirtualVerb";
  }
  return "?";
}

std::string_view to_string(EdgeKind kind) noexcept {
  switch (kind) {
    case EdgeKind::AbstractionNli: return "AbstractionNli";
    case EdgeKind::AbstractionLlm: return "AbstractionLlm";
    case EdgeKind::AbstractionVerb: return "AbstractionVerb";
    case EdgeKind::ProblemSolution: return "ProblemSolution";
  }
  return "?";
}

NodeKind parse_node_kind(std::string_view s) {
  for (auto k : {NodeKind::Problem, NodeKind::Solution, NodeKind::VirtualLlm, NodeKind::VirtualVerb})
    if (to_string(k) == s) return k;
  fail(ErrorCode::InvalidArgument, "unknown node kind '" + std::string(s) + "'");
}

EdgeKind parse_edge_kind(std::string_view s) {
  for (auto k : {EdgeKind::AbstractionNli, EdgeKind::AbstractionLlm, EdgeKind::AbstractionVerb,
                 EdgeKind::ProblemSolution})
    if (to_string(k) == s) return k;
  fail(ErrorCode::InvalidArgument, "unknown edge kind '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------

void Fcg::add_node(FcgNode node) {
  if (node.id.empty()) fail(ErrorCode::InvalidArgument, "node id is empty");
  if (text::trim(node.label).empty()) fail(ErrorCode::InvalidArgument, "node " + node.id + " has an empty label");
  if (is_virtual(node.kind) != node.members.empty())
    fail(ErrorCode::InvalidArgument, "node " + node.id + ": members must be empty exactly for virtual nodes");
  auto it = nodes_.find(node.id);
  if (it != nodes_.end()) {
    if (it->second == node) return;
    fail(ErrorCode::DuplicateId, "node " + node.id);
  }
  const std::string id = node.id;
  nodes_.emplace(id, std::move(node));
}

bool Fcg::add_edge(FcgEdge edge) {
  auto src = nodes_.find(edge.src);
  auto dst = nodes_.find(edge.dst);
  if (src == nodes_.end()) fail(ErrorCode::UnknownNode, edge.src);
  if (dst == nodes_.end()) fail(ErrorCode::UnknownNode, edge.dst);
  if (edge.src == edge.dst) fail(ErrorCode::InvalidArgument, "self-loop on " + edge.src);
  const NodeKind sk = src->second.kind, dk = dst->second.kind;
  if (edge.kind == EdgeKind::ProblemSolution) {
    if (sk != NodeKind::Problem || dk != NodeKind::Solution)
      fail(ErrorCode::InvalidArgument, "ProblemSolution edge must join Problem -> Solution");
  } else if (sk == NodeKind::Solution || dk == NodeKind::Solution) {
    fail(ErrorCode::InvalidArgument, "abstraction edge touches a Solution node");
  }
  if (edge.score && !(*edge.score >= 0.0 && *edge.score <= 1.0))
    fail(ErrorCode::InvalidArgument, "edge score outside [0, 1]");
  EdgeKey key = edge.key();
  if (edges_.count(key)) return false;
  out_[key.src].insert(key);
  in_[key.dst].insert(key);
  edges_.emplace(std::move(key), std::move(edge));
  return true;
}

bool Fcg::remove_edge(const EdgeKey& key) {
  if (!edges_.erase(key)) return false;
  out_[key.src].erase(key);
  in_[key.dst].erase(key);
  return true;
}

const FcgNode& Fcg::node(const std::string& id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) fail(ErrorCode::UnknownNode, id);
  return it->second;
}

const FcgEdge* Fcg::edge(const EdgeKey& key) const {
  auto it = edges_.find(key);
  return it == edges_.end() ? nullptr : &it->second;
}

const std::set<EdgeKey>& Fcg::out_edges(const std::string& id) const {
  static const std::set<EdgeKey> empty;
  auto it = out_.find(id);
  return it == out_.end() ? empty : it->second;
}

const std::set<EdgeKey>& Fcg::in_edges(const std::string& id) const {
  static const std::set<EdgeKey> empty;
  auto it = in_.find(id);
  return it == in_.end() ? empty : it->second;
}

std::size_t Fcg::abstraction_edge_count() const {
  return static_cast<std::size_t>(
      std::count_if(edges_.begin(), edges_.end(), [](const auto& e) { return is_abstraction(e.first.kind); }));
}

// ---------------------------------------------------------------------------

std::string make_node_id(NodeKind kind, std::vector<std::string> member_texts, std::string_view label,
                         std::vector<std::string> member_ids) {
  std::sort(member_texts.begin(), member_texts.end());
  std::sort(member_ids.begin(), member_ids.end());
  std::string key(to_string(kind));
  key += '\x1e';
  key += label;
  key += '\x1e';
  for (const auto& t : member_texts) key += t + '\x1f';
  key += '\x1e';
  for (const auto& t : member_ids) key += t + '\x1f';
  std::string_view prefix;
  switch (kind) {
    case NodeKind::Problem: prefix = "p-"; break;
    case NodeKind::Solution: prefix = "s-"; break;
    case NodeKind::VirtualLlm: prefix = "vl-"; break;
    case NodeKind::VirtualVerb: prefix = "vv-"; break;
  }
  return std::string(prefix) + text::hex64(text::fnv1a64(key));
}

RepresentativePolicy parse_representative_policy(std::string_view s) {
  if (s == "medoid") return RepresentativePolicy::Medoid;
  if (s == "seeded-random" || s == "random") return RepresentativePolicy::SeededRandom;
  fail(ErrorCode::InvalidArgument, "unknown representative policy '" + std::string(s) + "'");
}

std::size_t representative(std::span<const std::string> ids, std::span<const Vector> vectors,
                           RepresentativePolicy policy, std::uint64_t seed) {
  if (ids.empty() || ids.size() != vectors.size())
    fail(ErrorCode::InvalidArgument, "representative needs a non-empty cluster with one vector per member");
  const std::size_t n = ids.size();
  if (n == 1) return 0;
  if (policy == RepresentativePolicy::SeededRandom) {
    // Seeded by cluster content so each cluster gets its own stream.
    std::vector<std::string> sorted(ids.begin(), ids.end());
    std::sort(sorted.begin(), sorted.end());
    std::string key;
    for (const auto& id : sorted) key += id + '\x1f';
    Rng rng(text::fnv1a64(key, seed));
    const std::size_t pick = rng.uniform_index(n);
    // Pick among members in id order, independent of input order.
    return static_cast<std::size_t>(std::find(ids.begin(), ids.end(), sorted[pick]) - ids.begin());
  }
  std::size_t best = 0;
  double best_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum += cosine(vectors[i], vectors[j]);
    if (i == 0 || sum > best_sum || (sum == best_sum && ids[i] < ids[best])) {
      best = i;
      best_sum = sum;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<FcgEdge> score_pairs(const std::vector<std::pair<const LabeledNode*, const LabeledNode*>>& pairs,
                                 const EntailmentProvider& ent, const NliConfig& cfg) {
  if (!(cfg.threshold > 0.0 && cfg.threshold <= 1.0))
    fail(ErrorCode::InvalidArgument, "entailment threshold must lie in (0, 1]");
  std::vector<EntailmentPair> batch;
  batch.reserve(pairs.size());
  const std::string lead = cfg.prefix.empty() ? "" : cfg.prefix + " ";
  for (const auto& [u, v] : pairs) batch.push_back({lead + u->label, lead + v->label});
  const auto scores = ent.score_batch(batch);
  if (scores.size() != pairs.size())
    fail(ErrorCode::ProviderMalformedResponse, "entailment returned the wrong number of scores");
  std::vector<FcgEdge> out;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (scores[i] >= cfg.threshold)
      out.push_back({pairs[i].first->id, pairs[i].second->id, EdgeKind::AbstractionNli, scores[i], {}});
  return out;
}

}  // namespace

std::vector<FcgEdge> nli_abstraction_edges(std::span<const LabeledNode> nodes, const EntailmentProvider& ent,
                                           const NliConfig& cfg) {
  std::vector<std::pair<const LabeledNode*, const LabeledNode*>> pairs;
  for (const auto& u : nodes)
    for (const auto& v : nodes)
      if (&u != &v) pairs.emplace_back(&u, &v);
  return score_pairs(pairs, ent, cfg);
}

std::vector<FcgEdge> nli_cross_edges(std::span<const LabeledNode> a, std::span<const LabeledNode> b,
                                     const EntailmentProvider& ent, const NliConfig& cfg) {
  std::vector<std::pair<const LabeledNode*, const LabeledNode*>> pairs;
  for (const auto& u : a)
    for (const auto& v : b) {
      pairs.emplace_back(&u, &v);
      pairs.emplace_back(&v, &u);
    }
  return score_pairs(pairs, ent, cfg);
}

// ---------------------------------------------------------------------------

namespace {

/// Abstraction adjacency over dense indices in node-id order.
struct AbstractionView {
  std::vector<std::string> ids;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<std::pair<std::size_t, EdgeKey>>> out;  // sorted by (dst id, kind)

  explicit AbstractionView(const Fcg& g) {
    for (const auto& [id, node] : g.nodes()) {
      index.emplace(id, ids.size());
      ids.push_back(id);
    }
    out.resize(ids.size());
    for (const auto& [key, edge] : g.edges())
      if (is_abstraction(key.kind)) out[index.at(key.src)].emplace_back(index.at(key.dst), key);
  }
};

/// Edges of one directed cycle found by DFS, or empty.
std::vector<EdgeKey> find_cycle(const AbstractionView& v) {
  const std::size_t n = v.ids.size();
  enum : char { White, Gray, Black };
  std::vector<char> color(n, White);
  std::vector<std::size_t> next(n, 0);
  std::vector<std::pair<std::size_t, const EdgeKey*>> stack;  // node, edge used to enter it
  for (std::size_t start = 0; start < n; ++start) {
    if (color[start] != White) continue;
    stack.assign(1, {start, nullptr});
    color[start] = Gray;
    while (!stack.empty()) {
      const std::size_t u = stack.back().first;
      if (next[u] == v.out[u].size()) {
        color[u] = Black;
        stack.pop_back();
        continue;
      }
      const auto& [w, key] = v.out[u][next[u]++];
      if (color[w] == White) {
        color[w] = Gray;
        stack.emplace_back(w, &key);
      } else if (color[w] == Gray) {
        std::vector<EdgeKey> cycle{key};
        for (std::size_t i = stack.size(); i-- > 0 && stack[i].first != w;) cycle.push_back(*stack[i].second);
        return cycle;
      }
    }
  }
  return {};
}

}  // namespace

Fcg break_cycles(Fcg graph) {
  while (true) {
    const auto cycle = find_cycle(AbstractionView(graph));
    if (cycle.empty()) return graph;
    const EdgeKey* victim = nullptr;
    double victim_score = 0.0;
    for (const auto& key : cycle) {
      const double s = graph.edge(key)->score.value_or(1.0);
      if (!victim || s < victim_score || (s == victim_score && key < *victim)) {
        victim = &key;
        victim_score = s;
      }
    }
    graph.remove_edge(*victim);
  }
}

std::optional<std::vector<std::string>> topological_order(const Fcg& graph) {
  const AbstractionView v(graph);
  const std::size_t n = v.ids.size();
  std::vector<std::size_t> indegree(n, 0);
  for (const auto& row : v.out)
    for (const auto& [w, key] : row) ++indegree[w];
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push(i);
  std::vector<std::string> order;
  order.reserve(n);
  while (!ready.empty()) {
    const std::size_t u = ready.top();
    ready.pop();
    order.push_back(v.ids[u]);
    for (const auto& [w, key] : v.out[u])
      if (--indegree[w] == 0) ready.push(w);
  }
  if (order.size() != n) return std::nullopt;
  return order;
}

bool is_abstraction_acyclic(const Fcg& graph) { return topological_order(graph).has_value(); }

Fcg transitive_reduce(Fcg graph) {
  const auto order = topological_order(graph);
  if (!order) fail(ErrorCode::CyclicInput, "abstraction subgraph has a cycle");
  const AbstractionView v(graph);
  const std::size_t n = v.ids.size();
  const std::size_t words = (n + 63) / 64;
  // desc[u]: nodes reachable from u by a path of length >= 1.
  std::vector<std::vector<std::uint64_t>> desc(n, std::vector<std::uint64_t>(words, 0));
  auto test = [](const std::vector<std::uint64_t>& b, std::size_t i) { return (b[i / 64] >> (i % 64)) & 1u; };
  std::vector<EdgeKey> redundant;
  for (auto it = order->rbegin(); it != order->rend(); ++it) {
    const std::size_t u = v.index.at(*it);
    // Nodes reachable through some child by a path of length >= 1 from that child.
    std::vector<std::uint64_t> deep(words, 0);
    for (const auto& [w, key] : v.out[u])
      for (std::size_t k = 0; k < words; ++k) deep[k] |= desc[w][k];
    for (const auto& [w, key] : v.out[u]) {
      if (test(deep, w)) redundant.push_back(key);
      desc[u][w / 64] |= std::uint64_t{1} << (w % 64);
    }
    for (std::size_t k = 0; k < words; ++k) desc[u][k] |= deep[k];
  }
  for (const auto& key : redundant) graph.remove_edge(key);
  return graph;
}

// ---------------------------------------------------------------------------

std::vector<FcgEdge> problem_solution_edges(const Fcg& graph,
                                            const std::unordered_map<std::string, std::string>& tag_to_doc) {
  std::map<std::string, std::set<std::string>> problems_of_doc, solutions_of_doc;
  for (const auto& [id, node] : graph.nodes()) {
    if (node.kind != NodeKind::Problem && node.kind != NodeKind::Solution) continue;
    auto& target = node.kind == NodeKind::Problem ? problems_of_doc : solutions_of_doc;
    for (const auto& member : node.members) {
      auto it = tag_to_doc.find(member);
      if (it != tag_to_doc.end()) target[it->second].insert(id);
    }
  }
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> witnesses;
  for (const auto& [doc, problems] : problems_of_doc) {
    auto sit = solutions_of_doc.find(doc);
    if (sit == solutions_of_doc.end()) continue;
    for (const auto& p : problems)
      for (const auto& s : sit->second) witnesses[{p, s}].push_back(doc);
  }
  std::vector<FcgEdge> out;
  for (auto& [pair, docs] : witnesses)
    out.push_back({pair.first, pair.second, EdgeKind::ProblemSolution, std::nullopt, std::move(docs)});
  return out;
}

std::size_t problem_component_count(const Fcg& graph) {
  const AbstractionView v(graph);
  std::vector<std::size_t> parent(v.ids.size());
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t u = 0; u < v.out.size(); ++u)
    for (const auto& [w, key] : v.out[u]) parent[find(u)] = find(w);
  std::set<std::size_t> roots;
  for (std::size_t i = 0; i < v.ids.size(); ++i)
    if (graph.node(v.ids[i]).kind == NodeKind::Problem) roots.insert(find(i));
  return roots.size();
}

// ---------------------------------------------------------------------------

std::string serialize_graph(const Fcg& graph) {
  json nodes = json::array(), edges = json::array();
  for (const auto& [id, n] : graph.nodes()) {
    json j = {{"id", n.id}, {"kind", to_string(n.kind)}, {"label", n.label}, {"members", n.members}};
    j["loose_cluster_id"] = n.loose_cluster_id ? json(*n.loose_cluster_id) : json(nullptr);
    nodes.push_back(std::move(j));
  }
  for (const auto& [key, e] : graph.edges()) {
    json j = {{"src", e.src}, {"dst", e.dst}, {"kind", to_string(e.kind)}};
    j["score"] = e.score ? json(*e.score) : json(nullptr);
    j["witnesses"] = e.witnesses;
    edges.push_back(std::move(j));
  }
  json doc = {{"version", kGraphFormatVersion}, {"params", graph.params}, {"nodes", std::move(nodes)},
              {"edges", std::move(edges)}};
  return doc.dump(1) + "\n";
}

Fcg deserialize_graph(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptFile, e.what());
  }
  try {
    if (!doc.is_object() || !doc.contains("version")) fail(ErrorCode::CorruptFile, "missing version");
    if (doc.at("version") != kGraphFormatVersion)
      fail(ErrorCode::VersionMismatch, "graph format version " + doc.at("version").dump());
    Fcg g;
    g.params = doc.at("params").get<std::map<std::string, std::string>>();
    for (const auto& j : doc.at("nodes")) {
      FcgNode n;
      n.id = j.at("id").get<std::string>();
      n.kind = parse_node_kind(j.at("kind").get<std::string>());
      n.label = j.at("label").get<std::string>();
      n.members = j.at("members").get<std::vector<std::string>>();
      if (!j.at("loose_cluster_id").is_null()) n.loose_cluster_id = j.at("loose_cluster_id").get<std::size_t>();
      g.add_node(std::move(n));
    }
    for (const auto& j : doc.at("edges")) {
      FcgEdge e;
      e.src = j.at("src").get<std::string>();
      e.dst = j.at("dst").get<std::string>();
      e.kind = parse_edge_kind(j.at("kind").get<std::string>());
      if (!j.at("score").is_null()) e.score = j.at("score").get<double>();
      e.witnesses = j.at("witnesses").get<std::vector<std::string>>();
      if (!g.add_edge(std::move(e))) fail(ErrorCode::CorruptFile, "duplicate edge");
    }
    return g;
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptFile, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::VersionMismatch || e.code() == ErrorCode::CorruptFile) throw;
    fail(ErrorCode::CorruptFile, e.what());
  }
}

void save_graph(const std::filesystem::path& path, const Fcg& graph) {
  detail::write_file(path, serialize_graph(graph));
}

Fcg load_graph(const std::filesystem::path& path) { return deserialize_graph(detail::read_file(path)); }

}  // namespace muse
