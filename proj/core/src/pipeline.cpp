#include "muse/pipeline.hpp"

#include "io_util.hpp"
#include "muse/error.hpp"
#include "muse/log.hpp"
#include "muse/parallel.hpp"
#include "muse/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <set>
#include <sstream>
#include <unordered_map>

namespace muse {

using nlohmann::json;

std::string capitalize_first(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

namespace {

std::string format_double(double v) { return json(v).dump(); }

struct MemberCluster {
  std::vector<std::string> ids;
  std::vector<std::string> texts;
};

FcgNode member_node(NodeKind kind, const MemberCluster& c, const EmbeddingProvider& emb,
                    const GraphBuildConfig& cfg, std::optional<std::size_t> loose) {
  const auto vecs = emb.embed(c.texts);
  const std::size_t rep = representative(c.ids, vecs, cfg.policy, cfg.seed);
  FcgNode n;
  n.kind = kind;
  n.label = kind == NodeKind::Solution ? capitalize_first(c.texts[rep]) : c.texts[rep];
  n.members = c.ids;
  n.loose_cluster_id = loose;
  n.id = make_node_id(kind, c.texts, n.label, c.ids);
  return n;
}

}  // namespace

Fcg build_base_graph(const Annotations& tags, const ClusterDump& clusters, const EmbeddingProvider& emb,
                     const EntailmentProvider& ent, const GraphBuildConfig& cfg) {
  std::unordered_map<std::string, const PurposeTag*> purpose;
  std::unordered_map<std::string, const MechanismTag*> mechanism;
  std::unordered_map<std::string, std::string> tag_to_doc;
  for (const auto& p : tags.purposes) {
    purpose.emplace(p.id, &p);
    tag_to_doc.emplace(p.id, p.doc_id);
  }
  for (const auto& m : tags.mechanisms) {
    mechanism.emplace(m.id, &m);
    tag_to_doc.emplace(m.id, m.doc_id);
  }

  Fcg graph;
  graph.params = {{"nli_threshold", format_double(cfg.nli.threshold)},
                  {"nli_prefix", cfg.nli.prefix},
                  {"representative", cfg.policy == RepresentativePolicy::Medoid ? "medoid" : "seeded-random"},
                  {"seed", std::to_string(cfg.seed)},
                  {"k_loose", std::to_string(clusters.loose.size())}};
  graph.params.insert(clusters.params.begin(), clusters.params.end());

  std::vector<FcgNode> problem_nodes(clusters.problems.size());
  parallel_for(
      clusters.problems.size(),
      [&](std::size_t i) {
        const auto& pc = clusters.problems[i];
        MemberCluster c;
        for (const auto& id : pc.members) {
          auto it = purpose.find(id);
          if (it == purpose.end()) fail(ErrorCode::UnknownNode, "purpose tag " + id + " in cluster " + pc.id);
          c.ids.push_back(id);
          c.texts.push_back(it->second->text);
        }
        problem_nodes[i] = member_node(NodeKind::Problem, c, emb, cfg, pc.loose_cluster_id);
      },
      cfg.threads);
  for (const auto& n : problem_nodes) graph.add_node(n);

  for (const auto& sc : clusters.solutions) {
    MemberCluster c;
    for (const auto& id : sc.members) {
      auto it = mechanism.find(id);
      if (it == mechanism.end()) fail(ErrorCode::UnknownNode, "mechanism tag " + id + " in cluster " + sc.id);
      c.ids.push_back(id);
      c.texts.push_back(it->second->text);
    }
    graph.add_node(member_node(NodeKind::Solution, c, emb, cfg, std::nullopt));
  }

  // Interim graphs: entailment within each loose cluster, finalized on its own.
  const auto loose = loose_cluster_ids(graph);
  std::vector<Fcg> interims(loose.size());
  parallel_for(
      loose.size(),
      [&](std::size_t i) {
        Fcg g = interim_graph(graph, loose[i]);
        std::vector<LabeledNode> nodes;
        for (const auto& [id, n] : g.nodes()) nodes.push_back({id, n.label});
        for (auto& e : nli_abstraction_edges(nodes, ent, cfg.nli)) g.add_edge(std::move(e));
        interims[i] = transitive_reduce(break_cycles(std::move(g)));
      },
      cfg.threads);
  for (const auto& g : interims)
    for (const auto& [key, e] : g.edges()) graph.add_edge(e);
  for (auto& e : problem_solution_edges(graph, tag_to_doc)) graph.add_edge(std::move(e));
  return graph;
}

std::vector<std::size_t> loose_cluster_ids(const Fcg& graph) {
  std::set<std::size_t> ids;
  for (const auto& [id, n] : graph.nodes())
    if (n.kind == NodeKind::Problem && n.loose_cluster_id) ids.insert(*n.loose_cluster_id);
  return {ids.begin(), ids.end()};
}

Fcg interim_graph(const Fcg& graph, std::size_t loose_cluster_id) {
  Fcg g;
  g.params = graph.params;
  for (const auto& [id, n] : graph.nodes())
    if (n.kind == NodeKind::Problem && n.loose_cluster_id == loose_cluster_id) g.add_node(n);
  for (const auto& [key, e] : graph.edges())
    if (is_abstraction(key.kind) && g.contains(key.src) && g.contains(key.dst)) g.add_edge(e);
  return g;
}

Fcg enhance_graph(Fcg graph, const EmbeddingProvider& emb, const EntailmentProvider& ent,
                  const CompletionProvider& llm, const VerbLexicon& lexicon, const EnhanceConfig& cfg,
                  EnhanceReport* report) {
  EnhanceReport r;
  r.components_before = problem_component_count(graph);
  const std::size_t edges_before = graph.edges().size();

  std::vector<CandidateSet> sets;
  GraphDelta local;
  for (auto loose : loose_cluster_ids(graph)) {
    const Fcg interim = interim_graph(graph, loose);
    auto set = select_candidates(interim, loose);
    r.candidates += set.node_ids.size();
    local.append(propose_llm_abstractions(interim, set.node_ids, emb, llm, cfg.abstraction, loose));
    sets.push_back(std::move(set));
  }
  apply(graph, local);

  GraphDelta cross = link_interim_graphs(graph, sets, ent, emb, llm, cfg.nli, cfg.abstraction);
  for (const auto& e : cross.edges)
    if (e.kind == EdgeKind::AbstractionNli) ++r.cross_edges;
  apply(graph, cross);
  graph = transitive_reduce(break_cycles(std::move(graph)));

  GraphDelta verbs = build_verb_nodes(graph, lexicon);
  apply(graph, verbs);

  r.llm_nodes = local.nodes.size() + cross.nodes.size();
  r.verb_nodes = verbs.nodes.size();
  r.discarded = local.discarded + cross.discarded;
  r.skipped = local.skipped + cross.skipped;
  r.components_after = problem_component_count(graph);
  graph.params["k_groups"] = std::to_string(cfg.abstraction.k_groups);
  graph.params["enhanced"] = "true";
  log_info("enhance: " + std::to_string(r.candidates) + " candidates, " + std::to_string(r.llm_nodes) +
           " llm nodes, " + std::to_string(r.verb_nodes) + " verb nodes, " + std::to_string(r.cross_edges) +
           " cross edges, edges " + std::to_string(edges_before) + " -> " + std::to_string(graph.edges().size()));
  if (report) *report = r;
  return graph;
}

NnIndex build_problem_index(const Fcg& graph, const EmbeddingProvider& emb) {
  std::vector<std::string> ids, labels;
  for (const auto& [id, n] : graph.nodes())
    if (n.kind == NodeKind::Problem) {
      ids.push_back(id);
      labels.push_back(n.label);
    }
  if (ids.empty()) fail(ErrorCode::NoAnchor, "graph has no problem nodes");
  auto vecs = emb.embed(labels);
  std::vector<std::pair<std::string, Vector>> items;
  for (std::size_t i = 0; i < ids.size(); ++i) items.emplace_back(ids[i], std::move(vecs[i]));
  return NnIndex::build(std::move(items));
}

void save_snapshot(const std::filesystem::path& dir, const Snapshot& snapshot) {
  save_graph(dir / kGraphFile, snapshot.graph);
  snapshot.index.save(dir / kIndexFile);
  detail::write_file(dir / kMetadataFile, json(snapshot.metadata).dump(1) + "\n");
}

Snapshot load_snapshot(const std::filesystem::path& dir) {
  Snapshot s;
  try {
    s.graph = load_graph(dir / kGraphFile);
    s.index = NnIndex::load(dir / kIndexFile);
    if (std::filesystem::exists(dir / kMetadataFile))
      s.metadata = json::parse(detail::read_file(dir / kMetadataFile)).get<std::map<std::string, std::string>>();
  } catch (const Error& e) {
    fail(ErrorCode::SnapshotCorrupt, dir.string() + ": " + e.what());
  } catch (const json::exception& e) {
    fail(ErrorCode::SnapshotCorrupt, dir.string() + ": " + e.what());
  }
  std::vector<std::string> problems;
  for (const auto& [id, n] : s.graph.nodes())
    if (n.kind == NodeKind::Problem) problems.push_back(id);
  std::vector<std::string> indexed = s.index.ids();
  std::sort(indexed.begin(), indexed.end());
  if (problems != indexed) fail(ErrorCode::SnapshotCorrupt, dir.string() + ": graph and index disagree on node ids");
  return s;
}

std::string file_digest(const std::filesystem::path& path) {
  return text::hex64(text::fnv1a64(detail::read_file(path)));
}

Snapshot run_pipeline(const PipelineConfig& cfg, const ProviderSet& providers, const std::filesystem::path& out_dir) {
  const auto& emb = *providers.embedder;
  const auto docs = load_corpus(cfg.corpus, cfg.corpus_cfg);
  save_corpus(out_dir / "corpus.jsonl", docs);
  log_info("corpus: " + std::to_string(docs.size()) + " documents");

  const auto taxonomy = load_cpc_taxonomy(cfg.taxonomy);
  const auto tags = annotate_corpus(docs, taxonomy, *providers.completion, *providers.classifier, emb, cfg.annotate_cfg);
  save_tags(out_dir / "tags.jsonl", tags);
  log_info("annotate: " + std::to_string(tags.purposes.size()) + " purposes, " +
           std::to_string(tags.mechanisms.size()) + " mechanisms");

  ClusterDump clusters;
  auto problems = build_problem_clusters(tags.purposes, emb, cfg.cluster_cfg);
  clusters.loose = std::move(problems.loose);
  clusters.problems = std::move(problems.problems);
  clusters.solutions = induce_solution_clusters(clusters.problems, tags.purposes, tags.mechanisms);
  clusters.params = cluster_params(cfg.cluster_cfg);
  save_clusters(out_dir / "clusters.json", clusters);

  Fcg graph = build_base_graph(tags, clusters, emb, *providers.entailment, cfg.graph_cfg);
  const auto lexicon = VerbLexicon::load(cfg.lexicon);
  graph = enhance_graph(std::move(graph), emb, *providers.entailment, *providers.completion, lexicon,
                        cfg.enhance_cfg);

  Snapshot snap;
  snap.index = build_problem_index(graph, emb);
  snap.graph = std::move(graph);
  snap.metadata = {{"corpus_digest", file_digest(cfg.corpus)},
                   {"documents", std::to_string(docs.size())},
                   {"embed_dim", std::to_string(emb.dim())}};
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"))
    snap.metadata["built_at"] = epoch;
  else
    snap.metadata["built_at"] = std::to_string(
        std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count());
  save_snapshot(out_dir, snap);
  return snap;
}

}  // namespace muse
