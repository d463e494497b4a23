#include "muse/connect.hpp"

#include "io_util.hpp"
#include "muse/cluster.hpp"
#include "muse/error.hpp"
#include "muse/log.hpp"
#include "muse/parallel.hpp"
#include "muse/text.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <set>
#include <sstream>

namespace muse {

void GraphDelta::append(GraphDelta other) {
  for (auto& n : other.nodes) nodes.push_back(std::move(n));
  for (auto& e : other.edges) edges.push_back(std::move(e));
  discarded += other.discarded;
  skipped += other.skipped;
}

std::size_t apply(Fcg& graph, const GraphDelta& delta) {
  for (const auto& n : delta.nodes) graph.add_node(n);
  std::size_t added = 0;
  for (const auto& e : delta.edges) added += graph.add_edge(e) ? 1 : 0;
  return added;
}

// ---------------------------------------------------------------------------

namespace {

bool in_hierarchy(const FcgNode& n) { return n.kind == NodeKind::Problem || n.kind == NodeKind::VirtualLlm; }

bool hierarchy_edge(const Fcg& g, const EdgeKey& key) {
  return is_abstraction(key.kind) && in_hierarchy(g.node(key.src)) && in_hierarchy(g.node(key.dst));
}

}  // namespace

std::map<std::string, std::size_t> node_heights(const Fcg& graph) {
  const auto order = topological_order(graph);
  if (!order) fail(ErrorCode::CyclicInput, "abstraction subgraph has a cycle");
  std::map<std::string, std::size_t> height;
  for (const auto& id : *order) {
    if (!in_hierarchy(graph.node(id))) continue;
    std::size_t h = 0;
    for (const auto& key : graph.in_edges(id))
      if (hierarchy_edge(graph, key)) h = std::max(h, height.at(key.src) + 1);
    height.emplace(id, h);
  }
  return height;
}

CandidateSet select_candidates(const Fcg& graph, std::optional<std::size_t> loose_cluster_id) {
  CandidateSet out{loose_cluster_id, {}};
  const auto height = node_heights(graph);
  if (height.empty()) return out;
  std::size_t h_max = 0;
  for (const auto& [id, h] : height) h_max = std::max(h_max, h);
  for (const auto& [id, h] : height) {
    if (h + 3 < h_max) continue;
    // BFS over up-edges; the top is the highest reachable node, ties by id.
    std::map<std::string, std::size_t> dist{{id, 0}};
    std::deque<std::string> queue{id};
    std::string top = id;
    while (!queue.empty()) {
      const std::string u = queue.front();
      queue.pop_front();
      const std::size_t hu = height.at(u);
      const std::size_t ht = height.at(top);
      if (hu > ht || (hu == ht && u < top)) top = u;
      for (const auto& key : graph.out_edges(u)) {
        if (!hierarchy_edge(graph, key) || dist.count(key.dst)) continue;
        dist.emplace(key.dst, dist.at(u) + 1);
        queue.push_back(key.dst);
      }
    }
    if (dist.at(top) == 2) out.node_ids.push_back(id);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string build_abstraction_prompt(const std::vector<std::string>& item_labels) {
  std::ostringstream p;
  p << "Each numbered line below is a problem someone wants to solve.\n"
       "Find a subset of at least two problems that share a more general problem, and state that general "
       "problem briefly.\n"
       "Reply with one line \"ABSTRACT: <general problem>\" followed by one line \"MEMBERS: <numbers of the "
       "chosen problems, comma separated>\".\n\n";
  for (std::size_t i = 0; i < item_labels.size(); ++i) {
    if (i) p << '\n';
    p << (i + 1) << ". " << item_labels[i];
  }
  p << '\n';
  return p.str();
}

namespace {

/// Value after a case-insensitive "KEY:" at the start of a line.
std::optional<std::string> field(std::string_view completion, std::string_view key) {
  for (const auto& raw : text::split(completion, '\n')) {
    const std::string line = text::trim(raw);
    if (line.size() > key.size() && text::starts_with_icase(line, key) && line[key.size()] == ':')
      return text::trim(std::string_view(line).substr(key.size() + 1));
  }
  return std::nullopt;
}

}  // namespace

AbstractionReply parse_abstraction_reply(std::string_view completion, std::size_t item_count) {
  const auto label = field(completion, "ABSTRACT");
  if (!label) fail(ErrorCode::UnparseableCompletion, "no ABSTRACT line");
  std::string cleaned = *label;
  // Drop an echoed list number such as "3. ".
  std::size_t digits = 0;
  while (digits < cleaned.size() && cleaned[digits] >= '0' && cleaned[digits] <= '9') ++digits;
  if (digits > 0 && digits + 1 < cleaned.size() && cleaned[digits] == '.' && cleaned[digits + 1] == ' ')
    cleaned = cleaned.substr(digits + 2);
  cleaned = text::collapse_whitespace(cleaned);
  while (!cleaned.empty() && (cleaned.back() == '.' || cleaned.back() == ';' || cleaned.back() == ','))
    cleaned.pop_back();
  cleaned = text::trim(cleaned);
  if (cleaned.empty()) fail(ErrorCode::UnparseableCompletion, "empty ABSTRACT label");

  AbstractionReply reply{cleaned, {}};
  const auto members = field(completion, "MEMBERS");
  if (!members) {
    for (std::size_t i = 0; i < item_count; ++i) reply.members.push_back(i);
    return reply;
  }
  std::set<std::size_t> chosen;
  for (const auto& part : text::split(*members, ',')) {
    const std::string t = text::trim(part);
    if (t.empty()) continue;
    std::size_t value = 0;
    for (char c : t) {
      if (c < '0' || c > '9') fail(ErrorCode::UnparseableCompletion, "bad MEMBERS entry '" + t + "'");
      value = value * 10 + static_cast<std::size_t>(c - '0');
      if (value > item_count) fail(ErrorCode::UnparseableCompletion, "MEMBERS entry out of range");
    }
    if (value == 0) fail(ErrorCode::UnparseableCompletion, "MEMBERS entry out of range");
    chosen.insert(value - 1);
  }
  reply.members.assign(chosen.begin(), chosen.end());
  return reply;
}

GraphDelta propose_llm_abstractions(const Fcg& graph, const std::vector<std::string>& candidates,
                                    const EmbeddingProvider& emb, const CompletionProvider& llm,
                                    const AbstractionConfig& cfg, std::optional<std::size_t> loose_cluster_id,
                                    const std::map<std::string, std::size_t>* set_of) {
  GraphDelta out;
  std::vector<std::string> ids = candidates;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 2 || cfg.k_groups == 0) return out;

  std::vector<std::string> labels;
  for (const auto& id : ids) labels.push_back(graph.node(id).label);
  const auto vecs = emb.embed(labels);
  const std::size_t k = std::min(cfg.k_groups, ids.size());
  const auto assignment = kmeans(vecs, k, cfg.seed);
  std::vector<std::vector<std::size_t>> groups(k);
  for (std::size_t i = 0; i < ids.size(); ++i) groups[assignment[i]].push_back(i);

  auto max_cos_to = [&](std::size_t item, const std::vector<std::size_t>& group) {
    double best = -2.0;
    for (auto g : group) best = std::max(best, cosine(vecs[item], vecs[g]));
    return best;
  };

  std::vector<GraphDelta> per_group(k);
  parallel_for(
      k,
      [&](std::size_t gi) {
        const auto& group = groups[gi];
        if (group.size() < 2) return;
        if (set_of) {
          std::set<std::size_t> sets;
          for (auto m : group) sets.insert(set_of->at(ids[m]));
          if (sets.size() < 2) return;
        }
        // Farthest group: smallest minimum pairwise cosine, ties by group index.
        std::optional<std::size_t> far;
        double far_score = 0.0;
        for (std::size_t gj = 0; gj < k; ++gj) {
          if (gj == gi || groups[gj].empty()) continue;
          double lowest = 2.0;
          for (auto a : group)
            for (auto b : groups[gj]) lowest = std::min(lowest, cosine(vecs[a], vecs[b]));
          if (!far || lowest < far_score) {
            far = gj;
            far_score = lowest;
          }
        }
        std::vector<std::size_t> decoys;
        if (far) {
          decoys = groups[*far];
          std::stable_sort(decoys.begin(), decoys.end(), [&](std::size_t a, std::size_t b) {
            const double sa = max_cos_to(a, group), sb = max_cos_to(b, group);
            if (sa != sb) return sa < sb;
            return ids[a] < ids[b];
          });
          if (decoys.size() > cfg.decoys) decoys.resize(cfg.decoys);
        }
        std::vector<std::size_t> items = group;
        items.insert(items.end(), decoys.begin(), decoys.end());
        std::sort(items.begin(), items.end());  // id order, so decoys are not singled out
        std::vector<std::string> item_labels;
        for (auto i : items) item_labels.push_back(labels[i]);

        GraphDelta& delta = per_group[gi];
        AbstractionReply reply;
        try {
          reply = parse_abstraction_reply(llm.complete({build_abstraction_prompt(item_labels)}), items.size());
        } catch (const Error& e) {
          if (e.code() != ErrorCode::UnparseableCompletion && e.code() != ErrorCode::EmptyCompletion) throw;
          log_warning(std::string("abstraction proposal skipped: ") + e.what());
          ++delta.skipped;
          return;
        }
        std::vector<std::string> chosen;
        bool decoy_chosen = false;
        for (auto pos : reply.members) {
          const std::size_t item = items[pos];
          if (std::find(decoys.begin(), decoys.end(), item) != decoys.end())
            decoy_chosen = true;
          else
            chosen.push_back(ids[item]);
        }
        if (decoy_chosen || chosen.size() < 2) {
          ++delta.discarded;
          return;
        }
        FcgNode node;
        node.kind = NodeKind::VirtualLlm;
        node.label = reply.label;
        node.id = make_node_id(NodeKind::VirtualLlm, {}, reply.label, chosen);
        node.loose_cluster_id = loose_cluster_id;
        for (const auto& c : chosen) delta.edges.push_back({c, node.id, EdgeKind::AbstractionLlm, std::nullopt, {}});
        delta.nodes.push_back(std::move(node));
      },
      cfg.threads);
  for (auto& d : per_group) out.append(std::move(d));
  return out;
}

// ---------------------------------------------------------------------------

VerbLexicon::VerbLexicon(std::vector<Synset> synsets) : synsets_(std::move(synsets)) {
  for (std::size_t i = 0; i < synsets_.size(); ++i) {
    auto& s = synsets_[i];
    if (s.verbs.empty()) fail(ErrorCode::MalformedRecord, "synset " + s.id + " is empty");
    for (auto& v : s.verbs) {
      v = text::to_lower(text::trim(v));
      auto& rows = by_verb_[v];
      if (rows.empty() || rows.back() != i) rows.push_back(i);
    }
  }
}

VerbLexicon VerbLexicon::parse(std::string_view text) {
  std::vector<Synset> synsets;
  std::size_t line_no = 0;
  for (const auto& raw : text::split(text, '\n')) {
    ++line_no;
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || line.front() == '#') continue;
    const auto cols = text::split(line, '\t');
    if (cols.size() != 2 || text::trim(cols[0]).empty())
      fail(ErrorCode::MalformedRecord, "lexicon line " + std::to_string(line_no));
    Synset s{text::trim(cols[0]), {}};
    for (const auto& v : text::split(cols[1], ','))
      if (!text::trim(v).empty()) s.verbs.push_back(text::trim(v));
    if (s.verbs.empty()) fail(ErrorCode::MalformedRecord, "lexicon line " + std::to_string(line_no) + " has no verbs");
    synsets.push_back(std::move(s));
  }
  return VerbLexicon(std::move(synsets));
}

VerbLexicon VerbLexicon::load(const std::filesystem::path& path) { return parse(detail::read_file(path)); }

const std::vector<std::size_t>& VerbLexicon::synsets_of(const std::string& verb) const {
  static const std::vector<std::size_t> none;
  auto it = by_verb_.find(verb);
  return it == by_verb_.end() ? none : it->second;
}

std::optional<std::string> VerbLexicon::lemma(const std::string& token) const {
  auto ends = [&](std::string_view suffix) {
    return token.size() > suffix.size() + 1 && token.compare(token.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  auto stem = [&](std::size_t cut) { return token.substr(0, token.size() - cut); };
  std::vector<std::string> tries{token};
  if (ends("ies")) tries.push_back(stem(3) + "y");
  if (ends("es")) tries.push_back(stem(2));
  if (ends("s")) tries.push_back(stem(1));
  if (ends("ied")) tries.push_back(stem(3) + "y");
  if (ends("ed")) {
    tries.push_back(stem(2));
    tries.push_back(stem(1));
  }
  if (ends("ing")) {
    tries.push_back(stem(3));
    tries.push_back(stem(3) + "e");
  }
  // Doubled final consonant: "stopped", "cutting".
  for (std::size_t cut : {std::size_t{2}, std::size_t{3}}) {
    if ((cut == 2 && !ends("ed")) || (cut == 3 && !ends("ing"))) continue;
    const std::string s = stem(cut);
    if (s.size() >= 2 && s[s.size() - 1] == s[s.size() - 2]) tries.push_back(s.substr(0, s.size() - 1));
  }
  for (const auto& t : tries)
    if (contains(t)) return t;
  return std::nullopt;
}

std::vector<std::string> extract_verbs(const std::string& label, const VerbLexicon& lexicon) {
  const auto tokens = text::alpha_tokens(label);
  if (tokens.empty()) return {};
  if (auto first = lexicon.lemma(tokens.front())) return {*first};
  std::vector<std::string> verbs;
  for (const auto& t : tokens) {
    if (text::is_stop_word(t)) continue;
    if (auto v = lexicon.lemma(t); v && std::find(verbs.begin(), verbs.end(), *v) == verbs.end())
      verbs.push_back(*v);
  }
  return verbs;
}

GraphDelta build_verb_nodes(const Fcg& graph, const VerbLexicon& lexicon) {
  std::map<std::size_t, std::set<std::string>> members;  // synset -> problem ids
  for (const auto& [id, node] : graph.nodes()) {
    if (node.kind != NodeKind::Problem) continue;
    for (const auto& verb : extract_verbs(node.label, lexicon))
      for (auto s : lexicon.synsets_of(verb)) members[s].insert(id);
  }
  GraphDelta out;
  for (const auto& [s, problems] : members) {
    if (problems.size() < 2) continue;
    const auto& synset = lexicon.synsets()[s];
    FcgNode node;
    node.kind = NodeKind::VirtualVerb;
    node.label = synset.verbs.front();
    node.id = make_node_id(NodeKind::VirtualVerb, {}, node.label, {synset.id});
    for (const auto& p : problems) out.edges.push_back({p, node.id, EdgeKind::AbstractionVerb, std::nullopt, {}});
    out.nodes.push_back(std::move(node));
  }
  return out;
}

// ---------------------------------------------------------------------------

GraphDelta link_interim_graphs(const Fcg& graph, const std::vector<CandidateSet>& sets,
                               const EntailmentProvider& ent, const EmbeddingProvider& emb,
                               const CompletionProvider& llm, const NliConfig& nli, const AbstractionConfig& cfg) {
  GraphDelta out;
  if (sets.size() < 2) return out;
  std::vector<std::vector<LabeledNode>> labeled(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i)
    for (const auto& id : sets[i].node_ids) labeled[i].push_back({id, graph.node(id).label});
  for (std::size_t i = 0; i < sets.size(); ++i)
    for (std::size_t j = i + 1; j < sets.size(); ++j)
      for (auto& e : nli_cross_edges(labeled[i], labeled[j], ent, nli)) out.edges.push_back(std::move(e));

  std::map<std::string, std::size_t> set_of;
  std::vector<std::string> all;
  for (std::size_t i = 0; i < sets.size(); ++i)
    for (const auto& id : sets[i].node_ids)
      if (set_of.emplace(id, i).second) all.push_back(id);
  out.append(propose_llm_abstractions(graph, all, emb, llm, cfg, std::nullopt, &set_of));
  return out;
}

}  // namespace muse
