#include "muse/connect.hpp"

#include "expect_error.hpp"
#include "generators.hpp"
#include "stubs.hpp"

#include <gtest/gtest.h>

#include <map>
#include <sstream>

using namespace muse;

namespace {

FcgEdge nli(const std::string& s, const std::string& d) { return {s, d, EdgeKind::AbstractionNli, 0.9, {}}; }

/// Numbered item lines of an abstraction prompt, in order.
std::vector<std::string> prompt_items(const std::string& prompt) {
  std::vector<std::string> out;
  std::istringstream in(prompt);
  std::string line;
  while (std::getline(in, line)) {
    const auto dot = line.find(". ");
    if (dot == std::string::npos || dot == 0) continue;
    if (line.find_first_not_of("0123456789") != dot) continue;
    out.push_back(line.substr(dot + 2));
  }
  return out;
}

/// Picks the items whose first word is the most common first word.
std::string majority_reply(const std::string& prompt) {
  const auto items = prompt_items(prompt);
  std::map<std::string, std::size_t> count;
  for (const auto& it : items) ++count[it.substr(0, it.find(' '))];
  std::string best;
  for (const auto& [w, c] : count)
    if (best.empty() || c > count[best]) best = w;
  std::string members;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].substr(0, items[i].find(' ')) != best) continue;
    if (!members.empty()) members += ", ";
    members += std::to_string(i + 1);
  }
  return "ABSTRACT: " + best + " things\nMEMBERS: " + members;
}

Fcg labeled_problems(const std::vector<std::pair<std::string, std::string>>& nodes) {
  Fcg g;
  for (const auto& [id, label] : nodes) g.add_node(gen::problem(id, label));
  return g;
}

const std::vector<std::pair<std::string, std::string>> kSixProblems = {
    {"a", "cool a room"}, {"b", "cool a person"}, {"c", "cool an office"},
    {"d", "heat water"},  {"e", "heat milk"},     {"f", "heat soup"}};

}  // namespace

TEST(Heights, LongestPathFromSources) {
  Fcg g = labeled_problems({{"a", "a"}, {"b", "b"}, {"c", "c"}, {"d", "d"}});
  g.add_edge(nli("a", "b"));
  g.add_edge(nli("b", "c"));
  g.add_edge(nli("a", "c"));
  g.add_edge(nli("d", "c"));
  const std::map<std::string, std::size_t> expected = {{"a", 0}, {"b", 1}, {"c", 2}, {"d", 0}};
  EXPECT_EQ(node_heights(g), expected);
}

TEST(Heights, VerbNodesIgnored) {
  Fcg g = labeled_problems({{"a", "a"}, {"b", "b"}});
  g.add_node({"v", NodeKind::VirtualVerb, "cool", {}, {}});
  g.add_edge({"a", "v", EdgeKind::AbstractionVerb, {}, {}});
  const auto h = node_heights(g);
  EXPECT_FALSE(h.contains("v"));
  EXPECT_EQ(h.at("a"), 0u);
}

TEST(Candidates, TwoBelowTheTop) {
  Fcg g = labeled_problems({{"a", "a"}, {"b", "b"}, {"c", "c"}, {"x", "x"}});
  g.add_edge(nli("a", "b"));
  g.add_edge(nli("b", "c"));
  g.add_edge(nli("x", "b"));
  const auto cs = select_candidates(g, 4);
  EXPECT_EQ(cs.loose_cluster_id, std::optional<std::size_t>(4));
  EXPECT_EQ(cs.node_ids, (std::vector<std::string>{"a", "x"}));
}

TEST(Candidates, DeepNodesExcludedByHeightWindow) {
  // Chain n0 -> n1 -> ... -> n6: h_max = 6, window keeps heights 3..6.
  Fcg g;
  for (int i = 0; i < 7; ++i) g.add_node(gen::problem(gen::node_name(i)));
  for (int i = 0; i + 1 < 7; ++i) g.add_edge(nli(gen::node_name(i), gen::node_name(i + 1)));
  EXPECT_EQ(select_candidates(g).node_ids, (std::vector<std::string>{"n004"}));
}

TEST(Candidates, FlatGraphHasNone) {
  const Fcg g = labeled_problems({{"a", "a"}, {"b", "b"}});
  EXPECT_TRUE(select_candidates(g).node_ids.empty());
}

TEST(AbstractionReply, ParsesLabelAndMembers) {
  const auto r = parse_abstraction_reply("ABSTRACT: 2. Keep cool.\nMEMBERS: 3, 1,3", 4);
  EXPECT_EQ(r.label, "Keep cool");
  EXPECT_EQ(r.members, (std::vector<std::size_t>{0, 2}));
  const auto all = parse_abstraction_reply("abstract: warm", 3);
  EXPECT_EQ(all.members, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(AbstractionReply, RejectsMalformed) {
  EXPECT_MUSE_ERROR(parse_abstraction_reply("nothing", 2), ErrorCode::UnparseableCompletion);
  EXPECT_MUSE_ERROR(parse_abstraction_reply("ABSTRACT:  .", 2), ErrorCode::UnparseableCompletion);
  EXPECT_MUSE_ERROR(parse_abstraction_reply("ABSTRACT: x\nMEMBERS: 3", 2), ErrorCode::UnparseableCompletion);
  EXPECT_MUSE_ERROR(parse_abstraction_reply("ABSTRACT: x\nMEMBERS: 0", 2), ErrorCode::UnparseableCompletion);
  EXPECT_MUSE_ERROR(parse_abstraction_reply("ABSTRACT: x\nMEMBERS: one", 2), ErrorCode::UnparseableCompletion);
}

TEST(AbstractionPrompt, EndsWithNumberedItems) {
  const auto p = build_abstraction_prompt({"cool a room", "heat water"});
  EXPECT_EQ(prompt_items(p), (std::vector<std::string>{"cool a room", "heat water"}));
  EXPECT_TRUE(p.ends_with("1. cool a room\n2. heat water\n"));
}

TEST(Proposals, GroupsGetVirtualParents) {
  const Fcg g = labeled_problems(kSixProblems);
  FakeEmbeddingProvider emb(64, 1);
  stub::ScriptedCompletion llm(majority_reply);
  AbstractionConfig cfg;
  cfg.k_groups = 2;
  cfg.threads = 1;
  const auto delta = propose_llm_abstractions(g, {"a", "b", "c", "d", "e", "f"}, emb, llm, cfg, 3);
  EXPECT_EQ(llm.prompts.size(), 2u);
  for (const auto& p : llm.prompts) EXPECT_EQ(prompt_items(p).size(), 5u) << "3 members and 2 decoys";
  ASSERT_EQ(delta.nodes.size(), 2u);
  EXPECT_EQ(delta.discarded, 0u);
  std::map<std::string, std::set<std::string>> children;
  for (const auto& e : delta.edges) {
    EXPECT_EQ(e.kind, EdgeKind::AbstractionLlm);
    children[e.dst].insert(e.src);
  }
  std::set<std::set<std::string>> groups;
  for (const auto& n : delta.nodes) {
    EXPECT_EQ(n.kind, NodeKind::VirtualLlm);
    EXPECT_EQ(n.loose_cluster_id, std::optional<std::size_t>(3));
    EXPECT_TRUE(n.id.starts_with("vl-"));
    groups.insert(children[n.id]);
  }
  EXPECT_EQ(groups, (std::set<std::set<std::string>>{{"a", "b", "c"}, {"d", "e", "f"}}));

  Fcg applied = g;
  EXPECT_EQ(apply(applied, delta), 6u);
  EXPECT_TRUE(is_abstraction_acyclic(applied));
}

TEST(Proposals, DecoyPickIsDiscarded) {
  const Fcg g = labeled_problems(kSixProblems);
  FakeEmbeddingProvider emb(64, 1);
  FakeCompletionProvider llm;  // no MEMBERS line, so every item including decoys is chosen
  AbstractionConfig cfg;
  cfg.k_groups = 2;
  const auto delta = propose_llm_abstractions(g, {"a", "b", "c", "d", "e", "f"}, emb, llm, cfg);
  EXPECT_TRUE(delta.nodes.empty());
  EXPECT_EQ(delta.discarded, 2u);
}

TEST(Proposals, SingleOriginalIsDiscardedAndGarbageSkipped) {
  const Fcg g = labeled_problems(kSixProblems);
  FakeEmbeddingProvider emb(64, 1);
  AbstractionConfig cfg;
  cfg.k_groups = 1;
  cfg.decoys = 0;
  stub::ScriptedCompletion one([](const std::string&) { return "ABSTRACT: x\nMEMBERS: 1"; });
  EXPECT_EQ(propose_llm_abstractions(g, {"a", "b"}, emb, one, cfg).discarded, 1u);
  stub::ScriptedCompletion garbage([](const std::string&) { return "I cannot help"; });
  const auto d = propose_llm_abstractions(g, {"a", "b"}, emb, garbage, cfg);
  EXPECT_EQ(d.skipped, 1u);
  EXPECT_TRUE(d.nodes.empty());
}

TEST(Proposals, TooFewCandidatesIsNoop) {
  const Fcg g = labeled_problems(kSixProblems);
  FakeEmbeddingProvider emb(64, 1);
  stub::ScriptedCompletion llm(majority_reply);
  EXPECT_TRUE(propose_llm_abstractions(g, {"a"}, emb, llm, {}).nodes.empty());
  EXPECT_TRUE(llm.prompts.empty());
}

TEST(Proposals, CrossSetGroupsMustMixSets) {
  const Fcg g = labeled_problems(kSixProblems);
  FakeEmbeddingProvider emb(64, 1);
  stub::ScriptedCompletion llm(majority_reply);
  AbstractionConfig cfg;
  cfg.k_groups = 2;
  const std::map<std::string, std::size_t> set_of = {{"a", 0}, {"b", 0}, {"c", 0}, {"d", 0}, {"e", 1}, {"f", 1}};
  const auto delta = propose_llm_abstractions(g, {"a", "b", "c", "d", "e", "f"}, emb, llm, cfg, {}, &set_of);
  ASSERT_EQ(delta.nodes.size(), 1u);
  EXPECT_EQ(llm.prompts.size(), 1u);
  EXPECT_FALSE(delta.nodes[0].loose_cluster_id.has_value());
}

TEST(Lexicon, ParseAndLemma) {
  const auto lex = VerbLexicon::parse("# comment\nv1\tcool, chill\nv2\tstop\nv3\tcarry\nv4\tcut,use\nv5\tchill\n");
  EXPECT_EQ(lex.synsets().size(), 5u);
  EXPECT_EQ(lex.synsets_of("chill"), (std::vector<std::size_t>{0, 4}));
  EXPECT_TRUE(lex.synsets_of("heat").empty());
  EXPECT_EQ(lex.lemma("cooling"), "cool");
  EXPECT_EQ(lex.lemma("cooled"), "cool");
  EXPECT_EQ(lex.lemma("chills"), "chill");
  EXPECT_EQ(lex.lemma("stopped"), "stop");
  EXPECT_EQ(lex.lemma("carries"), "carry");
  EXPECT_EQ(lex.lemma("carried"), "carry");
  EXPECT_EQ(lex.lemma("cutting"), "cut");
  EXPECT_EQ(lex.lemma("using"), "use");
  EXPECT_EQ(lex.lemma("uses"), "use");
  EXPECT_EQ(lex.lemma("used"), "use");
  EXPECT_FALSE(lex.lemma("room").has_value());
}

TEST(Lexicon, MalformedRowsRejected) {
  EXPECT_MUSE_ERROR(VerbLexicon::parse("v1 cool\n"), ErrorCode::MalformedRecord);
  EXPECT_MUSE_ERROR(VerbLexicon::parse("v1\t , \n"), ErrorCode::MalformedRecord);
}

TEST(Verbs, FirstTokenWinsOtherwiseAllVerbs) {
  const auto lex = VerbLexicon::parse("v1\tcool\nv2\tprotect\nv3\theat\n");
  EXPECT_EQ(extract_verbs("Cooling a room while heating water", lex), (std::vector<std::string>{"cool"}));
  EXPECT_EQ(extract_verbs("a device that heats and protects", lex), (std::vector<std::string>{"heat", "protect"}));
  EXPECT_TRUE(extract_verbs("a sun shade", lex).empty());
}

TEST(Verbs, NodesNeedTwoProblems) {
  const auto lex = VerbLexicon::parse("v1\tcool,chill\nv2\theat\n");
  Fcg g = labeled_problems({{"a", "cool a room"}, {"b", "chill a drink"}, {"c", "heat water"}});
  g.add_node({"s", NodeKind::Solution, "Chiller", {"D#m0"}, {}});
  const auto delta = build_verb_nodes(g, lex);
  ASSERT_EQ(delta.nodes.size(), 1u);
  EXPECT_EQ(delta.nodes[0].label, "cool");
  EXPECT_EQ(delta.nodes[0].kind, NodeKind::VirtualVerb);
  EXPECT_EQ(delta.nodes[0].id, make_node_id(NodeKind::VirtualVerb, {}, "cool", {"v1"}));
  ASSERT_EQ(delta.edges.size(), 2u);
  EXPECT_EQ(delta.edges[0].key(), (EdgeKey{"a", delta.nodes[0].id, EdgeKind::AbstractionVerb}));
  EXPECT_EQ(delta.edges[1].key(), (EdgeKey{"b", delta.nodes[0].id, EdgeKind::AbstractionVerb}));
}

TEST(Link, CrossEdgesBetweenSetsOnly) {
  const Fcg g = labeled_problems({{"a", "protect plants"}, {"b", "protect plants from sunlight"},
                                  {"c", "protect skin"}, {"d", "heat water"}});
  const std::vector<CandidateSet> sets = {{0, {"a", "d"}}, {1, {"b", "c"}}};
  stub::CountingEntailment ent;
  FakeEmbeddingProvider emb(64, 1);
  FakeCompletionProvider llm;
  const auto delta = link_interim_graphs(g, sets, ent, emb, llm, {}, {});
  EXPECT_EQ(ent.calls.load(), 8u);
  std::set<EdgeKey> nli_edges;
  for (const auto& e : delta.edges)
    if (e.kind == EdgeKind::AbstractionNli) nli_edges.insert(e.key());
  EXPECT_TRUE(nli_edges.contains({"b", "a", EdgeKind::AbstractionNli}));
  EXPECT_FALSE(nli_edges.contains({"a", "d", EdgeKind::AbstractionNli}));
  EXPECT_TRUE(delta.nodes.empty());
}

TEST(Link, SingleSetIsNoop) {
  const Fcg g = labeled_problems({{"a", "x"}});
  stub::CountingEntailment ent;
  FakeEmbeddingProvider emb(8, 1);
  FakeCompletionProvider llm;
  const auto delta = link_interim_graphs(g, {{0, {"a"}}}, ent, emb, llm, {}, {});
  EXPECT_TRUE(delta.edges.empty());
  EXPECT_EQ(ent.calls.load(), 0u);
}
