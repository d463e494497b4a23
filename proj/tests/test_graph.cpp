#include "muse/graph.hpp"

#include "expect_error.hpp"
#include "generators.hpp"
#include "oracles.hpp"
#include "stubs.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace muse;

namespace {

FcgEdge nli(const std::string& s, const std::string& d, double score = 0.9) {
  return {s, d, EdgeKind::AbstractionNli, score, {}};
}

Fcg chain_graph(const std::vector<std::string>& ids) {
  Fcg g;
  for (const auto& id : ids) g.add_node(gen::problem(id));
  return g;
}

std::set<EdgeKey> keys(const Fcg& g) {
  std::set<EdgeKey> out;
  for (const auto& [k, e] : g.edges()) out.insert(k);
  return out;
}

}  // namespace

TEST(Fcg, NodeValidation) {
  Fcg g;
  g.add_node(gen::problem("a"));
  EXPECT_NO_THROW(g.add_node(gen::problem("a")));
  EXPECT_MUSE_ERROR(g.add_node(gen::problem("a", "other label")), ErrorCode::DuplicateId);
  EXPECT_MUSE_ERROR(g.add_node({"b", NodeKind::Problem, " ", {"x"}, {}}), ErrorCode::InvalidArgument);
  EXPECT_MUSE_ERROR(g.add_node({"b", NodeKind::Problem, "b", {}, {}}), ErrorCode::InvalidArgument);
  EXPECT_MUSE_ERROR(g.add_node({"v", NodeKind::VirtualLlm, "v", {"x"}, {}}), ErrorCode::InvalidArgument);
  EXPECT_MUSE_ERROR(g.node("missing"), ErrorCode::UnknownNode);
}

TEST(Fcg, EdgeValidation) {
  Fcg g = chain_graph({"a", "b"});
  g.add_node({"s", NodeKind::Solution, "Fan", {"D#m0"}, {}});
  EXPECT_TRUE(g.add_edge(nli("a", "b")));
  EXPECT_FALSE(g.add_edge(nli("a", "b", 0.5)));
  EXPECT_MUSE_ERROR(g.add_edge(nli("a", "zz")), ErrorCode::UnknownNode);
  EXPECT_MUSE_ERROR(g.add_edge(nli("a", "a")), ErrorCode::InvalidArgument);
  EXPECT_MUSE_ERROR(g.add_edge(nli("a", "s")), ErrorCode::InvalidArgument);
  EXPECT_MUSE_ERROR(g.add_edge({"s", "a", EdgeKind::ProblemSolution, {}, {}}), ErrorCode::InvalidArgument);
  EXPECT_MUSE_ERROR(g.add_edge(nli("b", "a", 1.5)), ErrorCode::InvalidArgument);
  EXPECT_TRUE(g.add_edge({"a", "s", EdgeKind::ProblemSolution, {}, {"D"}}));
  EXPECT_EQ(g.abstraction_edge_count(), 1u);
  EXPECT_EQ(g.out_edges("a").size(), 2u);
  EXPECT_EQ(g.in_edges("b").size(), 1u);
  EXPECT_TRUE(g.remove_edge({"a", "b", EdgeKind::AbstractionNli}));
  EXPECT_FALSE(g.remove_edge({"a", "b", EdgeKind::AbstractionNli}));
  EXPECT_TRUE(g.in_edges("b").empty());
}

TEST(Fcg, KindStringsRoundTrip) {
  for (auto k : {NodeKind::Problem, NodeKind::Solution, NodeKind::VirtualLlm, NodeKind::VirtualVerb})
    EXPECT_EQ(parse_node_kind(to_string(k)), k);
  for (auto k : {EdgeKind::AbstractionNli, EdgeKind::AbstractionLlm, EdgeKind::AbstractionVerb,
                 EdgeKind::ProblemSolution})
    EXPECT_EQ(parse_edge_kind(to_string(k)), k);
  EXPECT_THROW(parse_node_kind("Tree"), Error);
}

TEST(NodeId, StableAndPrefixed) {
  const auto a = make_node_id(NodeKind::Problem, {"y", "x"}, "x", {"D2#p0", "D1#p0"});
  const auto b = make_node_id(NodeKind::Problem, {"x", "y"}, "x", {"D1#p0", "D2#p0"});
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.starts_with("p-"));
  EXPECT_TRUE(make_node_id(NodeKind::Solution, {"x"}, "x", {"m"}).starts_with("s-"));
  EXPECT_TRUE(make_node_id(NodeKind::VirtualLlm, {}, "x", {}).starts_with("vl-"));
  EXPECT_TRUE(make_node_id(NodeKind::VirtualVerb, {}, "x", {}).starts_with("vv-"));
  EXPECT_NE(a, make_node_id(NodeKind::Problem, {"x", "y"}, "y", {"D1#p0", "D2#p0"}));
}

TEST(Representative, MedoidHandExample) {
  const std::vector<std::string> ids = {"a", "b", "c"};
  const std::vector<Vector> v = {Vector::normalize({1, 0}), Vector::normalize({1, 1}), Vector::normalize({0, 1})};
  EXPECT_EQ(representative(ids, v), 1u);
}

TEST(Representative, MedoidTieGoesToSmallestId) {
  const std::vector<std::string> ids = {"z", "m", "a"};
  const std::vector<Vector> v(3, Vector::normalize({1, 0}));
  EXPECT_EQ(representative(ids, v), 2u);
}

TEST(Representative, SeededRandomIsStableAndInRange) {
  const std::vector<std::string> ids = {"a", "b", "c", "d"};
  const std::vector<Vector> v(4, Vector::normalize({1, 0}));
  const auto r = representative(ids, v, RepresentativePolicy::SeededRandom, 5);
  EXPECT_LT(r, 4u);
  EXPECT_EQ(r, representative(ids, v, RepresentativePolicy::SeededRandom, 5));
  EXPECT_EQ(parse_representative_policy("medoid"), RepresentativePolicy::Medoid);
  EXPECT_THROW(parse_representative_policy("centroid"), Error);
}

TEST(Nli, PrefixedPairsScoredBothWays) {
  const std::vector<LabeledNode> nodes = {{"a", "protect plants from the sun"}, {"b", "protect plants"}};
  FakeEntailmentProvider ent;
  const auto edges = nli_abstraction_edges(nodes, ent, {});
  ASSERT_EQ(edges.size(), 2u);
  EXPECT_EQ(edges[0].key(), (EdgeKey{"a", "b", EdgeKind::AbstractionNli}));
  EXPECT_DOUBLE_EQ(*edges[0].score, 1.0);
  EXPECT_EQ(edges[1].key(), (EdgeKey{"b", "a", EdgeKind::AbstractionNli}));
  EXPECT_DOUBLE_EQ(*edges[1].score, 2.0 / 3.0);

  NliConfig strict;
  strict.threshold = 0.9;
  EXPECT_EQ(nli_abstraction_edges(nodes, ent, strict).size(), 1u);
}

TEST(Nli, PromptsCarryPrefix) {
  class Recording final : public EntailmentProvider {
   public:
    std::vector<double> score_batch(std::span<const EntailmentPair> pairs) const override {
      for (const auto& p : pairs) seen.push_back(p);
      return std::vector<double>(pairs.size(), 0.0);
    }
    mutable std::vector<EntailmentPair> seen;
  } rec;
  const std::vector<LabeledNode> nodes = {{"a", "cool a room"}, {"b", "chill air"}};
  nli_abstraction_edges(nodes, rec, {});
  ASSERT_EQ(rec.seen.size(), 2u);
  EXPECT_EQ(rec.seen[0].premise, "I want cool a room");
  EXPECT_EQ(rec.seen[0].hypothesis, "I want chill air");
}

TEST(Nli, CrossEdgesScoreTwoAB) {
  stub::CountingEntailment ent;
  const std::vector<LabeledNode> a = {{"a1", "protect plants"}, {"a2", "cool a room"}};
  const std::vector<LabeledNode> b = {{"b1", "protect plants from sunlight"}, {"b2", "x"}, {"b3", "y"}};
  const auto edges = nli_cross_edges(a, b, ent, {});
  EXPECT_EQ(ent.calls.load(), 12u);
  for (const auto& e : edges) EXPECT_NE(e.src.front(), e.dst.front());
  bool found = false;
  for (const auto& e : edges) found = found || e.key() == EdgeKey{"b1", "a1", EdgeKind::AbstractionNli};
  EXPECT_TRUE(found);
}

TEST(BreakCycles, RemovesLowestScoredEdgeOfTriangle) {
  Fcg g = chain_graph({"a", "b", "c"});
  g.add_edge(nli("a", "b", 0.9));
  g.add_edge(nli("b", "c", 0.6));
  g.add_edge(nli("c", "a", 0.8));
  const auto out = break_cycles(g);
  EXPECT_EQ(keys(out), (std::set<EdgeKey>{{"a", "b", EdgeKind::AbstractionNli}, {"c", "a", EdgeKind::AbstractionNli}}));
}

TEST(BreakCycles, TiesGoToSmallestKey) {
  Fcg g = chain_graph({"a", "b"});
  g.add_edge(nli("a", "b", 0.7));
  g.add_edge(nli("b", "a", 0.7));
  const auto out = break_cycles(g);
  EXPECT_EQ(keys(out), (std::set<EdgeKey>{{"b", "a", EdgeKind::AbstractionNli}}));
}

TEST(BreakCycles, UnscoredEdgesCountAsOne) {
  Fcg g = chain_graph({"a", "b"});
  g.add_node({"v", NodeKind::VirtualLlm, "virtual", {}, {}});
  g.add_edge({"a", "v", EdgeKind::AbstractionLlm, std::nullopt, {}});
  g.add_edge(nli("v", "a", 0.99));
  const auto out = break_cycles(g);
  EXPECT_EQ(keys(out), (std::set<EdgeKey>{{"a", "v", EdgeKind::AbstractionLlm}}));
}

TEST(BreakCycles, Laws) {
  Rng rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(30);
    const double density = 0.02 + 0.15 * rng.uniform_unit();
    const Fcg g = gen::scored_digraph(rng, n, density);
    const Fcg out = break_cycles(g);
    EXPECT_FALSE(oracle::has_cycle(out)) << "trial " << trial;
    EXPECT_EQ(out.nodes(), g.nodes());
    const auto before = keys(g), after = keys(out);
    EXPECT_TRUE(std::includes(before.begin(), before.end(), after.begin(), after.end()));
    for (const auto& k : before)
      if (!after.contains(k)) {
        EXPECT_TRUE(oracle::on_cycle(g, k)) << "removed a non-cycle edge";
      }
    EXPECT_EQ(break_cycles(out), out);
  }
}

TEST(BreakCycles, NoOpOnDag) {
  Rng rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const Fcg g = gen::dag(rng, 1 + rng.uniform_index(30), 0.2);
    EXPECT_EQ(break_cycles(g), g);
  }
}

TEST(TransitiveReduce, DropsShortcut) {
  Fcg g = chain_graph({"a", "b", "c"});
  g.add_edge(nli("a", "b"));
  g.add_edge(nli("b", "c"));
  g.add_edge(nli("a", "c"));
  g.add_node({"s", NodeKind::Solution, "Fan", {"D#m0"}, {}});
  g.add_edge({"a", "s", EdgeKind::ProblemSolution, {}, {"D"}});
  const auto out = transitive_reduce(g);
  EXPECT_EQ(keys(out), (std::set<EdgeKey>{{"a", "b", EdgeKind::AbstractionNli},
                                          {"a", "s", EdgeKind::ProblemSolution},
                                          {"b", "c", EdgeKind::AbstractionNli}}));
}

TEST(TransitiveReduce, RejectsCycles) {
  Fcg g = chain_graph({"a", "b"});
  g.add_edge(nli("a", "b"));
  g.add_edge(nli("b", "a"));
  EXPECT_MUSE_ERROR(transitive_reduce(g), ErrorCode::CyclicInput);
  EXPECT_FALSE(topological_order(g).has_value());
  EXPECT_FALSE(is_abstraction_acyclic(g));
}

TEST(TransitiveReduce, Laws) {
  Rng rng(31337);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(30);
    const Fcg g = gen::dag(rng, n, 0.05 + 0.3 * rng.uniform_unit());
    const Fcg out = transitive_reduce(g);
    EXPECT_EQ(oracle::reachability(out), oracle::reachability(g)) << "trial " << trial;
    for (const auto& [k, e] : out.edges()) EXPECT_FALSE(oracle::has_long_path(out, k.src, k.dst));
    EXPECT_EQ(transitive_reduce(out), out);
  }
}

TEST(TopologicalOrder, EdgesGoForwardAndTiesById) {
  Fcg g = chain_graph({"c", "b", "a"});
  g.add_edge(nli("c", "a"));
  const auto order = topological_order(g);
  ASSERT_TRUE(order.has_value());
  EXPECT_EQ(*order, (std::vector<std::string>{"b", "c", "a"}));
}

TEST(ProblemSolution, EdgesWitnessedBySharedDocs) {
  Fcg g;
  g.add_node({"p1", NodeKind::Problem, "cool a room", {"D1#p0", "D2#p0"}, 0});
  g.add_node({"p2", NodeKind::Problem, "heat water", {"D3#p0"}, 0});
  g.add_node({"s1", NodeKind::Solution, "Fan", {"D2#m0", "D1#m0"}, {}});
  g.add_node({"s2", NodeKind::Solution, "Coil", {"D4#m0"}, {}});
  const std::unordered_map<std::string, std::string> docs = {
      {"D1#p0", "D1"}, {"D2#p0", "D2"}, {"D3#p0", "D3"}, {"D1#m0", "D1"}, {"D2#m0", "D2"}, {"D4#m0", "D4"}};
  const auto edges = problem_solution_edges(g, docs);
  ASSERT_EQ(edges.size(), 1u);
  EXPECT_EQ(edges[0].key(), (EdgeKey{"p1", "s1", EdgeKind::ProblemSolution}));
  EXPECT_EQ(edges[0].witnesses, (std::vector<std::string>{"D1", "D2"}));
}

TEST(Components, CountsThroughVirtualNodes) {
  Fcg g = chain_graph({"a", "b", "c", "d"});
  g.add_node({"v", NodeKind::VirtualVerb, "cool", {}, {}});
  g.add_edge({"a", "v", EdgeKind::AbstractionVerb, {}, {}});
  g.add_edge({"b", "v", EdgeKind::AbstractionVerb, {}, {}});
  g.add_edge(nli("c", "d"));
  EXPECT_EQ(problem_component_count(g), 2u);
}

TEST(Serialize, RoundTripIsExact) {
  Rng rng(8);
  const Fcg g = gen::sampler_graph(rng, 40);
  Fcg with_params = g;
  with_params.params["nli_threshold"] = "0.5";
  const auto text = serialize_graph(with_params);
  EXPECT_EQ(deserialize_graph(text), with_params);
  EXPECT_EQ(serialize_graph(deserialize_graph(text)), text);
}

TEST(Serialize, FileErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "muse_test_graph";
  std::filesystem::create_directories(dir);
  const auto path = dir / "graph.json";
  std::ofstream(path) << "{bad";
  EXPECT_MUSE_ERROR(load_graph(path), ErrorCode::CorruptFile);
  std::ofstream(path) << R"({"version": 99, "params": {}, "nodes": [], "edges": []})";
  EXPECT_MUSE_ERROR(load_graph(path), ErrorCode::VersionMismatch);
  Fcg g = chain_graph({"a"});
  save_graph(path, g);
  EXPECT_EQ(load_graph(path), g);
}
