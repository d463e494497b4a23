#include "muse/sampler.hpp"

#include "muse/error.hpp"
#include "muse/log.hpp"
#include "muse/parallel.hpp"
#include "muse/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <map>

namespace muse {

using nlohmann::json;

std::string_view to_string(Shape s) noexcept { return s == Shape::UpDown ? "UpDown" : "UpUpDown"; }
std::string_view to_string(Direction d) noexcept { return d == Direction::Up ? "up" : "down"; }

std::string_view to_string(SourceClass s) noexcept {
  switch (s) {
    case SourceClass::Nli: return "Nli";
    case SourceClass::Llm: return "Llm";
    case SourceClass::Verb: return "Verb";
  }
  return "?";
}

std::string_view to_string(Condition c) noexcept {
  switch (c) {
    case Condition::Purpose: return "purpose";
    case Condition::PurposeMechanism: return "purpose-mech";
    case Condition::PurposeMechanismSentence: return "purpose-mech-sentence";
  }
  return "?";
}

std::optional<Condition> parse_condition(std::string_view s) {
  for (auto c : {Condition::Purpose, Condition::PurposeMechanism, Condition::PurposeMechanismSentence})
    if (to_string(c) == s) return c;
  return std::nullopt;
}

std::vector<std::string> InspirationPath::nodes() const {
  std::vector<std::string> out{anchor};
  for (const auto& s : steps) out.push_back(s.direction == Direction::Up ? s.edge.dst : s.edge.src);
  return out;
}

Neighbor find_anchor(const std::string& problem_text, const EmbeddingProvider& emb, const NnIndex& index) {
  if (text::trim(problem_text).empty()) fail(ErrorCode::EmptyText, "problem text is empty");
  if (index.empty()) fail(ErrorCode::NoAnchor, "the node index is empty");
  return index.nearest(emb.embed_one(problem_text), 1).front();
}

std::vector<InspirationPath> enumerate_paths(const Fcg& graph, const std::string& anchor,
                                             const std::set<Shape>& shapes) {
  graph.node(anchor);
  std::vector<InspirationPath> out;
  auto ups = [&](const std::string& id) {
    std::vector<PathStep> steps;
    for (const auto& key : graph.out_edges(id))
      if (is_abstraction(key.kind)) steps.push_back({key, Direction::Up});
    return steps;
  };
  auto downs = [&](const std::string& id) {
    std::vector<PathStep> steps;
    for (const auto& key : graph.in_edges(id))
      if (is_abstraction(key.kind)) steps.push_back({key, Direction::Down});
    return steps;
  };
  auto finish = [&](std::vector<PathStep> prefix, const std::vector<std::string>& visited, Shape shape) {
    for (const auto& down : downs(visited.back())) {
      const std::string& end = down.edge.src;
      if (std::find(visited.begin(), visited.end(), end) != visited.end()) continue;
      if (graph.node(end).kind != NodeKind::Problem) continue;
      InspirationPath p{anchor, prefix, end, shape};
      p.steps.push_back(down);
      out.push_back(std::move(p));
    }
  };
  if (shapes.count(Shape::UpDown))
    for (const auto& up : ups(anchor)) finish({up}, {anchor, up.edge.dst}, Shape::UpDown);
  if (shapes.count(Shape::UpUpDown))
    for (const auto& up1 : ups(anchor))
      for (const auto& up2 : ups(up1.edge.dst)) {
        if (up2.edge.dst == anchor) continue;
        finish({up1, up2}, {anchor, up1.edge.dst, up2.edge.dst}, Shape::UpUpDown);
      }
  return out;
}

SourceClass classify_source(const InspirationPath& path) {
  SourceClass c = SourceClass::Nli;
  for (const auto& s : path.steps) {
    if (s.edge.kind == EdgeKind::AbstractionVerb) return SourceClass::Verb;
    if (s.edge.kind == EdgeKind::AbstractionLlm) c = SourceClass::Llm;
  }
  return c;
}

std::vector<std::string> mmr_select(std::span<const MmrCandidate> candidates, const Vector& query, double lambda,
                                    std::size_t limit) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail(ErrorCode::InvalidArgument, "lambda must lie in [0, 1]");
  if (limit == 0) fail(ErrorCode::InvalidArgument, "limit must be >= 1");
  const std::size_t n = candidates.size();
  std::vector<double> relevance(n);
  for (std::size_t i = 0; i < n; ++i) relevance[i] = cosine(query, candidates[i].vector);
  std::vector<double> redundancy(n, -std::numeric_limits<double>::infinity());
  std::vector<bool> taken(n, false);
  std::vector<std::string> out;
  while (out.size() < limit && out.size() < n) {
    std::size_t best = n;
    double best_score = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double score = out.empty() ? relevance[i] : lambda * relevance[i] - (1.0 - lambda) * redundancy[i];
      if (best == n || score > best_score || (score == best_score && candidates[i].id < candidates[best].id)) {
        best = i;
        best_score = score;
      }
    }
    taken[best] = true;
    out.push_back(candidates[best].id);
    for (std::size_t i = 0; i < n; ++i)
      if (!taken[i]) redundancy[i] = std::max(redundancy[i], cosine(candidates[i].vector, candidates[best].vector));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string sentence_prompt(const std::string& purpose, const std::string& mechanism) {
  return "Combine this purpose and mechanism into one short sentence that describes a product.\n\n"
         "Purpose: " +
         purpose + ". Mechanism: " + mechanism + ".\n";
}

Inspiration render(Inspiration insp, Condition condition, const CompletionProvider* llm) {
  insp.sentences.clear();
  insp.sentence_fallback = false;
  if (condition == Condition::Purpose) {
    insp.mechanisms.clear();
    insp.mechanism_ids.clear();
    return insp;
  }
  if (condition == Condition::PurposeMechanism || insp.mechanisms.empty()) return insp;
  try {
    if (!llm) fail(ErrorCode::ProviderUnavailable, "no completion provider for sentence rendering");
    std::vector<std::string> sentences;
    for (const auto& m : insp.mechanisms) {
      std::string s = text::trim(text::strip_response_label(llm->complete({sentence_prompt(insp.purpose, m)})));
      s = text::collapse_whitespace(s);
      if (s.empty()) fail(ErrorCode::EmptyCompletion, "empty sentence");
      sentences.push_back(std::move(s));
    }
    insp.sentences = std::move(sentences);
  } catch (const Error& e) {
    log_warning(std::string("sentence rendering fell back to purpose and mechanisms: ") + e.what());
    insp.sentence_fallback = true;
  }
  return insp;
}

namespace {

std::size_t bucket_of(Shape shape, SourceClass source) {
  return (shape == Shape::UpDown ? 0 : 3) + static_cast<std::size_t>(source);
}

}  // namespace

SampleResult sample_inspirations(const Fcg& graph, const NnIndex& index, const EmbeddingProvider& emb,
                                 const std::string& problem_text, const SampleConfig& cfg,
                                 const CompletionProvider* llm) {
  if (cfg.per_bucket == 0) fail(ErrorCode::InvalidArgument, "per_bucket must be >= 1");
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0)) fail(ErrorCode::InvalidArgument, "lambda must lie in [0, 1]");
  if (text::trim(problem_text).empty()) fail(ErrorCode::EmptyText, "problem text is empty");
  if (index.empty()) fail(ErrorCode::NoAnchor, "the node index is empty");
  const Vector query = emb.embed_one(problem_text);
  SampleResult result;
  result.anchor = index.nearest(query, 1).front();
  result.anchor_label = graph.node(result.anchor.id).label;

  auto vector_of = [&](const std::string& id) {
    const std::size_t row = index.find(id);
    return row != NnIndex::npos ? index.vector_at(row) : emb.embed_one(graph.node(id).label);
  };

  // First path per endpoint within each bucket, in enumeration order.
  std::array<std::vector<InspirationPath>, 6> buckets;
  for (auto& path : enumerate_paths(graph, result.anchor.id)) {
    auto& bucket = buckets[bucket_of(path.shape, classify_source(path))];
    const bool seen = std::any_of(bucket.begin(), bucket.end(),
                                  [&](const InspirationPath& p) { return p.endpoint == path.endpoint; });
    if (!seen) bucket.push_back(std::move(path));
  }

  std::vector<Inspiration> picked;
  for (const auto& bucket : buckets) {
    if (bucket.empty()) continue;
    std::vector<MmrCandidate> candidates;
    for (const auto& p : bucket) candidates.push_back({p.endpoint, vector_of(p.endpoint)});
    for (const auto& id : mmr_select(candidates, query, cfg.lambda, cfg.per_bucket)) {
      const auto pos = static_cast<std::size_t>(
          std::find_if(bucket.begin(), bucket.end(), [&](const auto& p) { return p.endpoint == id; }) -
          bucket.begin());
      Inspiration insp;
      insp.node_id = id;
      insp.purpose = graph.node(id).label;
      insp.path = bucket[pos];
      insp.source = classify_source(insp.path);
      insp.relevance = cosine(query, candidates[pos].vector);

      const Vector endpoint = candidates[pos].vector;
      std::vector<std::pair<double, std::string>> solutions;
      for (const auto& key : graph.out_edges(id)) {
        if (key.kind != EdgeKind::ProblemSolution) continue;
        solutions.emplace_back(cosine(emb.embed_one(graph.node(key.dst).label), endpoint), key.dst);
      }
      std::sort(solutions.begin(), solutions.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      for (std::size_t i = 0; i < solutions.size() && i < kMaxMechanisms; ++i) {
        insp.mechanism_ids.push_back(solutions[i].second);
        insp.mechanisms.push_back(graph.node(solutions[i].second).label);
      }
      picked.push_back(std::move(insp));
    }
  }

  result.inspirations.resize(picked.size());
  parallel_for(
      picked.size(), [&](std::size_t i) { result.inspirations[i] = render(picked[i], cfg.condition, llm); },
      cfg.condition == Condition::PurposeMechanismSentence ? cfg.threads : 1);
  return result;
}

std::string inspirations_to_json(const SampleResult& result, const SampleConfig& cfg) {
  json items = json::array();
  for (const auto& insp : result.inspirations) {
    json steps = json::array();
    for (const auto& s : insp.path.steps)
      steps.push_back({{"src", s.edge.src},
                       {"dst", s.edge.dst},
                       {"kind", to_string(s.edge.kind)},
                       {"direction", to_string(s.direction)}});
    json item = {{"node_id", insp.node_id},
                 {"purpose", insp.purpose},
                 {"source", to_string(insp.source)},
                 {"shape", to_string(insp.path.shape)},
                 {"relevance", insp.relevance},
                 {"path", {{"anchor", insp.path.anchor}, {"endpoint", insp.path.endpoint},
                           {"nodes", insp.path.nodes()}, {"steps", std::move(steps)}}}};
    if (cfg.condition != Condition::Purpose) {
      json mechs = json::array();
      for (std::size_t i = 0; i < insp.mechanisms.size(); ++i)
        mechs.push_back({{"id", insp.mechanism_ids[i]}, {"label", insp.mechanisms[i]}});
      item["mechanisms"] = std::move(mechs);
    }
    if (cfg.condition == Condition::PurposeMechanismSentence) {
      item["sentences"] = insp.sentences;
      item["sentence_fallback"] = insp.sentence_fallback;
    }
    items.push_back(std::move(item));
  }
  json doc = {{"anchor", {{"id", result.anchor.id}, {"label", result.anchor_label}, {"score", result.anchor.score}}},
              {"condition", to_string(cfg.condition)},
              {"lambda", cfg.lambda},
              {"per_bucket", cfg.per_bucket},
              {"inspirations", std::move(items)}};
  return doc.dump(1) + "\n";
}

}  // namespace muse
