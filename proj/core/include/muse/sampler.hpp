#pragma once

#include "muse/graph.hpp"
#include "muse/providers.hpp"
#include "muse/vectors.hpp"

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace muse {

enum class Shape { UpDown, UpUpDown };
enum class Direction { Up, Down };
/// Ordered by precedence: a path is classified by its loosest link.
enum class SourceClass { Nli, Llm, Verb };
enum class Condition { Purpose, PurposeMechanism, PurposeMechanismSentence };

std::string_view to_string(Shape s) noexcept;
std::string_view to_string(Direction d) noexcept;
std::string_view to_string(SourceClass s) noexcept;
/// "purpose", "purpose-mech", "purpose-mech-sentence".
std::string_view to_string(Condition c) noexcept;
/// Accepts the names above; nullopt otherwise.
std::optional<Condition> parse_condition(std::string_view s);

struct PathStep {
  EdgeKey edge;
  Direction direction = Direction::Up;

  bool operator==(const PathStep&) const = default;
};

/// Up follows an abstraction edge, down walks one backwards.
struct InspirationPath {
  std::string anchor;
  std::vector<PathStep> steps;
  std::string endpoint;
  Shape shape = Shape::UpDown;

  /// Anchor, intermediate nodes, endpoint.
  std::vector<std::string> nodes() const;
  bool operator==(const InspirationPath&) const = default;
};

/// Nearest Problem node to the text. Throws EmptyText, NoAnchor.
Neighbor find_anchor(const std::string& problem_text, const EmbeddingProvider& emb, const NnIndex& index);

/// All simple (up, down) and (up, up, down) paths from the anchor over
/// abstraction edges that end on a Problem node other than the anchor.
/// Order: UpDown first, then by the edge keys of successive steps.
std::vector<InspirationPath> enumerate_paths(const Fcg& graph, const std::string& anchor,
                                             const std::set<Shape>& shapes = {Shape::UpDown, Shape::UpUpDown});

SourceClass classify_source(const InspirationPath& path);

struct MmrCandidate {
  std::string id;
  Vector vector;
};

/// Greedy maximal marginal relevance. The first pick is the most relevant
/// candidate; ties go to the smallest id.
std::vector<std::string> mmr_select(std::span<const MmrCandidate> candidates, const Vector& query, double lambda,
                                    std::size_t limit);

struct Inspiration {
  std::string node_id;
  std::string purpose;
  std::vector<std::string> mechanism_ids;
  std::vector<std::string> mechanisms;
  std::vector<std::string> sentences;  // one per mechanism, sentence condition only
  bool sentence_fallback = false;      // sentence rendering failed; shown as purpose + mechanisms
  InspirationPath path;
  SourceClass source = SourceClass::Nli;
  double relevance = 0.0;

  bool operator==(const Inspiration&) const = default;
};

inline constexpr double kDefaultLambda = 0.7;
inline constexpr std::size_t kDefaultPerBucket = 5;
inline constexpr std::size_t kMaxMechanisms = 3;

struct SampleConfig {
  double lambda = kDefaultLambda;
  std::size_t per_bucket = kDefaultPerBucket;
  Condition condition = Condition::Purpose;
  unsigned threads = 4;
};

struct SampleResult {
  Neighbor anchor;
  std::string anchor_label;
  std::vector<Inspiration> inspirations;
};

std::string sentence_prompt(const std::string& purpose, const std::string& mechanism);

/// Applies the display condition: drops mechanisms for Purpose, fills one
/// sentence per mechanism for PurposeMechanismSentence. A failed sentence
/// call leaves the mechanisms in place and sets sentence_fallback.
Inspiration render(Inspiration inspiration, Condition condition, const CompletionProvider* llm);

/// Anchor lookup, path enumeration, bucketing by (shape, source), per-bucket
/// MMR and mechanism attachment. Buckets come out in the order
/// (UpDown, UpUpDown) x (Nli, Llm, Verb).
SampleResult sample_inspirations(const Fcg& graph, const NnIndex& index, const EmbeddingProvider& emb,
                                 const std::string& problem_text, const SampleConfig& cfg,
                                 const CompletionProvider* llm = nullptr);

/// Stable JSON rendering shared by the CLI and the HTTP API.
std::string inspirations_to_json(const SampleResult& result, const SampleConfig& cfg);

}  // namespace muse
