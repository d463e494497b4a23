#pragma once

#include "muse/corpus.hpp"
#include "muse/providers.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace muse {

struct PurposeTag {
  std::string id;  // "<doc_id>#p<n>"
  std::string doc_id;
  std::string text;

  bool operator==(const PurposeTag&) const = default;
};

struct MechanismTag {
  std::string id;  // "<doc_id>#m<n>"
  std::string doc_id;
  std::string text;
  std::string cpc_id;

  bool operator==(const MechanismTag&) const = default;
};

struct PromptShot {
  std::string description;
  std::string purpose;  // completes "The purpose of the patent is to ..."
};

struct PromptConfig {
  std::vector<PromptShot> shots;
  std::string question = "What is the purpose of the patent? What is the context of the patent?";
  int max_tokens = 64;

  /// Three hand-written shots.
  static PromptConfig standard();
};

inline constexpr std::size_t kMaxPurposeChars = 200;
inline constexpr double kDefaultClassifierThreshold = 0.5;

std::string build_purpose_prompt(const Document& doc, const PromptConfig& cfg);

/// Lowercase, collapse whitespace, drop trailing punctuation, cap at 200
/// characters on a word boundary.
std::string normalize_purpose(std::string_view s);

/// Strips a leading response label ("ABSTRACT:") and the lead-in
/// "The purpose of the patent is to", then yields one normalized fragment
/// per sentence, duplicates removed.
std::vector<std::string> parse_purpose_completion(std::string_view completion);

/// Empty or unusable completions yield no tags and log a warning.
std::vector<PurposeTag> extract_purposes(const Document& doc, const CompletionProvider& provider,
                                         const PromptConfig& cfg);

struct CpcSpan {
  std::string cpc_id;
  std::string span;

  bool operator==(const CpcSpan&) const = default;
};

/// Splits titles on ';' and on " or ", trimmed and lowercased.
std::vector<CpcSpan> split_cpc_titles(const std::vector<CpcEntry>& entries);

std::vector<CpcSpan> filter_mechanism_titles(const std::vector<CpcSpan>& spans, const MechanismClassifier& cls,
                                             double threshold);

using SpansByCpc = std::map<std::string, std::vector<std::string>>;
SpansByCpc group_spans(const std::vector<CpcSpan>& spans);

/// Maps a document CPC id onto a key of `spans`: exact match, then the main
/// group ("F24F6/02" -> "F24F6/00"), then the subclass ("F24F"). Empty when
/// nothing matches.
std::string resolve_cpc_id(const std::string& cpc_id, const SpansByCpc& spans);

/// Per resolved CPC id, keeps the candidate span closest to the title.
std::vector<MechanismTag> assign_mechanisms(const Document& doc, const SpansByCpc& spans,
                                            const EmbeddingProvider& emb);

struct AnnotateConfig {
  PromptConfig prompt = PromptConfig::standard();
  double classifier_threshold = kDefaultClassifierThreshold;
  unsigned threads = 0;
};

struct Annotations {
  std::vector<PurposeTag> purposes;
  std::vector<MechanismTag> mechanisms;
  std::vector<std::string> untagged_docs;
};

/// The whole annotation pass. Documents run in parallel; results are merged
/// in document order.
Annotations annotate_corpus(const std::vector<Document>& docs, const std::vector<CpcEntry>& taxonomy,
                            const CompletionProvider& llm, const MechanismClassifier& cls,
                            const EmbeddingProvider& emb, const AnnotateConfig& cfg = {});

/// JSONL rows {doc_id, kind, text, cpc_id?}. Tag ids are reassigned from row
/// order on load.
void save_tags(const std::filesystem::path& path, const Annotations& tags);
Annotations load_tags(const std::filesystem::path& path);

}  // namespace muse
