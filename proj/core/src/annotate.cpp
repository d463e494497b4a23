#include "muse/annotate.hpp"

#include "io_util.hpp"
#include "muse/error.hpp"
#include "muse/log.hpp"
#include "muse/parallel.hpp"
#include "muse/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <set>
#include <sstream>

namespace muse {

using nlohmann::json;

namespace {

constexpr std::string_view kLeadIn = "the purpose of the patent is to";
constexpr std::string_view kLeadInShort = "the purpose of the patent is";

std::string describe(const Document& doc) {
  std::string title = text::collapse_whitespace(doc.title);
  const std::string abstract = text::collapse_whitespace(doc.abstract);
  if (abstract.empty()) return title;
  if (!title.empty() && title.back() != '.' && title.back() != '!' && title.back() != '?') title += '.';
  return title + " " + abstract;
}

bool is_trailing_punct(char c) {
  return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || c == '"' || c == '\'' ||
         c == ')' || c == '-';
}

}  // namespace

PromptConfig PromptConfig::standard() {
  PromptConfig cfg;
  cfg.shots = {
      {"Folding step stool with locking hinge. A step stool has two leg frames joined by a hinge that locks "
       "in the open position, and a tread that rests on both frames when unfolded.",
       "provide a stable step stool that folds flat for storage"},
      {"Self-watering plant pot. A plant container with an inner basket and an outer reservoir, where a wick "
       "draws water from the reservoir into the soil as the soil dries.",
       "keep potted plants watered without daily attention"},
      {"Bicycle brake pad with wear indicator. A brake pad carries a colored insert embedded at a fixed depth, "
       "which becomes visible once the friction material has worn down.",
       "show riders when a brake pad needs replacement"},
  };
  return cfg;
}

std::string build_purpose_prompt(const Document& doc, const PromptConfig& cfg) {
  std::ostringstream p;
  for (std::size_t i = 0; i < cfg.shots.size(); ++i) {
    p << "Example " << (i + 1) << ":\n"
      << text::collapse_whitespace(cfg.shots[i].description) << "\n"
      << "The purpose of the patent is to " << cfg.shots[i].purpose << ".\n\n";
  }
  p << "Your input:\n\n" << describe(doc) << "\n" << cfg.question << "\n";
  return p.str();
}

std::string normalize_purpose(std::string_view s) {
  std::string out = text::collapse_whitespace(text::to_lower(s));
  while (!out.empty() && (is_trailing_punct(out.back()) || out.back() == ' ')) out.pop_back();
  if (out.size() > kMaxPurposeChars) {
    auto cut = out.rfind(' ', kMaxPurposeChars);
    out.resize(cut == std::string::npos || cut == 0 ? kMaxPurposeChars : cut);
    while (!out.empty() && (is_trailing_punct(out.back()) || out.back() == ' ')) out.pop_back();
  }
  return out;
}

std::vector<std::string> parse_purpose_completion(std::string_view completion) {
  const std::string flat = text::collapse_whitespace(completion);
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (auto sentence : text::split_sentences(text::strip_response_label(flat))) {
    std::string_view s = sentence;
    s = text::strip_response_label(s);
    const std::string trimmed = text::trim(s);
    s = trimmed;
    if (text::starts_with_icase(s, kLeadIn)) {
      s.remove_prefix(kLeadIn.size());
    } else if (text::starts_with_icase(s, kLeadInShort)) {
      s.remove_prefix(kLeadInShort.size());
    }
    std::string tag = normalize_purpose(s);
    if (!tag.empty() && seen.insert(tag).second) out.push_back(std::move(tag));
  }
  return out;
}

std::vector<PurposeTag> extract_purposes(const Document& doc, const CompletionProvider& provider,
                                         const PromptConfig& cfg) {
  if (text::trim(doc.title).empty() && text::trim(doc.abstract).empty())
    fail(ErrorCode::EmptyText, "document " + doc.id + " has neither title nor abstract");
  const std::string completion = provider.complete({build_purpose_prompt(doc, cfg), cfg.max_tokens, 0.0});
  const auto fragments = parse_purpose_completion(completion);
  if (fragments.empty()) {
    log_warning("document " + doc.id + ": empty completion, left untagged");
    return {};
  }
  std::vector<PurposeTag> tags;
  tags.reserve(fragments.size());
  for (std::size_t i = 0; i < fragments.size(); ++i)
    tags.push_back({doc.id + "#p" + std::to_string(i), doc.id, fragments[i]});
  return tags;
}

std::vector<CpcSpan> split_cpc_titles(const std::vector<CpcEntry>& entries) {
  std::vector<CpcSpan> out;
  for (const auto& e : entries) {
    for (const auto& piece : text::split(e.title, ';')) {
      std::string_view rest = piece;
      while (true) {
        const auto pos = rest.find(" or ");
        std::string span = text::to_lower(text::trim(rest.substr(0, pos)));
        if (span.starts_with("or ")) span = text::trim(span.substr(3));
        if (!span.empty()) out.push_back({e.id, std::move(span)});
        if (pos == std::string_view::npos) break;
        rest.remove_prefix(pos + 4);
      }
    }
  }
  return out;
}

std::vector<CpcSpan> filter_mechanism_titles(const std::vector<CpcSpan>& spans, const MechanismClassifier& cls,
                                             double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) fail(ErrorCode::InvalidArgument, "threshold must lie in [0,1]");
  std::vector<std::string> titles;
  titles.reserve(spans.size());
  for (const auto& s : spans) titles.push_back(s.span);
  const auto scores = cls.score_batch(titles);
  std::vector<CpcSpan> out;
  for (std::size_t i = 0; i < spans.size(); ++i)
    if (scores[i] >= threshold) out.push_back(spans[i]);
  return out;
}

SpansByCpc group_spans(const std::vector<CpcSpan>& spans) {
  SpansByCpc out;
  for (const auto& s : spans) {
    auto& v = out[s.cpc_id];
    if (std::find(v.begin(), v.end(), s.span) == v.end()) v.push_back(s.span);
  }
  return out;
}

std::string resolve_cpc_id(const std::string& cpc_id, const SpansByCpc& spans) {
  if (spans.contains(cpc_id)) return cpc_id;
  if (const auto slash = cpc_id.find('/'); slash != std::string::npos) {
    const std::string main_group = cpc_id.substr(0, slash) + "/00";
    if (spans.contains(main_group)) return main_group;
  }
  if (cpc_id.size() > 4) {
    const std::string subclass = cpc_id.substr(0, 4);
    if (spans.contains(subclass)) return subclass;
  }
  return {};
}

std::vector<MechanismTag> assign_mechanisms(const Document& doc, const SpansByCpc& spans,
                                            const EmbeddingProvider& emb) {
  std::vector<std::string> resolved;
  for (const auto& id : doc.cpc_ids) {
    auto r = resolve_cpc_id(id, spans);
    if (!r.empty() && std::find(resolved.begin(), resolved.end(), r) == resolved.end()) resolved.push_back(r);
  }
  if (resolved.empty()) return {};

  const Vector title = emb.embed_one(doc.title);
  std::vector<MechanismTag> out;
  for (const auto& cpc : resolved) {
    const auto& candidates = spans.at(cpc);
    std::string best;
    if (candidates.size() == 1) {
      best = candidates.front();
    } else {
      const auto vecs = emb.embed(candidates);
      double best_score = -2.0;
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        const double s = cosine(title, vecs[i]);
        if (s > best_score || (s == best_score && candidates[i] < best)) {
          best_score = s;
          best = candidates[i];
        }
      }
    }
    out.push_back({doc.id + "#m" + std::to_string(out.size()), doc.id, best, cpc});
  }
  return out;
}

Annotations annotate_corpus(const std::vector<Document>& docs, const std::vector<CpcEntry>& taxonomy,
                            const CompletionProvider& llm, const MechanismClassifier& cls,
                            const EmbeddingProvider& emb, const AnnotateConfig& cfg) {
  const auto usable = taxonomy.empty() ? std::vector<CpcEntry>{} : drop_leaf_level(taxonomy);
  const auto spans = group_spans(filter_mechanism_titles(split_cpc_titles(usable), cls, cfg.classifier_threshold));

  struct PerDoc {
    std::vector<PurposeTag> purposes;
    std::vector<MechanismTag> mechanisms;
  };
  std::vector<PerDoc> results(docs.size());
  parallel_for(
      docs.size(),
      [&](std::size_t i) {
        results[i].purposes = extract_purposes(docs[i], llm, cfg.prompt);
        results[i].mechanisms = assign_mechanisms(docs[i], spans, emb);
      },
      cfg.threads);

  Annotations out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (results[i].purposes.empty()) out.untagged_docs.push_back(docs[i].id);
    for (auto& t : results[i].purposes) out.purposes.push_back(std::move(t));
    for (auto& t : results[i].mechanisms) out.mechanisms.push_back(std::move(t));
  }
  return out;
}

void save_tags(const std::filesystem::path& path, const Annotations& tags) {
  std::string out;
  for (const auto& t : tags.purposes)
    out += json{{"doc_id", t.doc_id}, {"kind", "purpose"}, {"text", t.text}}.dump() + "\n";
  for (const auto& t : tags.mechanisms)
    out += json{{"doc_id", t.doc_id}, {"kind", "mechanism"}, {"text", t.text}, {"cpc_id", t.cpc_id}}.dump() + "\n";
  detail::write_file(path, out);
}

Annotations load_tags(const std::filesystem::path& path) {
  std::istringstream in(detail::read_file(path));
  Annotations out;
  std::map<std::string, std::size_t> purpose_count, mechanism_count;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      const auto doc = j.at("doc_id").get<std::string>();
      const auto kind = j.at("kind").get<std::string>();
      auto txt = j.at("text").get<std::string>();
      if (txt.empty()) fail(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": empty text");
      if (kind == "purpose") {
        out.purposes.push_back({doc + "#p" + std::to_string(purpose_count[doc]++), doc, std::move(txt)});
      } else if (kind == "mechanism") {
        out.mechanisms.push_back({doc + "#m" + std::to_string(mechanism_count[doc]++), doc, std::move(txt),
                                  j.at("cpc_id").get<std::string>()});
      } else {
        fail(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": unknown kind '" + kind + "'");
      }
    } catch (const json::exception& e) {
      fail(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace muse
