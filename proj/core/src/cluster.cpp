#include "muse/cluster.hpp"

#include "io_util.hpp"
#include "muse/error.hpp"
#include "muse/parallel.hpp"
#include "muse/rng.hpp"
#include "muse/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

namespace muse {

using nlohmann::json;

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<std::size_t> relabel_by_first_occurrence(const std::vector<std::size_t>& labels, std::size_t k) {
  std::vector<std::size_t> map(k, k);
  std::size_t next = 0;
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (map[labels[i]] == k) map[labels[i]] = next++;
    out[i] = map[labels[i]];
  }
  return out;
}

}  // namespace

std::vector<std::size_t> kmeans(std::span<const Vector> vectors, std::size_t k, std::uint64_t seed,
                                std::size_t max_iter) {
  const std::size_t n = vectors.size();
  if (k == 0) fail(ErrorCode::InvalidArgument, "k must be >= 1");
  if (k > n) fail(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " exceeds " + std::to_string(n) + " vectors");
  const std::size_t dim = vectors.front().dim();
  for (const auto& v : vectors)
    if (v.dim() != dim) fail(ErrorCode::DimMismatch, "kmeans input");
  if (k == 1) return std::vector<std::size_t>(n, 0);

  // k-means++ seeding.
  Rng rng(seed);
  std::vector<std::vector<double>> centroids;
  std::vector<bool> chosen(n, false);
  auto add_center = [&](std::size_t i) {
    chosen[i] = true;
    centroids.emplace_back(vectors[i].components().begin(), vectors[i].components().end());
  };
  add_center(rng.uniform_index(n));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(vectors[i].components(), centroids[0]);
  while (centroids.size() < k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = n;
    if (total > 0.0) {
      const double r = rng.uniform_unit() * total;
      double cum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        cum += d2[i];
        if (cum > r) {
          pick = i;
          break;
        }
      }
      if (pick == n)  // rounding at the top end
        for (std::size_t i = n; i-- > 0;)
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
    } else {
      // Every point coincides with a center; take any unchosen one.
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) free.push_back(i);
      pick = free[rng.uniform_index(free.size())];
    }
    add_center(pick);
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], squared_distance(vectors[i].components(), centroids.back()));
  }

  std::vector<std::size_t> assign(n, k), previous;
  auto recompute = [&](std::size_t c) {
    std::vector<double> sum(dim, 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (assign[i] == c) {
        for (std::size_t d = 0; d < dim; ++d) sum[d] += vectors[i][d];
        ++count;
      }
    if (count > 0)
      for (auto& s : sum) s /= static_cast<double>(count);
    centroids[c] = std::move(sum);
  };

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(vectors[i].components(), centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = squared_distance(vectors[i].components(), centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      assign[i] = best;
    }
    std::vector<std::size_t> sizes(k, 0);
    for (auto a : assign) ++sizes[a];
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] > 0) continue;
      const std::size_t largest =
          static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      recompute(largest);
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] != largest) continue;
        const double d = squared_distance(vectors[i].components(), centroids[largest]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      assign[far] = c;
      --sizes[largest];
      sizes[c] = 1;
    }
    for (std::size_t c = 0; c < k; ++c) recompute(c);
    if (assign == previous) break;
    previous = assign;
  }
  return relabel_by_first_occurrence(assign, k);
}

IndexClusters agglomerative(std::span<const Vector> vectors, double distance_threshold) {
  if (!(distance_threshold > 0.0 && distance_threshold <= 2.0))
    fail(ErrorCode::InvalidArgument, "distance threshold must lie in (0, 2]");
  const std::size_t n = vectors.size();
  if (n == 0) return {};

  // Slot i always holds the cluster whose smallest member is i, so slot order
  // is the tie-break order.
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) dist[i * n + j] = dist[j * n + i] = 1.0 - cosine(vectors[i], vectors[j]);
  auto D = [&](std::size_t a, std::size_t b) -> double& { return dist[a * n + b]; };

  std::vector<bool> active(n, true);
  std::vector<std::vector<std::size_t>> members(n);
  for (std::size_t i = 0; i < n; ++i) members[i] = {i};

  constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> best(n, none);
  auto refresh = [&](std::size_t a) {
    best[a] = none;
    for (std::size_t b = a + 1; b < n; ++b)
      if (active[b] && (best[a] == none || D(a, b) < D(a, best[a]))) best[a] = b;
  };
  for (std::size_t a = 0; a < n; ++a) refresh(a);

  while (true) {
    std::size_t a = none;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i] || best[i] == none) continue;
      if (a == none || D(i, best[i]) < D(a, best[a])) a = i;
    }
    if (a == none || !(D(a, best[a]) < distance_threshold)) break;
    const std::size_t b = best[a];
    for (std::size_t c = 0; c < n; ++c) {
      if (!active[c] || c == a || c == b) continue;
      D(a, c) = D(c, a) = std::max(D(a, c), D(b, c));
    }
    active[b] = false;
    members[a].insert(members[a].end(), members[b].begin(), members[b].end());
    members[b].clear();
    refresh(a);
    for (std::size_t c = 0; c < n; ++c)
      if (active[c] && (best[c] == a || best[c] == b)) refresh(c);
  }

  IndexClusters out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!active[i]) continue;
    std::sort(members[i].begin(), members[i].end());
    out.push_back(std::move(members[i]));
  }
  return out;
}

std::size_t auto_k_loose(std::size_t n_tags) { return std::max<std::size_t>(1, n_tags / 50); }

std::string cluster_content_id(std::string_view kind, std::vector<std::string> member_texts,
                               std::vector<std::string> member_ids) {
  std::sort(member_texts.begin(), member_texts.end());
  std::sort(member_ids.begin(), member_ids.end());
  std::string key(kind);
  for (const auto& t : member_texts) key += '\x1f' + t;
  key += '\x1e';
  for (const auto& t : member_ids) key += '\x1f' + t;
  return std::string(kind) + "-" + text::hex64(text::fnv1a64(key));
}

ProblemClustering build_problem_clusters(const std::vector<PurposeTag>& tags, const EmbeddingProvider& emb,
                                         const ClusterConfig& cfg) {
  if (tags.empty()) fail(ErrorCode::InvalidArgument, "no purpose tags to cluster");
  const std::size_t k = cfg.k_loose.value_or(auto_k_loose(tags.size()));
  std::vector<std::string> texts;
  texts.reserve(tags.size());
  for (const auto& t : tags) texts.push_back(t.text);
  const auto vecs = emb.embed(texts);
  const auto labels = kmeans(vecs, k, cfg.seed, cfg.max_iter);

  std::size_t n_loose = 0;
  for (auto l : labels) n_loose = std::max(n_loose, l + 1);
  std::vector<std::vector<std::size_t>> rows(n_loose);
  for (std::size_t i = 0; i < labels.size(); ++i) rows[labels[i]].push_back(i);

  ProblemClustering out;
  for (std::size_t c = 0; c < n_loose; ++c) {
    LooseCluster lc{c, {}};
    for (auto r : rows[c]) lc.members.push_back(tags[r].id);
    std::sort(lc.members.begin(), lc.members.end());
    out.loose.push_back(std::move(lc));
  }

  std::vector<std::vector<ProblemCluster>> per_loose(n_loose);
  parallel_for(
      n_loose,
      [&](std::size_t c) {
        std::vector<Vector> sub;
        sub.reserve(rows[c].size());
        for (auto r : rows[c]) sub.push_back(vecs[r]);
        for (const auto& cluster : agglomerative(sub, cfg.threshold)) {
          std::vector<std::string> ids, member_texts;
          for (auto local : cluster) {
            ids.push_back(tags[rows[c][local]].id);
            member_texts.push_back(tags[rows[c][local]].text);
          }
          std::sort(ids.begin(), ids.end());
          ProblemCluster pc;
          pc.id = cluster_content_id("pc", member_texts, ids);
          pc.members = std::move(ids);
          pc.loose_cluster_id = c;
          per_loose[c].push_back(std::move(pc));
        }
      },
      cfg.threads);
  for (auto& v : per_loose)
    for (auto& pc : v) out.problems.push_back(std::move(pc));
  return out;
}

std::vector<SolutionCluster> induce_solution_clusters(const std::vector<ProblemCluster>& problems,
                                                      const std::vector<PurposeTag>& purposes,
                                                      const std::vector<MechanismTag>& mechanisms) {
  std::unordered_map<std::string, const PurposeTag*> purpose_by_id;
  for (const auto& p : purposes) purpose_by_id.emplace(p.id, &p);
  std::unordered_map<std::string, std::vector<std::size_t>> mech_by_doc;
  for (std::size_t i = 0; i < mechanisms.size(); ++i) mech_by_doc[mechanisms[i].doc_id].push_back(i);

  std::vector<std::size_t> parent(mechanisms.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  auto unite = [&](std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };

  for (const auto& pc : problems) {
    std::size_t anchor = mechanisms.size();
    std::set<std::string> docs;
    for (const auto& member : pc.members) {
      auto it = purpose_by_id.find(member);
      if (it != purpose_by_id.end()) docs.insert(it->second->doc_id);
    }
    for (const auto& doc : docs) {
      auto it = mech_by_doc.find(doc);
      if (it == mech_by_doc.end()) continue;
      for (auto m : it->second) {
        if (anchor == mechanisms.size())
          anchor = m;
        else
          unite(anchor, m);
      }
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < mechanisms.size(); ++i) groups[find(i)].push_back(i);
  std::vector<SolutionCluster> out;
  for (const auto& [root, rows] : groups) {
    std::vector<std::string> ids, texts;
    for (auto r : rows) {
      ids.push_back(mechanisms[r].id);
      texts.push_back(mechanisms[r].text);
    }
    std::sort(ids.begin(), ids.end());
    SolutionCluster sc;
    sc.id = cluster_content_id("sc", texts, ids);
    sc.members = std::move(ids);
    out.push_back(std::move(sc));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Contingency {
  std::vector<std::vector<double>> counts;  // pred x gold
  double n = 0.0;
};

Contingency contingency(const Partition& pred, const Partition& gold) {
  std::map<std::string, std::size_t> gold_of;
  for (std::size_t g = 0; g < gold.size(); ++g)
    for (const auto& e : gold[g])
      if (!gold_of.emplace(e, g).second) fail(ErrorCode::UniverseMismatch, "'" + e + "' repeated in gold");
  Contingency c;
  c.counts.assign(pred.size(), std::vector<double>(gold.size(), 0.0));
  std::set<std::string> seen;
  for (std::size_t p = 0; p < pred.size(); ++p)
    for (const auto& e : pred[p]) {
      if (!seen.insert(e).second) fail(ErrorCode::UniverseMismatch, "'" + e + "' repeated in prediction");
      auto it = gold_of.find(e);
      if (it == gold_of.end()) fail(ErrorCode::UniverseMismatch, "'" + e + "' missing from gold");
      c.counts[p][it->second] += 1.0;
    }
  if (seen.size() != gold_of.size()) fail(ErrorCode::UniverseMismatch, "gold has elements missing from prediction");
  if (seen.empty()) fail(ErrorCode::InvalidArgument, "empty partitions");
  c.n = static_cast<double>(seen.size());
  return c;
}

double entropy(const std::vector<double>& sizes, double n) {
  double h = 0.0;
  for (double s : sizes)
    if (s > 0.0) h -= (s / n) * std::log(s / n);
  return h;
}

}  // namespace

double purity(const Partition& pred, const Partition& gold) {
  const auto c = contingency(pred, gold);
  double total = 0.0;
  for (const auto& row : c.counts)
    if (!row.empty()) total += *std::max_element(row.begin(), row.end());
  return total / c.n;
}

double nmi(const Partition& pred, const Partition& gold) {
  const auto c = contingency(pred, gold);
  std::vector<double> a(c.counts.size(), 0.0), b(gold.size(), 0.0);
  for (std::size_t i = 0; i < c.counts.size(); ++i)
    for (std::size_t j = 0; j < gold.size(); ++j) {
      a[i] += c.counts[i][j];
      b[j] += c.counts[i][j];
    }
  const double hu = entropy(a, c.n), hv = entropy(b, c.n);
  if (hu + hv == 0.0) return 1.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < c.counts.size(); ++i)
    for (std::size_t j = 0; j < gold.size(); ++j) {
      const double nij = c.counts[i][j];
      if (nij > 0.0) mi += (nij / c.n) * std::log(c.n * nij / (a[i] * b[j]));
    }
  return std::clamp(mi / ((hu + hv) / 2.0), 0.0, 1.0);
}

Partition load_partition(const std::filesystem::path& path) {
  const std::string contents = detail::read_file(path);
  const std::string trimmed = text::trim(contents);
  if (!trimmed.empty() && trimmed.front() == '[') {
    try {
      return json::parse(trimmed).get<Partition>();
    } catch (const json::exception& e) {
      fail(ErrorCode::MalformedRecord, path.string() + ": " + e.what());
    }
  }
  std::map<std::string, std::vector<std::string>> by_label;
  std::istringstream in(contents);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) fail(ErrorCode::MalformedRecord, path.string() + ": line " + std::to_string(line_no));
    by_label[line.substr(tab + 1)].push_back(line.substr(0, tab));
  }
  Partition out;
  for (auto& [label, items] : by_label) out.push_back(std::move(items));
  return out;
}

std::map<std::string, std::string> cluster_params(const ClusterConfig& cfg) {
  return {{"cluster_threshold", json(cfg.threshold).dump()}};
}

void save_clusters(const std::filesystem::path& path, const ClusterDump& dump) {
  auto sorted = [](std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  json loose = json::array(), problems = json::array(), solutions = json::array();
  for (const auto& c : dump.loose) loose.push_back({{"id", c.id}, {"members", sorted(c.members)}});
  for (const auto& c : dump.problems)
    problems.push_back({{"id", c.id}, {"loose_cluster_id", c.loose_cluster_id}, {"members", sorted(c.members)}});
  for (const auto& c : dump.solutions) solutions.push_back({{"id", c.id}, {"members", sorted(c.members)}});
  json j = {{"version", 1},
            {"loose_clusters", std::move(loose)},
            {"problem_clusters", std::move(problems)},
            {"solution_clusters", std::move(solutions)},
            {"params", dump.params}};
  detail::write_file(path, j.dump(1) + "\n");
}

ClusterDump load_clusters(const std::filesystem::path& path) {
  try {
    const json j = json::parse(detail::read_file(path));
    if (j.at("version").get<int>() != 1) fail(ErrorCode::VersionMismatch, path.string());
    ClusterDump d;
    for (const auto& c : j.at("loose_clusters"))
      d.loose.push_back({c.at("id").get<std::size_t>(), c.at("members").get<std::vector<std::string>>()});
    for (const auto& c : j.at("problem_clusters"))
      d.problems.push_back({c.at("id").get<std::string>(), c.at("members").get<std::vector<std::string>>(),
                            c.at("loose_cluster_id").get<std::size_t>()});
    for (const auto& c : j.at("solution_clusters"))
      d.solutions.push_back({c.at("id").get<std::string>(), c.at("members").get<std::vector<std::string>>()});
    if (j.contains("params")) d.params = j.at("params").get<std::map<std::string, std::string>>();
    return d;
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }
}

}  // namespace muse
