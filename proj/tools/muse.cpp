// Command line front end for the pipeline stages, the sampler and the server.

#include "muse/cluster.hpp"
#include "muse/connect.hpp"
#include "muse/corpus.hpp"
#include "muse/error.hpp"
#include "muse/log.hpp"
#include "muse/pipeline.hpp"
#include "muse/sampler.hpp"
#include "muse/service.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using namespace muse;

namespace {

struct Globals {
  std::string mode;
  std::size_t fake_dim = 256;
  std::string cls_labels;
  std::string embed_cache;
  unsigned threads = 0;
  bool quiet = false;
};

ProviderSet providers_for(const Globals& g) {
  ProviderOptions o = provider_options_from_env();
  if (!g.mode.empty()) o.mode = parse_provider_mode(g.mode);
  o.fake_dim = g.fake_dim;
  if (!g.cls_labels.empty()) o.classifier_labels = g.cls_labels;
  auto set = make_providers(o);
  if (!g.embed_cache.empty() && fs::exists(g.embed_cache)) set.embedder->load(g.embed_cache);
  return set;
}

void save_cache(const Globals& g, const ProviderSet& p) {
  if (!g.embed_cache.empty()) p.embedder->save(g.embed_cache);
}

std::atomic<bool> reload_requested{false};
std::atomic<bool> shutdown_requested{false};

extern "C" void on_signal(int sig) {
  if (sig == SIGHUP)
    reload_requested = true;
  else
    shutdown_requested = true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Functional concept graph builder and inspiration sampler"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--mode", g.mode, "Provider mode: fake or live (default: MUSE_PROVIDER_MODE or fake)");
  app.add_option("--fake-dim", g.fake_dim, "Dimension of the fake embedder");
  app.add_option("--cls-labels", g.cls_labels, "TSV of hand-labeled mechanism spans for the classifier");
  app.add_option("--embed-cache", g.embed_cache, "JSON file caching embeddings between runs");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)");
  app.add_flag("-q,--quiet", g.quiet, "Only print warnings");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Filter and sample a JSONL corpus");
  std::string corpus_in, corpus_out, sections = "ABF";
  std::optional<std::size_t> sample;
  std::uint64_t seed = 0;
  ingest->add_option("--corpus", corpus_in, "Input JSONL")->required();
  ingest->add_option("--out", corpus_out, "Output JSONL")->required();
  ingest->add_option("--sections", sections, "Allowed CPC sections");
  ingest->add_option("--sample", sample, "Sample size");
  ingest->add_option("--seed", seed, "Sampling seed");

  // annotate
  auto* annotate = app.add_subcommand("annotate", "Extract purpose and mechanism tags");
  std::string cpc_path, tags_out;
  double cls_threshold = kDefaultClassifierThreshold;
  annotate->add_option("--corpus", corpus_in, "Corpus JSONL")->required();
  annotate->add_option("--cpc", cpc_path, "CPC taxonomy TSV")->required();
  annotate->add_option("--out", tags_out, "Tags JSONL")->required();
  annotate->add_option("--cls-threshold", cls_threshold, "Mechanism classifier threshold");

  // cluster
  auto* cluster = app.add_subcommand("cluster", "Cluster purpose tags into problem and solution clusters");
  std::string tags_in, cluster_out;
  ClusterConfig cluster_cfg;
  std::optional<std::size_t> k_loose;
  cluster->add_option("--tags", tags_in, "Tags JSONL")->required();
  cluster->add_option("--out", cluster_out, "Output directory")->required();
  cluster->add_option("--threshold", cluster_cfg.threshold, "Cosine distance threshold");
  cluster->add_option("--k-loose", k_loose, "Number of loose clusters (default N/50)");
  cluster->add_option("--seed", cluster_cfg.seed, "k-means seed");

  // build-graph
  auto* build_graph = app.add_subcommand("build-graph", "Build the base graph from clusters");
  std::string clusters_dir, graph_out, policy = "medoid";
  GraphBuildConfig graph_cfg;
  build_graph->add_option("--clusters", clusters_dir, "Directory written by 'cluster'")->required();
  build_graph->add_option("--out", graph_out, "Output directory")->required();
  build_graph->add_option("--t", graph_cfg.nli.threshold, "Entailment threshold");
  build_graph->add_option("--prefix", graph_cfg.nli.prefix, "Entailment prefix");
  build_graph->add_option("--representative", policy, "medoid or seeded-random");
  build_graph->add_option("--seed", graph_cfg.seed, "Seed for seeded-random representatives");

  // enhance
  auto* enhance = app.add_subcommand("enhance", "Add virtual nodes and cross-graph links; writes a snapshot");
  std::string graph_dir, lexicon_path, enhance_out;
  EnhanceConfig enhance_cfg;
  enhance->add_option("--graph", graph_dir, "Directory with graph.json")->required();
  enhance->add_option("--lexicon", lexicon_path, "Verb lexicon TSV")->required();
  enhance->add_option("--k-groups", enhance_cfg.abstraction.k_groups, "k-means groups for LLM proposals");
  enhance->add_option("--out", enhance_out, "Snapshot directory (default: --graph)");

  // inspire
  auto* inspire = app.add_subcommand("inspire", "Sample inspirations for a problem");
  std::string problem, condition = "purpose";
  SampleConfig sample_cfg;
  inspire->add_option("problem", problem, "Problem description")->required();
  inspire->add_option("--condition", condition, "purpose | purpose-mech | purpose-mech-sentence");
  inspire->add_option("--lambda", sample_cfg.lambda, "MMR trade-off");
  inspire->add_option("--per-bucket", sample_cfg.per_bucket, "Inspirations per (shape, source) bucket");
  inspire->add_option("--graph", graph_dir, "Snapshot directory")->required();

  // eval-clustering
  auto* eval = app.add_subcommand("eval-clustering", "Purity and NMI of a predicted partition");
  std::string pred_path, gold_path;
  eval->add_option("--pred", pred_path, "Predicted partition")->required();
  eval->add_option("--gold", gold_path, "Gold partition")->required();

  // serve
  auto* serve = app.add_subcommand("serve", "Serve a snapshot over HTTP (SIGHUP reloads it)");
  std::string addr = "127.0.0.1:8080", snapshot_dir;
  serve->add_option("--addr", addr, "host:port");
  serve->add_option("--snapshot", snapshot_dir, "Snapshot directory")->required();

  // build
  auto* build = app.add_subcommand("build", "Run every stage from corpus to snapshot");
  std::string build_out;
  PipelineConfig pipe;
  std::string build_corpus, build_cpc, build_lexicon;
  build->add_option("--corpus", build_corpus, "Corpus JSONL")->required();
  build->add_option("--cpc", build_cpc, "CPC taxonomy TSV")->required();
  build->add_option("--lexicon", build_lexicon, "Verb lexicon TSV")->required();
  build->add_option("--out", build_out, "Output directory")->required();
  build->add_option("--sample", sample, "Corpus sample size");
  build->add_option("--threshold", pipe.cluster_cfg.threshold, "Cosine distance threshold");
  build->add_option("--k-loose", k_loose, "Number of loose clusters");
  build->add_option("--t", pipe.graph_cfg.nli.threshold, "Entailment threshold");
  build->add_option("--prefix", pipe.graph_cfg.nli.prefix, "Entailment prefix");
  build->add_option("--k-groups", pipe.enhance_cfg.abstraction.k_groups, "k-means groups for LLM proposals");

  CLI11_PARSE(app, argc, argv);

  if (g.quiet)
    set_log_sink([](LogLevel level, std::string_view m) {
      if (level == LogLevel::Warning) std::cerr << "warning: " << m << '\n';
    });

  try {
    if (*ingest) {
      CorpusConfig cfg;
      cfg.allowed_sections.clear();
      for (char c : sections) cfg.allowed_sections.insert(c);
      cfg.sample_size = sample;
      cfg.seed = seed;
      const auto docs = load_corpus(corpus_in, cfg);
      save_corpus(corpus_out, docs);
      log_info("kept " + std::to_string(docs.size()) + " documents");
    } else if (*annotate) {
      const auto p = providers_for(g);
      CorpusConfig cfg;
      cfg.allowed_sections = {'A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'Y'};
      const auto docs = load_corpus(corpus_in, cfg);
      AnnotateConfig acfg;
      acfg.classifier_threshold = cls_threshold;
      acfg.threads = g.threads;
      const auto tags =
          annotate_corpus(docs, load_cpc_taxonomy(cpc_path), *p.completion, *p.classifier, *p.embedder, acfg);
      save_tags(tags_out, tags);
      save_cache(g, p);
      log_info(std::to_string(tags.purposes.size()) + " purposes, " + std::to_string(tags.mechanisms.size()) +
               " mechanisms");
    } else if (*cluster) {
      const auto p = providers_for(g);
      const auto tags = load_tags(tags_in);
      cluster_cfg.k_loose = k_loose;
      cluster_cfg.threads = g.threads;
      auto problems = build_problem_clusters(tags.purposes, *p.embedder, cluster_cfg);
      ClusterDump dump{std::move(problems.loose), std::move(problems.problems), {}, cluster_params(cluster_cfg)};
      dump.solutions = induce_solution_clusters(dump.problems, tags.purposes, tags.mechanisms);
      save_clusters(fs::path(cluster_out) / "clusters.json", dump);
      save_tags(fs::path(cluster_out) / "tags.jsonl", tags);
      save_cache(g, p);
      log_info(std::to_string(dump.loose.size()) + " loose, " + std::to_string(dump.problems.size()) +
               " problem, " + std::to_string(dump.solutions.size()) + " solution clusters");
    } else if (*build_graph) {
      const auto p = providers_for(g);
      graph_cfg.policy = parse_representative_policy(policy);
      graph_cfg.threads = g.threads;
      const auto tags = load_tags(fs::path(clusters_dir) / "tags.jsonl");
      const auto clusters = load_clusters(fs::path(clusters_dir) / "clusters.json");
      const auto graph = build_base_graph(tags, clusters, *p.embedder, *p.entailment, graph_cfg);
      save_graph(fs::path(graph_out) / kGraphFile, graph);
      save_cache(g, p);
      log_info(std::to_string(graph.nodes().size()) + " nodes, " + std::to_string(graph.edges().size()) + " edges");
    } else if (*enhance) {
      const auto p = providers_for(g);
      enhance_cfg.abstraction.threads = g.threads;
      auto graph = load_graph(fs::path(graph_dir) / kGraphFile);
      enhance_cfg.nli.threshold = std::stod(graph.params.count("nli_threshold") ? graph.params.at("nli_threshold") : "0.5");
      if (graph.params.count("nli_prefix")) enhance_cfg.nli.prefix = graph.params.at("nli_prefix");
      graph = enhance_graph(std::move(graph), *p.embedder, *p.entailment, *p.completion,
                            VerbLexicon::load(lexicon_path), enhance_cfg);
      Snapshot snap;
      snap.index = build_problem_index(graph, *p.embedder);
      snap.graph = std::move(graph);
      snap.metadata = {{"embed_dim", std::to_string(p.embedder->dim())}};
      save_snapshot(enhance_out.empty() ? fs::path(graph_dir) : fs::path(enhance_out), snap);
      save_cache(g, p);
    } else if (*inspire) {
      const auto cond = parse_condition(condition);
      if (!cond) throw Error(ErrorCode::InvalidArgument, "unknown condition '" + condition + "'");
      sample_cfg.condition = *cond;
      const auto p = providers_for(g);
      const auto snap = load_snapshot(graph_dir);
      const auto result =
          sample_inspirations(snap.graph, snap.index, *p.embedder, problem, sample_cfg, p.completion.get());
      std::cout << inspirations_to_json(result, sample_cfg);
    } else if (*eval) {
      const auto pred = load_partition(pred_path);
      const auto gold = load_partition(gold_path);
      std::cout.precision(12);
      std::cout << "purity\t" << purity(pred, gold) << "\nnmi\t" << nmi(pred, gold) << '\n';
    } else if (*serve) {
      const auto colon = addr.rfind(':');
      if (colon == std::string::npos) throw Error(ErrorCode::InvalidArgument, "--addr must be host:port");
      ServiceConfig cfg;
      cfg.host = addr.substr(0, colon);
      cfg.port = std::stoi(addr.substr(colon + 1));
      auto snap = std::make_shared<const Snapshot>(load_snapshot(snapshot_dir));
      Service service(std::move(snap), providers_for(g), cfg);
      const int port = service.bind();
      std::signal(SIGHUP, on_signal);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::thread control([&] {
        while (!shutdown_requested) {
          std::this_thread::sleep_for(std::chrono::milliseconds(200));
          if (reload_requested.exchange(false)) {
            try {
              service.reload(snapshot_dir);
            } catch (const Error& e) {
              log_warning(std::string("reload failed, keeping the old snapshot: ") + e.what());
            }
          }
        }
        service.stop();
      });
      log_info("listening on " + cfg.host + ":" + std::to_string(port));
      service.run();
      shutdown_requested = true;
      control.join();
    } else if (*build) {
      pipe.corpus = build_corpus;
      pipe.taxonomy = build_cpc;
      pipe.lexicon = build_lexicon;
      pipe.corpus_cfg.sample_size = sample;
      pipe.cluster_cfg.k_loose = k_loose;
      pipe.cluster_cfg.threads = pipe.graph_cfg.threads = pipe.annotate_cfg.threads = g.threads;
      pipe.enhance_cfg.abstraction.threads = g.threads;
      pipe.enhance_cfg.nli = pipe.graph_cfg.nli;
      const auto p = providers_for(g);
      const auto snap = run_pipeline(pipe, p, build_out);
      save_cache(g, p);
      log_info("snapshot: " + std::to_string(snap.graph.nodes().size()) + " nodes, " +
               std::to_string(snap.graph.edges().size()) + " edges");
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
