#pragma once

#include "muse/pipeline.hpp"
#include "muse/providers.hpp"
#include "muse/sampler.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace muse {

enum class Relation { Parents, Children, Solutions };

std::optional<Relation> parse_relation(std::string_view s);

/// Parents are abstraction out-neighbors, children abstraction in-neighbors,
/// solutions ProblemSolution neighbors. Sorted by id; throws UnknownNode.
std::vector<std::string> navigate(const Fcg& graph, const std::string& id, Relation relation);

inline constexpr std::size_t kPageSize = 200;

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  unsigned render_threads = 4;
};

/// Read-only HTTP API over a snapshot. Requests run against whichever
/// snapshot was current when they started; swap() publishes a new one.
class Service {
 public:
  Service(std::shared_ptr<const Snapshot> snapshot, ProviderSet providers, ServiceConfig config = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the socket and returns the port. Throws BindFailure.
  int bind();
  /// Serves on the bound socket until stop(); binds first if needed.
  void run();
  /// bind() and run() on a background thread; returns the port.
  int start();
  void stop();

  /// Throws SnapshotCorrupt when the index does not match the embedder.
  void swap(std::shared_ptr<const Snapshot> snapshot);
  /// Loads a snapshot directory and swaps it in.
  void reload(const std::filesystem::path& dir);
  std::shared_ptr<const Snapshot> snapshot() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace muse
