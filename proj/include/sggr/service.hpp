#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sggr/augment.hpp"
#include "sggr/codec.hpp"
#include "sggr/embedding.hpp"
#include "sggr/error.hpp"
#include "sggr/gspo.hpp"
#include "sggr/reward.hpp"
#include "sggr/sgdet_eval.hpp"

namespace httplib {
class Server;
}

namespace sggr {

inline constexpr int kSchemaVersion = 1;

struct EngineConfig {
  RewardConfig reward;
  EvalConfig eval;
  FilterConfig filter;
  double gspo_epsilon = kDefaultClipEpsilon;

  std::string profile_path;
  std::string gt_path;
  std::string embedding_table;
  std::string embedding_url;
  std::size_t cache_capacity = 65536;

  std::string listen = "127.0.0.1:8080";
  std::size_t max_batch_items = 4096;
  double request_timeout_s = 60.0;
  int threads = 0;  // 0: OpenMP default

  /// Throws Error(InvalidConfig).
  void validate() const;
};

/// Overlays the fields present in `j` onto `base`. Unknown keys are rejected.
EngineConfig config_from_json(const json& j, EngineConfig base = {});
RewardConfig reward_config_from_json(const json& j, RewardConfig base = {});
ordered_json reward_config_to_json(const RewardConfig& c);
/// Resolved configuration as embedded into every output document.
ordered_json config_to_json(const EngineConfig& c);

/// image_id -> validated ground-truth graph.
class GroundTruthStore {
 public:
  GroundTruthStore() = default;
  /// Every graph is box-clamped and must validate against the profile. Throws Error(InvalidInput).
  GroundTruthStore(std::vector<SceneGraph> graphs, const DatasetProfile& profile);
  static GroundTruthStore load(const std::filesystem::path& path, const DatasetProfile& profile);

  const SceneGraph* find(const std::string& image_id) const;
  const std::vector<SceneGraph>& graphs() const { return graphs_; }
  std::size_t size() const { return graphs_.size(); }

 private:
  std::vector<SceneGraph> graphs_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

struct Completion {
  std::string sample_id;
  std::string image_id;
  std::string text;
};

/// {"sample_id","image_id","text"}; "completion_text" and "response_text" are accepted in place of "text".
Completion completion_from_json(const json& j);
std::vector<Completion> load_completions(const std::filesystem::path& path);

ordered_json breakdown_to_json(const RewardBreakdown& b);
ordered_json gspo_result_to_json(const GspoResult& r);
PolicyGroup policy_group_from_json(const json& j);

/// Request-level failure with the HTTP status to report.
struct RequestError : public Error {
  int status;
  RequestError(int status_, ErrorCode code_, const std::string& message) : Error(code_, message), status(status_) {}
};

/// Shared state of the CLI and the HTTP service: profile, ground truth and embeddings are
/// loaded once and read-only afterwards (apart from the embedding cache).
class Engine {
 public:
  Engine(DatasetProfile profile, GroundTruthStore store, std::shared_ptr<EmbeddingStore> embeddings, EngineConfig cfg);

  /// Loads profile, ground truth and embedding source named in the config.
  static Engine from_config(const EngineConfig& cfg);

  const DatasetProfile& profile() const { return profile_; }
  const GroundTruthStore& store() const { return store_; }
  EmbeddingStore& embeddings() const { return *embeddings_; }
  const EngineConfig& config() const { return cfg_; }

  std::vector<ScoreOutcome> score(std::span<const Completion> items, const RewardConfig& cfg) const;

  /// POST /v1/score body -> response document. Throws RequestError for request-level problems.
  ordered_json handle_score(const json& request) const;
  ordered_json handle_advantages(const json& request) const;
  ordered_json handle_eval(const json& request) const;
  ordered_json health() const;

  /// Scores a completion list into the /v1/score response shape.
  ordered_json score_document(std::span<const Completion> items, const RewardConfig& cfg) const;
  /// Evaluates completions into the EvalReport document.
  ordered_json eval_document(std::span<const Completion> items, const EvalConfig& cfg) const;

 private:
  DatasetProfile profile_;
  GroundTruthStore store_;
  std::shared_ptr<EmbeddingStore> embeddings_;
  EngineConfig cfg_;
};

/// HTTP front end: POST /v1/score, /v1/advantages, /v1/eval and GET /v1/health.
class HttpService {
 public:
  explicit HttpService(const Engine& engine);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds to host:port; port 0 picks a free port. Returns the bound port or throws Error(Io).
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void run();
  void stop();

 private:
  const Engine& engine_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace sggr
