#include "sggr/service.hpp"

#include <chrono>
#include <cmath>
#include <set>

#include <httplib.h>

#include "sggr/error.hpp"

namespace sggr {

namespace {

[[noreturn]] void bad_config(const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); }

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) bad_config("'" + where + "' must be a JSON object");
  std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!keys.contains(k)) bad_config("unknown key '" + k + "' in " + where);
  }
}

double num(const json& j, const char* key, double fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number()) bad_config(std::string("'") + key + "' must be numeric");
  return it->get<double>();
}

std::string str(const json& j, const char* key, std::string fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_string()) bad_config(std::string("'") + key + "' must be a string");
  return it->get<std::string>();
}

std::size_t count(const json& j, const char* key, std::size_t fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<long long>() >= 0)) {
    bad_config(std::string("'") + key + "' must be a non-negative integer");
  }
  return it->get<std::size_t>();
}

}  // namespace

void EngineConfig::validate() const {
  reward.validate();
  eval.validate();
  filter.validate();
  if (!(gspo_epsilon > 0 && gspo_epsilon < 1)) bad_config("gspo epsilon must lie in (0,1)");
  if (cache_capacity == 0) bad_config("cache_capacity must be positive");
  if (max_batch_items == 0) bad_config("max_batch_items must be positive");
  if (!(request_timeout_s > 0)) bad_config("request_timeout_s must be positive");
  if (threads < 0) bad_config("threads must be >= 0");
  if (!embedding_table.empty() && !embedding_url.empty()) {
    bad_config("configure either an embedding table or an embedding URL, not both");
  }
}

RewardConfig reward_config_from_json(const json& j, RewardConfig c) {
  reject_unknown(j, {"w_base", "w_inc", "tau", "fine_share", "weights", "dbscan", "match"}, "reward");
  c.w_base = num(j, "w_base", c.w_base);
  c.w_inc = num(j, "w_inc", c.w_inc);
  c.tau = num(j, "tau", c.tau);
  c.fine_share = num(j, "fine_share", c.fine_share);
  if (auto it = j.find("weights"); it != j.end()) {
    reject_unknown(*it, {"format", "category", "node", "relation"}, "reward.weights");
    c.weights.format = num(*it, "format", c.weights.format);
    c.weights.category = num(*it, "category", c.weights.category);
    c.weights.node = num(*it, "node", c.weights.node);
    c.weights.relation = num(*it, "relation", c.weights.relation);
  }
  if (auto it = j.find("dbscan"); it != j.end()) {
    reject_unknown(*it, {"eps", "min_pts"}, "reward.dbscan");
    c.dbscan.eps = num(*it, "eps", c.dbscan.eps);
    c.dbscan.min_pts = count(*it, "min_pts", c.dbscan.min_pts);
  }
  if (auto it = j.find("match"); it != j.end()) {
    reject_unknown(*it, {"lambda_semantic", "lambda_iou", "lambda_l1", "cost_threshold"}, "reward.match");
    c.match.lambda_semantic = num(*it, "lambda_semantic", c.match.lambda_semantic);
    c.match.lambda_iou = num(*it, "lambda_iou", c.match.lambda_iou);
    c.match.lambda_l1 = num(*it, "lambda_l1", c.match.lambda_l1);
    c.match.cost_threshold = num(*it, "cost_threshold", c.match.cost_threshold);
  }
  return c;
}

ordered_json reward_config_to_json(const RewardConfig& c) {
  ordered_json j;
  j["w_base"] = c.w_base;
  j["w_inc"] = c.w_inc;
  j["tau"] = c.tau;
  j["fine_share"] = c.fine_share;
  j["weights"] = {{"format", c.weights.format},
                  {"category", c.weights.category},
                  {"node", c.weights.node},
                  {"relation", c.weights.relation}};
  j["dbscan"] = {{"eps", c.dbscan.eps}, {"min_pts", c.dbscan.min_pts}};
  j["match"] = {{"lambda_semantic", c.match.lambda_semantic},
                {"lambda_iou", c.match.lambda_iou},
                {"lambda_l1", c.match.lambda_l1},
                {"cost_threshold", c.match.cost_threshold}};
  return j;
}

EngineConfig config_from_json(const json& j, EngineConfig c) {
  reject_unknown(j, {"reward", "eval", "filter", "gspo", "profile", "ground_truth", "embedding", "service"}, "config");
  if (auto it = j.find("reward"); it != j.end()) c.reward = reward_config_from_json(*it, c.reward);
  if (auto it = j.find("eval"); it != j.end()) {
    reject_unknown(*it, {"iou_threshold", "top_k"}, "eval");
    c.eval.iou_threshold = num(*it, "iou_threshold", c.eval.iou_threshold);
    if (auto k = it->find("top_k"); k != it->end()) {
      c.eval.top_k = k->is_null() ? std::nullopt : std::optional<std::size_t>(count(*it, "top_k", 0));
    }
  }
  if (auto it = j.find("filter"); it != j.end()) {
    reject_unknown(*it, {"theta"}, "filter");
    c.filter.theta = num(*it, "theta", c.filter.theta);
  }
  if (auto it = j.find("gspo"); it != j.end()) {
    reject_unknown(*it, {"epsilon"}, "gspo");
    c.gspo_epsilon = num(*it, "epsilon", c.gspo_epsilon);
  }
  c.profile_path = str(j, "profile", c.profile_path);
  c.gt_path = str(j, "ground_truth", c.gt_path);
  if (auto it = j.find("embedding"); it != j.end()) {
    reject_unknown(*it, {"table", "url", "cache_capacity"}, "embedding");
    c.embedding_table = str(*it, "table", c.embedding_table);
    c.embedding_url = str(*it, "url", c.embedding_url);
    c.cache_capacity = count(*it, "cache_capacity", c.cache_capacity);
  }
  if (auto it = j.find("service"); it != j.end()) {
    reject_unknown(*it, {"listen", "max_batch_items", "request_timeout_s", "threads"}, "service");
    c.listen = str(*it, "listen", c.listen);
    c.max_batch_items = count(*it, "max_batch_items", c.max_batch_items);
    c.request_timeout_s = num(*it, "request_timeout_s", c.request_timeout_s);
    c.threads = static_cast<int>(count(*it, "threads", static_cast<std::size_t>(c.threads)));
  }
  return c;
}

ordered_json config_to_json(const EngineConfig& c) {
  ordered_json j;
  j["reward"] = reward_config_to_json(c.reward);
  j["eval"] = {{"iou_threshold", c.eval.iou_threshold},
               {"top_k", c.eval.top_k ? ordered_json(*c.eval.top_k) : ordered_json(nullptr)}};
  j["filter"] = {{"theta", c.filter.theta}};
  j["gspo"] = {{"epsilon", c.gspo_epsilon}};
  j["profile"] = c.profile_path;
  j["ground_truth"] = c.gt_path;
  j["embedding"] = {{"table", c.embedding_table}, {"url", c.embedding_url}, {"cache_capacity", c.cache_capacity}};
  j["service"] = {{"listen", c.listen},
                  {"max_batch_items", c.max_batch_items},
                  {"request_timeout_s", c.request_timeout_s},
                  {"threads", c.threads}};
  return j;
}

GroundTruthStore::GroundTruthStore(std::vector<SceneGraph> graphs, const DatasetProfile& profile)
    : graphs_(std::move(graphs)) {
  for (std::size_t i = 0; i < graphs_.size(); ++i) {
    auto& g = graphs_[i];
    clamp_boxes(g);
    if (auto v = validate_graph(g, profile); !v.empty()) {
      throw Error(ErrorCode::InvalidInput,
                  "ground truth '" + g.image_id + "' is invalid: " + v.front().code + " (" + v.front().detail + ")");
    }
    if (!index_.emplace(g.image_id, i).second) {
      throw Error(ErrorCode::InvalidInput, "duplicate ground truth image_id '" + g.image_id + "'");
    }
  }
}

GroundTruthStore GroundTruthStore::load(const std::filesystem::path& path, const DatasetProfile& profile) {
  std::vector<SceneGraph> graphs;
  for_each_json_line(path, [&](const json& doc, std::size_t lineno) {
    try {
      graphs.push_back(scene_graph_from_json(doc, &profile));
    } catch (const Error& e) {
      throw Error(e.code, path.filename().string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  });
  return GroundTruthStore(std::move(graphs), profile);
}

const SceneGraph* GroundTruthStore::find(const std::string& image_id) const {
  auto it = index_.find(image_id);
  return it == index_.end() ? nullptr : &graphs_[it->second];
}

Completion completion_from_json(const json& j) {
  auto field = [&](const char* k) -> std::optional<std::string> {
    auto it = j.find(k);
    if (it == j.end()) return std::nullopt;
    if (!it->is_string()) throw Error(ErrorCode::InvalidInput, std::string("'") + k + "' must be a string");
    return it->get<std::string>();
  };
  if (!j.is_object()) throw Error(ErrorCode::InvalidInput, "completion must be a JSON object");
  auto sample = field("sample_id");
  auto image = field("image_id");
  auto text = field("text");
  if (!text) text = field("completion_text");
  if (!text) text = field("response_text");
  if (!image) throw Error(ErrorCode::InvalidInput, "completion needs 'image_id'");
  if (!text) throw Error(ErrorCode::InvalidInput, "completion needs 'text'");
  if (!sample) sample = field("prompt_ref");
  return {sample.value_or(*image), *image, *text};
}

std::vector<Completion> load_completions(const std::filesystem::path& path) {
  std::vector<Completion> out;
  for_each_json_line(path, [&](const json& doc, std::size_t lineno) {
    try {
      out.push_back(completion_from_json(doc));
    } catch (const Error& e) {
      throw Error(e.code, path.filename().string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  });
  return out;
}

ordered_json breakdown_to_json(const RewardBreakdown& b) {
  return {{"format", b.format}, {"category", b.category}, {"box", b.box},     {"recall", b.recall},
          {"fine", b.fine},     {"coarse", b.coarse},     {"composite", b.composite}};
}

ordered_json gspo_result_to_json(const GspoResult& r) {
  ordered_json j;
  j["advantages"] = r.advantages;
  j["ratios"] = r.ratios;
  j["objective"] = r.objective;
  j["clipped_flags"] = r.clipped;
  return j;
}

PolicyGroup policy_group_from_json(const json& j) {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidInput, m); };
  if (!j.is_object() || !j.contains("samples") || !j["samples"].is_array()) bad("group needs a 'samples' array");
  PolicyGroup g;
  for (const auto& s : j["samples"]) {
    if (!s.is_object() || !s.contains("reward") || !s["reward"].is_number()) bad("sample needs numeric 'reward'");
    PolicySample sample;
    sample.reward = s["reward"].get<double>();
    for (auto [key, dst] : {std::pair{"logp_new", &sample.logp_new}, std::pair{"logp_old", &sample.logp_old}}) {
      if (!s.contains(key) || !s[key].is_array()) bad(std::string("sample needs '") + key + "' array");
      for (const auto& v : s[key]) {
        if (!v.is_number()) bad(std::string("'") + key + "' must hold numbers");
        dst->push_back(v.get<double>());
      }
    }
    g.samples.push_back(std::move(sample));
  }
  return g;
}

Engine::Engine(DatasetProfile profile, GroundTruthStore store, std::shared_ptr<EmbeddingStore> embeddings,
               EngineConfig cfg)
    : profile_(std::move(profile)), store_(std::move(store)), embeddings_(std::move(embeddings)), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (!embeddings_) throw Error(ErrorCode::InvalidConfig, "engine needs an embedding store");
}

Engine Engine::from_config(const EngineConfig& cfg) {
  cfg.validate();
  if (cfg.profile_path.empty()) bad_config("no dataset profile configured");
  auto profile = load_profile(cfg.profile_path);
  GroundTruthStore store;
  if (!cfg.gt_path.empty()) store = GroundTruthStore::load(cfg.gt_path, profile);
  std::shared_ptr<EmbeddingProvider> provider;
  if (!cfg.embedding_url.empty()) {
    provider = std::make_shared<RemoteProvider>(RemoteProvider::Options{cfg.embedding_url});
  } else if (!cfg.embedding_table.empty()) {
    provider = TableProvider::load(cfg.embedding_table);
  } else {
    bad_config("no embedding table or embedding URL configured");
  }
  return Engine(std::move(profile), std::move(store), std::make_shared<EmbeddingStore>(provider, cfg.cache_capacity),
                cfg);
}

std::vector<ScoreOutcome> Engine::score(std::span<const Completion> items, const RewardConfig& cfg) const {
  cfg.validate();
  std::vector<ScoreItem> batch;
  batch.reserve(items.size());
  for (const auto& c : items) batch.push_back({c.text, store_.find(c.image_id)});
  return score_batch(batch, profile_, cfg, *embeddings_, cfg_.threads);
}

ordered_json Engine::score_document(std::span<const Completion> items, const RewardConfig& cfg) const {
  const auto outcomes = score(items, cfg);
  ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  EngineConfig echo = cfg_;
  echo.reward = cfg;
  doc["config"] = config_to_json(echo);
  doc["results"] = ordered_json::array();
  std::size_t scored = 0;
  double sum = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    ordered_json r;
    r["sample_id"] = items[i].sample_id;
    r["image_id"] = items[i].image_id;
    if (outcomes[i].breakdown) {
      r["ok"] = true;
      r["reward"] = breakdown_to_json(*outcomes[i].breakdown);
      ++scored;
      sum += outcomes[i].breakdown->composite;
    } else {
      r["ok"] = false;
      r["error"] = {{"code", outcomes[i].error_code}, {"message", outcomes[i].error_message}};
    }
    doc["results"].push_back(std::move(r));
  }
  doc["summary"] = {{"count", items.size()},
                    {"scored", scored},
                    {"errors", items.size() - scored},
                    {"mean_composite", scored ? sum / static_cast<double>(scored) : 0.0}};
  return doc;
}

namespace {

std::vector<Completion> request_items(const json& request, std::size_t limit) {
  if (!request.is_object()) throw RequestError(400, ErrorCode::InvalidInput, "request body must be a JSON object");
  if (auto v = request.find("schema_version"); v != request.end() && (!v->is_number_integer() || *v != kSchemaVersion)) {
    throw RequestError(400, ErrorCode::InvalidInput, "unsupported schema_version");
  }
  auto it = request.find("items");
  if (it == request.end() || !it->is_array()) throw RequestError(400, ErrorCode::InvalidInput, "request needs 'items'");
  if (it->size() > limit) {
    throw RequestError(413, ErrorCode::InvalidInput,
                       "batch of " + std::to_string(it->size()) + " exceeds limit " + std::to_string(limit));
  }
  std::vector<Completion> items;
  items.reserve(it->size());
  for (const auto& e : *it) {
    try {
      items.push_back(completion_from_json(e));
    } catch (const Error& err) {
      throw RequestError(400, err.code, err.what());
    }
  }
  return items;
}

}  // namespace

ordered_json Engine::handle_score(const json& request) const {
  auto items = request_items(request, cfg_.max_batch_items);
  RewardConfig cfg = cfg_.reward;
  if (auto it = request.find("reward_config"); it != request.end()) {
    try {
      cfg = reward_config_from_json(*it, cfg);
      cfg.validate();
    } catch (const Error& e) {
      throw RequestError(400, e.code, e.what());
    }
  }
  return score_document(items, cfg);
}

ordered_json Engine::handle_advantages(const json& request) const {
  if (!request.is_object()) throw RequestError(400, ErrorCode::InvalidInput, "request body must be a JSON object");
  auto it = request.find("groups");
  if (it == request.end() || !it->is_array()) throw RequestError(400, ErrorCode::InvalidInput, "request needs 'groups'");
  if (it->size() > cfg_.max_batch_items) throw RequestError(413, ErrorCode::InvalidInput, "too many groups");
  double epsilon = cfg_.gspo_epsilon;
  if (auto e = request.find("epsilon"); e != request.end()) {
    if (!e->is_number() || !(e->get<double>() > 0 && e->get<double>() < 1)) {
      throw RequestError(400, ErrorCode::InvalidConfig, "epsilon must lie in (0,1)");
    }
    epsilon = e->get<double>();
  }

  const auto& groups = *it;
  std::vector<ordered_json> results(groups.size());
  const auto n = static_cast<std::ptrdiff_t>(groups.size());
#pragma omp parallel for schedule(dynamic) if (n > 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    ordered_json r;
    try {
      r = gspo_result_to_json(gspo_objective(policy_group_from_json(groups[static_cast<std::size_t>(i)]), epsilon));
      r["ok"] = true;
    } catch (const Error& e) {
      r = {{"ok", false}, {"error", {{"code", to_string(e.code)}, {"message", e.what()}}}};
    }
    results[static_cast<std::size_t>(i)] = std::move(r);
  }
  ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["config"] = {{"epsilon", epsilon}};
  doc["results"] = results;
  return doc;
}

ordered_json Engine::eval_document(std::span<const Completion> items, const EvalConfig& cfg) const {
  cfg.validate();
  std::vector<SceneTally> tallies(items.size());
  std::vector<bool> known(items.size(), false);
  const auto n = static_cast<std::ptrdiff_t>(items.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& item = items[static_cast<std::size_t>(i)];
    const SceneGraph* gt = store_.find(item.image_id);
    if (!gt) continue;
    known[static_cast<std::size_t>(i)] = true;
    auto parsed = parse_completion(item.text, profile_, ImageSize{gt->width, gt->height}, gt->image_id);
    SceneGraph pred;
    if (parsed.graph) pred = std::move(*parsed.graph);
    auto tally = evaluate_scene(*gt, pred, profile_, cfg);
    tally.failed_parses = parsed.graph ? 0 : 1;
    tallies[static_cast<std::size_t>(i)] = std::move(tally);
  }

  ordered_json skipped = ordered_json::array();
  std::vector<SceneTally> evaluated;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (known[i]) {
      evaluated.push_back(std::move(tallies[i]));
    } else {
      skipped.push_back({{"sample_id", items[i].sample_id}, {"image_id", items[i].image_id}, {"code", "UNKNOWN_IMAGE"}});
    }
  }
  const auto report = aggregate(evaluated, profile_, partition_predicates(profile_));

  ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  const auto fields = eval_report_to_json(report);
  for (const auto& [k, v] : fields.items()) doc[k] = v;
  doc["scenes"] = evaluated.size();
  doc["skipped"] = skipped;
  EngineConfig echo = cfg_;
  echo.eval = cfg;
  doc["config"] = config_to_json(echo);
  return doc;
}

ordered_json Engine::handle_eval(const json& request) const {
  auto items = request_items(request, cfg_.max_batch_items);
  EvalConfig cfg = cfg_.eval;
  if (auto it = request.find("eval"); it != request.end()) {
    try {
      cfg = config_from_json(json{{"eval", *it}}, cfg_).eval;
      cfg.validate();
    } catch (const Error& e) {
      throw RequestError(400, e.code, e.what());
    }
  }
  try {
    return eval_document(items, cfg);
  } catch (const Error& e) {
    if (e.code == ErrorCode::EmptyBatch) throw RequestError(422, e.code, e.what());
    throw;
  }
}

ordered_json Engine::health() const {
  const bool provider_ready = embeddings_->provider().ready();
  const auto stats = embeddings_->stats();
  ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["status"] = provider_ready ? "ok" : "degraded";
  doc["store"] = {{"images", store_.size()}};
  doc["profile"] = {{"name", profile_.name()},
                    {"categories", profile_.categories().size()},
                    {"predicates", profile_.predicates().size()},
                    {"relation_types", profile_.relation_types()}};
  doc["provider"] = {{"description", embeddings_->provider().describe()},
                     {"ready", provider_ready},
                     {"cache", {{"hits", stats.hits}, {"misses", stats.misses}, {"entries", stats.entries},
                                {"capacity", embeddings_->capacity()}}}};
  return doc;
}

HttpService::HttpService(const Engine& engine) : engine_(engine), server_(std::make_unique<httplib::Server>()) {
  const auto timeout = std::chrono::duration<double>(engine_.config().request_timeout_s);
  server_->set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  server_->set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  server_->set_payload_max_length(256u << 20);

  auto reply = [](httplib::Response& res, int status, const ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  auto error_body = [](ErrorCode code, const std::string& message) {
    return ordered_json{{"schema_version", kSchemaVersion}, {"error", {{"code", to_string(code)}, {"message", message}}}};
  };
  auto post = [&, reply, error_body](const char* path, ordered_json (Engine::*handler)(const json&) const) {
    server_->Post(path, [this, reply, error_body, handler](const httplib::Request& req, httplib::Response& res) {
      auto body = json::parse(req.body, nullptr, false);
      if (body.is_discarded()) {
        reply(res, 400, error_body(ErrorCode::InvalidInput, "request body is not valid JSON"));
        return;
      }
      try {
        reply(res, 200, (engine_.*handler)(body));
      } catch (const RequestError& e) {
        reply(res, e.status, error_body(e.code, e.what()));
      } catch (const Error& e) {
        reply(res, e.code == ErrorCode::ProviderUnavailable ? 503 : 500, error_body(e.code, e.what()));
      } catch (const std::exception& e) {
        reply(res, 500, error_body(ErrorCode::InvalidInput, e.what()));
      }
    });
  };
  post("/v1/score", &Engine::handle_score);
  post("/v1/advantages", &Engine::handle_advantages);
  post("/v1/eval", &Engine::handle_eval);
  server_->Get("/v1/health", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, engine_.health());
  });
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw Error(ErrorCode::Io, "cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void HttpService::run() { server_->listen_after_bind(); }

void HttpService::stop() {
  if (server_) server_->stop();
}

}  // namespace sggr
