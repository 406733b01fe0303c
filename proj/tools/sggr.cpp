// sggr: batch scoring, evaluation, data building and the reward service.

#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "sggr/service.hpp"

using namespace sggr;

namespace {

struct Flags {
  std::string config_path;
  std::string profile;
  std::string gt;
  std::string embeddings;
  std::string embedding_url;
  std::string listen;
  std::optional<int> threads;
  std::optional<std::size_t> cache_capacity;
};

EngineConfig resolve(const Flags& f) {
  EngineConfig cfg;
  if (!f.config_path.empty()) {
    auto doc = json::parse(read_text(f.config_path), nullptr, false);
    if (doc.is_discarded()) throw Error(ErrorCode::InvalidConfig, f.config_path + " is not valid JSON");
    cfg = config_from_json(doc, cfg);
  }
  if (!f.profile.empty()) cfg.profile_path = f.profile;
  if (!f.gt.empty()) cfg.gt_path = f.gt;
  if (!f.embeddings.empty()) {
    cfg.embedding_table = f.embeddings;
    cfg.embedding_url.clear();
  }
  if (!f.embedding_url.empty()) {
    cfg.embedding_url = f.embedding_url;
    if (f.embeddings.empty()) cfg.embedding_table.clear();
  }
  if (!f.listen.empty()) cfg.listen = f.listen;
  if (f.threads) cfg.threads = *f.threads;
  if (f.cache_capacity) cfg.cache_capacity = *f.cache_capacity;
  cfg.validate();
  return cfg;
}

DatasetProfile require_profile(const EngineConfig& cfg) {
  if (cfg.profile_path.empty()) throw Error(ErrorCode::InvalidConfig, "no dataset profile given (--profile)");
  return load_profile(cfg.profile_path);
}

GroundTruthStore require_store(const EngineConfig& cfg, const DatasetProfile& profile) {
  if (cfg.gt_path.empty()) throw Error(ErrorCode::InvalidConfig, "no ground-truth file given (--gt)");
  return GroundTruthStore::load(cfg.gt_path, profile);
}

void emit(const ordered_json& doc, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << doc.dump(2) << '\n';
  } else {
    write_json(out, doc);
  }
}

std::pair<std::string, int> split_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::InvalidConfig, "listen address must be host:port");
  int port = 0;
  try {
    port = std::stoi(listen.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidConfig, "bad port in '" + listen + "'");
  }
  if (port < 0 || port > 65535) throw Error(ErrorCode::InvalidConfig, "bad port in '" + listen + "'");
  return {listen.substr(0, colon), port};
}

HttpService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

int run_score(const EngineConfig& cfg, const std::string& completions, const std::string& out) {
  auto engine = Engine::from_config(cfg);
  const auto items = load_completions(completions);
  const auto doc = engine.score_document(items, cfg.reward);
  write_json(out, doc);
  std::cout << ordered_json{{"schema_version", kSchemaVersion}, {"summary", doc["summary"]}}.dump() << '\n';
  return 0;
}

int run_eval(EngineConfig cfg, const std::string& completions, const std::string& out) {
  auto profile = require_profile(cfg);
  auto store = require_store(cfg, profile);
  // Evaluation never touches embeddings.
  auto embeddings = std::make_shared<EmbeddingStore>(std::make_shared<TableProvider>(), 1);
  cfg.embedding_table.clear();
  cfg.embedding_url.clear();
  Engine engine(std::move(profile), std::move(store), std::move(embeddings), cfg);
  emit(engine.eval_document(load_completions(completions), cfg.eval), out);
  return 0;
}

int run_filter(const EngineConfig& cfg, const std::string& candidates_path, const std::string& retained_path,
               const std::string& drops_path, const std::string& summary_path) {
  auto engine = Engine::from_config(cfg);
  std::map<std::string, std::vector<CandidateTriplet>> by_image;
  std::size_t total = 0;
  for_each_json_line(candidates_path, [&](const json& doc, std::size_t lineno) {
    try {
      auto c = candidate_from_json(doc);
      by_image[c.image_id].push_back(std::move(c));
      ++total;
    } catch (const Error& e) {
      throw Error(e.code, candidates_path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  });

  std::vector<CandidateTriplet> retained;
  std::vector<DropEntry> dropped;
  for (const auto& [image_id, cands] : by_image) {
    const SceneGraph* gt = engine.store().find(image_id);
    if (!gt) {
      for (const auto& c : cands) dropped.push_back({c, "UNKNOWN_IMAGE", std::nullopt});
      continue;
    }
    auto r = filter_candidates(cands, *gt, engine.profile(), cfg.filter, engine.embeddings());
    retained.insert(retained.end(), r.retained.begin(), r.retained.end());
    dropped.insert(dropped.end(), r.dropped.begin(), r.dropped.end());
  }
  std::sort(dropped.begin(), dropped.end(), [](const DropEntry& a, const DropEntry& b) {
    return std::tie(a.candidate, a.reason) < std::tie(b.candidate, b.reason);
  });

  std::vector<ordered_json> kept_docs, drop_docs;
  for (const auto& c : retained) kept_docs.push_back(candidate_to_json(c));
  std::map<std::string, std::size_t> reasons;
  for (const auto& d : dropped) {
    drop_docs.push_back(drop_entry_to_json(d));
    ++reasons[d.reason];
  }
  write_json_lines(retained_path, kept_docs);
  if (!drops_path.empty()) write_json_lines(drops_path, drop_docs);

  ordered_json summary;
  summary["schema_version"] = kSchemaVersion;
  summary["config"] = config_to_json(cfg);
  summary["candidates"] = total;
  summary["retained"] = retained.size();
  summary["dropped"] = dropped.size();
  summary["drop_reasons"] = reasons;
  emit(summary, summary_path);
  return 0;
}

int run_build_cot(const EngineConfig& cfg, const std::string& retained_path, const std::string& out,
                  const std::string& out_gt) {
  auto profile = require_profile(cfg);
  auto store = require_store(cfg, profile);
  std::map<std::string, std::vector<CandidateTriplet>> by_image;
  if (!retained_path.empty()) {
    for_each_json_line(retained_path, [&](const json& doc, std::size_t) {
      auto c = candidate_from_json(doc);
      if (!store.find(c.image_id)) throw Error(ErrorCode::InvalidInput, "retained triplet for unknown image '" + c.image_id + "'");
      by_image[c.image_id].push_back(std::move(c));
    });
  }

  std::vector<ordered_json> records, graphs;
  for (const auto& gt : store.graphs()) {
    std::span<const CandidateTriplet> extra;
    if (auto it = by_image.find(gt.image_id); it != by_image.end()) extra = it->second;
    const auto merged = merge_candidates(gt, extra, profile);
    auto rec = serialize_cot(merged, profile);
    ordered_json r;
    r["prompt_ref"] = gt.image_id;
    r["image_id"] = gt.image_id;
    r["response_text"] = rec.response_text;
    records.push_back(std::move(r));
    graphs.push_back(scene_graph_to_json(canonicalize_for_cot(merged, profile)));
  }
  write_json_lines(out, records);
  if (!out_gt.empty()) write_json_lines(out_gt, graphs);
  std::cout << ordered_json{{"schema_version", kSchemaVersion}, {"records", records.size()}}.dump() << '\n';
  return 0;
}

int run_stats(const EngineConfig& cfg, const std::string& out) {
  auto profile = require_profile(cfg);
  auto store = require_store(cfg, profile);
  const auto partition = partition_predicates(profile);
  ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["profile"] = profile.name();
  const auto stats = corpus_stats_to_json(corpus_stats(store.graphs(), profile, partition));
  for (const auto& [k, v] : stats.items()) doc[k] = v;
  doc["partition"] = {{"head", partition.head}, {"body", partition.body}, {"tail", partition.tail}};
  doc["config"] = config_to_json(cfg);
  emit(doc, out);
  return 0;
}

int run_serve(const EngineConfig& cfg) {
  auto engine = Engine::from_config(cfg);
  HttpService service(engine);
  const auto [host, port] = split_listen(cfg.listen);
  const int bound = service.bind(host, port);
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << ordered_json{{"listening", host + ":" + std::to_string(bound)}}.dump() << std::endl;
  service.run();
  g_service = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-graph reward and evaluation engine"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config_path, "JSON config file")->envname("SGGR_CONFIG");
  app.add_option("--profile", f.profile, "dataset profile JSON")->envname("SGGR_PROFILE");
  app.add_option("--gt", f.gt, "ground-truth scene graphs (JSON lines)")->envname("SGGR_GT");
  app.add_option("--embeddings", f.embeddings, "embedding table (JSON lines of {key, vector})")->envname("SGGR_EMBEDDINGS");
  app.add_option("--embedding-url", f.embedding_url, "remote embedding provider base URL")->envname("SGGR_EMBEDDING_URL");
  app.add_option("--threads", f.threads, "worker threads (0: OpenMP default)");
  app.add_option("--cache-capacity", f.cache_capacity, "embedding cache entries");

  std::string completions, out, candidates, retained, drops, summary, out_gt;
  std::optional<double> theta, iou_threshold, tau, eps;
  std::optional<std::size_t> top_k;

  auto* score = app.add_subcommand("score", "score completions against ground truth");
  score->add_option("--completions", completions, "completions (JSON lines)")->required();
  score->add_option("--out", out, "output document")->required();
  score->add_option("--tau", tau, "prototype assignment threshold");
  score->add_option("--eps", eps, "DBSCAN radius in cosine distance");

  auto* eval = app.add_subcommand("eval", "SGDET recall metrics for completions");
  eval->add_option("--completions", completions, "completions (JSON lines)")->required();
  eval->add_option("--out", out, "report path (default stdout)");
  eval->add_option("--iou", iou_threshold, "IoU threshold");
  eval->add_option("--top-k", top_k, "keep the first K predicted triplets per scene");

  auto* filter = app.add_subcommand("filter", "keep candidate triplets close to ground truth");
  filter->add_option("--candidates", candidates, "candidate triplets (JSON lines)")->required();
  filter->add_option("--retained", retained, "retained triplets output")->required();
  filter->add_option("--drops", drops, "drop log output");
  filter->add_option("--summary", summary, "summary document (default stdout)");
  filter->add_option("--theta", theta, "similarity threshold");

  auto* build = app.add_subcommand("build-cot", "render ground truth (plus retained triplets) as completions");
  build->add_option("--retained", retained, "retained triplets to merge");
  build->add_option("--out", out, "records output (JSON lines)")->required();
  build->add_option("--out-gt", out_gt, "merged ground truth matching the records");

  auto* stats = app.add_subcommand("stats", "corpus statistics");
  stats->add_option("--out", out, "output path (default stdout)");

  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  serve->add_option("--listen", f.listen, "host:port")->envname("SGGR_LISTEN");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    auto cfg = resolve(f);
    if (theta) cfg.filter.theta = *theta;
    if (iou_threshold) cfg.eval.iou_threshold = *iou_threshold;
    if (top_k) cfg.eval.top_k = *top_k;
    if (tau) cfg.reward.tau = *tau;
    if (eps) cfg.reward.dbscan.eps = *eps;
    cfg.validate();

    if (score->parsed()) return run_score(cfg, completions, out);
    if (eval->parsed()) return run_eval(cfg, completions, out);
    if (filter->parsed()) return run_filter(cfg, candidates, retained, drops, summary);
    if (build->parsed()) return run_build_cot(cfg, retained, out, out_gt);
    if (stats->parsed()) return run_stats(cfg, out);
    if (serve->parsed()) return run_serve(cfg);
  } catch (const Error& e) {
    std::cerr << ordered_json{{"error", {{"code", to_string(e.code)}, {"message", e.what()}}}}.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << ordered_json{{"error", {{"code", "INTERNAL"}, {"message", e.what()}}}}.dump() << '\n';
    return 1;
  }
  return 0;
}
