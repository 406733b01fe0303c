#include <doctest.h>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <set>

#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>

#include "sggr/codec.hpp"
#include "sggr/structured_io.hpp"
#include "synthetic.hpp"

namespace fs = std::filesystem;
using namespace sggr;
using sggr::testing::Rng;

namespace {

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Workspace with a synthetic profile, ground truth, embedding table and candidate file.
struct Workspace {
  fs::path dir;
  sggr::testing::World world = sggr::testing::make_world(2025);
  std::vector<SceneGraph> gts;

  Workspace() {
    dir = fs::temp_directory_path() / ("sggr_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_json(path("profile.json"), profile_to_json(world.profile));
    Rng rng(17);
    std::vector<ordered_json> gt_docs, emb_docs, cand_docs;
    for (int i = 0; i < 30; ++i) {
      gts.push_back(sggr::testing::random_scene(rng, world, "img" + std::to_string(i)));
      gt_docs.push_back(scene_graph_to_json(gts.back()));
      const auto& g = gts.back();
      for (int k = 0; k < 4; ++k) {
        const auto& preds = world.profile.predicates();
        cand_docs.push_back({{"image_id", g.image_id},
                             {"subject", g.objects[sggr::testing::pick(rng, g.objects.size())].key()},
                             {"predicate", preds[sggr::testing::pick(rng, preds.size())]},
                             {"object", g.objects[sggr::testing::pick(rng, g.objects.size())].key()}});
      }
    }
    cand_docs.push_back({{"image_id", "ghost"}, {"subject", "person.1"}, {"predicate", "on"}, {"object", "dog.1"}});
    for (const auto& [k, v] : world.vectors) emb_docs.push_back({{"key", k}, {"vector", v}});
    write_json_lines(path("gt.jsonl"), gt_docs);
    write_json_lines(path("embeddings.jsonl"), emb_docs);
    write_json_lines(path("candidates.jsonl"), cand_docs);
  }
  ~Workspace() { fs::remove_all(dir); }

  std::string path(const std::string& name) const { return (dir / name).string(); }

  std::string data_flags() const {
    return "--profile " + path("profile.json") + " --gt " + path("gt.jsonl") + " --embeddings " + path("embeddings.jsonl");
  }

  Run run(const std::string& args, const std::string& env = "") const {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = env + " " + SGGR_CLI_PATH + " " + args + " >" + out.string() + " 2>" + err.string();
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
  }
};

}  // namespace

TEST_CASE("build-cot then score gives a perfect composite") {
  Workspace ws;
  auto r = ws.run(ws.data_flags() + " build-cot --out " + ws.path("sft.jsonl") + " --out-gt " + ws.path("sft_gt.jsonl"));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(json::parse(r.out)["records"] == 30);

  r = ws.run(ws.data_flags() + " score --completions " + ws.path("sft.jsonl") + " --out " + ws.path("scores.json"));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const auto doc = json::parse(slurp(ws.path("scores.json")));
  CHECK(doc["summary"]["scored"] == 30);
  for (const auto& res : doc["results"]) CHECK(res["reward"]["composite"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(doc["config"]["reward"]["tau"] == 0.75);
  CHECK(json::parse(r.out)["summary"]["count"] == 30);

  // The canonicalized ground truth scores the records just as well.
  r = ws.run("--profile " + ws.path("profile.json") + " --gt " + ws.path("sft_gt.jsonl") + " --embeddings " +
             ws.path("embeddings.jsonl") + " score --completions " + ws.path("sft.jsonl") + " --out " + ws.path("s2.json"));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(json::parse(slurp(ws.path("s2.json")))["summary"]["mean_composite"].get<double>() == doctest::Approx(1.0));

  // Byte-identical reruns.
  r = ws.run(ws.data_flags() + " --threads 3 score --completions " + ws.path("sft.jsonl") + " --out " + ws.path("scores2.json"));
  REQUIRE(r.status == 0);
  auto a = json::parse(slurp(ws.path("scores.json"))), b = json::parse(slurp(ws.path("scores2.json")));
  a.erase("config");
  b.erase("config");
  CHECK(a.dump() == b.dump());
  r = ws.run(ws.data_flags() + " score --completions " + ws.path("sft.jsonl") + " --out " + ws.path("scores3.json"));
  CHECK(slurp(ws.path("scores.json")) == slurp(ws.path("scores3.json")));
}

TEST_CASE("eval on perfect completions") {
  Workspace ws;
  REQUIRE(ws.run(ws.data_flags() + " build-cot --out " + ws.path("sft.jsonl")).status == 0);
  auto r = ws.run("--profile " + ws.path("profile.json") + " --gt " + ws.path("gt.jsonl") + " eval --completions " +
                  ws.path("sft.jsonl"));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const auto doc = json::parse(r.out);
  CHECK(doc["recall"] == 1.0);
  CHECK(doc["m_recall"] == 1.0);
  CHECK(doc["det_recall"] == 1.0);
  CHECK(doc["scenes"] == 30);
  const auto again = ws.run("--profile " + ws.path("profile.json") + " --gt " + ws.path("gt.jsonl") +
                            " eval --iou 0.5 --completions " + ws.path("sft.jsonl"));
  CHECK(again.out == r.out);
}

TEST_CASE("filter at theta 0 keeps every valid candidate") {
  Workspace ws;
  auto r = ws.run(ws.data_flags() + " filter --theta 0 --candidates " + ws.path("candidates.jsonl") + " --retained " +
                  ws.path("kept.jsonl") + " --drops " + ws.path("drops.jsonl"));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const auto summary = json::parse(r.out);
  CHECK(summary["candidates"] == 121);
  CHECK(summary["retained"].get<int>() + summary["dropped"].get<int>() == 121);
  CHECK(summary["drop_reasons"]["UNKNOWN_IMAGE"] == 1);
  CHECK_FALSE(summary["drop_reasons"].contains("BELOW_THRESHOLD"));
  CHECK(summary["config"]["filter"]["theta"] == 0.0);

  // Higher theta keeps a subset.
  r = ws.run(ws.data_flags() + " filter --theta 0.9 --candidates " + ws.path("candidates.jsonl") + " --retained " +
             ws.path("kept9.jsonl") + " --summary " + ws.path("summary9.json"));
  REQUIRE(r.status == 0);
  std::set<std::string> loose, strict;
  for_each_json_line(ws.path("kept.jsonl"), [&](const json& j, std::size_t) { loose.insert(j.dump()); });
  for_each_json_line(ws.path("kept9.jsonl"), [&](const json& j, std::size_t) { strict.insert(j.dump()); });
  CHECK(std::includes(loose.begin(), loose.end(), strict.begin(), strict.end()));
  CHECK(json::parse(slurp(ws.path("summary9.json")))["retained"] == strict.size());

  // Retained triplets flow into build-cot.
  r = ws.run(ws.data_flags() + " build-cot --retained " + ws.path("kept.jsonl") + " --out " + ws.path("aug.jsonl") +
             " --out-gt " + ws.path("aug_gt.jsonl"));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  std::size_t rel_before = 0, rel_after = 0;
  for (const auto& g : ws.gts) rel_before += g.relations.size();
  for_each_json_line(ws.path("aug_gt.jsonl"), [&](const json& j, std::size_t) { rel_after += j["relations"].size(); });
  CHECK(rel_after == rel_before + loose.size());
}

TEST_CASE("env fallbacks and config file precedence") {
  Workspace ws;
  const std::string env = "SGGR_PROFILE=" + ws.path("profile.json") + " SGGR_GT=" + ws.path("gt.jsonl") +
                          " SGGR_EMBEDDINGS=" + ws.path("embeddings.jsonl");
  std::ofstream(ws.path("cfg.json")) << R"({"filter": {"theta": 1.0}, "reward": {"tau": 0.6}})";
  auto r = ws.run("--config " + ws.path("cfg.json") + " filter --candidates " + ws.path("candidates.jsonl") +
                  " --retained " + ws.path("k.jsonl"), env);
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(json::parse(r.out)["config"]["filter"]["theta"] == 1.0);
  CHECK(json::parse(r.out)["config"]["reward"]["tau"] == 0.6);
  r = ws.run("--config " + ws.path("cfg.json") + " filter --theta 0.5 --candidates " + ws.path("candidates.jsonl") +
             " --retained " + ws.path("k.jsonl"), env);
  REQUIRE(r.status == 0);
  CHECK(json::parse(r.out)["config"]["filter"]["theta"] == 0.5);

  r = ws.run("stats", env);
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const auto stats = json::parse(r.out);
  CHECK(stats["images"] == 30);
  CHECK(stats["partition"]["head"].size() == ws.world.profile.predicates().size() * 3 / 10);
}

TEST_CASE("failures are machine readable") {
  Workspace ws;
  auto r = ws.run("score --completions x --out y");
  CHECK(r.status == 1);
  CHECK(json::parse(r.err)["error"]["code"] == "INVALID_CONFIG");

  r = ws.run(ws.data_flags() + " score --completions " + ws.path("missing.jsonl") + " --out " + ws.path("o.json"));
  CHECK(r.status == 1);
  CHECK(json::parse(r.err)["error"]["code"] == "IO_ERROR");

  std::ofstream(ws.path("bad.json")) << R"({"reward": {"tua": 1}})";
  r = ws.run("--config " + ws.path("bad.json") + " " + ws.data_flags() + " stats");
  CHECK(r.status == 1);
  CHECK(json::parse(r.err)["error"]["code"] == "INVALID_CONFIG");

  r = ws.run(ws.data_flags() + " filter --theta 3 --candidates a --retained b");
  CHECK(r.status == 1);
  CHECK(json::parse(r.err)["error"]["code"] == "INVALID_CONFIG");

  CHECK(ws.run("").status != 0);
}

TEST_CASE("serve answers health and score requests") {
  Workspace ws;
  const std::string cmd = "sh -c 'echo $$; exec " + std::string(SGGR_CLI_PATH) + " " + ws.data_flags() +
                          " serve --listen 127.0.0.1:0'";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  char line[256];
  REQUIRE(std::fgets(line, sizeof line, pipe));
  const int pid = std::stoi(line);
  REQUIRE(std::fgets(line, sizeof line, pipe));
  const auto listening = json::parse(line)["listening"].get<std::string>();
  const int port = std::stoi(listening.substr(listening.rfind(':') + 1));

  httplib::Client client("127.0.0.1", port);
  auto res = client.Get("/v1/health");
  REQUIRE(res);
  CHECK(json::parse(res->body)["store"]["images"] == 30);
  json items = json::array();
  items.push_back({{"image_id", ws.gts[0].image_id}, {"text", serialize_cot(ws.gts[0], ws.world.profile).response_text}});
  res = client.Post("/v1/score", json{{"items", items}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(json::parse(res->body)["results"][0]["reward"]["composite"].get<double>() == doctest::Approx(1.0));

  ::kill(pid, SIGTERM);
  CHECK(::pclose(pipe) == 0);
}
