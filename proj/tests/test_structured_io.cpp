#include <doctest.h>

#include <random>

#include "sggr/codec.hpp"
#include "sggr/error.hpp"
#include "sggr/structured_io.hpp"
#include "synthetic.hpp"

using namespace sggr;
using sggr::testing::World;

namespace {

const DatasetProfile& fixture_profile() {
  static const DatasetProfile p = load_profile(SGGR_TEST_DATA "/parser_profile.json");
  return p;
}

struct CorpusCase {
  std::string name;
  std::string text;
  std::array<bool, 3> stage_valid;
  bool graph;
};

std::vector<CorpusCase> corpus() {
  std::vector<CorpusCase> out;
  for_each_json_line(SGGR_TEST_DATA "/parser_corpus.jsonl", [&](const json& j, std::size_t) {
    out.push_back({j["name"], j["text"], {j["stage_valid"][0], j["stage_valid"][1], j["stage_valid"][2]}, j["graph"]});
  });
  return out;
}

}  // namespace

TEST_CASE("well-formed completion parses into a graph") {
  const std::string text =
      "<CATEGORY>[\"person\",\"dog\"]</CATEGORY>\n"
      "<OBJECT>[{\"id\":\"person.1\",\"bbox\":[10,10,100,200]},{\"id\":\"dog.1\",\"bbox\":[120,150,220,240]}]</OBJECT>\n"
      "<RELATION>{\"spatial\":[[\"dog.1\",\"near\",\"person.1\"]],\"possessive\":[],\"interactive\":[]}</RELATION>";
  const auto parsed = parse_completion(text, fixture_profile(), ImageSize{640, 480}, "img-1");
  REQUIRE(parsed.graph);
  CHECK(parsed.stage_valid == std::array{true, true, true});
  CHECK(format_reward(parsed) == 1.0);
  CHECK(parsed.graph->image_id == "img-1");
  CHECK(parsed.graph->width == 640);
  REQUIRE(parsed.graph->objects.size() == 2);
  CHECK(parsed.graph->objects[1].box == BoundingBox{120, 150, 220, 240});
  REQUIRE(parsed.graph->relations.size() == 1);
  CHECK(parsed.graph->relations[0] == RelationTriplet{"dog.1", "near", "person.1", "spatial"});
  CHECK(validate_graph(*parsed.graph, fixture_profile()).empty());
}

TEST_CASE("format reward is per-stage partial credit") {
  const auto& p = fixture_profile();
  CHECK(format_reward(parse_completion("<CATEGORY>[\"dog\"]</CATEGORY>", p)) == doctest::Approx(1.0 / 3));
  CHECK(format_reward(parse_completion("nothing here", p)) == 0.0);
  const auto two = parse_completion("<CATEGORY>[\"dog\"]</CATEGORY><OBJECT>[]</OBJECT>", p);
  CHECK(format_reward(two) == doctest::Approx(2.0 / 3));
  CHECK_FALSE(two.graph);
  CHECK_FALSE(two.stage_error[2].empty());
}

TEST_CASE("golden corpus labels") {
  const auto cases = corpus();
  REQUIRE(cases.size() >= 50);
  std::vector<ParsedCompletion> results;
  std::size_t failing = 0;
  for (const auto& c : cases) {
    CAPTURE(c.name);
    auto parsed = parse_completion(c.text, fixture_profile(), ImageSize{640, 480}, c.name);
    CHECK(parsed.stage_valid == c.stage_valid);
    CHECK(parsed.graph.has_value() == c.graph);
    for (int s = 0; s < 3; ++s) CHECK(parsed.stage_error[s].empty() == parsed.stage_valid[s]);
    failing += c.graph ? 0 : 1;
    results.push_back(std::move(parsed));
  }
  CHECK(failure_rate(results) == doctest::Approx(static_cast<double>(failing) / static_cast<double>(cases.size())));
}

TEST_CASE("failure_rate counting") {
  const auto& p = fixture_profile();
  const auto good = parse_completion(
      "<CATEGORY>[]</CATEGORY><OBJECT>[]</OBJECT><RELATION>{\"spatial\":[],\"possessive\":[],\"interactive\":[]}</RELATION>", p);
  REQUIRE(good.graph);
  const auto bad = parse_completion("", p);
  std::vector<ParsedCompletion> batch(6, good);
  batch.insert(batch.end(), 4, bad);
  CHECK(failure_rate(batch) == doctest::Approx(0.4));
  CHECK(failure_rate(std::vector<ParsedCompletion>(10, good)) == 0.0);
  CHECK_THROWS_AS(failure_rate(std::vector<ParsedCompletion>{}), Error);
}

TEST_CASE("serialize_cot ordering") {
  const auto& p = fixture_profile();
  SceneGraph g;
  g.image_id = "x";
  g.width = 300;
  g.height = 300;
  g.objects = {{"dog", 1, {0, 0, 10, 10}}, {"person", 1, {20, 20, 40, 40}}, {"dog", 2, {50, 50, 60, 60}}};
  g.relations = {{"person.1", "holding", "dog.2", "interactive"},
                 {"dog.2", "near", "person.1", "spatial"},
                 {"dog.1", "near", "person.1", "spatial"},
                 {"dog.1", "behind", "person.1", "spatial"}};
  const auto rec = serialize_cot(g, p);
  CHECK(rec.prompt_ref == "x");
  const auto parsed = parse_completion(rec.response_text, p);
  REQUIRE(parsed.graph);
  CHECK(*parsed.category_stage == std::vector<std::string>{"dog", "person"});
  std::vector<std::string> keys;
  for (const auto& o : *parsed.object_stage) keys.push_back(o.key());
  CHECK(keys == std::vector<std::string>{"dog.1", "dog.2", "person.1"});
  const auto& spatial = parsed.relation_stage->at("spatial");
  REQUIRE(spatial.size() == 3);
  CHECK(spatial[0].predicate == "behind");  // same subject/object: predicate order
  CHECK(spatial[1].predicate == "near");
  CHECK(spatial[2].subject == "dog.2");
  CHECK(rec.response_text.find("<CATEGORY>") < rec.response_text.find("<OBJECT>"));
  CHECK(rec.response_text.find("<OBJECT>") < rec.response_text.find("<RELATION>"));
}

TEST_CASE("serialize_cot renumbers by annotation order") {
  const auto& p = fixture_profile();
  SceneGraph g;
  g.width = g.height = 100;
  g.objects = {{"dog", 2, {0, 0, 10, 10}}, {"person", 1, {20, 20, 40, 40}}, {"dog", 1, {50, 50, 60, 60}}};
  g.relations = {{"dog.1", "near", "person.1", "spatial"}};
  const auto parsed = parse_completion(serialize_cot(g, p).response_text, p, ImageSize{100, 100});
  REQUIRE(parsed.graph);
  // The first annotated dog (dog.2) becomes dog.1.
  CHECK(parsed.graph->objects[0].box == BoundingBox{0, 0, 10, 10});
  CHECK(parsed.graph->objects[0].key() == "dog.1");
  CHECK(parsed.graph->relations[0].subject == "dog.2");
  CHECK(same_graph(*parsed.graph, canonicalize_for_cot(g, p)));
}

TEST_CASE("serialize_cot edge cases") {
  const auto& p = fixture_profile();
  SceneGraph g;
  g.width = g.height = 50;
  g.objects = {{"dog", 1, {0, 0, 10, 10}}};
  const auto rec = serialize_cot(g, p);
  CHECK(rec.response_text.find("{\"spatial\":[],\"possessive\":[],\"interactive\":[]}") != std::string::npos);
  g.relations = {{"dog.1", "near", "dog.1", "spatial"}};
  try {
    serialize_cot(g, p);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code == ErrorCode::SerializeInvalidGraph);
  }
}

TEST_CASE("serialize then parse is the identity on random graphs") {
  const World w = sggr::testing::make_world(7);
  sggr::testing::Rng rng(99);
  for (int i = 0; i < 300; ++i) {
    const auto g = sggr::testing::random_scene(rng, w, "img" + std::to_string(i));
    const auto canonical = canonicalize_for_cot(g, w.profile);
    const auto parsed = parse_completion(serialize_cot(g, w.profile).response_text, w.profile,
                                         ImageSize{g.width, g.height}, g.image_id);
    REQUIRE(parsed.graph);
    CHECK(*parsed.graph == canonical);
    CHECK(same_graph(canonicalize_for_cot(*parsed.graph, w.profile), canonical));
  }
}

TEST_CASE("independently rendered completions parse back") {
  const World w = sggr::testing::make_world(8);
  sggr::testing::Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto g = sggr::testing::random_scene(rng, w, "img");
    const auto pred = sggr::testing::perturb_scene(rng, w, g);
    const auto parsed = parse_completion(sggr::testing::render_completion(pred, w, {"tree"}), w.profile,
                                         ImageSize{pred.width, pred.height}, pred.image_id);
    REQUIRE(parsed.graph);
    CHECK(same_graph(*parsed.graph, pred));
    CHECK(std::find(parsed.category_stage->begin(), parsed.category_stage->end(), "tree") != parsed.category_stage->end());
  }
}

TEST_CASE("parser survives random bytes and mutations") {
  const auto& p = fixture_profile();
  std::mt19937_64 rng(1234);
  const auto cases = corpus();
  for (int i = 0; i < 2000; ++i) {
    std::string text;
    if (i % 2 == 0) {
      text.resize(rng() % 300);
      for (auto& ch : text) ch = static_cast<char>(rng() & 0xff);
    } else {
      text = cases[rng() % cases.size()].text;
      for (int k = 0; k < 1 + static_cast<int>(rng() % 4) && !text.empty(); ++k) {
        text[rng() % text.size()] = static_cast<char>(rng() & 0xff);
      }
    }
    const auto parsed = parse_completion(text, p, ImageSize{640, 480});
    const double f = format_reward(parsed);
    CHECK((f == 0.0 || f == 1.0 / 3 || f == 2.0 / 3 || f == 1.0));
    CHECK(parsed.graph.has_value() == (f == 1.0));
  }
}
