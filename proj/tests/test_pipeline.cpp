#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thread>

#include "scenforge/http_client.hpp"
#include "scenforge/pipeline.hpp"

using namespace scenforge;
using pipeline::BaseScenario;
using pipeline::Decomposition;

namespace {

// Matches the worked decomposition examples used throughout the pipeline.
const char* kBrakeScenario =
    "The ego vehicle is driving on a straight road, and the car in front brakes "
    "suddenly as the ego approaches";

kb::KnowledgeBase seeded_kb() {
  kb::KnowledgeBase base;
  base.add_entry(dsl::ComponentKind::Behavior,
                 "The adversarial car suddenly brakes when the ego approaches.",
                 "behavior AdvBehavior():\n"
                 "    try:\n"
                 "        do FollowLaneBehavior(ADV_SPEED)\n"
                 "    interrupt when withinDistanceToAnyCars(self, ADV_DISTANCE):\n"
                 "        do BrakeBehavior(ADV_DECEL)\n"
                 "param ADV_SPEED = Range(2, 10)\n"
                 "param ADV_DISTANCE = Range(5, 20)\n"
                 "param ADV_DECEL = Range(2, 6)\n",
                 {"The lead car slams its brakes as the ego closes in."});
  base.add_entry(dsl::ComponentKind::Behavior,
                 "The adversarial pedestrian suddenly crosses the road.",
                 "behavior AdvBehavior():\n"
                 "    do CrossingBehavior(ego, ADV_SPEED, ADV_DISTANCE)\n"
                 "param ADV_SPEED = Range(0, 5)\n"
                 "param ADV_DISTANCE = Range(0, 20)\n",
                 {"A walker darts into the roadway without warning."});
  base.add_entry(dsl::ComponentKind::Geometry, "A straight road.", "StraightRoad(2)\n",
                 {"A plain straight roadway."});
  base.add_entry(dsl::ComponentKind::Geometry, "A single-lane one-way road.",
                 "StraightRoad(1)\n", {"A narrow one-way street with a single lane."});
  base.add_entry(dsl::ComponentKind::SpawnPosition,
                 "The adversarial car is directly in front of the ego vehicle.",
                 "Ahead(SPAWN_DISTANCE)\nparam SPAWN_DISTANCE = Range(5, 25)\n",
                 {"The adversary begins right ahead of the ego."});
  base.add_entry(dsl::ComponentKind::SpawnPosition,
                 "The adversarial car is oncoming from the opposite lane.",
                 "OncomingLane(SPAWN_DISTANCE)\nparam SPAWN_DISTANCE = Range(20, 60)\n",
                 {"The adversary approaches head-on in the oncoming lane."});
  return base;
}

}  // namespace

TEST_CASE("extract_fields parses the structured three-line form") {
  auto d = pipeline::extract_fields(
      "Behavior: The adversarial car suddenly brakes when the ego approaches.\n"
      "Geometry: A straight road.\n"
      "Spawn Position: The adversarial car is directly in front of the ego vehicle.\n");
  CHECK(d.behavior_desc == "The adversarial car suddenly brakes when the ego approaches.");
  CHECK(d.geometry_desc == "A straight road.");
  CHECK(d.spawn_desc == "The adversarial car is directly in front of the ego vehicle.");
}

TEST_CASE("extract_fields tolerates reordering, case and padding") {
  auto d = pipeline::extract_fields(
      "  spawn position :  on the right front  \n"
      "GEOMETRY: a four-way intersection\n"
      "behavior: the car accelerates\n");
  CHECK(d.behavior_desc == "the car accelerates");
  CHECK(d.geometry_desc == "a four-way intersection");
  CHECK(d.spawn_desc == "on the right front");
}

TEST_CASE("extract_fields lists missing labels") {
  try {
    pipeline::extract_fields("Behavior: something\nGeometry: a road\n");
    FAIL("expected ExtractionError");
  } catch (const pipeline::ExtractionError& e) {
    CHECK(e.missing() == std::vector<std::string>{"Spawn Position"});
  }
  try {
    pipeline::extract_fields("");
    FAIL("expected ExtractionError");
  } catch (const pipeline::ExtractionError& e) {
    CHECK(e.missing().size() == 3);
  }
}

TEST_CASE("extract_fields after format is the identity") {
  Decomposition d{"The adversarial cyclist swerves into the lane.",
                  "A T-intersection.", "Behind the ego on the right."};
  auto back = pipeline::extract_fields(pipeline::format(d));
  CHECK(back.behavior_desc == d.behavior_desc);
  CHECK(back.geometry_desc == d.geometry_desc);
  CHECK(back.spawn_desc == d.spawn_desc);
}

TEST_CASE("fixture client is deterministic and errors on unknown prompts") {
  pipeline::FixtureClient client;
  client.add("prompt-a", "response-a");
  CHECK(client.complete("prompt-a") == "response-a");
  CHECK(client.complete("prompt-a") == "response-a");
  CHECK_THROWS_AS(client.complete("prompt-b"), pipeline::MissingFixtureError);
}

TEST_CASE("fixture file round-trips through both record forms") {
  pipeline::FixtureClient client;
  client.add("a prompt\nwith lines", "a response\nwith\nlines");
  client.add("another", "plain");
  auto reloaded = pipeline::FixtureClient::load(client.save());
  CHECK(reloaded.complete("a prompt\nwith lines") == "a response\nwith\nlines");
  CHECK(reloaded.complete("another") == "plain");

  std::string authored =
      "scenforge-fixtures v1\n"
      "P hello\tworld\n"
      "H 00000000000000ff\tkeyed\n";
  auto mixed = pipeline::FixtureClient::load(authored);
  CHECK(mixed.complete("hello") == "world");
  CHECK_THROWS_AS(pipeline::FixtureClient::load("nope"), pipeline::ClientError);
}

TEST_CASE("generate_description goes through the rendered prompt") {
  auto templates = pipeline::PromptTemplates::defaults();
  pipeline::FixtureClient client;
  client.add(pipeline::render_generation_prompt(templates, BaseScenario::StraightObstacle, 2),
             kBrakeScenario);
  auto desc = pipeline::generate_description(BaseScenario::StraightObstacle, client,
                                             templates, 2);
  CHECK(desc == kBrakeScenario);
  // unknown base/index pair -> MissingFixture
  CHECK_THROWS_AS(pipeline::generate_description(BaseScenario::RightTurn, client,
                                                 templates, 1),
                  pipeline::MissingFixtureError);
  // determinism
  CHECK(pipeline::generate_description(BaseScenario::StraightObstacle, client, templates, 2) ==
        desc);
}

TEST_CASE("decompose drives the extraction prompt and parses the reply") {
  auto templates = pipeline::PromptTemplates::defaults();
  pipeline::FixtureClient client;
  client.add(pipeline::render_extraction_prompt(templates, kBrakeScenario),
             "Behavior: The adversarial car suddenly brakes when the ego approaches.\n"
             "Geometry: A straight road.\n"
             "Spawn Position: The adversarial car is directly in front of the ego vehicle.\n");
  auto d = pipeline::decompose(kBrakeScenario, client, templates);
  CHECK(d.behavior_desc == "The adversarial car suddenly brakes when the ego approaches.");
  CHECK(d.geometry_desc == "A straight road.");
  CHECK(d.spawn_desc == "The adversarial car is directly in front of the ego vehicle.");

  pipeline::FixtureClient bad;
  bad.add(pipeline::render_extraction_prompt(templates, "x"),
          "Behavior: only one line\n");
  CHECK_THROWS_AS(pipeline::decompose("x", bad, templates), pipeline::ExtractionError);
}

TEST_CASE("right-turn pedestrian scenario decomposes into its three fields") {
  auto templates = pipeline::PromptTemplates::defaults();
  const char* scenario =
      "The ego vehicle attempts a right turn at a four-way intersection, and an "
      "adversarial pedestrian steps onto the road in front of it.";
  pipeline::FixtureClient client;
  client.add(pipeline::render_extraction_prompt(templates, scenario),
             "Behavior: The adversarial pedestrian steps onto the road right in front "
             "of the ego vehicle and stops.\n"
             "Geometry: Lanes for turning right at a four-way intersection.\n"
             "Spawn Position: The adversarial pedestrian waits on the right front "
             "roadside of the ego.\n");
  auto d = pipeline::decompose(scenario, client, templates);
  CHECK(d.behavior_desc ==
        "The adversarial pedestrian steps onto the road right in front of the ego "
        "vehicle and stops.");
  CHECK(d.geometry_desc == "Lanes for turning right at a four-way intersection.");
  CHECK(d.spawn_desc ==
        "The adversarial pedestrian waits on the right front roadside of the ego.");
}

TEST_CASE("compose_scene_script retrieves the expected snippets") {
  auto base = seeded_kb();
  auto indices = pipeline::ComponentIndices::build(base);
  Decomposition d{"The adversarial car suddenly brakes when the ego approaches.",
                  "A straight road.",
                  "The adversarial car is directly in front of the ego vehicle."};
  auto [script, trace] = pipeline::compose_scene_script(d, base, indices);
  CHECK(dsl::validate(script).ok());
  // behavior section is the sudden-brake snippet
  const auto& tr = std::get<dsl::TryInterruptStmt>(script.behavior.statements.at(0).node);
  const auto& handler = std::get<dsl::CallStmt>(tr.handler.at(0).node);
  CHECK(handler.primitive == "BrakeBehavior");
  REQUIRE(trace.choices.size() == 3);
  // queries identical to stored descriptions retrieve with score 1
  for (const auto& c : trace.choices) {
    CHECK(c.score == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_FALSE(c.low_confidence);
  }
}

TEST_CASE("compose propagates incompatible geometry") {
  auto base = seeded_kb();
  auto indices = pipeline::ComponentIndices::build(base);
  Decomposition d{"The adversarial pedestrian suddenly crosses the road.",
                  "A single-lane one-way road.",
                  "The adversarial car is oncoming from the opposite lane."};
  CHECK_THROWS_AS(pipeline::compose_scene_script(d, base, indices), dsl::AssembleError);
}

TEST_CASE("low-confidence retrieval is recorded but non-fatal") {
  auto base = seeded_kb();
  auto indices = pipeline::ComponentIndices::build(base);
  Decomposition d{"zzz qqq unrelated words entirely", "A straight road.",
                  "The adversarial car is directly in front of the ego vehicle."};
  auto [script, trace] = pipeline::compose_scene_script(d, base, indices);
  CHECK(dsl::validate(script).ok());
  CHECK(trace.choices[0].low_confidence);
}

TEST_CASE("http client reads its endpoint from the environment") {
  unsetenv("SCENFORGE_LLM_ENDPOINT");
  CHECK_THROWS_AS(pipeline::HttpClient::from_env(), pipeline::ClientError);
  setenv("SCENFORGE_LLM_ENDPOINT", "localhost-no-port", 1);
  CHECK_THROWS_AS(pipeline::HttpClient::from_env(), pipeline::ClientError);
  setenv("SCENFORGE_LLM_ENDPOINT", "127.0.0.1:19", 1);
  setenv("SCENFORGE_LLM_KEY", "k", 1);
  CHECK_NOTHROW(pipeline::HttpClient::from_env());
  unsetenv("SCENFORGE_LLM_ENDPOINT");
  unsetenv("SCENFORGE_LLM_KEY");
}

TEST_CASE("http client round-trips against a local server") {
  httplib::Server server;
  server.Post("/complete", [](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    nlohmann::json out = {{"text", "echo: " + body["prompt"].get<std::string>()}};
    res.set_content(out.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  pipeline::HttpClient client("127.0.0.1", port);
  CHECK(client.complete("hello") == "echo: hello");

  server.stop();
  worker.join();

  CHECK_THROWS_AS(client.complete("down now"), pipeline::ClientError);
}
