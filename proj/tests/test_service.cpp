#include <doctest.h>
#include <httplib.h>

#include <set>
#include <thread>

#include "dfa/service.hpp"

using namespace dfa;

namespace {

std::shared_ptr<PolicyCache> shared_cache() {
  static auto cache = std::make_shared<PolicyCache>();
  return cache;
}

DfaService& service() {
  static DfaService svc(ServiceConfig{1, 10, FrameEncoding::kPng}, shared_cache());
  return svc;
}

Json create_body(std::string_view domain, std::string_view shift, std::uint64_t seed) {
  return {{"domain", domain}, {"shift", shift}, {"seed", seed}};
}

std::string create(Domain d, ShiftType shift, std::uint64_t seed) {
  const ApiResponse r = service().create_session(create_body(to_string(d), to_string(shift), seed));
  REQUIRE(r.status == 201);
  return r.body.at("id").get<std::string>();
}

TaskSpec task_of(Domain d, ShiftType shift, std::uint64_t seed) {
  return gen_shift_task(gen_train_task(d, seed), shift, seed);
}

bool base_fails(Domain d, ShiftType shift, std::uint64_t seed) {
  const TaskSpec task = task_of(d, shift, seed);
  const auto policy = shared_cache()->get(d, seed);
  return !success(rollout(policy_fn(policy), task.test_scene), task.reward);
}

std::uint64_t failing_seed(Domain d, ShiftType shift) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    if (base_fails(d, shift, seed)) return seed;
  }
  FAIL("no failing seed");
  return 0;
}

Json actions_json(const std::vector<Action>& actions) {
  Json out = Json::array();
  for (const Action& a : actions) out.push_back(to_json(a));
  return out;
}

std::vector<Action> actions_from(const Json& j, Domain d) {
  std::vector<Action> out;
  for (const Json& a : j) out.push_back(action_from_json(a, d));
  return out;
}

// Session that has declined its first rollout.
std::string awaiting_demo(Domain d, ShiftType shift, std::uint64_t seed) {
  const std::string id = create(d, shift, seed);
  REQUIRE(service().submit_verdict(id, {{"success", false}}).status == 200);
  return id;
}

}  // namespace

TEST_CASE("creating a session returns one frame per step") {
  const ApiResponse a = service().create_session(create_body("nav2d", "ConceptTI", 3));
  CHECK(a.status == 201);
  const std::string id = a.body.at("id").get<std::string>();
  CHECK(a.headers.at("Location") == "/sessions/" + id);
  CHECK(a.body.at("api_version") == kApiVersion);
  CHECK(a.body.at("phase") == "awaiting_verdict");
  CHECK(a.body.at("allowed") == Json::array({"verdict"}));
  const Json& rollout_json = a.body.at("rollout");
  CHECK(rollout_json.at("frames").size() == 20);
  CHECK(rollout_json.at("actions").size() == 20);

  // Frames decode to the renders of the base policy's rollout.
  const TaskSpec task = task_of(Domain::kNav2d, ShiftType::kConceptTI, 3);
  const Trajectory expected = rollout(policy_fn(shared_cache()->get(Domain::kNav2d, 3)), task.test_scene);
  for (std::size_t t = 0; t < 20; ++t) {
    const Json& frame = rollout_json.at("frames")[t];
    CHECK(frame.at("t") == t);
    CHECK(frame_from_json(frame.at("image"), FrameEncoding::kPng) == expected.steps[t].obs);
    CHECK(world_state_from_json(frame.at("state")) == expected.steps[t].state);
  }
  CHECK(world_state_from_json(rollout_json.at("final").at("state")) == expected.final_state);

  const ApiResponse b = service().create_session(create_body("nav2d", "ConceptTI", 3));
  CHECK(b.body.at("id") != a.body.at("id"));
  CHECK(b.body.at("rollout") == rollout_json);

  const ApiResponse door = service().create_session(
      {{"domain", "doorkey"}, {"shift", "Other"}, {"seed", 0}, {"encoding", "raw"}});
  CHECK(door.status == 201);
  CHECK(door.body.at("rollout").at("frames").size() == 35);
  CHECK(door.body.at("rollout").at("encoding") == "raw");
}

TEST_CASE("invalid create requests list the allowed values") {
  ApiResponse r = service().create_session(create_body("nav2d", "Sideways", 0));
  CHECK(r.status == 400);
  CHECK(r.body.at("allowed") == Json::array({"ConceptTI", "ConceptTR", "DistractorTI", "DistractorTR", "Other"}));
  r = service().create_session(create_body("atari", "Other", 0));
  CHECK(r.status == 400);
  CHECK(r.body.at("allowed") == Json::array({"nav2d", "doorkey"}));
  r = service().create_session({{"domain", "nav2d"}, {"shift", "Other"}, {"encoding", "gif"}});
  CHECK(r.status == 400);
  CHECK(r.body.at("allowed") == Json::array({"raw", "png"}));
  r = service().create_session({{"shift", "Other"}});
  CHECK(r.status == 400);
  CHECK(r.body.at("code") == "invalid_argument");
  r = service().create_session({{"domain", "nav2d"}, {"shift", "Other"}, {"seed", "x"}});
  CHECK(r.status == 400);
}

TEST_CASE("unknown sessions are not found") {
  CHECK(service().get_session("nope").status == 404);
  CHECK(service().submit_verdict("nope", {{"success", true}}).status == 404);
  CHECK(service().submit_demo("nope", {{"actions", Json::array()}}).status == 404);
  CHECK(service().get_counterfactual("nope").status == 404);
  CHECK(service().submit_feedback("nope", {{"valid", true}}).status == 404);
  CHECK(service().get_eval("nope").status == 404);
  const ApiResponse r = service().stream("nope", {{"reset", true}});
  CHECK(r.status == 404);
  CHECK(r.body.at("code") == "not_found");
}

TEST_CASE("verdicts drive the session phase") {
  const std::string done = create(Domain::kNav2d, ShiftType::kConceptTI, 0);
  CHECK(service().submit_verdict(done, Json::object()).status == 400);
  ApiResponse r = service().submit_verdict(done, {{"success", true}});
  CHECK(r.status == 200);
  CHECK(r.body.at("phase") == "evaluated");
  CHECK(r.body.at("status") == "success");
  r = service().submit_verdict(done, {{"success", true}});
  CHECK(r.status == 409);
  CHECK(r.body.at("code") == "phase_violation");
  CHECK(r.body.at("allowed").empty());

  const std::string open = create(Domain::kNav2d, ShiftType::kConceptTI, 0);
  r = service().submit_verdict(open, {{"success", false}});
  CHECK(r.body.at("phase") == "awaiting_demo");
  CHECK(r.body.at("round") == 1);
  r = service().submit_verdict(open, {{"success", false}});
  CHECK(r.status == 409);
  CHECK(r.body.at("allowed") == Json::array({"demo", "stream"}));
  CHECK(service().get_eval(open).status == 409);
  CHECK(service().get_counterfactual(open).status == 404);
  CHECK(service().submit_feedback(open, {{"valid", true}, {"relevance", "TI"}}).status == 409);
}

TEST_CASE("demonstrations must span the horizon unless padding is requested") {
  const TaskSpec task = task_of(Domain::kNav2d, ShiftType::kConceptTI, 0);
  std::vector<Action> actions = expert_demo(task.test_scene, task.reward).actions();
  actions.pop_back();
  REQUIRE(actions.size() == 19);

  const std::string id = awaiting_demo(Domain::kNav2d, ShiftType::kConceptTI, 0);
  ApiResponse r = service().submit_demo(id, {{"actions", actions_json(actions)}});
  CHECK(r.status == 400);
  CHECK(r.body.at("code") == "length_mismatch");
  CHECK(r.body.at("allowed") == Json::array({20}));
  std::vector<Action> too_long(21, Move{});
  CHECK(service().submit_demo(id, {{"actions", actions_json(too_long)}, {"pad", true}}).status == 400);
  r = service().submit_demo(id, {{"actions", Json::array({"up"})}, {"pad", true}});
  CHECK(r.status == 400);
  CHECK(r.body.at("code") == "malformed_action");

  r = service().submit_demo(id, {{"actions", actions_json(actions)}, {"pad", true}});
  CHECK(r.status == 200);
  CHECK(r.body.contains("padding"));
  const Json summary = service().get_session(id).body;
  REQUIRE(summary.at("notes").size() == 1);
  const Json demo_actions = r.body.at("counterfactual").at("demo").at("actions");
  CHECK(demo_actions.size() == 20);
  CHECK(demo_actions.back() == to_json(idle_action(Domain::kNav2d)));
}

TEST_CASE("demonstrations that miss the task need an override") {
  const std::string id = awaiting_demo(Domain::kNav2d, ShiftType::kOther, 0);
  const std::vector<Action> idle(20, Move{});
  ApiResponse r = service().submit_demo(id, {{"actions", actions_json(idle)}});
  CHECK(r.status == 422);
  CHECK(r.body.at("code") == "demo_fails_task");
  CHECK(r.body.at("allowed") == Json::array({"override"}));
  CHECK(service().get_session(id).body.at("phase") == "awaiting_demo");
  r = service().submit_demo(id, {{"actions", actions_json(idle)}, {"override", true}});
  CHECK(r.status == 200);
  service().wait_idle(id);
}

TEST_CASE("a demonstration without a counterfactual starts finetuning") {
  const TaskSpec task = task_of(Domain::kDoorKey, ShiftType::kOther, 0);
  const std::string id = awaiting_demo(Domain::kDoorKey, ShiftType::kOther, 0);
  ApiResponse r =
      service().submit_demo(id, {{"actions", actions_json(expert_demo(task.test_scene, task.reward).actions())}});
  REQUIRE(r.status == 200);
  CHECK(r.body.at("status") == "none");
  CHECK(r.body.at("phase") == "finetuning");
  CHECK(r.body.at("job").at("demos") == 1);
  CHECK(r.body.at("job").at("augmented_slots").empty());
  CHECK_FALSE(r.body.at("counterfactual").contains("trajectory"));

  r = service().get_eval(id);
  CHECK(r.status == 202);
  CHECK(r.headers.at("Retry-After") == "1");
  service().wait_idle(id);
  r = service().get_eval(id);
  REQUIRE(r.status == 200);
  const Json& eval = r.body.at("eval");
  CHECK(eval.at("round") == 1);
  CHECK(eval.at("scenes") == 10);
  CHECK(eval.at("pre").size() == 10);
  CHECK(eval.at("post").size() == 10);
  CHECK(r.body.at("phase") == "awaiting_verdict");
  CHECK(r.body.at("rollout").at("frames").size() == 35);
  // Evaluation is computed once per round.
  CHECK(service().get_eval(id).body == r.body);
  // Other-shift evaluation repeats the test scene, so every entry agrees.
  CHECK(eval.at("post_mean") == (eval.at("post")[0].get<bool>() ? 1.0 : 0.0));
  CHECK(service().get_session(id).body.at("allowed") == Json::array({"verdict", "eval"}));
}

TEST_CASE("counterfactual payloads pair the two trajectories") {
  const std::uint64_t seed = failing_seed(Domain::kNav2d, ShiftType::kConceptTI);
  const TaskSpec task = task_of(Domain::kNav2d, ShiftType::kConceptTI, seed);
  const std::string id = awaiting_demo(Domain::kNav2d, ShiftType::kConceptTI, seed);
  ApiResponse r =
      service().submit_demo(id, {{"actions", actions_json(expert_demo(task.test_scene, task.reward).actions())}});
  REQUIRE(r.status == 200);
  CHECK(r.body.at("phase") == "awaiting_feedback");
  const Json& cf = r.body.at("counterfactual");
  CHECK(cf.at("status") == "found");
  CHECK(cf.at("edit").size() == 1);
  CHECK(cf.at("description").get<std::string>().find("goal color") != std::string::npos);
  CHECK(cf.at("trajectory").at("frames").size() == 20);
  CHECK(cf.at("trajectory").at("provenance") == "counterfactual");
  REQUIRE(cf.at("pairs").size() == 20);
  for (const Json& p : cf.at("pairs")) CHECK(p.at("distance").get<double>() < 0.05);
  CHECK(service().get_counterfactual(id).body.at("edit") == cf.at("edit"));

  r = service().submit_feedback(id, {{"valid", true}, {"relevance", "maybe"}});
  CHECK(r.status == 400);
  CHECK(r.body.at("allowed") == Json::array({"TI", "TR"}));
  r = service().submit_feedback(id, {{"valid", true}, {"relevance", "TI"}});
  CHECK(r.status == 202);
  CHECK(r.headers.at("Location") == "/sessions/" + id + "/eval");
  CHECK(r.body.at("job").at("demos") == 5);
  CHECK(r.body.at("job").at("augmented_slots").size() == 1);
  CHECK(service().submit_feedback(id, {{"valid", true}, {"relevance", "TI"}}).status == 409);
  service().wait_idle(id);
  r = service().get_eval(id);
  CHECK(r.status == 200);
  CHECK(r.body.at("eval").at("post_mean").get<double>() >= r.body.at("eval").at("pre_mean").get<double>());
}

TEST_CASE("streamed actions commit like a submitted demonstration") {
  const std::uint64_t seed = failing_seed(Domain::kDoorKey, ShiftType::kConceptTI);
  const TaskSpec task = task_of(Domain::kDoorKey, ShiftType::kConceptTI, seed);
  const std::vector<Action> demo = expert_demo(task.test_scene, task.reward).actions();

  const std::string direct = awaiting_demo(Domain::kDoorKey, ShiftType::kConceptTI, seed);
  const ApiResponse submitted = service().submit_demo(direct, {{"actions", actions_json(demo)}});
  REQUIRE(submitted.status == 200);

  const std::string streamed = create(Domain::kDoorKey, ShiftType::kConceptTI, seed);
  CHECK(service().stream(streamed, {{"reset", true}}).status == 409);
  service().submit_verdict(streamed, {{"success", false}});
  ApiResponse r = service().stream(streamed, {{"reset", true}});
  CHECK(r.status == 200);
  CHECK(r.body.at("captured") == 0);
  CHECK(r.body.at("remaining") == 35);
  // A false start, then a reset.
  service().stream(streamed, {{"action", "down"}});
  CHECK(service().stream(streamed, {{"reset", true}}).body.at("captured") == 0);

  // The expert's plan without its trailing idle actions.
  std::size_t used = demo.size();
  while (used > 0 && demo[used - 1] == idle_action(Domain::kDoorKey)) --used;
  WorldState state = reset(task.test_scene).state;
  for (std::size_t t = 0; t < used; ++t) {
    r = service().stream(streamed, {{"action", to_json(demo[t])}});
    REQUIRE(r.status == 200);
    state = step(state, demo[t]).state;
    CHECK(world_state_from_json(r.body.at("frame").at("state")) == state);
  }
  CHECK(r.body.at("captured") == used);
  CHECK(service().stream(streamed, {{"action", "jump"}}).status == 400);
  r = service().stream(streamed, {{"commit", true}});
  REQUIRE(r.status == 200);
  CHECK(r.body.at("counterfactual").at("demo").at("actions") == submitted.body.at("counterfactual").at("demo").at("actions"));
  CHECK(r.body.at("counterfactual").at("edit") == submitted.body.at("counterfactual").at("edit"));
  CHECK(service().stream(streamed, {{"reset", true}}).status == 409);

  service().submit_feedback(direct, {{"valid", false}});
  service().submit_feedback(streamed, {{"valid", false}});
  service().wait_idle(direct);
  service().wait_idle(streamed);
}

TEST_CASE("a full capture rejects further actions") {
  const std::string id = awaiting_demo(Domain::kNav2d, ShiftType::kOther, 1);
  for (int t = 0; t < 20; ++t) REQUIRE(service().stream(id, {{"action", Json::array({0.0, 0.1})}}).status == 200);
  const ApiResponse r = service().stream(id, {{"action", Json::array({0.0, 0.1})}});
  CHECK(r.status == 400);
  CHECK(r.body.at("code") == "length_mismatch");
  CHECK(r.body.at("allowed") == Json::array({"commit", "reset"}));
}

TEST_CASE("an HTTP client driven by the simulated user reproduces the headless run") {
  httplib::Server server;
  DfaService svc(ServiceConfig{1, 4, FrameEncoding::kRaw}, shared_cache());
  mount(server, svc);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::jthread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);

  auto post = [&](const std::string& path, const Json& body) {
    auto res = cli.Post(path, body.dump(), "application/json");
    REQUIRE(res);
    return std::pair{res->status, Json::parse(res->body)};
  };
  auto get = [&](const std::string& path) {
    auto res = cli.Get(path);
    REQUIRE(res);
    return std::pair{res->status, Json::parse(res->body)};
  };

  {
    auto res = cli.Post("/sessions", "{not json", "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(Json::parse(res->body).at("code") == "invalid_json");
    CHECK(get("/sessions/zzz").first == 404);
  }

  for (const auto& [domain, shift] : {std::pair{Domain::kNav2d, ShiftType::kConceptTI},
                                      std::pair{Domain::kDoorKey, ShiftType::kDistractorTI}}) {
    const std::uint64_t seed = failing_seed(domain, shift);
    CAPTURE(to_string(domain));
    CAPTURE(seed);
    const TaskSpec task = task_of(domain, shift, seed);
    const ConceptSchema& schema = schema_for(domain);
    UserModel model;
    model.reward = task.reward;
    model.relevance_accuracy = 0.9;
    model.seed = seed;
    model.true_shift = task.shifted;

    SimulatedUser remote_user(model);
    auto [status, session] = post("/sessions", create_body(to_string(domain), to_string(shift), seed));
    REQUIRE(status == 201);
    const std::string base = "/sessions/" + session.at("id").get<std::string>();
    Json rollout_json = session.at("rollout");
    for (int guard = 0; guard < 10; ++guard) {
      const Trajectory shown =
          replay(task.test_scene, actions_from(rollout_json.at("actions"), domain), Provenance::kRollout);
      auto [vs, verdict] = post(base + "/verdict", {{"success", remote_user.judge_success(shown)}});
      REQUIRE(vs == 200);
      if (verdict.at("phase") == "evaluated") break;
      const Trajectory demo = remote_user.provide_demo(task.test_scene);
      auto [ds, reply] = post(base + "/demo", {{"actions", actions_json(demo.actions())}});
      REQUIRE(ds == 200);
      if (reply.at("status") == "found") {
        const Json& cf_json = reply.at("counterfactual");
        CounterfactualResult cf;
        cf.status = SearchStatus::kFound;
        cf.edit = concept_edit_from_json(cf_json.at("edit"), schema);
        cf.scene = scene_from_json(cf_json.at("scene"));
        cf.trajectory = replay(cf.scene, actions_from(cf_json.at("actions"), domain), Provenance::kCounterfactual);
        const bool valid = remote_user.verify_counterfactual(cf);
        Json feedback{{"valid", valid}};
        if (valid) feedback["relevance"] = to_string(remote_user.label_relevance(cf.edit));
        auto [fs, job] = post(base + "/feedback", feedback);
        REQUIRE(fs == 202);
      }
      int eval_status = 202;
      Json eval;
      for (int poll = 0; poll < 600 && eval_status == 202; ++poll) {
        std::tie(eval_status, eval) = get(base + "/eval");
        if (eval_status == 202) std::this_thread::sleep_for(std::chrono::milliseconds(50));
      }
      REQUIRE(eval_status == 200);
      rollout_json = eval.at("rollout");
    }
    const Json remote_log = get(base).second.at("log");

    SimulatedUser local_user(model);
    const AdaptResult local = run_dfa(session_base_policy(domain, seed, *shared_cache()), task, local_user,
                                      session_loop_config(domain, seed));
    CHECK(remote_log == local.log.to_json(schema));
    CHECK(remote_user.audit() == local_user.audit());
    CHECK(local.log.rounds.size() >= 1);
  }
  server.stop();
}

TEST_CASE("sessions are served concurrently") {
  DfaService svc(ServiceConfig{2, 4, FrameEncoding::kPng}, shared_cache());
  std::vector<std::string> ids(4);
  {
    std::vector<std::jthread> threads;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      threads.emplace_back([&, i] {
        const ApiResponse r = svc.create_session(create_body("nav2d", "Other", i % 2));
        if (r.status == 201) ids[i] = r.body.at("id").get<std::string>();
      });
    }
  }
  std::set<std::string> unique(ids.begin(), ids.end());
  CHECK(unique.size() == 4);
  CHECK(unique.count("") == 0);
}
