#include "dfa/service.hpp"

#include <httplib.h>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <ctime>
#include <functional>
#include <thread>

namespace dfa {

// --- worker pool ----------------------------------------------------------------

class WorkerPool {
 public:
  explicit WorkerPool(std::size_t workers) {
    for (std::size_t i = 0; i < std::max<std::size_t>(workers, 1); ++i) {
      threads_.emplace_back([this](std::stop_token stop) { run(stop); });
    }
  }

  ~WorkerPool() {
    for (std::jthread& t : threads_) t.request_stop();
    cv_.notify_all();
  }

  void submit(std::function<void()> job) {
    {
      std::lock_guard lock(mutex_);
      queue_.push_back(std::move(job));
    }
    cv_.notify_one();
  }

 private:
  void run(std::stop_token stop) {
    while (true) {
      std::function<void()> job;
      {
        std::unique_lock lock(mutex_);
        if (!cv_.wait(lock, stop, [&] { return !queue_.empty(); })) return;
        job = std::move(queue_.front());
        queue_.pop_front();
      }
      job();
    }
  }

  std::mutex mutex_;
  std::condition_variable_any cv_;
  std::deque<std::function<void()>> queue_;
  std::vector<std::jthread> threads_;
};

// --- sessions ---------------------------------------------------------------------

struct Session {
  std::string id;
  ShiftType shift = ShiftType::kConceptTI;
  std::uint64_t seed = 0;
  TaskSpec task;
  std::string created_at;
  FrameEncoding encoding = FrameEncoding::kPng;

  std::mutex mutex;
  std::condition_variable idle;
  std::optional<DfaLoop> loop;
  bool job_running = false;
  std::optional<std::string> job_error;
  int finetuned_round = 0;
  std::shared_ptr<const PolicyParams> before_finetune;
  std::optional<Json> eval;
  std::vector<std::string> notes;

  std::optional<WorldState> capture;
  std::vector<Action> captured;
};

namespace {

struct ApiError {
  int status;
  std::string code;
  std::string message;
  Json allowed = Json::array();
};

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kPhaseViolation: return 409;
    case ErrorCode::kNumerical:
    case ErrorCode::kIo: return 500;
    case ErrorCode::kNoSatisfyingGoal:
    case ErrorCode::kReplayDiverged:
    case ErrorCode::kPlacementCollision: return 422;
    default: return 400;
  }
}

ApiResponse error_response(const ApiError& e) {
  return {e.status, {{"code", e.code}, {"message", e.message}, {"allowed", e.allowed}}, {}};
}

Json allowed_actions(Phase phase, bool eval_ready) {
  Json out = Json::array();
  switch (phase) {
    case Phase::kAwaitingVerdict: out.push_back("verdict"); break;
    case Phase::kAwaitingDemo: out = {"demo", "stream"}; break;
    case Phase::kAwaitingFeedback: out = {"feedback", "counterfactual"}; break;
    case Phase::kFinetuning: out.push_back("eval"); break;
    case Phase::kEvaluated: break;
  }
  if (eval_ready && phase != Phase::kFinetuning) out.push_back("eval");
  return out;
}

Json domain_names() { return {"nav2d", "doorkey"}; }

Json shift_names() {
  Json out = Json::array();
  for (ShiftType s : kAllShifts) out.push_back(to_string(s));
  return out;
}

Json action_names(Domain domain) {
  if (domain == Domain::kNav2d) return {"[dx, dy]"};
  Json out = Json::array();
  for (std::size_t i = 0; i < kGridActionCount; ++i) out.push_back(to_string(static_cast<GridAction>(i)));
  return out;
}

std::string now_iso() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%FT%TZ", &utc);
  return buf;
}

Json frame_json(const WorldState& state, const Observation& obs, FrameEncoding encoding) {
  return {{"t", state.t}, {"image", frame_to_json(obs, encoding)}, {"state", to_json(state)}};
}

Json trajectory_json(const Trajectory& traj, FrameEncoding encoding) {
  Json frames = Json::array();
  Json actions = Json::array();
  for (const TrajectoryStep& s : traj.steps) {
    frames.push_back(frame_json(s.state, s.obs, encoding));
    actions.push_back(to_json(s.action));
  }
  // One frame per step; the state after the last action is kept apart.
  return {{"provenance", to_string(traj.provenance)},
          {"encoding", to_string(encoding)},
          {"scene", to_json(traj.initial)},
          {"actions", actions},
          {"frames", frames},
          {"final", frame_json(traj.final_state, render(traj.final_state), encoding)}};
}

bool eval_ready(const Session& s) { return !s.job_running && s.finetuned_round > 0 && s.finetuned_round == s.loop->rounds(); }

void require_phase(const Session& s, Phase expected, std::string_view action) {
  if (s.loop->phase() != expected) {
    throw ApiError{409, std::string(to_string(ErrorCode::kPhaseViolation)),
                   std::string(action) + " requires phase " + std::string(to_string(expected)) +
                       " but the session is " + std::string(to_string(s.loop->phase())),
                   allowed_actions(s.loop->phase(), eval_ready(s))};
  }
}

template <class T>
T field(const Json& body, const char* name) {
  if (!body.is_object() || !body.contains(name)) {
    throw ApiError{400, std::string(to_string(ErrorCode::kInvalidArgument)),
                   std::string("missing field '") + name + "'", Json::array({name})};
  }
  try {
    return body.at(name).get<T>();
  } catch (const Json::exception&) {
    throw ApiError{400, std::string(to_string(ErrorCode::kInvalidArgument)),
                   std::string("field '") + name + "' has the wrong type", Json::array({name})};
  }
}

bool flag(const Json& body, const char* name) {
  return body.is_object() && body.contains(name) && body.at(name).is_boolean() && body.at(name).get<bool>();
}

Json session_summary(const Session& s) {
  const DfaLoop& loop = *s.loop;
  const ConceptSchema& schema = schema_for(s.task.domain);
  return {{"api_version", kApiVersion},
          {"id", s.id},
          {"domain", to_string(s.task.domain)},
          {"shift", to_string(s.shift)},
          {"seed", s.seed},
          {"created_at", s.created_at},
          {"task", s.task.reward.text},
          {"horizon", horizon(s.task.domain)},
          {"phase", to_string(loop.phase())},
          {"round", loop.rounds()},
          {"status", loop.log().status},
          {"allowed", allowed_actions(loop.phase(), eval_ready(s))},
          {"job", {{"running", s.job_running}, {"error", s.job_error ? Json(*s.job_error) : Json(nullptr)}}},
          {"notes", s.notes},
          {"log", loop.log().to_json(schema)}};
}

Json counterfactual_payload(const Session& s, const RoundRecord& record, FrameEncoding encoding) {
  const ConceptSchema& schema = schema_for(s.task.domain);
  const CounterfactualResult& cf = *record.counterfactual;
  Json j = to_json(cf, schema);
  j["round"] = record.round;
  j["demo"] = trajectory_json(*record.demo, encoding);
  if (cf.found()) {
    j["description"] = describe(cf.edit, abstract(s.task.test_scene, schema), schema);
    j["trajectory"] = trajectory_json(cf.trajectory, encoding);
    const std::vector<Action> demo_actions = record.demo->actions();
    const std::vector<Action> cf_actions = cf.trajectory.actions();
    const std::vector<double> dist = action_distance(cf_actions, demo_actions);
    Json pairs = Json::array();
    for (std::size_t t = 0; t < dist.size(); ++t) {
      pairs.push_back({{"t", t},
                       {"counterfactual", to_json(cf_actions[t])},
                       {"demo", to_json(demo_actions[t])},
                       {"distance", dist[t]}});
    }
    j["pairs"] = pairs;
  }
  return j;
}

Json job_json(const Session& s) {
  const RoundRecord& r = s.loop->log().rounds.back();
  Json slots = Json::array();
  for (const ConceptSlot& slot : r.augmented_slots) slots.push_back(to_json(slot, schema_for(s.task.domain)));
  return {{"round", r.round}, {"demos", r.finetune_size}, {"augmented_slots", slots}};
}

std::vector<Action> parse_actions(const Json& body, Domain domain) {
  const Json actions = field<Json>(body, "actions");
  if (!actions.is_array()) {
    throw ApiError{400, std::string(to_string(ErrorCode::kMalformedAction)), "actions must be an array",
                   action_names(domain)};
  }
  std::vector<Action> out;
  for (const Json& a : actions) {
    try {
      out.push_back(sanitize(action_from_json(a, domain), domain));
    } catch (const Error& e) {
      throw ApiError{400, std::string(to_string(e.code())),
                     "action " + std::to_string(out.size()) + ": " + e.what(), action_names(domain)};
    }
  }
  return out;
}

}  // namespace

LoopConfig session_loop_config(Domain domain, std::uint64_t seed) {
  return default_loop_config(domain, derive_seed(seed, {tag("session"), static_cast<std::uint64_t>(domain)}));
}

PolicyParams session_base_policy(Domain domain, std::uint64_t seed, PolicyCache& cache) {
  return *cache.get(domain, seed);
}

DfaService::DfaService(ServiceConfig cfg, std::shared_ptr<PolicyCache> cache)
    : cfg_(cfg),
      cache_(cache ? std::move(cache) : std::make_shared<PolicyCache>()),
      pool_(std::make_unique<WorkerPool>(cfg.finetune_workers)) {}

DfaService::~DfaService() { pool_.reset(); }

std::shared_ptr<Session> DfaService::find(const std::string& id) {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) {
    throw ApiError{404, std::string(to_string(ErrorCode::kNotFound)), "no session '" + id + "'", Json::array()};
  }
  return it->second;
}

namespace {

// Runs a handler and turns every failure into an error body.
template <class F>
ApiResponse guarded(F&& f) {
  try {
    return f();
  } catch (const ApiError& e) {
    return error_response(e);
  } catch (const Error& e) {
    return error_response({http_status(e.code()), std::string(to_string(e.code())), e.what()});
  } catch (const Json::exception& e) {
    return error_response({400, "invalid_json", e.what()});
  } catch (const std::exception& e) {
    return error_response({500, "internal", e.what()});
  }
}

}  // namespace

ApiResponse DfaService::create_session(const Json& body) {
  return guarded([&] {
    Domain domain;
    ShiftType shift;
    try {
      domain = parse_domain(field<std::string>(body, "domain"));
    } catch (const Error& e) {
      throw ApiError{400, std::string(to_string(e.code())), e.what(), domain_names()};
    }
    try {
      shift = parse_shift(field<std::string>(body, "shift"));
    } catch (const Error& e) {
      throw ApiError{400, std::string(to_string(e.code())), e.what(), shift_names()};
    }
    const std::uint64_t seed = body.contains("seed") ? field<std::uint64_t>(body, "seed") : 0;
    FrameEncoding encoding = cfg_.encoding;
    if (body.contains("encoding")) {
      try {
        encoding = parse_frame_encoding(field<std::string>(body, "encoding"));
      } catch (const Error& e) {
        throw ApiError{400, std::string(to_string(e.code())), e.what(), {"raw", "png"}};
      }
    }

    auto s = std::make_shared<Session>();
    s->shift = shift;
    s->seed = seed;
    s->encoding = encoding;
    s->task = gen_shift_task(gen_train_task(domain, seed), shift, seed);
    s->created_at = now_iso();
    s->loop.emplace(session_base_policy(domain, seed, *cache_), s->task.test_scene, session_loop_config(domain, seed));
    {
      std::unique_lock lock(sessions_mutex_);
      s->id = "s" + std::to_string(next_id_++);
      sessions_.emplace(s->id, s);
    }
    Json out = session_summary(*s);
    out["rollout"] = trajectory_json(s->loop->rollout(), encoding);
    return ApiResponse{201, out, {{"Location", "/sessions/" + s->id}}};
  });
}

ApiResponse DfaService::get_session(const std::string& id) {
  return guarded([&] {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    Json out = session_summary(*s);
    out["rollout"] = trajectory_json(s->loop->rollout(), s->encoding);
    return ApiResponse{200, out, {}};
  });
}

ApiResponse DfaService::submit_verdict(const std::string& id, const Json& body) {
  return guarded([&] {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    const bool success = field<bool>(body, "success");
    require_phase(*s, Phase::kAwaitingVerdict, "verdict");
    s->loop->submit_verdict(success);
    s->capture.reset();
    s->captured.clear();
    return ApiResponse{200,
                       {{"phase", to_string(s->loop->phase())},
                        {"status", s->loop->log().status},
                        {"round", s->loop->rounds()},
                        {"allowed", allowed_actions(s->loop->phase(), eval_ready(*s))}},
                       {}};
  });
}

ApiResponse DfaService::demo_locked(Session& s, std::vector<Action> actions, bool pad, bool override_check) {
  const Domain domain = s.task.domain;
  const std::size_t h = static_cast<std::size_t>(horizon(domain));
  if (actions.size() > h || (actions.size() < h && !pad)) {
    throw ApiError{400, std::string(to_string(ErrorCode::kLengthMismatch)),
                   "demonstration has " + std::to_string(actions.size()) + " actions, the horizon is " + std::to_string(h),
                   Json::array({h})};
  }
  std::optional<std::string> padding;
  if (actions.size() < h) {
    padding = "round " + std::to_string(s.loop->rounds()) + ": padded demonstration from " +
              std::to_string(actions.size()) + " to " + std::to_string(h) + " actions";
    actions.resize(h, idle_action(domain));
  }
  Trajectory demo = replay(s.task.test_scene, actions, Provenance::kHumanDemo);
  if (!success(demo, s.task.reward) && !override_check) {
    throw ApiError{422, "demo_fails_task",
                   "the demonstration does not complete the task by the server's check; resubmit with "
                   "\"override\": true to use it anyway",
                   Json::array({"override"})};
  }
  if (padding) s.notes.push_back(*padding);
  s.capture.reset();
  s.captured.clear();
  const CounterfactualResult& cf = s.loop->submit_demo(std::move(demo));
  Json out{{"phase", to_string(s.loop->phase())}, {"status", to_string(cf.status)}};
  out["counterfactual"] = counterfactual_payload(s, s.loop->log().rounds.back(), s.encoding);
  if (padding) out["padding"] = *padding;
  return ApiResponse{200, out, {}};
}

ApiResponse DfaService::submit_demo(const std::string& id, const Json& body) {
  return guarded([&] {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    require_phase(*s, Phase::kAwaitingDemo, "demo");
    std::vector<Action> actions = parse_actions(body, s->task.domain);
    ApiResponse r = demo_locked(*s, std::move(actions), flag(body, "pad"), flag(body, "override"));
    if (s->loop->phase() == Phase::kFinetuning) {
      start_finetune(s);
      r.body["job"] = job_json(*s);
    }
    return r;
  });
}

ApiResponse DfaService::get_counterfactual(const std::string& id) {
  return guarded([&] {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    const auto& rounds = s->loop->log().rounds;
    if (rounds.empty() || !rounds.back().counterfactual) {
      throw ApiError{404, std::string(to_string(ErrorCode::kNotFound)), "this round has no counterfactual yet",
                     allowed_actions(s->loop->phase(), eval_ready(*s))};
    }
    Json out = counterfactual_payload(*s, rounds.back(), s->encoding);
    out["phase"] = to_string(s->loop->phase());
    return ApiResponse{200, out, {}};
  });
}

ApiResponse DfaService::submit_feedback(const std::string& id, const Json& body) {
  return guarded([&] {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    const bool valid = field<bool>(body, "valid");
    std::optional<Relevance> relevance;
    if (body.contains("relevance") && !body.at("relevance").is_null()) {
      try {
        relevance = parse_relevance(field<std::string>(body, "relevance"));
      } catch (const Error& e) {
        throw ApiError{400, std::string(to_string(e.code())), e.what(), {"TI", "TR"}};
      }
    }
    require_phase(*s, Phase::kAwaitingFeedback, "feedback");
    s->loop->submit_feedback(valid, relevance);
    start_finetune(s);
    return ApiResponse{202,
                       {{"phase", to_string(s->loop->phase())}, {"job", job_json(*s)}},
                       {{"Location", "/sessions/" + s->id + "/eval"}}};
  });
}

void DfaService::start_finetune(const std::shared_ptr<Session>& s) {
  // Caller holds s->mutex.
  s->job_running = true;
  s->job_error.reset();
  s->eval.reset();
  s->before_finetune = s->loop->shared_policy();
  DfaLoop::FinetuneJob job = s->loop->finetune_job();
  pool_->submit([s, job = std::move(job)] {
    std::optional<TrainResult> result;
    std::optional<std::string> error;
    try {
      result = finetune(*job.policy, job.data, job.train);
    } catch (const std::exception& e) {
      error = e.what();
    }
    std::lock_guard lock(s->mutex);
    try {
      if (result) {
        s->loop->complete_finetune(std::move(*result));
        s->finetuned_round = s->loop->rounds();
      }
    } catch (const std::exception& e) {
      error = e.what();
    }
    s->job_error = error;
    s->job_running = false;
    s->idle.notify_all();
  });
}

ApiResponse DfaService::get_eval(const std::string& id) {
  return guarded([&] {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (s->job_running) {
      return ApiResponse{202,
                         {{"phase", to_string(s->loop->phase())}, {"pending", true}, {"retry_after", 1}},
                         {{"Retry-After", "1"}}};
    }
    if (s->job_error) {
      throw ApiError{500, std::string(to_string(ErrorCode::kNumerical)), "finetune failed: " + *s->job_error,
                     allowed_actions(s->loop->phase(), false)};
    }
    if (!eval_ready(*s)) {
      throw ApiError{409, std::string(to_string(ErrorCode::kPhaseViolation)),
                     "no finetuned policy to evaluate in this round", allowed_actions(s->loop->phase(), false)};
    }
    if (!s->eval) {
      const std::vector<SceneDescriptor> scenes = eval_scenes(s->task, cfg_.eval_count);
      const PolicyFn before = policy_fn(s->before_finetune);
      const PolicyFn after = policy_fn(s->loop->shared_policy());
      Json pre = Json::array();
      Json post = Json::array();
      std::size_t pre_wins = 0;
      std::size_t post_wins = 0;
      for (const SceneDescriptor& scene : scenes) {
        const bool a = success(rollout(before, scene), s->task.reward);
        const bool b = success(rollout(after, scene), s->task.reward);
        pre.push_back(a);
        post.push_back(b);
        pre_wins += a;
        post_wins += b;
      }
      const double n = static_cast<double>(std::max<std::size_t>(scenes.size(), 1));
      s->eval = Json{{"round", s->finetuned_round},
                     {"scenes", scenes.size()},
                     {"pre", pre},
                     {"post", post},
                     {"pre_mean", static_cast<double>(pre_wins) / n},
                     {"post_mean", static_cast<double>(post_wins) / n}};
    }
    Json out{{"phase", to_string(s->loop->phase())}, {"eval", *s->eval}};
    out["rollout"] = trajectory_json(s->loop->rollout(), s->encoding);
    return ApiResponse{200, out, {}};
  });
}

ApiResponse DfaService::stream(const std::string& id, const Json& body) {
  return guarded([&] {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    require_phase(*s, Phase::kAwaitingDemo, "stream");
    const Domain domain = s->task.domain;
    const std::size_t h = static_cast<std::size_t>(horizon(domain));
    if (flag(body, "commit")) {
      ApiResponse r = demo_locked(*s, s->captured, true, flag(body, "override"));
      if (s->loop->phase() == Phase::kFinetuning) {
        start_finetune(s);
        r.body["job"] = job_json(*s);
      }
      return r;
    }
    if (flag(body, "reset") || !s->capture) {
      s->capture = reset(s->task.test_scene).state;
      s->captured.clear();
    }
    if (body.is_object() && body.contains("action")) {
      if (s->captured.size() >= h) {
        throw ApiError{400, std::string(to_string(ErrorCode::kLengthMismatch)),
                       "the capture already holds " + std::to_string(h) + " actions; commit or reset",
                       Json::array({"commit", "reset"})};
      }
      Action a;
      try {
        a = sanitize(action_from_json(body.at("action"), domain), domain);
      } catch (const Error& e) {
        throw ApiError{400, std::string(to_string(e.code())), e.what(), action_names(domain)};
      }
      s->capture = step(*s->capture, a).state;
      s->captured.push_back(a);
    }
    return ApiResponse{200,
                       {{"frame", frame_json(*s->capture, render(*s->capture), s->encoding)},
                        {"captured", s->captured.size()},
                        {"remaining", h - s->captured.size()}},
                       {}};
  });
}

void DfaService::wait_idle(const std::string& id) {
  auto s = find(id);
  std::unique_lock lock(s->mutex);
  s->idle.wait(lock, [&] { return !s->job_running; });
}

// --- HTTP binding -------------------------------------------------------------------

void mount(httplib::Server& server, DfaService& service) {
  auto send = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    res.set_content(r.body.dump(), "application/json");
  };
  auto parse = [](const httplib::Request& req) -> std::optional<Json> {
    if (req.body.empty()) return Json::object();
    Json j = Json::parse(req.body, nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    return j;
  };
  auto bad_json = [](httplib::Response& res) {
    res.status = 400;
    res.set_content(Json{{"code", "invalid_json"}, {"message", "request body is not JSON"}, {"allowed", Json::array()}}
                        .dump(),
                    "application/json");
  };
  using Post = ApiResponse (DfaService::*)(const std::string&, const Json&);
  using Get = ApiResponse (DfaService::*)(const std::string&);
  auto post = [&](const std::string& path, Post handler) {
    server.Post(path, [=, &service](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse(req);
      if (!body) return bad_json(res);
      send(res, (service.*handler)(req.matches[1].str(), *body));
    });
  };
  auto get = [&](const std::string& path, Get handler) {
    server.Get(path, [=, &service](const httplib::Request& req, httplib::Response& res) {
      send(res, (service.*handler)(req.matches[1].str()));
    });
  };

  server.Post("/sessions", [&service, parse, bad_json, send](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse(req);
    if (!body) return bad_json(res);
    send(res, service.create_session(*body));
  });
  const std::string id = R"(/sessions/([A-Za-z0-9]+))";
  get(id, &DfaService::get_session);
  post(id + "/verdict", &DfaService::submit_verdict);
  post(id + "/demo", &DfaService::submit_demo);
  get(id + "/counterfactual", &DfaService::get_counterfactual);
  post(id + "/feedback", &DfaService::submit_feedback);
  get(id + "/eval", &DfaService::get_eval);
  post(id + "/stream", &DfaService::stream);
}

}  // namespace dfa
