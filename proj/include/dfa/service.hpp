#pragma once

#include <map>
#include <memory>
#include <shared_mutex>
#include <string>

#include "dfa/codec.hpp"
#include "dfa/harness.hpp"

namespace httplib {
class Server;
}

namespace dfa {

inline constexpr int kApiVersion = 1;

struct ServiceConfig {
  std::size_t finetune_workers = 1;
  std::size_t eval_count = 10;
  FrameEncoding encoding = FrameEncoding::kPng;
};

/// Loop settings of a session. Headless runs that want to reproduce a
/// session use the same values.
LoopConfig session_loop_config(Domain domain, std::uint64_t seed);

/// The base policy a session adapts: trained on gen_train_task(domain, seed).
PolicyParams session_base_policy(Domain domain, std::uint64_t seed, PolicyCache& cache);

struct ApiResponse {
  int status = 200;
  Json body;
  std::map<std::string, std::string> headers;
};

class WorkerPool;
struct Session;

/// Session store and request handlers, independent of the transport.
/// Requests on one session are serialized; distinct sessions run
/// concurrently. Finetuning runs on a bounded worker pool.
class DfaService {
 public:
  explicit DfaService(ServiceConfig cfg = {}, std::shared_ptr<PolicyCache> cache = nullptr);
  ~DfaService();

  DfaService(const DfaService&) = delete;
  DfaService& operator=(const DfaService&) = delete;

  ApiResponse create_session(const Json& body);
  ApiResponse get_session(const std::string& id);
  ApiResponse submit_verdict(const std::string& id, const Json& body);
  ApiResponse submit_demo(const std::string& id, const Json& body);
  ApiResponse get_counterfactual(const std::string& id);
  ApiResponse submit_feedback(const std::string& id, const Json& body);
  ApiResponse get_eval(const std::string& id);
  /// Incremental capture: {"reset": true}, {"action": a} or {"commit": true}.
  ApiResponse stream(const std::string& id, const Json& body);

  /// Blocks until no finetune job of the session is in flight.
  void wait_idle(const std::string& id);

 private:
  std::shared_ptr<Session> find(const std::string& id);
  ApiResponse demo_locked(Session& s, std::vector<Action> actions, bool pad, bool override_check);
  void start_finetune(const std::shared_ptr<Session>& s);

  ServiceConfig cfg_;
  std::shared_ptr<PolicyCache> cache_;
  std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
  std::unique_ptr<WorkerPool> pool_;  // last: joins before sessions go away
};

/// Registers the JSON-over-HTTP routes of `service` on `server`.
void mount(httplib::Server& server, DfaService& service);

}  // namespace dfa
