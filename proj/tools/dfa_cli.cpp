#include <CLI11.hpp>
#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dfa/service.hpp"

namespace fs = std::filesystem;
using namespace dfa;

namespace {

fs::path output_dir(const std::string& requested) {
  if (const char* env = std::getenv("DFA_OUTPUT_DIR"); env && *env) return env;
  return requested;
}

int cmd_train(const std::string& domain_name, std::uint64_t seed, const std::string& out_arg) {
  const Domain domain = parse_domain(domain_name);
  const fs::path out = output_dir(out_arg);
  fs::create_directories(out);

  const auto start = std::chrono::steady_clock::now();
  const TrainTask task = gen_train_task(domain, seed);
  const TrainResult trained = train_base_policy(task);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::vector<SceneDescriptor> scenes;
  for (const Trajectory& d : task.demos) scenes.push_back(d.initial);
  const double rate = success_rate(trained.params, scenes, task.reward);

  const fs::path ckpt = out / "policy.ckpt";
  std::ofstream bin(ckpt, std::ios::binary);
  save_checkpoint(bin, trained.params);
  if (!bin) throw Error(ErrorCode::kIo, "cannot write " + ckpt.string());

  TrainConfig cfg = default_train_config(domain);
  const Json report{{"domain", to_string(domain)},
                    {"seed", seed},
                    {"demos", task.demos.size()},
                    {"config", to_json(cfg)},
                    {"train_success", rate},
                    {"loss_history", trained.loss_history},
                    {"seconds", seconds},
                    {"checkpoint", ckpt.string()}};
  std::ofstream(out / "train.json") << report.dump(2) << '\n';
  std::cout << to_string(domain) << " seed " << seed << ": train success " << rate << ", final loss "
            << trained.loss_history.back() << ", " << seconds << " s -> " << ckpt.string() << '\n';
  return rate >= 0.9 ? 0 : 2;
}

int cmd_experiment(const std::string& config_path, const std::string& out_arg) {
  ExperimentConfig cfg = default_experiment_config();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw Error(ErrorCode::kIo, "cannot read " + config_path);
    cfg = experiment_config_from_json(Json::parse(in));
  }
  const std::vector<ResultRecord> records = run_experiment(cfg, out_arg);
  std::size_t failures = 0;
  for (const ResultRecord& r : records) failures += r.error.empty() ? 0 : 1;
  std::cout << "domain,shift,condition,accuracy,n,pre,post,stderr\n";
  for (const SummaryRow& row : summarize(records)) {
    std::cout << to_string(row.domain) << ',' << to_string(row.shift) << ',' << row.condition << ','
              << row.accuracy << ',' << row.count << ',' << row.pre_mean << ',' << row.post_mean << ','
              << row.post_stderr << '\n';
  }
  std::cout << records.size() << " records, " << failures << " failed\n";
  return failures == 0 ? 0 : 2;
}

int cmd_replay(const std::string& path, const std::string& reward_path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  const Trajectory traj = read_trajectory(in);
  Json report{{"domain", to_string(traj.domain())},
              {"provenance", to_string(traj.provenance)},
              {"steps", traj.steps.size()},
              {"verified", true},
              {"final_state", to_json(traj.final_state)}};
  if (!reward_path.empty()) {
    std::ifstream rin(reward_path);
    if (!rin) throw Error(ErrorCode::kIo, "cannot read " + reward_path);
    report["success"] = success(traj, reward_from_json(Json::parse(rin)));
  }
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_demo(const std::string& domain_name, const std::string& shift_name, std::uint64_t seed,
             const std::string& out, const std::string& encoding) {
  const Domain domain = parse_domain(domain_name);
  const TaskSpec task = gen_shift_task(gen_train_task(domain, seed), parse_shift(shift_name), seed);
  const Trajectory demo = expert_demo(task.test_scene, task.reward);
  std::ofstream file(out);
  if (!file) throw Error(ErrorCode::kIo, "cannot write " + out);
  write_trajectory(file, demo, parse_frame_encoding(encoding));
  std::ofstream(out + ".reward.json") << to_json(task.reward).dump(2) << '\n';
  std::cout << "wrote " << demo.steps.size() << "-step demonstration for \"" << task.reward.text << "\" to " << out
            << '\n';
  return 0;
}

int cmd_serve(const std::string& host, int port, std::size_t workers) {
  ServiceConfig cfg;
  cfg.finetune_workers = workers;
  DfaService service(cfg);
  httplib::Server server;
  mount(server, service);
  std::cout << "listening on http://" << host << ':' << port << std::endl;
  if (!server.listen(host, port)) throw Error(ErrorCode::kIo, "cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept-level policy adaptation toolkit"};
  app.require_subcommand(1);

  std::string domain = "nav2d";
  std::string shift = "ConceptTI";
  std::uint64_t seed = 0;
  std::string out;
  auto* train = app.add_subcommand("train", "Train a base policy on expert demonstrations");
  train->add_option("--domain", domain, "nav2d or doorkey")->required();
  train->add_option("--seed", seed, "task seed");
  train->add_option("--out", out, "output directory")->required();

  std::string config;
  std::string exp_out = "results";
  auto* experiment = app.add_subcommand("experiment", "Run the condition sweep");
  experiment->add_option("--config", config, "JSON experiment config (defaults when omitted)");
  experiment->add_option("--out", exp_out, "output directory");

  std::string trajectory;
  std::string reward;
  auto* replay_cmd = app.add_subcommand("replay", "Re-simulate a recorded trajectory and verify it");
  replay_cmd->add_option("--trajectory", trajectory, "trajectory JSONL file")->required();
  replay_cmd->add_option("--reward", reward, "reward JSON to score the trajectory against");

  std::string demo_out;
  std::string encoding = "png";
  auto* demo = app.add_subcommand("demo", "Write the scripted expert's demonstration for a shifted task");
  demo->add_option("--domain", domain, "nav2d or doorkey")->required();
  demo->add_option("--shift", shift, "shift type");
  demo->add_option("--seed", seed, "task seed");
  demo->add_option("--out", demo_out, "trajectory JSONL file")->required();
  demo->add_option("--encoding", encoding, "frame encoding: png or raw");

  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t workers = 1;
  auto* serve = app.add_subcommand("serve", "Serve interactive sessions over HTTP");
  serve->add_option("--port", port, "TCP port");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--workers", workers, "concurrent finetune jobs");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(domain, seed, out);
    if (*experiment) return cmd_experiment(config, exp_out);
    if (*replay_cmd) return cmd_replay(trajectory, reward);
    if (*demo) return cmd_demo(domain, shift, seed, demo_out, encoding);
    if (*serve) return cmd_serve(host, port, workers);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
