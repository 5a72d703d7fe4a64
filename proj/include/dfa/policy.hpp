#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "dfa/env.hpp"

namespace dfa {

enum class LossKind { kSquaredError, kCrossEntropy };

std::string_view to_string(LossKind loss);

struct Architecture {
  Domain domain = Domain::kNav2d;
  std::size_t input = Observation::kSize;
  std::size_t hidden = 128;
  std::size_t output = 2;

  bool operator==(const Architecture&) const = default;

  LossKind loss() const { return domain == Domain::kNav2d ? LossKind::kSquaredError : LossKind::kCrossEntropy; }
};

Architecture architecture_for(Domain domain, std::size_t hidden = 128);

Json to_json(const Architecture& arch);
Architecture architecture_from_json(const Json& j);

/// Dense weights of the one-hidden-layer tanh network. `w1` is stored input
/// major ([input][hidden]) so the columns touched by one pixel are contiguous;
/// `w2` is [hidden][output].
template <class T>
struct Network {
  Architecture arch;
  std::vector<T> w1;
  std::vector<T> b1;
  std::vector<T> w2;
  std::vector<T> b2;

  bool operator==(const Network&) const = default;
};

/// Immutable policy parameters. The hidden pre-activation of the domain's
/// static background is cached so inference only visits pixels that differ
/// from it.
class PolicyParams {
 public:
  PolicyParams() = default;
  PolicyParams(Network<float> net, std::uint64_t seed);

  const Architecture& arch() const { return net_.arch; }
  const Network<float>& network() const { return net_; }
  std::uint64_t seed() const { return seed_; }
  std::span<const float> background_activation() const { return background_; }

  bool operator==(const PolicyParams& other) const { return net_ == other.net_ && seed_ == other.seed_; }

 private:
  Network<float> net_;
  std::uint64_t seed_ = 0;
  std::vector<float> background_;
};

/// Uniform init in +-1/sqrt(fan_in) for weights, zero biases.
PolicyParams init_policy(const Architecture& arch, std::uint64_t seed);

/// Pixels every frame of a domain shares (walls for doorkey, black for nav2d).
const Observation& background_frame(Domain domain);

Action predict(const PolicyParams& params, const Observation& obs);

/// Black-box view of a policy for rollouts and search.
PolicyFn policy_fn(std::shared_ptr<const PolicyParams> params);

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 300;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kSquaredError;
  bool finetune = false;

  void validate() const;
};

Json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j);

/// Tuned per-domain settings used by the harness and tools.
TrainConfig default_train_config(Domain domain);

struct TrainResult {
  PolicyParams params;
  std::vector<double> loss_history;  // mean per-sample loss of each epoch
};

/// A single supervised sample.
struct Sample {
  const Observation* obs = nullptr;
  Action target;
};

std::vector<Sample> samples_of(std::span<const Trajectory> demos);

TrainResult train_bc(const PolicyParams& params, std::span<const Trajectory> demos, const TrainConfig& cfg);

/// Same as train_bc, warm-started from `params`.
TrainResult finetune(const PolicyParams& params, std::span<const Trajectory> demos, const TrainConfig& cfg);

/// Mean loss over the samples.
double evaluate_loss(const PolicyParams& params, std::span<const Sample> samples);

/// Compares the analytic gradient with central finite differences (step 1e-4)
/// on `coordinates` seeded random parameters plus every bias. Returns the
/// maximum relative error; absolute error is used where both magnitudes are
/// below 1e-7.
double grad_check(const PolicyParams& params, const Sample& sample, std::uint64_t seed,
                  std::size_t coordinates = 256);

void save_checkpoint(std::ostream& out, const PolicyParams& params);
PolicyParams load_checkpoint(std::istream& in);

/// Debug export of every tensor as nested JSON arrays.
Json weights_to_json(const PolicyParams& params);

}  // namespace dfa
