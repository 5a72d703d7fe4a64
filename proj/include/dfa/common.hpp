#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace dfa {

/// Canonical JSON type. Insertion order is preserved so serialized
/// documents have a stable, documented field order.
using Json = nlohmann::ordered_json;

enum class ErrorCode {
  kSchemaMismatch,
  kIllegalEdit,
  kPlacementCollision,
  kInvalidScene,
  kMalformedAction,
  kShapeMismatch,
  kLengthMismatch,
  kDomainMismatch,
  kNumerical,
  kNoSatisfyingGoal,
  kReplayDiverged,
  kConditionMismatch,
  kPhaseViolation,
  kNotFound,
  kInvalidArgument,
  kIo,
};

std::string_view to_string(ErrorCode code);

/// Structured error carried by every failing operation in the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

using Rng = std::mt19937_64;

/// Mixes a base seed with a sequence of stream tags (splitmix64 finalizer).
/// Every random stream in the project is derived this way so that results
/// are reproducible from the recorded seeds alone.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

/// Stable 64-bit FNV-1a hash of a string, used to turn names into seed tags.
std::uint64_t tag(std::string_view name);

/// Uniform integer in [0, n). Implemented without std::uniform_int_distribution
/// so that draws are identical across standard library implementations.
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Uniform double in [0, 1) with 53 bits of precision.
double uniform_unit(Rng& rng);

}  // namespace dfa
