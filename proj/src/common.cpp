#include "dfa/common.hpp"

namespace dfa {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSchemaMismatch: return "schema_mismatch";
    case ErrorCode::kIllegalEdit: return "illegal_edit";
    case ErrorCode::kPlacementCollision: return "placement_collision";
    case ErrorCode::kInvalidScene: return "invalid_scene";
    case ErrorCode::kMalformedAction: return "malformed_action";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kLengthMismatch: return "length_mismatch";
    case ErrorCode::kDomainMismatch: return "domain_mismatch";
    case ErrorCode::kNumerical: return "numerical";
    case ErrorCode::kNoSatisfyingGoal: return "no_satisfying_goal";
    case ErrorCode::kReplayDiverged: return "replay_diverged";
    case ErrorCode::kConditionMismatch: return "condition_mismatch";
    case ErrorCode::kPhaseViolation: return "phase_violation";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix(base);
  for (std::uint64_t t : tags) h = splitmix(h ^ splitmix(t + 0x632be59bd9b4e019ULL));
  return h;
}

std::uint64_t tag(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n <= 1) return 0;
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  // Reject the top partial block so every residue is equally likely.
  const std::uint64_t excess = (rng.max() % bound + 1) % bound;
  std::uint64_t draw = rng();
  while (excess != 0 && draw > rng.max() - excess) draw = rng();
  return static_cast<std::size_t>(draw % bound);
}

double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace dfa
