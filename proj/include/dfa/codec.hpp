#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfa/env.hpp"

namespace dfa {

std::vector<std::uint8_t> encode_png(const Observation& obs);
Observation decode_png(std::span<const std::uint8_t> bytes);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::string sha256_hex(std::span<const std::uint8_t> bytes);

Json to_json(const WorldState& state);
WorldState world_state_from_json(const Json& j);

/// SHA-256 of the canonical JSON dump of a world state.
std::string state_digest(const WorldState& state);

enum class FrameEncoding { kRaw, kPng };

std::string_view to_string(FrameEncoding encoding);
FrameEncoding parse_frame_encoding(std::string_view name);

Json frame_to_json(const Observation& obs, FrameEncoding encoding);
Observation frame_from_json(const Json& j, FrameEncoding encoding);

/// JSON-lines form: a header line {provenance, domain, horizon, encoding,
/// scene}, then one line per step {t, digest, action, obs}.
void write_trajectory(std::ostream& out, const Trajectory& trajectory, FrameEncoding encoding);

/// Reads a trajectory and re-simulates it from the header scene; throws
/// Error(kReplayDiverged) if a recorded digest or frame disagrees.
Trajectory read_trajectory(std::istream& in);

}  // namespace dfa
